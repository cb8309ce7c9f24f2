#include "nlsql/eval_harness.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <limits>
#include <random>
#include <set>
#include <sstream>
#include <thread>

#include "nlsql/dialect_transpiler.hpp"
#include "nlsql/error.hpp"
#include "nlsql/text.hpp"

namespace nlsql::eval {

namespace {

template <typename F>
void for_each_json_line(const std::filesystem::path& path, F&& f) {
  std::ifstream in(path);
  if (!in) throw HarnessError("cannot open dataset " + path.string());
  std::string line;
  std::size_t n = 0;
  while (std::getline(in, line)) {
    ++n;
    if (text::trim(line).empty()) continue;
    try {
      f(nlohmann::json::parse(line));
    } catch (const nlohmann::json::exception& e) {
      throw HarnessError(path.string() + ":" + std::to_string(n) + ": " + e.what());
    }
  }
}

}  // namespace

std::vector<RawItem> load_raw_items(const std::filesystem::path& path) {
  std::vector<RawItem> out;
  for_each_json_line(path, [&](const nlohmann::json& j) {
    RawItem r;
    r.id = j.at("id").get<std::string>();
    r.question = j.at("question").get<std::string>();
    r.answerable = j.value("answerable", true);
    if (j.contains("sql") && !j.at("sql").is_null()) r.sql = j.at("sql").get<std::string>();
    out.push_back(std::move(r));
  });
  return out;
}

std::vector<EvalItem> load_eval_items(const std::filesystem::path& path) {
  std::vector<EvalItem> out;
  for_each_json_line(path, [&](const nlohmann::json& j) {
    EvalItem e;
    e.id = j.at("id").get<std::string>();
    e.question = j.at("question").get<std::string>();
    e.answerable = j.value("answerable", true);
    if (j.contains("gold_sql") && !j.at("gold_sql").is_null()) e.gold_sql = j.at("gold_sql").get<std::string>();
    out.push_back(std::move(e));
  });
  return out;
}

nlohmann::json to_json(const EvalItem& item) {
  return {{"id", item.id}, {"question", item.question}, {"gold_sql", item.gold_sql}, {"answerable", item.answerable}};
}

void save_eval_items(const std::filesystem::path& path, std::span<const EvalItem> items) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw HarnessError("cannot write " + path.string());
  for (const auto& item : items) out << to_json(item).dump() << '\n';
  if (!out) throw HarnessError("cannot write " + path.string());
}

std::string_view to_string(DropReason reason) {
  switch (reason) {
    case DropReason::unsupported_construct: return "unsupported construct";
    case DropReason::parse_error: return "parse error";
    case DropReason::execution_error: return "execution error";
    case DropReason::empty_result: return "empty result";
    case DropReason::unanswerable: return "unanswerable";
  }
  return "execution error";
}

PreprocessResult preprocess_dataset(std::span<const RawItem> items, db::Connection& connection,
                                    const PreprocessOptions& options) {
  try {
    connection.query("SELECT 1");
  } catch (const DatabaseError& e) {
    throw HarnessError(std::string("reference database unavailable: ") + e.what());
  }
  PreprocessResult out;
  for (const auto& item : items) {
    if (!item.answerable) {
      if (options.keep_unanswerable) {
        out.kept.push_back({item.id, item.question, "", false});
      } else {
        out.dropped.push_back({item.id, DropReason::unanswerable, "no gold query"});
      }
      continue;
    }
    std::string gold;
    try {
      gold = sql::transpile(item.sql);
    } catch (const UnsupportedConstructError& e) {
      out.dropped.push_back({item.id, DropReason::unsupported_construct, e.construct()});
      continue;
    } catch (const TranspileError& e) {
      out.dropped.push_back({item.id, DropReason::parse_error, e.what()});
      continue;
    }
    try {
      const QueryResult r = exec::execute_sql(gold, connection, options.limits);
      if (r.rows.empty()) {
        out.dropped.push_back({item.id, DropReason::empty_result, ""});
        continue;
      }
    } catch (const ExecutionError& e) {
      out.dropped.push_back({item.id, DropReason::execution_error, e.what()});
      continue;
    }
    out.kept.push_back({item.id, item.question, gold, true});
  }
  return out;
}

std::vector<std::size_t> largest_remainder_sizes(std::size_t n, std::span<const double> fractions) {
  constexpr double kTieEpsilon = 1e-9;
  std::vector<std::size_t> sizes(fractions.size(), 0);
  std::vector<double> remainders(fractions.size(), 0.0);
  std::size_t assigned = 0;
  for (std::size_t i = 0; i < fractions.size(); ++i) {
    const double quota = static_cast<double>(n) * fractions[i];
    // a quota within epsilon of an integer counts as that integer
    double whole = std::floor(quota + kTieEpsilon);
    sizes[i] = static_cast<std::size_t>(whole);
    remainders[i] = std::max(0.0, quota - whole);
    assigned += sizes[i];
  }
  std::vector<std::size_t> order(fractions.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    if (std::abs(remainders[a] - remainders[b]) > kTieEpsilon) return remainders[a] > remainders[b];
    if (fractions[a] != fractions[b]) return fractions[a] > fractions[b];
    return a > b;
  });
  for (std::size_t k = 0; assigned < n && !order.empty(); ++k, ++assigned) ++sizes[order[k % order.size()]];
  while (assigned > n) {
    // only reachable when fractions sum above one; trim from the back
    for (std::size_t i = sizes.size(); i-- > 0 && assigned > n;) {
      if (sizes[i] > 0) {
        --sizes[i];
        --assigned;
      }
    }
  }
  return sizes;
}

std::vector<std::size_t> shuffled_indices(std::size_t n, std::uint64_t seed) {
  std::vector<std::size_t> idx(n);
  for (std::size_t i = 0; i < n; ++i) idx[i] = i;
  std::mt19937_64 rng(seed);
  for (std::size_t i = n; i > 1; --i) {
    // unbiased draw in [0, i) by rejection
    const std::uint64_t bound = i;
    const std::uint64_t limit = std::numeric_limits<std::uint64_t>::max() - std::numeric_limits<std::uint64_t>::max() % bound;
    std::uint64_t r;
    do {
      r = rng();
    } while (r >= limit);
    std::swap(idx[i - 1], idx[static_cast<std::size_t>(r % bound)]);
  }
  return idx;
}

void validate_fractions(const SplitFractions& f) {
  if (f.validation < 0 || f.test < 0) throw std::invalid_argument("split fractions must be non-negative");
  if (std::abs(f.validation + f.test - 1.0) > 1e-9) throw std::invalid_argument("split fractions must sum to 1");
}

// ---- result equality ----

namespace {

std::string canonical_timestamp(std::string s) {
  // "2100-01-01 00:00:00.000000" and "2100-01-01 00:00:00" are the same instant
  const auto dot = s.find('.');
  if (dot != std::string::npos) {
    std::size_t end = dot + 1;
    while (end < s.size() && std::isdigit(static_cast<unsigned char>(s[end]))) ++end;
    const std::string frac = s.substr(dot + 1, end - dot - 1);
    if (frac.find_first_not_of('0') == std::string::npos) s.erase(dot, end - dot);
  }
  return s;
}

int kind_rank(Atom::Kind k) { return static_cast<int>(k); }

double as_double(const Atom& a) { return a.integral ? static_cast<double>(a.integer) : a.number; }

int compare_atoms(const Atom& a, const Atom& b) {
  if (a.kind != b.kind) return kind_rank(a.kind) < kind_rank(b.kind) ? -1 : 1;
  switch (a.kind) {
    case Atom::Kind::null: return 0;
    case Atom::Kind::number: {
      if (a.integral && b.integral) return a.integer < b.integer ? -1 : (a.integer > b.integer ? 1 : 0);
      const double x = as_double(a), y = as_double(b);
      if (std::isnan(x) || std::isnan(y)) return std::isnan(x) == std::isnan(y) ? 0 : (std::isnan(x) ? 1 : -1);
      return x < y ? -1 : (x > y ? 1 : 0);
    }
    case Atom::Kind::text: return a.text.compare(b.text) < 0 ? -1 : (a.text == b.text ? 0 : 1);
  }
  return 0;
}

bool row_less(const CanonicalRow& a, const CanonicalRow& b) {
  for (std::size_t i = 0; i < std::min(a.size(), b.size()); ++i) {
    const int c = compare_atoms(a[i], b[i]);
    if (c != 0) return c < 0;
  }
  return a.size() < b.size();
}

bool rows_equal(const CanonicalRow& a, const CanonicalRow& b, const CompareOptions& o) {
  if (a.size() != b.size()) return false;
  for (std::size_t i = 0; i < a.size(); ++i) {
    if (!atoms_equal(a[i], b[i], o)) return false;
  }
  return true;
}

}  // namespace

Atom canonical_atom(const Value& value) {
  Atom a;
  std::visit(
      [&](const auto& v) {
        using T = std::decay_t<decltype(v)>;
        if constexpr (std::is_same_v<T, std::monostate>) {
          a.kind = Atom::Kind::null;
        } else if constexpr (std::is_same_v<T, bool>) {
          a.kind = Atom::Kind::number;
          a.integral = true;
          a.integer = v ? 1 : 0;
        } else if constexpr (std::is_same_v<T, std::int64_t>) {
          a.kind = Atom::Kind::number;
          a.integral = true;
          a.integer = v;
        } else if constexpr (std::is_same_v<T, double>) {
          a.kind = Atom::Kind::number;
          // whole doubles that fit keep exact integer identity
          if (std::isfinite(v) && v == std::trunc(v) && std::abs(v) < 9.0e15) {
            a.integral = true;
            a.integer = static_cast<std::int64_t>(v);
          } else {
            a.number = v;
          }
        } else if constexpr (std::is_same_v<T, std::string>) {
          a.kind = Atom::Kind::text;
          a.text = std::string(text::trim_right(v));
        } else {
          a.kind = Atom::Kind::text;
          a.text = canonical_timestamp(v.text);
        }
      },
      value);
  return a;
}

CanonicalResult normalize_result(const QueryResult& result, bool order_sensitive) {
  CanonicalResult out;
  out.column_count = result.columns.size();
  out.rows.reserve(result.rows.size());
  for (const auto& row : result.rows) {
    CanonicalRow r;
    r.reserve(row.size());
    for (const auto& v : row) r.push_back(canonical_atom(v));
    out.rows.push_back(std::move(r));
  }
  if (!order_sensitive) std::stable_sort(out.rows.begin(), out.rows.end(), row_less);
  return out;
}

bool atoms_equal(const Atom& a, const Atom& b, const CompareOptions& o) {
  if (a.kind != b.kind) return false;
  switch (a.kind) {
    case Atom::Kind::null: return true;
    case Atom::Kind::text: return a.text == b.text;
    case Atom::Kind::number: {
      if (a.integral && b.integral) return a.integer == b.integer;
      const double x = as_double(a), y = as_double(b);
      if (std::isnan(x) || std::isnan(y)) return std::isnan(x) && std::isnan(y);
      if (x == y) return true;
      const double tol = std::max(o.absolute_tolerance, o.relative_tolerance * std::max(std::abs(x), std::abs(y)));
      return std::abs(x - y) <= tol;
    }
  }
  return false;
}

bool results_equal(const QueryResult& a, const QueryResult& b, const CompareOptions& o) {
  if (a.columns.size() != b.columns.size() || a.rows.size() != b.rows.size()) return false;
  const CanonicalResult ca = normalize_result(a, o.order_sensitive);
  const CanonicalResult cb = normalize_result(b, o.order_sensitive);
  bool same = true;
  for (std::size_t i = 0; i < ca.rows.size() && same; ++i) same = rows_equal(ca.rows[i], cb.rows[i], o);
  if (same || o.order_sensitive) return same;
  // sorting can separate rows that are only equal within tolerance; fall back to matching
  std::vector<bool> used(cb.rows.size(), false);
  for (const auto& row : ca.rows) {
    bool found = false;
    for (std::size_t j = 0; j < cb.rows.size(); ++j) {
      if (!used[j] && rows_equal(row, cb.rows[j], o)) {
        used[j] = true;
        found = true;
        break;
      }
    }
    if (!found) return false;
  }
  return true;
}

// ---- scoring ----

RS0Report rs0_score(std::span<const EvalOutcome> outcomes, const std::map<std::string, bool>& answerable) {
  std::set<std::string> seen;
  RS0Report r;
  std::size_t credited = 0;
  double latency_sum = 0.0;
  for (const auto& o : outcomes) {
    if (!seen.insert(o.item_id).second) throw HarnessError("duplicate outcome for item " + o.item_id);
    const auto it = answerable.find(o.item_id);
    if (it == answerable.end()) throw HarnessError("outcome for unknown item " + o.item_id);
    if (o.abstained && o.generated_result) throw HarnessError("item " + o.item_id + " abstained but has a result");
    if (o.matched && o.abstained) throw HarnessError("item " + o.item_id + " both matched and abstained");
    const bool ans = it->second;
    if (ans) ++r.n_answerable;
    if (o.matched) ++r.n_matched;
    if (o.abstained) ++r.n_abstained;
    if (o.abstain_reason == "cassette_miss") ++r.n_cassette_misses;
    if ((ans && o.matched) || (!ans && o.abstained)) ++credited;
    latency_sum += o.latency_seconds;
    if (seen.size() == 1) {
      r.min_latency = r.max_latency = o.latency_seconds;
    } else {
      r.min_latency = std::min(r.min_latency, o.latency_seconds);
      r.max_latency = std::max(r.max_latency, o.latency_seconds);
    }
  }
  if (seen.size() != answerable.size()) {
    for (const auto& [id, flag] : answerable) {
      if (!seen.count(id)) throw HarnessError("no outcome for item " + id);
    }
  }
  r.n_items = outcomes.size();
  if (r.n_items > 0) {
    r.rs0 = static_cast<double>(credited) / static_cast<double>(r.n_items);
    r.mean_latency = latency_sum / static_cast<double>(r.n_items);
  }
  return r;
}

RS0Report rs0_score(std::span<const EvalOutcome> outcomes) {
  std::map<std::string, bool> flags;
  for (const auto& o : outcomes) {
    if (!flags.emplace(o.item_id, o.answerable).second) throw HarnessError("duplicate outcome for item " + o.item_id);
  }
  return rs0_score(outcomes, flags);
}

namespace {

EvalOutcome evaluate_item(const EvalItem& item, const schema::SchemaCatalog& catalog, const demos::DemoStore* demos,
                          llm::Gateway& gateway, db::Connection& connection, const EvalSettings& settings,
                          exec::PipelineOutcome& trace) {
  EvalOutcome out;
  out.item_id = item.id;
  out.answerable = item.answerable;

  exec::PipelineContext ctx{catalog, demos, gateway, connection, settings.flags, settings.limits, {}};
  trace = exec::run_pipeline(item.question, ctx);
  out.latency_seconds = trace.total_latency_seconds;
  out.attempts = trace.attempts.size();
  out.final_sql = trace.final_sql;
  if (trace.answered()) {
    out.generated_result = trace.result;
  } else {
    out.abstained = true;
    const bool miss = !trace.attempts.empty() && trace.attempts.back().error_kind == "cassette_miss";
    out.abstain_reason = miss ? "cassette_miss" : std::string(exec::to_string(*trace.abstained));
    if (!trace.attempts.empty() && trace.attempts.back().execution_error) {
      out.error = *trace.attempts.back().execution_error;
    }
  }
  if (item.answerable && !item.gold_sql.empty()) {
    try {
      out.gold_result = exec::execute_sql(item.gold_sql, connection, settings.limits, &catalog);
    } catch (const ExecutionError& e) {
      out.error = std::string("gold query failed: ") + e.what();
    }
  }
  out.matched = out.generated_result && out.gold_result &&
                results_equal(*out.generated_result, *out.gold_result, settings.compare);
  return out;
}

}  // namespace

EvalRun run_eval(std::span<const EvalItem> items, const schema::SchemaCatalog& catalog,
                 const demos::DemoStore* demos, llm::Gateway& gateway, const db::Database& database,
                 const EvalSettings& settings) {
  settings.flags.validate();
  EvalRun run;
  run.model_name = gateway.config().model_name;
  run.settings = settings;
  run.outcomes.resize(items.size());
  run.traces.resize(items.size());

  const std::size_t workers = std::clamp<std::size_t>(settings.parallelism, 1, std::max<std::size_t>(items.size(), 1));
  std::atomic<std::size_t> next{0};
  std::exception_ptr failure;
  std::mutex failure_mutex;
  auto work = [&] {
    try {
      db::Connection conn = database.connect();
      for (std::size_t i = next++; i < items.size(); i = next++) {
        run.outcomes[i] = evaluate_item(items[i], catalog, demos, gateway, conn, settings, run.traces[i]);
      }
    } catch (...) {
      std::lock_guard lock(failure_mutex);
      if (!failure) failure = std::current_exception();
      next = items.size();
    }
  };
  if (workers == 1) {
    work();
  } else {
    std::vector<std::jthread> pool;
    for (std::size_t w = 0; w < workers; ++w) pool.emplace_back(work);
  }
  if (failure) std::rethrow_exception(failure);
  run.report = rs0_score(run.outcomes);
  return run;
}

nlohmann::json to_json(const RS0Report& r) {
  return {{"rs0", r.rs0},
          {"n_items", r.n_items},
          {"n_answerable", r.n_answerable},
          {"n_matched", r.n_matched},
          {"n_abstained", r.n_abstained},
          {"n_cassette_misses", r.n_cassette_misses},
          {"mean_latency_seconds", r.mean_latency},
          {"min_latency_seconds", r.min_latency},
          {"max_latency_seconds", r.max_latency}};
}

nlohmann::json to_json(const EvalRun& run) {
  nlohmann::json items = nlohmann::json::array();
  for (std::size_t i = 0; i < run.outcomes.size(); ++i) {
    const auto& o = run.outcomes[i];
    nlohmann::json attempts = nlohmann::json::array();
    if (i < run.traces.size()) {
      for (const auto& a : run.traces[i].attempts) attempts.push_back(exec::to_json(a));
    }
    items.push_back({{"id", o.item_id},
                     {"answerable", o.answerable},
                     {"matched", o.matched},
                     {"abstained", o.abstained},
                     {"abstain_reason", o.abstain_reason.empty() ? nlohmann::json(nullptr) : nlohmann::json(o.abstain_reason)},
                     {"latency_seconds", o.latency_seconds},
                     {"final_sql", o.final_sql},
                     {"error", o.error.empty() ? nlohmann::json(nullptr) : nlohmann::json(o.error)},
                     {"attempts", attempts}});
  }
  const auto& f = run.settings.flags;
  return {{"model_name", run.model_name},
          {"flags",
           {{"k_demos", f.k_demos},
            {"include_schema", f.include_schema},
            {"include_cot", f.include_cot},
            {"max_attempts", f.max_attempts},
            {"guardrail", f.guardrail},
            {"repair", f.repair}}},
          {"order_sensitive", run.settings.compare.order_sensitive},
          {"report", to_json(run.report)},
          {"items", items}};
}

std::string render_table(std::span<const EvalRun> runs) {
  const std::vector<std::string> head = {"Base LLM", "Schema info?", "# demos", "Max # attempts", "RS(0)",
                                         "Abstained", "Mean latency (s)"};
  std::vector<std::vector<std::string>> rows;
  for (const auto& r : runs) {
    std::ostringstream rs0, lat;
    rs0 << std::fixed << std::setprecision(2) << r.report.rs0 * 100.0 << "%";
    lat << std::fixed << std::setprecision(2) << r.report.mean_latency;
    rows.push_back({r.model_name, r.settings.flags.include_schema ? "Y" : "N", std::to_string(r.settings.flags.k_demos),
                    std::to_string(r.settings.flags.max_attempts), rs0.str(),
                    std::to_string(r.report.n_abstained) + "/" + std::to_string(r.report.n_items), lat.str()});
  }
  std::vector<std::size_t> width(head.size());
  for (std::size_t c = 0; c < head.size(); ++c) {
    width[c] = head[c].size();
    for (const auto& row : rows) width[c] = std::max(width[c], row[c].size());
  }
  std::ostringstream out;
  auto line = [&](const std::vector<std::string>& cells) {
    for (std::size_t c = 0; c < cells.size(); ++c) {
      out << (c ? " | " : "") << std::left << std::setw(static_cast<int>(width[c])) << cells[c];
    }
    out << '\n';
  };
  line(head);
  std::vector<std::string> rule;
  for (auto w : width) rule.push_back(std::string(w, '-'));
  line(rule);
  for (const auto& row : rows) line(row);
  return out.str();
}

}  // namespace nlsql::eval
