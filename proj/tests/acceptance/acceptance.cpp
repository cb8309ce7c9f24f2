// One PASS/FAIL line per acceptance criterion. Exit status is the number of failures.
#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <functional>
#include <map>
#include <random>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include <unistd.h>

#include "desk_run.hpp"
#include "engines.hpp"
#include "guardrail_corpus.hpp"
#include "nlsql/demo_store.hpp"
#include "nlsql/dialect_transpiler.hpp"
#include "nlsql/error.hpp"
#include "nlsql/eval_harness.hpp"
#include "nlsql/prompt_builder.hpp"
#include "nlsql/schema_catalog.hpp"
#include "nlsql/sql_postprocess.hpp"
#include "nlsql/viz_spec.hpp"
#include "test_support.hpp"

namespace fs = std::filesystem;
using namespace nlsql;
using Clock = std::chrono::steady_clock;

namespace {

// time limits, seconds
constexpr double kTranspilerLimit = 10.0;
constexpr double kDifferentialLimit = 60.0;
constexpr double kReplayLimit = 30.0;

constexpr std::size_t kMinDifferentialCases = 50;
constexpr int kRandomTrials = 1000;
constexpr std::size_t kFabricatedCases = 100;

struct Check {
  bool ok = true;
  std::ostringstream detail;
  void require(bool cond, const std::string& what) {
    if (!cond && ok) detail << what;
    ok = ok && cond;
  }
};

int failures = 0;

void report(const char* name, const std::function<void(Check&)>& body) {
  Check c;
  const auto start = Clock::now();
  try {
    body(c);
  } catch (const std::exception& e) {
    c.require(false, std::string("exception: ") + e.what());
  }
  const double secs = std::chrono::duration<double>(Clock::now() - start).count();
  std::printf("%s %s (%.2fs)%s%s\n", c.ok ? "PASS" : "FAIL", name, secs, c.detail.str().empty() ? "" : ": ",
              c.detail.str().c_str());
  std::fflush(stdout);
  failures += c.ok ? 0 : 1;
}

double since(Clock::time_point t) { return std::chrono::duration<double>(Clock::now() - t).count(); }

fs::path scratch(const std::string& name) {
  const fs::path p = fs::temp_directory_path() / ("nlsql_accept_" + std::to_string(::getpid())) / name;
  fs::create_directories(p.parent_path());
  fs::remove(p);
  return p;
}

struct Engines {
  testkit::SqliteDb sqlite;
  db::Database duck_db = db::Database::in_memory();
  db::Connection duck = duck_db.connect();
  Engines() { testkit::populate_toy_schema(sqlite, duck); }

  bool agrees(const std::string& src, const sql::TranspileOptions& opts = {}) {
    try {
      return eval::results_equal(sqlite.query(src), duck.query(sql::transpile(src, opts)));
    } catch (const std::exception&) {
      return false;
    }
  }
};

// ---- 1 ----
void transpiler_rules(Check& c) {
  const auto start = Clock::now();
  struct Fixture {
    sql::RuleFamily family;
    const char* source;
    const char* target;
  };
  using F = sql::RuleFamily;
  const Fixture fixtures[] = {
      {F::current_time, "SELECT CURRENT_TIME", "SELECT CURRENT_TIMESTAMP"},
      {F::current_time, "SELECT datetime('now')", "SELECT CAST(CURRENT_TIMESTAMP AS TIMESTAMP)"},
      {F::datetime_cast, "SELECT datetime(t)", "SELECT CAST(t AS TIMESTAMP)"},
      {F::datetime_cast, "SELECT datetime(a.admittime) FROM admissions AS a",
       "SELECT CAST(a.admittime AS TIMESTAMP) FROM admissions AS a"},
      {F::datetime_start_of, "SELECT datetime(t, 'start of month')", "SELECT DATE_TRUNC('month', t)"},
      {F::datetime_start_of, "SELECT datetime(t, 'start of year')", "SELECT DATE_TRUNC('year', t)"},
      {F::datetime_offset, "SELECT datetime(t, '+1 day')", "SELECT t + INTERVAL '1 day'"},
      {F::datetime_offset, "SELECT datetime(t, '-2 years')", "SELECT t - INTERVAL '2 years'"},
      {F::datetime_noop, "SELECT datetime(t, '-0 year')", "SELECT CAST(t AS TIMESTAMP)"},
      {F::datetime_noop, "SELECT datetime(CURRENT_TIME, 'start of year', '-0 year')",
       "SELECT DATE_TRUNC('year', CURRENT_TIMESTAMP)"},
  };
  std::set<F> families;
  for (const auto& f : fixtures) {
    const auto r = sql::transpile_detailed(f.source);
    c.require(r.sql == f.target, std::string(f.source) + " -> " + r.sql);
    c.require(r.fired.count(f.family) == 1, std::string(f.source) + " did not fire " + std::string(sql::to_string(f.family)));
    families.insert(f.family);
  }
  c.require(families.size() == 5, "fixtures do not cover five families");

  Engines engines;
  const auto corpus = testkit::differential_corpus(72, 20260514);
  std::size_t mutants = 0;
  for (sql::RuleFamily f : sql::all_rule_families()) {
    sql::TranspileOptions opts;
    opts.disabled = {f};
    bool killed = false;
    for (const auto& q : corpus) {
      if (!engines.agrees(q.sql, opts)) {
        killed = true;
        break;
      }
    }
    c.require(killed, "disabling " + std::string(sql::to_string(f)) + " broke no differential case");
    ++mutants;
  }
  const double secs = since(start);
  c.require(secs < kTranspilerLimit, "took " + std::to_string(secs) + "s");
  if (c.ok) c.detail << families.size() << " families, " << std::size(fixtures) << " fixtures, " << mutants << " mutants killed";
}

// ---- 2 ----
void differential(Check& c) {
  const auto start = Clock::now();
  Engines engines;
  const auto corpus = testkit::differential_corpus(72, 20260514);
  c.require(corpus.size() >= kMinDifferentialCases, "only " + std::to_string(corpus.size()) + " cases");
  std::size_t agreed = 0, non_empty = 0;
  for (const auto& q : corpus) {
    if (engines.agrees(q.sql)) {
      ++agreed;
    } else {
      c.require(false, "disagreement: " + q.sql);
    }
    non_empty += engines.sqlite.query(q.sql).rows.empty() ? 0 : 1;
  }
  c.require(non_empty == corpus.size(), "some source queries return no rows");
  const char* unsupported[] = {"SELECT datetime(t, 'weekday 0')", "SELECT julianday(t) FROM x",
                               "SELECT date(t) FROM x", "SELECT datetime(t, 'localtime')",
                               "SELECT datetime(t, 'unixepoch')"};
  for (const char* u : unsupported) {
    bool loud = false;
    try {
      sql::transpile(u);
    } catch (const UnsupportedConstructError&) {
      loud = true;
    }
    c.require(loud, std::string("not rejected: ") + u);
  }
  const double secs = since(start);
  c.require(secs < kDifferentialLimit, "took " + std::to_string(secs) + "s");
  if (c.ok) c.detail << agreed << "/" << corpus.size() << " agree";
}

// ---- 3 ----
void rs0_arithmetic(Check& c) {
  std::mt19937 rng(777);
  std::size_t unanswerable_abstains = 0;
  for (int trial = 0; trial < kRandomTrials && c.ok; ++trial) {
    std::vector<eval::EvalOutcome> v(1 + rng() % 40);
    std::size_t credit = 0;
    for (std::size_t i = 0; i < v.size(); ++i) {
      auto& o = v[i];
      o.item_id = "i" + std::to_string(i);
      o.answerable = rng() % 4 != 0;
      o.abstained = rng() % 3 == 0;
      o.matched = !o.abstained && o.answerable && rng() % 2 == 0;
      if ((o.answerable && o.matched) || (!o.answerable && o.abstained)) ++credit;
      unanswerable_abstains += !o.answerable && o.abstained;
    }
    const double oracle = static_cast<double>(credit) / static_cast<double>(v.size());
    c.require(eval::rs0_score(v).rs0 == oracle, "trial " + std::to_string(trial) + " differs from the loop");
  }
  c.require(unanswerable_abstains > 0, "no unanswerable+abstain cases generated");
  for (int trial = 0; trial < kRandomTrials && c.ok; ++trial) {
    std::vector<eval::EvalOutcome> v(1 + rng() % 40);
    for (std::size_t i = 0; i < v.size(); ++i) {
      v[i].item_id = "i" + std::to_string(i);
      v[i].abstained = rng() % 3 == 0;
      v[i].matched = !v[i].abstained && rng() % 2 == 0;
    }
    const auto r = eval::rs0_score(v);
    c.require(r.rs0 == static_cast<double>(r.n_matched) / static_cast<double>(r.n_items),
              "all-answerable trial " + std::to_string(trial));
  }
  if (c.ok) c.detail << 2 * kRandomTrials << " vectors, " << unanswerable_abstains << " unanswerable abstentions";
}

// ---- 4 ----
void retrieval(Check& c) {
  constexpr std::size_t dim = 16;
  std::mt19937_64 rng(20260514);
  std::normal_distribution<double> n(0.0, 1.0);
  auto vec = [&] {
    std::vector<double> v(dim);
    for (auto& x : v) x = n(rng);
    return v;
  };
  auto demo = [](std::string id, std::vector<double> e) {
    demos::Demonstration d;
    d.id = std::move(id);
    d.question = "q " + d.id;
    d.relevant_tables = {"t"};
    d.sql = "SELECT 1";
    d.embedding = demos::EmbeddingVector(std::move(e));
    return d;
  };
  auto cosine = [](const std::vector<double>& a, const std::vector<double>& b) {
    double dot = 0, na = 0, nb = 0;
    for (std::size_t i = 0; i < a.size(); ++i) {
      dot += a[i] * b[i];
      na += a[i] * a[i];
      nb += b[i] * b[i];
    }
    return dot / (std::sqrt(na) * std::sqrt(nb));
  };
  demos::DemoStore store(std::make_shared<demos::HashedTokenEmbedder>(dim));
  std::vector<std::pair<std::string, std::vector<double>>> all;
  for (int i = 0; i < kRandomTrials; ++i) {
    char id[16];
    std::snprintf(id, sizeof id, "d%04d", i);
    all.emplace_back(id, vec());
    store.add(demo(id, all.back().second));
  }
  std::size_t queries = 0;
  for (std::size_t k : {1u, 2u, 5u}) {
    for (int t = 0; t < 50; ++t, ++queries) {
      const auto q = vec();
      std::vector<std::pair<double, std::string>> scored;
      for (const auto& [id, v] : all) scored.emplace_back(cosine(q, v), id);
      std::sort(scored.begin(), scored.end(),
                [](const auto& a, const auto& b) { return a.first != b.first ? a.first > b.first : a.second < b.second; });
      const auto got = store.retrieve_top_k(demos::EmbeddingVector(q), k);
      bool same = got.size() == k;
      for (std::size_t i = 0; same && i < k; ++i) same = got[i].demo.id == scored[i].second;
      c.require(same, "k=" + std::to_string(k) + " query " + std::to_string(t) + " differs from brute force");
    }
  }
  // duplicated vectors: ties resolve by id whatever the insertion order
  const auto v = vec();
  const std::vector<std::string> ids = {"c", "a", "b"};
  demos::DemoStore fwd(std::make_shared<demos::HashedTokenEmbedder>(dim));
  demos::DemoStore rev(std::make_shared<demos::HashedTokenEmbedder>(dim));
  for (const auto& id : ids) fwd.add(demo(id, v));
  for (auto it = ids.rbegin(); it != ids.rend(); ++it) rev.add(demo(*it, v));
  for (std::size_t k : {1u, 2u, 3u}) {
    const auto a = fwd.retrieve_top_k(demos::EmbeddingVector(v), k);
    const auto b = rev.retrieve_top_k(demos::EmbeddingVector(v), k);
    const std::vector<std::string> want = {"a", "b", "c"};
    for (std::size_t i = 0; i < k; ++i) {
      c.require(a[i].demo.id == want[i] && b[i].demo.id == want[i], "tie order at k=" + std::to_string(k));
    }
  }
  if (c.ok) c.detail << kRandomTrials << " vectors, " << queries << " queries, ties stable";
}

// ---- 5 ----
void pipeline_replay(Check& c) {
  const auto start = Clock::now();
  const auto main_run = testkit::run_desk_replay("desk/cassette_main.jsonl", scratch("main_audit.jsonl"));
  c.require(main_run.report.n_items == 10, "desk set is not 10 items");
  c.require(main_run.report.rs0 == 1.0, "main rs0 = " + std::to_string(main_run.report.rs0));
  const auto variant = testkit::run_desk_replay("desk/cassette_variant.jsonl", scratch("variant_audit.jsonl"));
  c.require(variant.report.rs0 == 0.9, "variant rs0 = " + std::to_string(variant.report.rs0));
  c.require(variant.report.n_abstained == 1, "variant abstained " + std::to_string(variant.report.n_abstained));
  std::size_t retried_and_matched = 0;
  for (const auto& o : variant.outcomes) {
    if (o.item_id == "desk-05") c.require(o.attempts == 2 && o.matched, "desk-05 attempts " + std::to_string(o.attempts));
    retried_and_matched += o.attempts == 2 && o.matched;
  }
  c.require(retried_and_matched == 1, "expected one retried item that matched");
  c.require(main_run.report.n_cassette_misses == 0 && variant.report.n_cassette_misses == 0, "cassette misses");
  const double secs = since(start);
  c.require(secs < kReplayLimit, "took " + std::to_string(secs) + "s");
  if (c.ok) c.detail << "rs0 1.0 and 0.9, replay backend only";
}

// ---- 6 ----
void privacy(Check& c) {
  {
    const db::Database database = db::Database::in_memory();
    auto conn = database.connect();
    const auto tokens = testkit::load_canary_database(conn);
    const auto catalog = schema::introspect(conn, "canary");
    demos::DemoStore store(std::make_shared<demos::HashedTokenEmbedder>());
    store.ingest_demos(testkit::fixture_path("desk/demos.jsonl"));
    auto fenced = [](const std::string& s) { return "1. tables\n```sql\n" + s + "\n```"; };
    auto backend = std::make_shared<llm::ScriptedBackend>(std::vector<std::string>{
        fenced("SELECT CAST(prescriptions.drug AS INTEGER) FROM prescriptions"),
        fenced("SELECT prescriptions.drug FROM prescriptions"),
        fenced("SELECT CAST(admissions.admittime AS TIMESTAMP) FROM admissions"),
        fenced("SELECT admissions.admit_time FROM admissions"),
        fenced("SELECT CAST(cost.cost AS DOUBLE) FROM cost"),
        fenced("SELECT COUNT(cost.cost) AS n FROM cost"),
        "VizType: 3; Xaxis: drug",
    });
    const auto audit_path = scratch("canary_audit.jsonl");
    llm::Gateway gw(backend, llm::ModelConfig::for_model("gpt-4.1-2025-04-14"),
                    std::make_shared<llm::AuditLog>(audit_path));
    const std::vector<eval::EvalItem> items = {
        {"c1", "Which drugs were prescribed?", "SELECT prescriptions.drug FROM prescriptions", true},
        {"c2", "When were patients admitted?", "SELECT admissions.admittime FROM admissions", true},
        {"c3", "How many charges?", "SELECT COUNT(*) AS n FROM cost", true},
    };
    const auto run = eval::run_eval(items, catalog, &store, gw, database);
    c.require(run.outcomes[0].generated_result.has_value(), "canary pipeline produced no result");
    if (run.outcomes[0].generated_result) viz::generate_chart(*run.outcomes[0].generated_result, items[0].question, gw);
    const auto hits = llm::scan_for_tokens(audit_path, tokens);
    c.require(llm::AuditLog::read(audit_path).size() == 7, "expected 7 audited calls");
    c.require(hits.empty(), std::to_string(hits.size()) + " sentinel tokens in the audit log");
  }
  auto database = db::Database::in_memory();
  auto conn = database.connect();
  testkit::load_desk_database(conn);
  const auto catalog = schema::introspect(conn, "desk");
  std::size_t gold = 0, gold_ok = 0;
  for (const auto& item : eval::load_eval_items(testkit::fixture_path("desk/eval.jsonl"))) {
    ++gold;
    gold_ok += postprocess::guardrail_check(item.gold_sql, catalog).passed;
  }
  c.require(gold > 0 && gold_ok == gold, std::to_string(gold_ok) + "/" + std::to_string(gold) + " gold queries pass");
  const auto suite = testkit::fabricated_identifier_suite(catalog, kFabricatedCases, 4242);
  std::size_t rejected = 0;
  for (const auto& f : suite) {
    const auto r = postprocess::guardrail_check(f.sql, catalog);
    rejected += !r.passed && r.error_message().find(f.identifier) != std::string::npos;
  }
  c.require(suite.size() == kFabricatedCases && rejected == suite.size(),
            std::to_string(rejected) + "/" + std::to_string(suite.size()) + " fabricated cases rejected");
  if (c.ok) c.detail << "0 sentinels, " << gold_ok << "/" << gold << " gold pass, " << rejected << "/" << suite.size() << " fabricated rejected";
}

// ---- 7 ----
void prompt_fidelity(Check& c) {
  auto database = db::Database::in_memory();
  auto conn = database.connect();
  testkit::load_desk_database(conn);
  const auto full = schema::introspect(conn, "desk");
  const std::string block = schema::render_schema_block(schema::SchemaCatalog("desk", {*full.find_table("admissions")}));
  c.require(block == testkit::read_text(testkit::fixture_path("prompts/admissions_schema_block.txt")),
            "admissions schema block differs");

  demos::Demonstration a, b;
  a.question = "What is the minimum total hospital cost that involved a procedure called other enterostomy since 2100?";
  a.relevant_tables = {"cost", "procedures_icd", "d_icd_procedures"};
  a.sql = std::string(testkit::kEnterostomySql);
  b.question = "What is the maximum total hospital cost associated with postprocedural pneumothorax in 2100?";
  b.relevant_tables = {"cost", "diagnoses_icd", "d_icd_diagnoses"};
  b.sql = std::string(testkit::kPneumothoraxSql);
  const std::string demos_block = demos::render_demo_block(std::vector<demos::Demonstration>{a, b});
  const std::string question =
      "What are the five most frequently prescribed medications for patients in their 40s since 2100?";
  c.require(prompt::build_sql_prompt(block, demos_block, question).text ==
                testkit::read_text(testkit::fixture_path("prompts/sql_prompt_admissions.txt")),
            "sql prompt differs");
  const std::vector<std::string> columns = {"drug", "cnt"};
  c.require(prompt::build_viz_prompt(viz::canonical_viz_names(), columns, question).text ==
                testkit::read_text(testkit::fixture_path("prompts/viz_prompt_medications.txt")),
            "viz prompt differs");
  if (c.ok) c.detail << "3 byte-exact fixtures";
}

// ---- 8 ----
void viz_language(Check& c) {
  const auto spec = viz::parse_viz_response("VizType: 0; Xaxis: cal_daily; Yaxis: bmi");
  c.require(spec.type() == viz::VizType::scatterplot && spec.x_axis == "cal_daily" && spec.y_axis == "bmi",
            "example parsed to " + viz::format_viz_spec(spec));
  std::mt19937 rng(31);
  const std::string chars = "abcdefghijklmnopqrstuvwxyz_0123456789";
  auto name = [&] {
    std::string s(1, chars[rng() % 27]);
    for (int i = static_cast<int>(rng() % 12); i > 0; --i) s += chars[rng() % chars.size()];
    return s == "none" ? s + "_" : s;
  };
  int n = 0;
  for (; n < 2000 && c.ok; ++n) {
    viz::VizSpec s;
    s.viz_type = static_cast<int>(rng() % 4);
    s.x_axis = name();
    if (s.type() != viz::VizType::histogram) s.y_axis = name();
    const std::string text = viz::format_viz_spec(s);
    c.require(viz::parse_viz_response(text) == s, "round trip failed for " + text);
  }
  if (c.ok) c.detail << n << " specs round-trip";
}

// ---- 9 ----
void preprocessing(Check& c) {
  auto database = db::Database::in_memory();
  auto conn = database.connect();
  testkit::load_desk_database(conn);
  const auto raw = eval::load_raw_items(testkit::fixture_path("desk/preprocess_raw.jsonl"));
  c.require(raw.size() == 20, "raw set is not 20 items");
  const auto r = eval::preprocess_dataset(raw, conn);
  c.require(r.kept.size() == 10, "kept " + std::to_string(r.kept.size()));
  auto expected = [](int i) {
    if (i <= 15) return eval::DropReason::empty_result;
    if (i <= 18) return eval::DropReason::execution_error;
    return eval::DropReason::unsupported_construct;
  };
  for (const auto& d : r.dropped) {
    const int i = std::stoi(d.id.substr(3));
    c.require(i > 10 && d.reason == expected(i), d.id + " dropped as " + std::string(eval::to_string(d.reason)));
  }
  std::vector<int> items(785);
  const auto s = eval::split_dataset<int>(items, {0.10, 0.90}, 0);
  c.require(s.validation.size() == 78 && s.test.size() == 707,
            "split " + std::to_string(s.validation.size()) + "/" + std::to_string(s.test.size()));
  if (c.ok) c.detail << "10 kept, 10 dropped with reasons, 785 -> 78/707";
}

}  // namespace

int main() {
  report("transpiler rules", transpiler_rules);
  report("differential equivalence", differential);
  report("rs0 arithmetic", rs0_arithmetic);
  report("retrieval", retrieval);
  report("pipeline end-to-end replay", pipeline_replay);
  report("privacy", privacy);
  report("prompt fidelity", prompt_fidelity);
  report("viz mini-language", viz_language);
  report("preprocessing", preprocessing);
  fs::remove_all(fs::temp_directory_path() / ("nlsql_accept_" + std::to_string(::getpid())));
  return failures;
}
