#include <CLI11.hpp>

#include <cstdlib>
#include <fstream>
#include <iostream>
#include <iterator>

#include "nlsql/app_surface.hpp"
#include "nlsql/dialect_transpiler.hpp"
#include "nlsql/error.hpp"
#include "nlsql/eval_harness.hpp"

using namespace nlsql;
namespace fs = std::filesystem;

namespace {

struct CommonOptions {
  std::string config;
  std::string database;
  std::string audit_log;
  std::string demos;
  std::string backend;
  std::vector<std::string> cassettes;
  long timeout_ms = 0;
};

struct SweepOptions {
  std::vector<std::string> models;
  std::vector<std::size_t> k_demos;
  std::vector<std::string> include_schema;
  std::vector<int> max_attempts;
  std::string cot;
  std::string guardrail;
  std::string repair;
};

bool parse_bool(const std::string& s) {
  if (s == "true" || s == "yes" || s == "y" || s == "1" || s == "on") return true;
  if (s == "false" || s == "no" || s == "n" || s == "0" || s == "off") return false;
  throw CLI::ValidationError("expected a boolean, got '" + s + "'");
}

std::string slurp(std::istream& in) { return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()}; }

app::AppConfig load_config(const CommonOptions& o) {
  app::AppConfig c = o.config.empty() ? app::AppConfig{} : app::AppConfig::load(o.config);
  if (!o.audit_log.empty()) c.audit_log = o.audit_log;
  if (!o.demos.empty()) c.demo_path = o.demos;
  if (!o.backend.empty() && o.backend != "scripted") c.backend = app::parse_backend_mode(o.backend);
  if (!o.cassettes.empty()) c.cassettes.assign(o.cassettes.begin(), o.cassettes.end());
  if (o.timeout_ms > 0) c.limits.timeout = std::chrono::milliseconds(o.timeout_ms);
  return c;
}

// A registered id from the config, or a path to a database file or ".sql" script.
std::pair<std::string, fs::path> resolve_database(const app::AppConfig& c, const std::string& name) {
  if (name.empty()) {
    if (c.databases.size() == 1) return *c.databases.begin();
    throw Error("pass --database (an id from the config or a path)");
  }
  const auto it = c.databases.find(name);
  if (it != c.databases.end()) return *it;
  if (!fs::exists(name)) throw Error("database '" + name + "' is neither registered nor an existing file");
  return {fs::path(name).stem().string(), fs::path(name)};
}

std::shared_ptr<demos::DemoStore> load_demos(const fs::path& path) {
  auto store = std::make_shared<demos::DemoStore>(std::make_shared<demos::HashedTokenEmbedder>());
  if (!path.empty()) store->ingest_demos(path);
  return store;
}

std::shared_ptr<llm::Backend> backend_for(const CommonOptions& o, const app::AppConfig& c, const std::string& responses,
                                          const std::string& record_to) {
  std::shared_ptr<llm::Backend> b;
  if (o.backend == "scripted") {
    if (responses.empty()) throw Error("--backend scripted needs --responses");
    std::ifstream in(responses);
    if (!in) throw Error("cannot open " + responses);
    const auto j = nlohmann::json::parse(in);
    b = std::make_shared<llm::ScriptedBackend>(j.get<std::vector<std::string>>());
  } else {
    b = app::make_backend(c);
  }
  if (!record_to.empty()) b = std::make_shared<llm::RecordingBackend>(b, record_to);
  return b;
}

void add_common(CLI::App* cmd, CommonOptions& o, bool with_backend) {
  cmd->add_option("--config", o.config, "JSON configuration file");
  cmd->add_option("--database,-d", o.database, "registered database id, database file, or .sql script");
  cmd->add_option("--timeout-ms", o.timeout_ms, "per-query execution time limit");
  if (!with_backend) return;
  cmd->add_option("--audit-log", o.audit_log, "append-only prompt log");
  cmd->add_option("--demos", o.demos, "demonstration file (JSON lines)");
  cmd->add_option("--backend", o.backend, "live | replay | record | scripted")
      ->check(CLI::IsMember({"live", "replay", "record", "scripted"}));
  cmd->add_option("--cassette", o.cassettes, "cassette file(s) for replay, or the target for record");
}

int run_transpile(const std::string& sql_arg, const std::string& file, bool explain) {
  std::string sql = sql_arg;
  if (sql.empty()) {
    if (file.empty() || file == "-") {
      sql = slurp(std::cin);
    } else {
      std::ifstream in(file);
      if (!in) throw Error("cannot open " + file);
      sql = slurp(in);
    }
  }
  try {
    const auto r = sql::transpile_detailed(sql);
    std::cout << r.sql << "\n";
    if (explain) {
      for (auto f : r.fired) std::cerr << "rule: " << sql::to_string(f) << "\n";
    }
    return 0;
  } catch (const UnsupportedConstructError& e) {
    std::cerr << "unsupported: " << e.what() << "\n";
    return 2;
  } catch (const TranspileError& e) {
    std::cerr << e.what() << "\n";
    return 1;
  }
}

int run_preprocess(const CommonOptions& o, const std::string& input, const std::string& output, bool keep_unanswerable,
                   const std::string& report) {
  const app::AppConfig c = load_config(o);
  const auto [id, path] = resolve_database(c, o.database);
  db::Database database = app::open_database(path);
  db::Connection conn = database.connect();
  eval::PreprocessOptions opts;
  opts.keep_unanswerable = keep_unanswerable;
  opts.limits = c.limits;
  const auto raw = eval::load_raw_items(input);
  const auto res = eval::preprocess_dataset(raw, conn, opts);
  eval::save_eval_items(output, res.kept);
  nlohmann::json dropped = nlohmann::json::array();
  for (const auto& d : res.dropped) {
    std::cerr << "dropped " << d.id << ": " << eval::to_string(d.reason) << " (" << d.detail << ")\n";
    dropped.push_back({{"id", d.id}, {"reason", eval::to_string(d.reason)}, {"detail", d.detail}});
  }
  std::cout << "kept " << res.kept.size() << " of " << raw.size() << " items\n";
  if (!report.empty()) {
    std::ofstream out(report);
    out << nlohmann::json{{"kept", res.kept.size()}, {"total", raw.size()}, {"dropped", dropped}}.dump(2) << "\n";
  }
  return 0;
}

int run_split(const std::string& input, const std::string& val_out, const std::string& test_out, double val_fraction,
              std::uint64_t seed) {
  const auto items = eval::load_eval_items(input);
  const auto split = eval::split_dataset<eval::EvalItem>(items, {val_fraction, 1.0 - val_fraction}, seed);
  eval::save_eval_items(val_out, split.validation);
  eval::save_eval_items(test_out, split.test);
  std::cout << "validation " << split.validation.size() << ", test " << split.test.size() << "\n";
  return 0;
}

int run_eval(const CommonOptions& o, const SweepOptions& s, const std::string& items_path, const std::string& responses,
             const std::string& record_to, const std::string& report, std::size_t parallelism) {
  app::AppConfig c = load_config(o);
  const auto [id, path] = resolve_database(c, o.database);
  db::Database database = app::open_database(path);
  db::Connection conn = database.connect();
  const schema::SchemaCatalog catalog = schema::introspect(conn, id);
  const auto store = load_demos(c.demo_path);
  const auto items = eval::load_eval_items(items_path);
  auto backend = backend_for(o, c, responses, record_to);
  auto audit = std::make_shared<llm::AuditLog>(c.audit_log);

  const std::vector<std::string> models = s.models.empty() ? std::vector<std::string>{c.default_model} : s.models;
  const std::vector<std::size_t> ks = s.k_demos.empty() ? std::vector<std::size_t>{c.flags.k_demos} : s.k_demos;
  std::vector<bool> schemas;
  for (const auto& v : s.include_schema) schemas.push_back(parse_bool(v));
  if (schemas.empty()) schemas.push_back(c.flags.include_schema);
  const std::vector<int> attempts = s.max_attempts.empty() ? std::vector<int>{c.flags.max_attempts} : s.max_attempts;

  std::vector<eval::EvalRun> runs;
  for (const auto& m : models) {
    const llm::ModelConfig mc = c.models.count(m) ? c.models.at(m) : llm::ModelConfig::for_model(m);
    llm::Gateway gateway(backend, mc, audit);
    for (bool with_schema : schemas) {
      for (std::size_t k : ks) {
        for (int a : attempts) {
          eval::EvalSettings settings;
          settings.flags = c.flags;
          settings.flags.include_schema = with_schema;
          settings.flags.k_demos = k;
          settings.flags.max_attempts = a;
          if (!s.cot.empty()) settings.flags.include_cot = parse_bool(s.cot);
          if (!s.guardrail.empty()) settings.flags.guardrail = parse_bool(s.guardrail);
          if (!s.repair.empty()) settings.flags.repair = parse_bool(s.repair);
          settings.flags.validate();
          settings.limits = c.limits;
          settings.parallelism = parallelism;
          runs.push_back(eval::run_eval(items, catalog, store.get(), gateway, database, settings));
        }
      }
    }
  }
  std::cout << eval::render_table(runs);
  if (!report.empty()) {
    nlohmann::json j = nlohmann::json::array();
    for (const auto& r : runs) j.push_back(eval::to_json(r));
    std::ofstream out(report);
    out << j.dump(2) << "\n";
  }
  return 0;
}

int run_query(const CommonOptions& o, const std::string& question, const std::string& model, const std::string& session,
              const std::string& responses) {
  app::AppConfig c = load_config(o);
  const auto [id, path] = resolve_database(c, o.database);
  c.databases[id] = path;
  auto backend = backend_for(o, c, responses, "");
  auto audit = std::make_shared<llm::AuditLog>(c.audit_log);
  app::Service service(c, backend, audit, load_demos(c.demo_path));
  nlohmann::json req = {{"question", question}, {"database", id}};
  if (!model.empty()) req["model"] = model;
  if (!session.empty()) req["session_id"] = session;
  const auto res = service.handle_query(req);
  std::cout << res.dump(2) << "\n";
  return res.at("status") == "ok" ? 0 : 3;
}

int run_ingest(const std::string& input, const std::string& query, std::size_t k) {
  const auto store = load_demos(input);
  std::cout << "ingested " << store->size() << " demonstrations (" << store->provider().name() << ")\n";
  if (!query.empty()) {
    for (const auto& sd : store->retrieve_top_k(query, k)) {
      std::cout << sd.similarity << "\t" << sd.demo.id << "\t" << sd.demo.question << "\n";
    }
  }
  return 0;
}

int run_serve(const CommonOptions& o, const std::string& host, int port) {
  const app::AppConfig c = load_config(o);
  auto backend = backend_for(o, c, "", "");
  auto audit = std::make_shared<llm::AuditLog>(c.audit_log);
  app::Service service(c, backend, audit, load_demos(c.demo_path));
  app::HttpServer server(service);
  std::cerr << "listening on " << host << ":" << port << " (backend " << backend->name() << ")\n";
  return server.listen(host, port) ? 0 : 1;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App cli{"Natural-language querying of clinical databases"};
  cli.require_subcommand(1);

  CommonOptions common;
  SweepOptions sweep;

  std::string sql_text, sql_file;
  bool explain = false;
  auto* transpile = cli.add_subcommand("transpile", "rewrite SQLite-dialect SQL for DuckDB");
  transpile->add_option("sql", sql_text, "query text (stdin when omitted)");
  transpile->add_option("--file,-f", sql_file, "read the query from a file");
  transpile->add_flag("--explain", explain, "list the rule families that fired");

  std::string input, output, report;
  bool keep_unanswerable = false;
  auto* preprocess = cli.add_subcommand("preprocess", "transpile and filter a raw dataset");
  add_common(preprocess, common, false);
  preprocess->add_option("--input,-i", input, "raw items (JSON lines)")->required();
  preprocess->add_option("--output,-o", output, "kept items (JSON lines)")->required();
  preprocess->add_option("--report", report, "drop report (JSON)");
  preprocess->add_flag("--keep-unanswerable", keep_unanswerable);

  std::string val_out, test_out;
  double val_fraction = 0.10;
  std::uint64_t seed = 0;
  auto* split = cli.add_subcommand("split", "seeded validation/test split");
  split->add_option("--input,-i", input)->required();
  split->add_option("--validation-out", val_out)->required();
  split->add_option("--test-out", test_out)->required();
  split->add_option("--validation-fraction", val_fraction)->capture_default_str()->check(CLI::Range(0.0, 1.0));
  split->add_option("--seed", seed)->capture_default_str();

  std::string responses, record_to;
  std::size_t parallelism = 1;
  auto* evalc = cli.add_subcommand("eval", "run the pipeline over a dataset and score RS(0)");
  add_common(evalc, common, true);
  evalc->add_option("--items,-i", input, "evaluation items (JSON lines)")->required();
  evalc->add_option("--model,-m", sweep.models, "model name(s)");
  evalc->add_option("--k-demos", sweep.k_demos, "demonstrations per prompt (several values sweep)");
  evalc->add_option("--include-schema", sweep.include_schema, "true/false (several values sweep)");
  evalc->add_option("--max-attempts", sweep.max_attempts, "total attempts per question (several values sweep)");
  evalc->add_option("--cot", sweep.cot, "true/false");
  evalc->add_option("--guardrail", sweep.guardrail, "true/false");
  evalc->add_option("--repair", sweep.repair, "true/false");
  evalc->add_option("--responses", responses, "JSON array of completions for --backend scripted");
  evalc->add_option("--record-cassette", record_to, "append every completion to this cassette");
  evalc->add_option("--report", report, "write the runs as JSON");
  evalc->add_option("--parallelism", parallelism)->capture_default_str()->check(CLI::Range(1, 64));

  std::string question, model, session;
  auto* query = cli.add_subcommand("query", "answer one question");
  add_common(query, common, true);
  query->add_option("question", question)->required();
  query->add_option("--model,-m", model);
  query->add_option("--session", session);
  query->add_option("--responses", responses, "JSON array of completions for --backend scripted");

  std::string probe;
  std::size_t k = 2;
  auto* ingest = cli.add_subcommand("ingest-demos", "validate a demonstration file");
  ingest->add_option("--input,-i", input)->required();
  ingest->add_option("--query", probe, "show the nearest demonstrations for this question");
  ingest->add_option("-k", k)->capture_default_str();

  std::string host = "127.0.0.1";
  int port = 8080;
  auto* serve = cli.add_subcommand("serve", "run the HTTP service");
  add_common(serve, common, true);
  serve->add_option("--host", host)->capture_default_str();
  serve->add_option("--port", port)->capture_default_str();

  CLI11_PARSE(cli, argc, argv);

  try {
    if (*transpile) return run_transpile(sql_text, sql_file, explain);
    if (*preprocess) return run_preprocess(common, input, output, keep_unanswerable, report);
    if (*split) return run_split(input, val_out, test_out, val_fraction, seed);
    if (*evalc) return run_eval(common, sweep, input, responses, record_to, report, parallelism);
    if (*query) return run_query(common, question, model, session, responses);
    if (*ingest) return run_ingest(input, probe, k);
    if (*serve) return run_serve(common, host, port);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
