#include "nlsql/app_surface.hpp"

#include <httplib.h>

#include <fstream>
#include <iterator>

#include "nlsql/error.hpp"
#include "nlsql/sql_ast.hpp"
#include "nlsql/text.hpp"
#include "nlsql/viz_spec.hpp"

namespace nlsql::app {

std::string_view to_string(BackendMode mode) {
  switch (mode) {
    case BackendMode::live: return "live";
    case BackendMode::replay: return "replay";
    case BackendMode::record: return "record";
  }
  return "replay";
}

BackendMode parse_backend_mode(std::string_view text) {
  if (text == "live") return BackendMode::live;
  if (text == "replay") return BackendMode::replay;
  if (text == "record") return BackendMode::record;
  throw std::invalid_argument("unknown backend mode '" + std::string(text) + "' (live, replay, record)");
}

namespace {

void refuse_credentials(const nlohmann::json& j, const std::string& where) {
  static const char* kForbidden[] = {"api_key", "apikey", "key", "secret", "password", "token", "bearer",
                                     "authorization"};
  if (!j.is_object()) return;
  for (const auto& [k, v] : j.items()) {
    for (const char* f : kForbidden) {
      if (text::iequals(k, f)) {
        throw Error("config key '" + where + k + "' looks like a credential; put the key in an environment variable "
                    "and name it with credential_env");
      }
    }
    refuse_credentials(v, where + k + ".");
  }
}

std::filesystem::path resolve(const std::filesystem::path& base, const std::string& p) {
  std::filesystem::path path(p);
  return path.is_absolute() || base.empty() ? path : base / path;
}

}  // namespace

AppConfig AppConfig::from_json(const nlohmann::json& j, const std::filesystem::path& base_dir) {
  refuse_credentials(j, "");
  AppConfig c;
  try {
    if (j.contains("databases")) {
      for (const auto& [id, p] : j.at("databases").items()) c.databases[id] = resolve(base_dir, p.get<std::string>());
    }
    c.default_model = j.value("default_model", c.default_model);
    if (j.contains("models")) {
      for (const auto& [name, m] : j.at("models").items()) {
        llm::ModelConfig mc = llm::ModelConfig::for_model(name);
        mc.endpoint = m.value("endpoint", mc.endpoint);
        mc.credential_env = m.value("credential_env", mc.credential_env);
        mc.timeout = std::chrono::milliseconds(m.value("timeout_ms", static_cast<std::int64_t>(mc.timeout.count())));
        if (m.contains("decoding")) mc.decoding = m.at("decoding");
        mc.validate();
        c.models[name] = std::move(mc);
      }
    }
    if (!c.models.count(c.default_model)) c.models[c.default_model] = llm::ModelConfig::for_model(c.default_model);
    if (j.contains("flags")) {
      const auto& f = j.at("flags");
      c.flags.k_demos = f.value("k_demos", c.flags.k_demos);
      c.flags.include_schema = f.value("include_schema", c.flags.include_schema);
      c.flags.include_cot = f.value("include_cot", c.flags.include_cot);
      c.flags.max_attempts = f.value("max_attempts", c.flags.max_attempts);
      c.flags.guardrail = f.value("guardrail", c.flags.guardrail);
      c.flags.repair = f.value("repair", c.flags.repair);
    }
    c.flags.validate();
    if (j.contains("limits")) {
      const auto& l = j.at("limits");
      c.limits.timeout = std::chrono::milliseconds(l.value("timeout_ms", static_cast<std::int64_t>(c.limits.timeout.count())));
      c.limits.max_rows = l.value("max_rows", c.limits.max_rows);
    }
    if (j.contains("demo_path")) c.demo_path = resolve(base_dir, j.at("demo_path").get<std::string>());
    if (j.contains("backend")) c.backend = parse_backend_mode(j.at("backend").get<std::string>());
    if (j.contains("cassettes")) {
      for (const auto& p : j.at("cassettes")) c.cassettes.push_back(resolve(base_dir, p.get<std::string>()));
    }
    if (j.contains("audit_log")) c.audit_log = resolve(base_dir, j.at("audit_log").get<std::string>());
    c.display_rows = j.value("display_rows", c.display_rows);
    c.results_per_session = j.value("results_per_session", c.results_per_session);
  } catch (const nlohmann::json::exception& e) {
    throw Error(std::string("malformed config: ") + e.what());
  }
  return c;
}

AppConfig AppConfig::load(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open config " + path.string());
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(in);
  } catch (const nlohmann::json::exception& e) {
    throw Error("malformed config " + path.string() + ": " + e.what());
  }
  return from_json(j, path.parent_path());
}

const llm::ModelConfig& AppConfig::model(std::string_view name) const {
  const auto it = models.find(std::string(name));
  if (it == models.end()) throw RequestError(404, "unknown model '" + std::string(name) + "'");
  return it->second;
}

db::Database open_database(const std::filesystem::path& path) {
  if (path.extension() == ".sql") {
    std::ifstream in(path);
    if (!in) throw DatabaseError("cannot open database script " + path.string());
    const std::string script((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    db::Database database = db::Database::in_memory();
    database.connect().execute(script);
    return database;
  }
  return db::Database::open(path, {.read_only = true});
}

std::shared_ptr<llm::Backend> make_backend(const AppConfig& config) {
  switch (config.backend) {
    case BackendMode::live: return std::make_shared<llm::LiveBackend>();
    case BackendMode::replay: return std::make_shared<llm::ReplayBackend>(llm::Cassette::load_all(config.cassettes));
    case BackendMode::record:
      if (config.cassettes.empty()) throw Error("record mode needs a cassette path");
      return std::make_shared<llm::RecordingBackend>(std::make_shared<llm::LiveBackend>(), config.cassettes.front());
  }
  throw Error("unknown backend mode");
}

// ---- sessions ----

Session::Session(std::string id, std::string database_id, std::string model_name, std::size_t max_results)
    : id_(std::move(id)),
      database_id_(std::move(database_id)),
      model_name_(std::move(model_name)),
      max_results_(std::max<std::size_t>(max_results, 1)) {}

std::vector<Turn> Session::turns() const {
  std::lock_guard lock(mutex_);
  return turns_;
}

std::vector<exec::SessionTurn> Session::context_turns() const {
  std::lock_guard lock(mutex_);
  std::vector<exec::SessionTurn> out;
  for (const auto& t : turns_) {
    if (t.final_sql) out.push_back({t.question, *t.final_sql});
  }
  return out;
}

void Session::add_turn(Turn turn) {
  std::lock_guard lock(mutex_);
  turns_.push_back(std::move(turn));
}

std::string Session::store_result(QueryResult result) {
  std::lock_guard lock(mutex_);
  const std::string rid = "r" + llm::sha256_hex(id_ + "/" + std::to_string(++counter_)).substr(0, 16);
  results_.emplace_front(rid, std::move(result));
  while (results_.size() > max_results_) results_.pop_back();
  return rid;
}

std::optional<QueryResult> Session::find_result(std::string_view result_id) {
  std::lock_guard lock(mutex_);
  for (auto it = results_.begin(); it != results_.end(); ++it) {
    if (it->first == result_id) {
      results_.splice(results_.begin(), results_, it);
      return results_.front().second;
    }
  }
  return std::nullopt;
}

std::size_t Session::result_count() const {
  std::lock_guard lock(mutex_);
  return results_.size();
}

std::shared_ptr<Session> SessionStore::open(std::string_view id, const std::string& database_id,
                                            const std::string& model) {
  std::lock_guard lock(mutex_);
  if (!id.empty()) {
    const auto it = sessions_.find(id);
    if (it != sessions_.end()) {
      if (it->second->database_id() != database_id) {
        throw RequestError(409, "session " + std::string(id) + " is bound to database " + it->second->database_id());
      }
      return it->second;
    }
  }
  std::string sid = id.empty() ? "s" + llm::sha256_hex(llm::utc_now_iso8601() + std::to_string(++counter_)).substr(0, 16)
                               : std::string(id);
  auto s = std::make_shared<Session>(sid, database_id, model, max_results_);
  sessions_.emplace(sid, s);
  return s;
}

std::shared_ptr<Session> SessionStore::find(std::string_view id) const {
  std::lock_guard lock(mutex_);
  const auto it = sessions_.find(id);
  return it == sessions_.end() ? nullptr : it->second;
}

// ---- service ----

Service::Service(AppConfig config, std::shared_ptr<llm::Backend> backend, std::shared_ptr<llm::AuditLog> audit,
                 std::shared_ptr<const demos::DemoStore> demos)
    : config_(std::move(config)),
      backend_(std::move(backend)),
      audit_(std::move(audit)),
      demos_(std::move(demos)),
      sessions_(config_.results_per_session) {
  if (!backend_) throw Error("service needs a model backend");
  if (!audit_) throw AuditError("service needs an audit log");
  if (!config_.models.count(config_.default_model)) {
    config_.models[config_.default_model] = llm::ModelConfig::for_model(config_.default_model);
  }
}

Service::DatabaseHandle& Service::database(std::string_view id) {
  std::lock_guard lock(mutex_);
  const auto it = databases_.find(id);
  if (it != databases_.end()) return *it->second;
  const auto path = config_.databases.find(std::string(id));
  if (path == config_.databases.end()) throw RequestError(404, "unknown database '" + std::string(id) + "'");
  db::Database database = open_database(path->second);
  db::Connection conn = database.connect();
  schema::SchemaCatalog catalog = schema::introspect(conn, std::string(id));
  auto handle = std::make_unique<DatabaseHandle>(DatabaseHandle{std::move(database), std::move(catalog)});
  auto& ref = *handle;
  databases_.emplace(std::string(id), std::move(handle));
  return ref;
}

llm::Gateway& Service::gateway(const std::string& model) {
  const llm::ModelConfig& mc = config_.model(model);
  std::lock_guard lock(mutex_);
  auto it = gateways_.find(model);
  if (it == gateways_.end()) it = gateways_.emplace(model, std::make_unique<llm::Gateway>(backend_, mc, audit_)).first;
  return *it->second;
}

namespace {

std::string required_string(const nlohmann::json& req, const char* key) {
  if (!req.is_object() || !req.contains(key) || !req.at(key).is_string()) {
    throw RequestError(400, std::string("request needs a string field '") + key + "'");
  }
  std::string v = req.at(key).get<std::string>();
  if (text::trim(v).empty()) throw RequestError(400, std::string("field '") + key + "' is empty");
  return v;
}

exec::PipelineFlags apply_overrides(exec::PipelineFlags f, const nlohmann::json& req) {
  if (!req.contains("flags")) return f;
  const auto& o = req.at("flags");
  if (!o.is_object()) throw RequestError(400, "flags must be an object");
  try {
    f.k_demos = o.value("k_demos", f.k_demos);
    f.include_schema = o.value("include_schema", f.include_schema);
    f.include_cot = o.value("include_cot", f.include_cot);
    f.max_attempts = o.value("max_attempts", f.max_attempts);
    f.repair = o.value("repair", f.repair);
    f.validate();
  } catch (const std::exception& e) {
    throw RequestError(400, std::string("bad flags: ") + e.what());
  }
  return f;
}

}  // namespace

nlohmann::json Service::handle_query(const nlohmann::json& req) {
  const std::string question = required_string(req, "question");
  const std::string db_id = required_string(req, "database");
  const std::string model = req.contains("model") ? required_string(req, "model") : config_.default_model;
  const std::string sid = req.contains("session_id") && req.at("session_id").is_string()
                              ? req.at("session_id").get<std::string>()
                              : std::string();
  const exec::PipelineFlags flags = apply_overrides(config_.flags, req);
  DatabaseHandle& handle = database(db_id);
  llm::Gateway& gw = gateway(model);
  auto session = sessions_.open(sid, db_id, model);

  std::lock_guard run_lock(session->run_mutex());
  const auto context = session->context_turns();
  db::Connection conn = handle.database.connect();
  exec::PipelineContext ctx{handle.catalog, demos_.get(), gw, conn, flags, config_.limits, context};
  const exec::PipelineOutcome outcome = exec::run_pipeline(question, ctx);

  nlohmann::json attempts = nlohmann::json::array();
  for (const auto& a : outcome.attempts) attempts.push_back(exec::to_json(a));
  nlohmann::json res = {{"session_id", session->id()},
                        {"question", question},
                        {"database", db_id},
                        {"model", model},
                        {"attempts", attempts},
                        {"latency_seconds", outcome.total_latency_seconds}};
  Turn turn;
  turn.question = question;
  if (outcome.answered()) {
    turn.final_sql = outcome.final_sql;
    turn.status = "ok";
    res["status"] = "ok";
    res["sql"] = outcome.final_sql;
    res["result"] = to_json(*outcome.result, config_.display_rows);
    turn.result_id = session->store_result(*outcome.result);
    res["result_id"] = *turn.result_id;
  } else {
    turn.status = "abstained";
    res["status"] = "abstained";
    res["reason"] = std::string(exec::to_string(*outcome.abstained));
    res["sql"] = nullptr;
  }
  session->add_turn(turn);
  res["turn"] = session->turns().size();
  return res;
}

nlohmann::json Service::handle_visualize(const nlohmann::json& req) {
  const std::string sid = required_string(req, "session_id");
  const std::string rid = required_string(req, "result_id");
  auto session = sessions_.find(sid);
  if (!session) throw RequestError(404, "unknown session '" + sid + "'");
  std::optional<QueryResult> result = session->find_result(rid);
  if (!result) throw RequestError(404, "result '" + rid + "' is not retained in this session");
  std::string question = req.contains("question") && req.at("question").is_string()
                             ? req.at("question").get<std::string>()
                             : std::string();
  if (text::trim(question).empty()) {
    for (const auto& t : session->turns()) {
      if (t.result_id == rid) question = t.question;
    }
  }
  if (result->columns.empty()) throw RequestError(422, "result has no columns to plot");

  std::lock_guard run_lock(session->run_mutex());
  const viz::VizOutcome v = viz::generate_chart(*result, question, gateway(session->model_name()));
  if (!v.chart) {
    return {{"status", "abstained"}, {"reason", "viz_unavailable"}, {"error", v.error}, {"session_id", sid}};
  }
  return {{"status", "ok"}, {"session_id", sid}, {"spec", viz::format_viz_spec(*v.spec)}, {"chart", viz::to_json(*v.chart)}};
}

nlohmann::json Service::handle_schema(std::string_view database_id) {
  DatabaseHandle& handle = database(database_id);
  return {{"status", "ok"},
          {"database", std::string(database_id)},
          {"schema_text", schema::render_schema_block(handle.catalog)},
          {"catalog", schema::to_json(handle.catalog)}};
}

nlohmann::json Service::handle_history(std::string_view session_id) {
  auto session = sessions_.find(session_id);
  if (!session) throw RequestError(404, "unknown session '" + std::string(session_id) + "'");
  nlohmann::json turns = nlohmann::json::array();
  std::size_t n = 0;
  for (const auto& t : session->turns()) {
    turns.push_back({{"turn", ++n},
                     {"question", t.question},
                     {"sql", t.final_sql ? nlohmann::json(*t.final_sql) : nlohmann::json(nullptr)},
                     {"result_id", t.result_id ? nlohmann::json(*t.result_id) : nlohmann::json(nullptr)},
                     {"status", t.status}});
  }
  return {{"status", "ok"}, {"session_id", session->id()}, {"database", session->database_id()}, {"turns", turns}};
}

nlohmann::json Service::handle_cohort_flow(const nlohmann::json& req) {
  const std::string db_id = required_string(req, "database");
  const std::string sql = required_string(req, "sql");
  DatabaseHandle& handle = database(db_id);
  db::Connection conn = handle.database.connect();
  try {
    nlohmann::json flow = cohort_flow(sql, conn, config_.limits);
    flow["status"] = "ok";
    return flow;
  } catch (const ParseError& e) {
    throw RequestError(422, e.what());
  }
}

// ---- cohort flow ----

namespace {

sql::InSubquery* first_in_subquery(sql::Expr* e) {
  if (!e) return nullptr;
  if (auto* in = std::get_if<sql::InSubquery>(&e->node)) return in->negated ? nullptr : in;
  if (auto* b = std::get_if<sql::BinaryOp>(&e->node)) {
    if (text::iequals(b->op, "AND")) {
      if (auto* l = first_in_subquery(b->left.get())) return l;
      return first_in_subquery(b->right.get());
    }
  }
  return nullptr;
}

sql::SelectCore* core_of(sql::Query& q) { return std::get_if<sql::SelectCore>(&q.body.node); }

}  // namespace

nlohmann::json cohort_flow(std::string_view sql_text, db::Connection& connection, const exec::ExecutionLimits& limits) {
  sql::QueryPtr root = sql::parse_sql(sql_text, sql::Dialect::target);
  std::vector<sql::Query*> chain = {root.get()};
  while (true) {
    sql::SelectCore* core = core_of(*chain.back());
    sql::InSubquery* in = core ? first_in_subquery(core->where.get()) : nullptr;
    if (!in) break;
    chain.push_back(in->query.get());
  }
  nlohmann::json steps = nlohmann::json::array();
  for (auto it = chain.rbegin(); it != chain.rend(); ++it) {
    const std::string step_sql = sql::render_sql(**it);
    nlohmann::json step = {{"sql", step_sql}};
    std::vector<std::string> tables;
    if (sql::SelectCore* core = core_of(**it)) {
      for (const auto& t : core->from) {
        if (auto* named = std::get_if<sql::NamedTable>(&t.source)) {
          std::vector<std::string> parts;
          for (const auto& p : named->path) parts.push_back(p.name);
          tables.push_back(text::join(parts, "."));
        }
      }
      step["filter"] = core->where ? nlohmann::json(sql::render_expr(*core->where)) : nlohmann::json(nullptr);
    }
    step["tables"] = tables;
    try {
      const QueryResult r = exec::execute_sql("SELECT COUNT(*) FROM (" + step_sql + ") AS cohort_step", connection, limits);
      step["row_count"] = nlsql::to_json(r.rows.at(0).at(0));
    } catch (const ExecutionError& e) {
      step["row_count"] = nullptr;
      step["error"] = e.what();
    }
    steps.push_back(std::move(step));
  }
  return {{"steps", steps}};
}

// ---- http ----

struct HttpServer::Impl {
  explicit Impl(Service& s) : service(s) {}
  Service& service;
  httplib::Server server;
};

namespace {

void reply(httplib::Response& res, int status, const nlohmann::json& body) {
  res.status = status;
  res.set_content(body.dump(), "application/json");
}

template <typename F>
void guarded(httplib::Response& res, F&& f) {
  try {
    reply(res, 200, f());
  } catch (const RequestError& e) {
    reply(res, e.status(), {{"status", "error"}, {"error", e.what()}});
  } catch (const AuditError& e) {
    reply(res, 500, {{"status", "error"}, {"error", e.what()}});
  } catch (const std::exception& e) {
    reply(res, 500, {{"status", "error"}, {"error", e.what()}});
  }
}

nlohmann::json parse_body(const httplib::Request& req) {
  try {
    return nlohmann::json::parse(req.body);
  } catch (const nlohmann::json::exception& e) {
    throw RequestError(400, std::string("request body is not JSON: ") + e.what());
  }
}

}  // namespace

HttpServer::HttpServer(Service& service) : impl_(std::make_unique<Impl>(service)) {
  auto& s = impl_->server;
  Service* svc = &service;
  s.Post("/api/query", [svc](const httplib::Request& req, httplib::Response& res) {
    guarded(res, [&] { return svc->handle_query(parse_body(req)); });
  });
  s.Post("/api/visualize", [svc](const httplib::Request& req, httplib::Response& res) {
    guarded(res, [&] { return svc->handle_visualize(parse_body(req)); });
  });
  s.Post("/api/cohort-flow", [svc](const httplib::Request& req, httplib::Response& res) {
    guarded(res, [&] { return svc->handle_cohort_flow(parse_body(req)); });
  });
  s.Get(R"(/api/schema/([^/]+))", [svc](const httplib::Request& req, httplib::Response& res) {
    guarded(res, [&] { return svc->handle_schema(req.matches[1].str()); });
  });
  s.Get(R"(/api/session/([^/]+)/history)", [svc](const httplib::Request& req, httplib::Response& res) {
    guarded(res, [&] { return svc->handle_history(req.matches[1].str()); });
  });
}

HttpServer::~HttpServer() = default;

bool HttpServer::listen(const std::string& host, int port) { return impl_->server.listen(host, port); }
int HttpServer::bind_any_port(const std::string& host) { return impl_->server.bind_to_any_port(host); }
bool HttpServer::listen_after_bind() { return impl_->server.listen_after_bind(); }
void HttpServer::stop() { impl_->server.stop(); }

}  // namespace nlsql::app
