#include "desk_run.hpp"

#include "engines.hpp"
#include "test_support.hpp"

namespace nlsql::testkit {

eval::EvalRun run_desk_replay(std::string_view cassette_file, const std::filesystem::path& audit_path) {
  const db::Database database = db::Database::in_memory();
  auto conn = database.connect();
  load_desk_database(conn);
  const schema::SchemaCatalog catalog = schema::introspect(conn, "desk");

  demos::DemoStore store(std::make_shared<demos::HashedTokenEmbedder>());
  store.ingest_demos(fixture_path("desk/demos.jsonl"));

  auto backend = std::make_shared<llm::ReplayBackend>(llm::Cassette::load(fixture_path(cassette_file)));
  llm::Gateway gateway(backend, llm::ModelConfig::for_model(std::string(kDeskModel)),
                       std::make_shared<llm::AuditLog>(audit_path));
  const auto items = eval::load_eval_items(fixture_path("desk/eval.jsonl"));
  return eval::run_eval(items, catalog, &store, gateway, database);
}

}  // namespace nlsql::testkit
