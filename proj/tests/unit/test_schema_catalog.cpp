#include <gtest/gtest.h>

#include "engines.hpp"
#include "nlsql/database.hpp"
#include "nlsql/error.hpp"
#include "nlsql/schema_catalog.hpp"
#include "test_support.hpp"

namespace nlsql {
namespace {

using schema::ColumnSpec;
using schema::SchemaCatalog;
using schema::TableSchema;

class DeskCatalog : public ::testing::Test {
 protected:
  void SetUp() override {
    db_ = std::make_unique<db::Database>(db::Database::in_memory());
    conn_ = std::make_unique<db::Connection>(db_->connect());
    testkit::load_desk_database(*conn_);
  }
  std::unique_ptr<db::Database> db_;
  std::unique_ptr<db::Connection> conn_;
};

TEST(Introspect, SinglePrimaryKeyTable) {
  auto database = db::Database::in_memory();
  auto conn = database.connect();
  conn.execute("CREATE TABLE t(a INTEGER PRIMARY KEY)");
  const SchemaCatalog expected("toy", {TableSchema{"t", {ColumnSpec{0, "a", "INTEGER", true, std::nullopt, true}}}});
  EXPECT_EQ(schema::introspect(conn, "toy"), expected);
}

TEST(Introspect, EmptyDatabase) {
  auto database = db::Database::in_memory();
  auto conn = database.connect();
  const auto catalog = schema::introspect(conn, "empty");
  EXPECT_TRUE(catalog.tables().empty());
  EXPECT_EQ(schema::render_schema_block(catalog), "");
}

TEST(Introspect, TablesSortedAndViewsSkipped) {
  auto database = db::Database::in_memory();
  auto conn = database.connect();
  conn.execute("CREATE TABLE cost(x INTEGER); CREATE TABLE admissions(y INTEGER); CREATE TABLE chartevents(z INTEGER);"
               "CREATE VIEW v AS SELECT x FROM cost;");
  const auto catalog = schema::introspect(conn, "db");
  std::vector<std::string> names;
  for (const auto& t : catalog.tables()) names.push_back(t.name);
  EXPECT_EQ(names, (std::vector<std::string>{"admissions", "chartevents", "cost"}));
}

TEST(Introspect, DefaultsAndNotNull) {
  auto database = db::Database::in_memory();
  auto conn = database.connect();
  conn.execute("CREATE TABLE t(a INTEGER NOT NULL, b VARCHAR DEFAULT 'x')");
  const auto catalog = schema::introspect(conn, "db");
  const auto& cols = catalog.tables()[0].columns;
  ASSERT_EQ(cols.size(), 2u);
  EXPECT_TRUE(cols[0].not_null);
  EXPECT_FALSE(cols[0].default_value);
  ASSERT_TRUE(cols[1].default_value);
  EXPECT_NE(cols[1].default_value->find('x'), std::string::npos);
}

TEST(Catalog, RejectsDuplicateTablesIgnoringCase) {
  EXPECT_THROW(SchemaCatalog("d", {TableSchema{"a", {ColumnSpec{0, "x", "INTEGER"}}},
                                   TableSchema{"A", {ColumnSpec{0, "y", "INTEGER"}}}}),
               IntrospectionError);
  EXPECT_THROW(SchemaCatalog("d", {TableSchema{"a", {ColumnSpec{0, "x", "INTEGER"}, ColumnSpec{1, "X", "INTEGER"}}}}),
               IntrospectionError);
}

TEST(Render, SingleColumnTable) {
  const SchemaCatalog catalog("d", {TableSchema{"t", {ColumnSpec{0, "a", "INTEGER"}}}});
  const std::string expected =
      "Table: t\n"
      "Schema:\n"
      "cid name     type  notnull dflt_value     pk\n"
      "0    0    a  INTEGER    False       None  False";
  EXPECT_EQ(schema::render_schema_block(catalog), expected);
}

TEST_F(DeskCatalog, AdmissionsBlockMatchesPinnedFixture) {
  const auto full = schema::introspect(*conn_, "desk");
  const SchemaCatalog only("desk", {*full.find_table("admissions")});
  EXPECT_EQ(schema::render_schema_block(only), testkit::read_text(testkit::fixture_path("prompts/admissions_schema_block.txt")));
  EXPECT_NE(schema::render_schema_block(only).find("1     1          subject_id     BIGINT    False       None  False"),
            std::string::npos);
}

TEST_F(DeskCatalog, RenderIsDeterministicAndOrdered) {
  const auto a = schema::render_schema_block(schema::introspect(*conn_, "desk"));
  const auto b = schema::render_schema_block(schema::introspect(*conn_, "desk"));
  EXPECT_EQ(a, b);
  std::vector<std::size_t> positions;
  const auto catalog = schema::introspect(*conn_, "desk");
  for (const auto& t : catalog.tables()) {
    positions.push_back(a.find("Table: " + t.name + "\n"));
    ASSERT_NE(positions.back(), std::string::npos) << t.name;
    for (const auto& c : t.columns) EXPECT_NE(a.find(" " + c.name + " "), std::string::npos) << c.name;
  }
  EXPECT_TRUE(std::is_sorted(positions.begin(), positions.end()));
  EXPECT_NE(a.find("\n\nTable: chartevents\n"), std::string::npos);
}

TEST(Render, CanaryCellsNeverAppear) {
  auto database = db::Database::in_memory();
  auto conn = database.connect();
  const auto tokens = testkit::load_canary_database(conn);
  ASSERT_FALSE(tokens.empty());
  const auto text = schema::render_schema_block(schema::introspect(conn, "canary"));
  for (const auto& t : tokens) EXPECT_EQ(text.find(t), std::string::npos) << t;
}

TEST_F(DeskCatalog, LookupIsCaseInsensitive) {
  const auto catalog = schema::introspect(*conn_, "desk");
  EXPECT_TRUE(schema::lookup_identifier(catalog, "admissions", "subject_id"));
  EXPECT_FALSE(schema::lookup_identifier(catalog, "admissions", "absent_col"));
  EXPECT_TRUE(schema::lookup_identifier(catalog, "ADMISSIONS", "SUBJECT_ID"));
  EXPECT_TRUE(schema::lookup_identifier(catalog, "Cost"));
  EXPECT_FALSE(schema::lookup_identifier(catalog, "icustays"));
  // the engine agrees: mixed-case identifiers resolve
  EXPECT_NO_THROW(conn_->query("SELECT ADMISSIONS.SUBJECT_ID FROM ADMISSIONS LIMIT 1"));
}

TEST_F(DeskCatalog, JsonCarriesStructure) {
  const auto j = schema::to_json(schema::introspect(*conn_, "desk"));
  EXPECT_EQ(j.at("database_id"), "desk");
  EXPECT_EQ(j.at("tables").at(0).at("name"), "admissions");
  EXPECT_EQ(j.at("tables").at(0).at("columns").size(), 12u);
}

}  // namespace
}  // namespace nlsql
