#include <gtest/gtest.h>

#include <random>

#include "engines.hpp"
#include "guardrail_corpus.hpp"
#include "nlsql/error.hpp"
#include "nlsql/eval_harness.hpp"
#include "nlsql/sql_postprocess.hpp"
#include "nlsql/text.hpp"
#include "sql_corpus.hpp"
#include "test_support.hpp"

namespace nlsql {
namespace {

using postprocess::ColumnReference;

class Desk : public ::testing::Test {
 protected:
  static void SetUpTestSuite() {
    auto database = db::Database::in_memory();
    auto conn = database.connect();
    testkit::load_desk_database(conn);
    catalog_ = new schema::SchemaCatalog(schema::introspect(conn, "desk"));
  }
  static void TearDownTestSuite() {
    delete catalog_;
    catalog_ = nullptr;
  }
  static schema::SchemaCatalog* catalog_;
};
schema::SchemaCatalog* Desk::catalog_ = nullptr;

TEST(Extract, SingleBlock) {
  EXPECT_EQ(postprocess::extract_sql("Let's think...```sql\nSELECT 1\n```"), "SELECT 1");
  EXPECT_EQ(postprocess::extract_sql("```sql\n  SELECT a\n  FROM t  \n```\nDone."), "SELECT a\n  FROM t");
}

TEST(Extract, LastBlockWins) {
  const std::string c = "draft:\n```sql\nSELECT 1\n```\nbetter:\n```sql\nSELECT 2\n```\n";
  EXPECT_EQ(postprocess::extract_sql(c), "SELECT 2");
}

TEST(Extract, MissingFenceFails) {
  EXPECT_THROW(postprocess::extract_sql("SELECT 1"), ExtractionError);
  EXPECT_THROW(postprocess::extract_sql("```\nSELECT 1\n```"), ExtractionError);
  EXPECT_THROW(postprocess::extract_sql("```sql\nSELECT 1"), ExtractionError);
}

TEST(Extract, WrapThenExtractIsIdentity) {
  // extraction trims, so identity is over trimmed text
  for (const auto& raw : testkit::random_sql_corpus(200, 77)) {
    const std::string sql(text::trim(raw));
    EXPECT_EQ(postprocess::extract_sql("1. think\n```sql\n" + sql + "\n```"), sql);
  }
}

TEST(Identifiers, DemoQueryTables) {
  const auto ids = postprocess::collect_identifiers(testkit::kEnterostomySql);
  EXPECT_EQ(ids.tables, (std::set<std::string>{"cost", "procedures_icd", "d_icd_procedures"}));
  EXPECT_TRUE(ids.columns.count(ColumnReference{"cost", "chargetime"}));
  EXPECT_TRUE(ids.columns.count(ColumnReference{"d_icd_procedures", "long_title"}));
}

TEST(Identifiers, TrivialAndScoping) {
  const auto none = postprocess::collect_identifiers("SELECT 1");
  EXPECT_TRUE(none.tables.empty());
  EXPECT_TRUE(none.columns.empty());
  const auto cte = postprocess::collect_identifiers("WITH t AS (SELECT a FROM x) SELECT a FROM t");
  EXPECT_EQ(cte.tables, std::set<std::string>{"x"});
  const auto alias = postprocess::collect_identifiers("SELECT p.drug FROM prescriptions AS p");
  EXPECT_EQ(alias.columns, (std::set<ColumnReference>{{"prescriptions", "drug"}}));
  EXPECT_THROW(postprocess::collect_identifiers("SELECT FROM"), ParseError);
}

TEST(Identifiers, OutputAliasesAreNotColumns) {
  const auto ids = postprocess::collect_identifiers("SELECT p.drug, COUNT(*) AS cnt FROM prescriptions AS p GROUP BY p.drug ORDER BY cnt DESC");
  for (const auto& c : ids.columns) EXPECT_NE(c.column, "cnt");
}

TEST_F(Desk, GoldQueriesPass) {
  std::size_t n = 0;
  for (const auto& item : eval::load_eval_items(testkit::fixture_path("desk/eval.jsonl"))) {
    const auto r = postprocess::guardrail_check(item.gold_sql, *catalog_);
    EXPECT_TRUE(r.passed) << item.id << ": " << r.error_message();
    ++n;
  }
  EXPECT_EQ(n, 10u);
  EXPECT_TRUE(postprocess::guardrail_check(testkit::kEnterostomySql, *catalog_).passed);
  EXPECT_TRUE(postprocess::guardrail_check(testkit::kPneumothoraxSql, *catalog_).passed);
}

TEST_F(Desk, FabricatedIdentifierSuiteIsRejected) {
  const auto suite = testkit::fabricated_identifier_suite(*catalog_, 100, 4242);
  ASSERT_EQ(suite.size(), 100u);
  for (const auto& c : suite) {
    const auto r = postprocess::guardrail_check(c.sql, *catalog_);
    ASSERT_FALSE(r.passed) << c.sql;
    bool named = false;
    for (const auto& v : r.violations) named = named || v.identifier.find(c.identifier) != std::string::npos;
    EXPECT_TRUE(named) << c.sql << " -> " << r.error_message();
    EXPECT_NE(r.error_message().find(c.identifier), std::string::npos) << c.sql;
  }
}

TEST_F(Desk, ViolationReasons) {
  const auto col = postprocess::guardrail_check("SELECT admissions.patient_ssn FROM admissions", *catalog_);
  ASSERT_FALSE(col.passed);
  EXPECT_EQ(col.violations[0].identifier.find("patient_ssn") != std::string::npos, true);
  EXPECT_EQ(col.violations[0].reason, "unknown column");
  EXPECT_EQ(col.error_message(), "query references unknown identifier " + col.violations[0].identifier);

  const auto tab = postprocess::guardrail_check("SELECT COUNT(*) FROM icustays", *catalog_);
  ASSERT_FALSE(tab.passed);
  EXPECT_EQ(tab.violations[0].reason, "unknown table");

  const auto star = postprocess::guardrail_check("SELECT * FROM admissions", *catalog_);
  EXPECT_FALSE(star.passed);
  EXPECT_EQ(star.violations[0].reason, "star select");
  EXPECT_TRUE(postprocess::guardrail_check("SELECT * FROM admissions", *catalog_, {.flag_star_select = false}).passed);
  EXPECT_TRUE(postprocess::guardrail_check("SELECT COUNT(*) FROM admissions", *catalog_).passed);

  const auto bad = postprocess::guardrail_check("SELEC nonsense", *catalog_);
  EXPECT_FALSE(bad.passed);
  EXPECT_EQ(bad.violations[0].reason, "parse error");
}

TEST_F(Desk, PassedIffNoViolations) {
  for (const auto& sql : testkit::random_sql_corpus(200, 5)) {
    const auto r = postprocess::guardrail_check(sql, *catalog_);
    EXPECT_EQ(r.passed, r.violations.empty()) << sql;
  }
}

TEST_F(Desk, AmbiguousBareColumnIsAccepted) {
  EXPECT_TRUE(postprocess::guardrail_check(
                  "SELECT hadm_id FROM admissions JOIN cost ON admissions.hadm_id = cost.hadm_id", *catalog_)
                  .passed);
  EXPECT_TRUE(postprocess::guardrail_check("SELECT MAXIMUM(cost.cost) FROM cost", *catalog_).passed);  // functions unchecked
}

TEST_F(Desk, BacktickIdentifiersResolve) {
  EXPECT_TRUE(postprocess::guardrail_check("SELECT a.`age` FROM admissions AS a", *catalog_).passed);
  EXPECT_FALSE(postprocess::guardrail_check("SELECT a.`agee` FROM admissions AS a", *catalog_).passed);
}

}  // namespace
}  // namespace nlsql
