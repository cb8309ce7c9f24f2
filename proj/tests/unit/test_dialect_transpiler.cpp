#include <gtest/gtest.h>

#include <set>

#include "engines.hpp"
#include "nlsql/database.hpp"
#include "nlsql/dialect_transpiler.hpp"
#include "nlsql/error.hpp"
#include "nlsql/eval_harness.hpp"
#include "nlsql/sql_ast.hpp"
#include "sql_corpus.hpp"
#include "test_support.hpp"

namespace nlsql {
namespace {

using sql::RuleFamily;

TEST(TranspileRules, CurrentTime) {
  EXPECT_EQ(sql::transpile("SELECT CURRENT_TIME"), "SELECT CURRENT_TIMESTAMP");
  EXPECT_EQ(sql::transpile("select current_time"), "SELECT CURRENT_TIMESTAMP");
  EXPECT_EQ(sql::transpile("SELECT datetime('now')"), "SELECT CAST(CURRENT_TIMESTAMP AS TIMESTAMP)");
}

TEST(TranspileRules, Cast) {
  EXPECT_EQ(sql::transpile("SELECT datetime(t)"), "SELECT CAST(t AS TIMESTAMP)");
  EXPECT_EQ(sql::transpile("SELECT datetime(a.admittime) FROM admissions AS a"),
            "SELECT CAST(a.admittime AS TIMESTAMP) FROM admissions AS a");
}

TEST(TranspileRules, StartOf) {
  EXPECT_EQ(sql::transpile("SELECT datetime(admittime, 'start of month')"), "SELECT DATE_TRUNC('month', admittime)");
  EXPECT_EQ(sql::transpile("SELECT datetime(t, 'start of year')"), "SELECT DATE_TRUNC('year', t)");
  EXPECT_EQ(sql::transpile("SELECT datetime(t, 'start of day')"), "SELECT DATE_TRUNC('day', t)");
}

TEST(TranspileRules, Offset) {
  EXPECT_EQ(sql::transpile("SELECT datetime(t, '+1 day')"), "SELECT t + INTERVAL '1 day'");
  EXPECT_EQ(sql::transpile("SELECT datetime(t, '-2 years')"), "SELECT t - INTERVAL '2 years'");
  EXPECT_EQ(sql::transpile("SELECT datetime(t, '+3 hour')"), "SELECT t + INTERVAL '3 hour'");
}

TEST(TranspileRules, ZeroOffsetKeepsTheCast) {
  EXPECT_EQ(sql::transpile("SELECT datetime(t, '-0 year')"), "SELECT CAST(t AS TIMESTAMP)");
  EXPECT_EQ(sql::transpile("SELECT datetime(t, '+0 day')"), "SELECT CAST(t AS TIMESTAMP)");
}

TEST(TranspileRules, ModifiersComposeLeftToRight) {
  EXPECT_EQ(sql::transpile("SELECT datetime(t, 'start of year', '+1 month')"),
            "SELECT DATE_TRUNC('year', t) + INTERVAL '1 month'");
  EXPECT_EQ(sql::transpile("SELECT datetime(t, '+1 month', 'start of year')"),
            "SELECT DATE_TRUNC('year', t + INTERVAL '1 month')");
  EXPECT_EQ(sql::transpile("SELECT datetime(CURRENT_TIME, 'start of year', '-0 year')"),
            "SELECT DATE_TRUNC('year', CURRENT_TIMESTAMP)");
}

TEST(TranspileRules, StrftimeGetsTimestampArgument) {
  EXPECT_EQ(sql::transpile("SELECT strftime('%Y', cost.chargetime) FROM cost"),
            "SELECT STRFTIME(CAST(cost.chargetime AS TIMESTAMP), '%Y') FROM cost");
}

TEST(TranspileRules, FiredFamiliesAreReported) {
  const auto r = sql::transpile_detailed("SELECT datetime(CURRENT_TIME, 'start of year', '-0 year', '+1 day')");
  EXPECT_EQ(r.fired, (std::set<RuleFamily>{RuleFamily::current_time, RuleFamily::datetime_start_of,
                                           RuleFamily::datetime_noop, RuleFamily::datetime_offset}));
}

TEST(TranspileRules, UnsupportedConstructsFailLoudly) {
  try {
    sql::transpile("SELECT datetime(t, 'weekday 0')");
    FAIL() << "expected an unsupported construct";
  } catch (const UnsupportedConstructError& e) {
    EXPECT_NE(e.construct().find("weekday 0"), std::string::npos);
  }
  EXPECT_THROW(sql::transpile("SELECT julianday(t) FROM x"), UnsupportedConstructError);
  EXPECT_THROW(sql::transpile("SELECT date(t) FROM x"), UnsupportedConstructError);
  EXPECT_THROW(sql::transpile("SELECT datetime(t, 'localtime')"), UnsupportedConstructError);
}

TEST(TranspileRules, ParseFailureIsNotAnUnsupportedConstruct) {
  try {
    sql::transpile("SELECT FROM");
    FAIL();
  } catch (const UnsupportedConstructError&) {
    FAIL() << "parse errors must stay distinct";
  } catch (const TranspileError& e) {
    EXPECT_NE(std::string(e.what()).find("parse error"), std::string::npos);
  }
}

TEST(TranspileRules, DisabledFamilyIsNotApplied) {
  sql::TranspileOptions opts;
  opts.disabled = {RuleFamily::current_time};
  EXPECT_EQ(sql::transpile("SELECT CURRENT_TIME", opts), "SELECT CURRENT_TIME");
  opts.disabled = {RuleFamily::datetime_start_of};
  EXPECT_THROW(sql::transpile("SELECT datetime(t, 'start of month')", opts), UnsupportedConstructError);
}

TEST(TranspileProperties, IdempotentAndPure) {
  const std::vector<std::string> already_target = {
      "SELECT 1",
      "SELECT a.x, COUNT(*) AS n FROM a GROUP BY a.x ORDER BY n DESC LIMIT 3",
      std::string(testkit::kEnterostomySql),
      "SELECT DATE_TRUNC('month', t) + INTERVAL '1 day' FROM x",
  };
  for (const auto& q : already_target) {
    EXPECT_EQ(sql::transpile(q), sql::render_sql(*sql::parse_sql(q, sql::Dialect::target))) << q;
  }
  for (const auto& c : testkit::differential_corpus(60, 11)) {
    const std::string once = sql::transpile(c.sql);
    EXPECT_EQ(sql::transpile(once), once) << c.sql;
    EXPECT_NO_THROW(sql::parse_sql(once, sql::Dialect::target)) << once;
  }
}

class Differential : public ::testing::Test {
 protected:
  void SetUp() override {
    db_ = std::make_unique<db::Database>(db::Database::in_memory());
    duck_ = std::make_unique<db::Connection>(db_->connect());
    testkit::populate_toy_schema(sqlite_, *duck_);
  }

  // true when the target engine's result for the transpiled query equals the source engine's
  bool agrees(const std::string& source_sql, const sql::TranspileOptions& opts, std::string* why = nullptr) {
    try {
      const QueryResult expected = sqlite_.query(source_sql);
      const QueryResult actual = duck_->query(sql::transpile(source_sql, opts));
      const bool eq = eval::results_equal(expected, actual);
      if (!eq && why) *why = "results differ";
      return eq;
    } catch (const std::exception& e) {
      if (why) *why = e.what();
      return false;
    }
  }

  testkit::SqliteDb sqlite_;
  std::unique_ptr<db::Database> db_;
  std::unique_ptr<db::Connection> duck_;
};

TEST_F(Differential, CorpusAgreesAcrossEngines) {
  const auto corpus = testkit::differential_corpus(72, 20260514);
  ASSERT_GE(corpus.size(), 50u);
  std::set<std::string> covered;
  for (const auto& c : corpus) {
    std::string why;
    EXPECT_TRUE(agrees(c.sql, {}, &why)) << c.sql << "\n  -> " << sql::transpile(c.sql) << "\n  " << why;
    for (const auto& f : sql::transpile_detailed(c.sql).fired) covered.insert(std::string(sql::to_string(f)));
  }
  for (RuleFamily f : sql::all_rule_families()) EXPECT_TRUE(covered.count(std::string(sql::to_string(f)))) << sql::to_string(f);
}

TEST_F(Differential, SourceQueriesReturnRows) {
  // guards against a corpus that only agrees because everything is empty
  std::size_t non_empty = 0;
  const auto corpus = testkit::differential_corpus(72, 20260514);
  for (const auto& c : corpus) non_empty += sqlite_.query(c.sql).rows.empty() ? 0 : 1;
  EXPECT_EQ(non_empty, corpus.size());
}

TEST_F(Differential, DisablingAnyFamilyBreaksACase) {
  const auto corpus = testkit::differential_corpus(72, 20260514);
  for (RuleFamily f : sql::all_rule_families()) {
    sql::TranspileOptions opts;
    opts.disabled = {f};
    std::size_t broken = 0;
    for (const auto& c : corpus) broken += agrees(c.sql, opts) ? 0 : 1;
    EXPECT_GE(broken, 1u) << "disabling " << sql::to_string(f) << " broke nothing";
  }
}

}  // namespace
}  // namespace nlsql
