#include <gtest/gtest.h>

#include <filesystem>

#include <unistd.h>

#include "engines.hpp"
#include "nlsql/error.hpp"
#include "nlsql/execution_sandbox.hpp"
#include "nlsql/prompt_builder.hpp"
#include "test_support.hpp"

namespace nlsql {
namespace {

namespace fs = std::filesystem;
using exec::execute_sql;

std::string fenced(std::string_view sql) { return "1. tables\n```sql\n" + std::string(sql) + "\n```"; }

class DeskDb : public ::testing::Test {
 protected:
  void SetUp() override {
    db_ = std::make_unique<db::Database>(db::Database::in_memory());
    conn_ = std::make_unique<db::Connection>(db_->connect());
    testkit::load_desk_database(*conn_);
    catalog_ = std::make_unique<schema::SchemaCatalog>(schema::introspect(*conn_, "desk"));
    dir_ = fs::temp_directory_path() / ("nlsql_exec_" + std::to_string(::getpid()) + "_" +
                                        ::testing::UnitTest::GetInstance()->current_test_info()->name());
    fs::remove_all(dir_);
    fs::create_directories(dir_);
    audit_ = std::make_shared<llm::AuditLog>(dir_ / "audit.jsonl");
  }
  void TearDown() override { fs::remove_all(dir_); }

  std::unique_ptr<llm::Gateway> scripted(std::vector<std::string> responses) {
    script_ = std::make_shared<llm::ScriptedBackend>(std::move(responses));
    return std::make_unique<llm::Gateway>(script_, llm::ModelConfig::for_model("o3-2025-04-16"), audit_);
  }

  exec::PipelineOutcome run(llm::Gateway& gw, std::string_view question, exec::PipelineFlags flags = {},
                            std::span<const exec::SessionTurn> session = {}) {
    exec::PipelineContext ctx{*catalog_, nullptr, gw, *conn_, flags, {}, session};
    return exec::run_pipeline(question, ctx);
  }

  std::unique_ptr<db::Database> db_;
  std::unique_ptr<db::Connection> conn_;
  std::unique_ptr<schema::SchemaCatalog> catalog_;
  fs::path dir_;
  std::shared_ptr<llm::AuditLog> audit_;
  std::shared_ptr<llm::ScriptedBackend> script_;
};

TEST_F(DeskDb, SelectOneAndEmptyResult) {
  const auto one = execute_sql("SELECT 1", *conn_);
  ASSERT_EQ(one.row_count(), 1u);
  EXPECT_EQ(std::get<std::int64_t>(one.rows[0][0]), 1);
  const auto none = execute_sql("SELECT drug FROM prescriptions WHERE drug = 'no such drug'", *conn_);
  EXPECT_EQ(none.row_count(), 0u);
  EXPECT_EQ(none.column_names(), std::vector<std::string>{"drug"});
}

TEST_F(DeskDb, UnknownColumnMessageNamesIt) {
  try {
    execute_sql("SELECT admissions.patient_ssn FROM admissions", *conn_, {}, catalog_.get());
    FAIL();
  } catch (const ExecutionError& e) {
    EXPECT_NE(std::string(e.what()).find("patient_ssn"), std::string::npos) << e.what();
  }
}

TEST_F(DeskDb, OnlySingleReadOnlyStatements) {
  EXPECT_THROW(execute_sql("DROP TABLE admissions", *conn_), PolicyError);
  EXPECT_THROW(execute_sql("INSERT INTO cost VALUES (1,1,1,'x',1,NULL,1.0)", *conn_), PolicyError);
  EXPECT_THROW(execute_sql("SELECT 1; DELETE FROM cost", *conn_), PolicyError);
  EXPECT_THROW(execute_sql("SELECT 1; SELECT 2", *conn_), PolicyError);
  EXPECT_THROW(execute_sql("/* hi */ UPDATE cost SET cost = 0", *conn_), PolicyError);
  EXPECT_THROW(execute_sql("CREATE TABLE x AS SELECT 1", *conn_), PolicyError);
  // nothing changed
  EXPECT_GT(conn_->query("SELECT COUNT(*) FROM admissions").rows.size(), 0u);
  EXPECT_NO_THROW(execute_sql("WITH t AS (SELECT 1 AS a) SELECT a FROM t", *conn_));
  EXPECT_NO_THROW(execute_sql("(SELECT 1)", *conn_));
}

TEST_F(DeskDb, TimeoutInterruptsLongQueries) {
  exec::ExecutionLimits limits;
  limits.timeout = std::chrono::milliseconds(200);
  const auto start = std::chrono::steady_clock::now();
  EXPECT_THROW(execute_sql("SELECT COUNT(*) FROM range(200000) a, range(200000) b WHERE a.range + b.range = -1",
                           *conn_, limits),
               QueryTimeoutError);
  EXPECT_LT(std::chrono::steady_clock::now() - start, std::chrono::seconds(10));
  EXPECT_NO_THROW(execute_sql("SELECT 1", *conn_, limits));  // connection still usable
}

TEST_F(DeskDb, RowCapMarksTruncation) {
  exec::ExecutionLimits limits;
  limits.max_rows = 3;
  const auto r = execute_sql("SELECT range FROM range(10)", *conn_, limits);
  EXPECT_EQ(r.row_count(), 3u);
  EXPECT_TRUE(r.truncated);
  EXPECT_FALSE(execute_sql("SELECT range FROM range(3)", *conn_, limits).truncated);
}

TEST(Quotes, BackticksBecomeDoubleQuotes) {
  EXPECT_EQ(exec::normalize_identifier_quotes("SELECT `drug` FROM `prescriptions`"),
            "SELECT \"drug\" FROM \"prescriptions\"");
  EXPECT_EQ(exec::normalize_identifier_quotes("SELECT '`x`' -- `y`\n/* `z` */"), "SELECT '`x`' -- `y`\n/* `z` */");
  EXPECT_EQ(exec::normalize_identifier_quotes("SELECT `a\"b`"), "SELECT \"a\"\"b\"");
  EXPECT_EQ(exec::normalize_identifier_quotes("SELECT `open"), "SELECT `open");
}

TEST_F(DeskDb, BacktickQueriesExecute) {
  const auto r = execute_sql("SELECT COUNT(`a`.`hadm_id`) AS n FROM `admissions` AS `a`", *conn_);
  EXPECT_EQ(r.column_names(), std::vector<std::string>{"n"});
}

TEST(Redaction, ValuesAbsentFromQueryAreMasked) {
  const std::string msg = "Conversion Error: Could not convert string 'Jane Doe' to INT32";
  EXPECT_EQ(exec::redact_engine_message(msg, "SELECT CAST(name AS INTEGER) FROM t", nullptr),
            "Conversion Error: Could not convert string '<redacted>' to INT32");
  const std::string binder = "Binder Error: Referenced column \"xyz\" not found";
  EXPECT_EQ(exec::redact_engine_message(binder, "SELECT xyz FROM t", nullptr), binder);
  const std::string echo = "Parser Error: syntax error\nLINE 1: SELECT 'x' FRM\n                  ^";
  EXPECT_EQ(exec::redact_engine_message(echo, "SELECT 'x' FRM", nullptr), echo);
}

TEST(Redaction, CanaryCellsNeverReachErrors) {
  auto database = db::Database::in_memory();
  auto conn = database.connect();
  const auto tokens = testkit::load_canary_database(conn);
  const auto catalog = schema::introspect(conn, "canary");
  const char* queries[] = {
      "SELECT CAST(drug AS INTEGER) FROM prescriptions",
      "SELECT CAST(admittime AS TIMESTAMP) FROM admissions",
      "SELECT CAST(cost AS DOUBLE) + 1 FROM cost",
      "SELECT subject_id::BIGINT FROM patients",
      "SELECT CAST(charttime AS DATE) FROM chartevents",
  };
  for (const char* q : queries) {
    try {
      execute_sql(q, conn, {}, &catalog);
      ADD_FAILURE() << q << " unexpectedly succeeded";
    } catch (const ExecutionError& e) {
      const std::string what = e.what();
      for (const auto& t : tokens) ASSERT_EQ(what.find(t), std::string::npos) << q << ": " << what;
    }
  }
}

// ---- pipeline ----

TEST_F(DeskDb, FirstAttemptSucceeds) {
  auto gw = scripted({fenced("SELECT COUNT(*) AS n FROM admissions")});
  const auto out = run(*gw, "How many admissions?");
  ASSERT_TRUE(out.answered());
  EXPECT_EQ(out.attempts.size(), 1u);
  EXPECT_EQ(out.final_sql, "SELECT COUNT(*) AS n FROM admissions");
  EXPECT_EQ(out.attempts[0].prompt_kind, "sql_generation");
  EXPECT_TRUE(out.attempts[0].guardrail->passed);
  EXPECT_FALSE(out.abstained);
  EXPECT_EQ(audit_->entries_written(), 1u);
}

TEST_F(DeskDb, GuardrailFailureRetriesWithTheReason) {
  auto gw = scripted({fenced("SELECT admissions.admit_time FROM admissions"),
                      fenced("SELECT admissions.admittime FROM admissions")});
  const auto out = run(*gw, "When were patients admitted?");
  ASSERT_TRUE(out.answered());
  ASSERT_EQ(out.attempts.size(), 2u);
  EXPECT_EQ(out.attempts[0].error_kind, "guardrail");
  EXPECT_EQ(out.attempts[1].prompt_kind, "sql_retry");
  const auto entries = llm::AuditLog::read(audit_->path());
  ASSERT_EQ(entries.size(), 2u);
  EXPECT_NE(entries[1].prompt.find("admit_time"), std::string::npos);
  EXPECT_NE(entries[1].prompt.find("unknown identifier"), std::string::npos);
  EXPECT_TRUE(entries[1].prompt.starts_with(entries[0].prompt));
}

TEST_F(DeskDb, ExecutionErrorsExhaustAttempts) {
  auto gw = scripted({fenced("SELECT MAXIMUM(cost.cost) FROM cost"), fenced("SELECT MAXIMUM(cost.cost) FROM cost"),
                      fenced("SELECT MAX(cost.cost) FROM cost")});
  exec::PipelineFlags flags;
  flags.max_attempts = 2;
  const auto out = run(*gw, "What is the largest cost?", flags);
  EXPECT_FALSE(out.answered());
  ASSERT_TRUE(out.abstained);
  EXPECT_EQ(*out.abstained, exec::AbstainReason::retries_exhausted);
  EXPECT_EQ(out.attempts.size(), 2u);
  EXPECT_EQ(out.attempts[1].error_kind, "execution");
  EXPECT_EQ(script_->remaining(), 1u);  // max_attempts counts every call
}

TEST_F(DeskDb, AttemptCountNeverExceedsTheLimit) {
  for (int limit = 1; limit <= 4; ++limit) {
    std::vector<std::string> bad(6, fenced("SELECT nope.x FROM nope"));
    auto gw = scripted(bad);
    exec::PipelineFlags flags;
    flags.max_attempts = limit;
    const auto out = run(*gw, "q?", flags);
    EXPECT_EQ(out.attempts.size(), static_cast<std::size_t>(limit));
    EXPECT_FALSE(out.answered());
  }
  exec::PipelineFlags zero;
  zero.max_attempts = 0;
  auto gw = scripted({});
  EXPECT_THROW(run(*gw, "q?", zero), std::invalid_argument);
}

TEST_F(DeskDb, MissingFenceIsAnExtractionRetry) {
  auto gw = scripted({"SELECT 1", fenced("SELECT 1")});
  const auto out = run(*gw, "q?");
  ASSERT_TRUE(out.answered());
  EXPECT_EQ(out.attempts[0].error_kind, "extraction");
  EXPECT_FALSE(out.attempts[0].extracted_sql);
}

TEST_F(DeskDb, PolicyViolationAbstainsImmediately) {
  auto gw = scripted({fenced("DELETE FROM cost"), fenced("SELECT 1")});
  exec::PipelineFlags flags;
  flags.guardrail = false;
  const auto out = run(*gw, "q?", flags);
  EXPECT_EQ(*out.abstained, exec::AbstainReason::policy);
  EXPECT_EQ(out.attempts.size(), 1u);
  EXPECT_GT(conn_->query("SELECT COUNT(*) FROM cost").rows.size(), 0u);
}

TEST_F(DeskDb, GatewayFailureAbstainsAndCassetteMissIsLabelled) {
  auto miss = std::make_shared<llm::ReplayBackend>(llm::Cassette{});
  llm::Gateway gw(miss, llm::ModelConfig::for_model("o3-2025-04-16"), audit_);
  const auto out = run(gw, "q?");
  EXPECT_EQ(*out.abstained, exec::AbstainReason::gateway);
  ASSERT_EQ(out.attempts.size(), 1u);
  EXPECT_EQ(out.attempts[0].error_kind, "cassette_miss");
}

TEST_F(DeskDb, ExhaustedScriptIsAHarnessError) {
  auto gw = scripted({});
  EXPECT_THROW(run(*gw, "q?"), ScriptExhaustedError);
}

TEST_F(DeskDb, SessionTurnsLeadTheDemoBlock) {
  const exec::SessionTurn turns[] = {{"first q", "SELECT COUNT(*) FROM cost"},
                                     {"second q", "SELECT COUNT(*) FROM admissions"},
                                     {"third q", "SELECT COUNT(*) FROM patients"},
                                     {"fourth q", "SELECT COUNT(*) FROM chartevents"}};
  auto gw = scripted({fenced("SELECT 1")});
  exec::PipelineContext ctx{*catalog_, nullptr, *gw, *conn_, {}, {}, turns};
  const auto block = exec::build_demo_block("q?", ctx);
  EXPECT_EQ(block.find("first q"), std::string::npos);
  EXPECT_LT(block.find("fourth q"), block.find("third q"));
  EXPECT_LT(block.find("third q"), block.find("second q"));
  EXPECT_NE(block.find("-- chartevents"), std::string::npos);
  run(*gw, "q?", {}, turns);
  EXPECT_NE(llm::AuditLog::read(audit_->path())[0].prompt.find("fourth q"), std::string::npos);
}

TEST_F(DeskDb, RepairRunsTheTranspiledQuery) {
  const std::string src = "SELECT COUNT(*) FROM admissions WHERE admissions.admittime >= datetime('now', '-200 year')";
  auto plain = scripted({fenced(src)});
  exec::PipelineFlags flags;
  flags.max_attempts = 1;
  EXPECT_FALSE(run(*plain, "q?", flags).answered());
  auto gw = scripted({fenced(src)});
  flags.repair = true;
  const auto out = run(*gw, "q?", flags);
  ASSERT_TRUE(out.answered()) << out.attempts[0].execution_error.value_or("");
  EXPECT_TRUE(out.attempts[0].repaired);
  EXPECT_NE(out.final_sql, src);
}

TEST_F(DeskDb, PromptsNeverCarryCells) {
  auto database = db::Database::in_memory();
  auto conn = database.connect();
  const auto tokens = testkit::load_canary_database(conn);
  const auto catalog = schema::introspect(conn, "canary");
  auto gw = scripted({fenced("SELECT CAST(drug AS INTEGER) FROM prescriptions"),
                      fenced("SELECT prescriptions.drug FROM prescriptions")});
  exec::PipelineContext ctx{catalog, nullptr, *gw, conn};
  const auto out = exec::run_pipeline("Which drugs?", ctx);
  ASSERT_TRUE(out.answered());
  EXPECT_TRUE(llm::scan_for_tokens(audit_->path(), tokens).empty());
}

TEST(AttemptJson, CarriesTheTrace) {
  exec::Attempt a;
  a.prompt_hash = "abc";
  a.prompt_kind = "sql_generation";
  a.extracted_sql = "SELECT 1";
  a.error_kind = "execution";
  a.execution_error = "boom";
  const auto j = exec::to_json(a);
  EXPECT_EQ(j.at("extracted_sql"), "SELECT 1");
  EXPECT_EQ(j.at("error_kind"), "execution");
  EXPECT_TRUE(j.at("guardrail").is_null());
}

}  // namespace
}  // namespace nlsql
