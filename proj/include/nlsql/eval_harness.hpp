#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

#include "nlsql/database.hpp"
#include "nlsql/demo_store.hpp"
#include "nlsql/execution_sandbox.hpp"
#include "nlsql/llm_gateway.hpp"
#include "nlsql/query_result.hpp"
#include "nlsql/schema_catalog.hpp"

namespace nlsql::eval {

// One benchmark record before preprocessing; sql is in the source dialect.
struct RawItem {
  std::string id;
  std::string question;
  std::string sql;
  bool answerable = true;
};

struct EvalItem {
  std::string id;
  std::string question;
  std::string gold_sql;  // target dialect; empty for unanswerable items
  bool answerable = true;
};

// JSON lines. Raw records use {id, question, sql, answerable?}; eval records use gold_sql.
std::vector<RawItem> load_raw_items(const std::filesystem::path& path);
std::vector<EvalItem> load_eval_items(const std::filesystem::path& path);
void save_eval_items(const std::filesystem::path& path, std::span<const EvalItem> items);
nlohmann::json to_json(const EvalItem& item);

enum class DropReason { unsupported_construct, parse_error, execution_error, empty_result, unanswerable };
std::string_view to_string(DropReason reason);

struct DroppedItem {
  std::string id;
  DropReason reason;
  std::string detail;
};

struct PreprocessOptions {
  bool keep_unanswerable = false;
  exec::ExecutionLimits limits{};
};

struct PreprocessResult {
  std::vector<EvalItem> kept;
  std::vector<DroppedItem> dropped;
};

// Transpiles each gold query, runs it, and keeps only the ones that return rows.
// Throws HarnessError when the reference database cannot run a trivial query.
PreprocessResult preprocess_dataset(std::span<const RawItem> items, db::Connection& connection,
                                    const PreprocessOptions& options = {});

// Sizes summing to n. Floors first, then leftover units by largest remainder; remainders equal
// within 1e-9 go to the larger fraction, then to the later split.
std::vector<std::size_t> largest_remainder_sizes(std::size_t n, std::span<const double> fractions);

// Fisher-Yates over a 64-bit Mersenne Twister; identical on every platform for a given seed.
std::vector<std::size_t> shuffled_indices(std::size_t n, std::uint64_t seed);

struct SplitFractions {
  double validation = 0.10;
  double test = 0.90;
};

template <typename T>
struct DatasetSplit {
  std::vector<T> validation;
  std::vector<T> test;
};

void validate_fractions(const SplitFractions& fractions);  // throws std::invalid_argument

template <typename T>
DatasetSplit<T> split_dataset(std::span<const T> items, SplitFractions fractions = {}, std::uint64_t seed = 0) {
  validate_fractions(fractions);
  const double f[] = {fractions.validation, fractions.test};
  const auto sizes = largest_remainder_sizes(items.size(), f);
  const auto order = shuffled_indices(items.size(), seed);
  DatasetSplit<T> out;
  for (std::size_t i = 0; i < order.size(); ++i) {
    (i < sizes[0] ? out.validation : out.test).push_back(items[order[i]]);
  }
  return out;
}

// ---- result equality ----

struct Atom {
  enum class Kind { null, number, text };
  Kind kind = Kind::null;
  bool integral = false;
  std::int64_t integer = 0;
  double number = 0.0;
  std::string text;
};

using CanonicalRow = std::vector<Atom>;

struct CanonicalResult {
  std::size_t column_count = 0;
  std::vector<CanonicalRow> rows;  // sorted unless order-sensitive
};

struct CompareOptions {
  bool order_sensitive = false;
  double relative_tolerance = 1e-6;
  double absolute_tolerance = 1e-9;
};

// Booleans become 0/1, timestamps become their text, trailing whitespace is dropped from text.
Atom canonical_atom(const Value& value);
CanonicalResult normalize_result(const QueryResult& result, bool order_sensitive = false);
bool atoms_equal(const Atom& a, const Atom& b, const CompareOptions& options = {});
bool results_equal(const QueryResult& a, const QueryResult& b, const CompareOptions& options = {});

// ---- scoring ----

struct EvalOutcome {
  std::string item_id;
  bool answerable = true;
  std::optional<QueryResult> generated_result;
  std::optional<QueryResult> gold_result;
  bool abstained = false;
  bool matched = false;
  double latency_seconds = 0.0;
  std::size_t attempts = 0;
  std::string abstain_reason;
  std::string final_sql;
  std::string error;
};

struct RS0Report {
  double rs0 = 0.0;
  std::size_t n_items = 0;
  std::size_t n_answerable = 0;
  std::size_t n_matched = 0;
  std::size_t n_abstained = 0;
  std::size_t n_cassette_misses = 0;
  double mean_latency = 0.0;
  double min_latency = 0.0;
  double max_latency = 0.0;
};

// rs0 = (1/|X|) * #{(answerable and matched) or (unanswerable and abstained)}.
// Throws HarnessError on duplicate or missing ids and on inconsistent outcomes.
RS0Report rs0_score(std::span<const EvalOutcome> outcomes, const std::map<std::string, bool>& answerable);
RS0Report rs0_score(std::span<const EvalOutcome> outcomes);

struct EvalSettings {
  exec::PipelineFlags flags{};
  exec::ExecutionLimits limits{};
  CompareOptions compare{};
  std::size_t parallelism = 1;
};

struct EvalRun {
  std::string model_name;
  EvalSettings settings;
  RS0Report report;
  std::vector<EvalOutcome> outcomes;
  std::vector<exec::PipelineOutcome> traces;
};

// Runs the pipeline on every item, executes the gold query, compares. Each worker opens its own
// connection to the database.
EvalRun run_eval(std::span<const EvalItem> items, const schema::SchemaCatalog& catalog,
                 const demos::DemoStore* demos, llm::Gateway& gateway, const db::Database& database,
                 const EvalSettings& settings = {});

nlohmann::json to_json(const RS0Report& report);
nlohmann::json to_json(const EvalRun& run);

// Console table with the ablation columns: base LLM, schema info, demos, max attempts, RS(0).
std::string render_table(std::span<const EvalRun> runs);

}  // namespace nlsql::eval
