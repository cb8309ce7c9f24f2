#include "nlsql/prompt_builder.hpp"

#include <utility>
#include <vector>

#include "nlsql/error.hpp"
#include "nlsql/text.hpp"
#include "nlsql_prompt_assets.hpp"

namespace nlsql::prompt {

namespace {

constexpr std::string_view kSchemaSection = "### Here is the information about the tables:\n{schema_info}\n\n";
constexpr std::string_view kCotSuffix = " Let's think step-by-step.";

bool is_placeholder_char(char c) {
  return std::isalnum(static_cast<unsigned char>(c)) != 0 || c == '_';
}

PromptBundle make_bundle(std::string text, PromptKind kind, std::set<std::string> filled) {
  PromptBundle b;
  b.token_estimate = estimate_tokens(text);
  b.text = std::move(text);
  b.kind = kind;
  b.placeholders_filled = std::move(filled);
  return b;
}

}  // namespace

std::string_view to_string(PromptKind kind) {
  switch (kind) {
    case PromptKind::sql_generation: return "sql_generation";
    case PromptKind::sql_retry: return "sql_retry";
    case PromptKind::viz: return "viz";
    case PromptKind::viz_retry: return "viz_retry";
  }
  return "sql_generation";
}

std::string_view sql_generation_template() { return assets::kSqlGenerationV1; }
std::string_view viz_generation_template() { return assets::kVizGenerationV1; }

std::set<std::string> required_placeholders(PromptKind kind, bool include_schema) {
  std::set<std::string> base;
  switch (kind) {
    case PromptKind::sql_generation:
    case PromptKind::sql_retry:
      base = {"fewshot_demo", "question"};
      if (include_schema) base.insert("schema_info");
      if (kind == PromptKind::sql_retry) base.insert({"failed_sql", "error_message"});
      break;
    case PromptKind::viz:
    case PromptKind::viz_retry:
      base = {"viz_names", "columns", "question"};
      if (kind == PromptKind::viz_retry) base.insert({"rejected_answer", "error_message"});
      break;
  }
  return base;
}

std::string fill_template(std::string_view tmpl, std::span<const std::pair<std::string, std::string>> values,
                          std::set<std::string>* filled) {
  std::string out;
  out.reserve(tmpl.size());
  std::size_t i = 0;
  while (i < tmpl.size()) {
    if (tmpl[i] == '{') {
      std::size_t j = i + 1;
      while (j < tmpl.size() && is_placeholder_char(tmpl[j])) ++j;
      if (j < tmpl.size() && tmpl[j] == '}' && j > i + 1) {
        const std::string_view name = tmpl.substr(i + 1, j - i - 1);
        const std::pair<std::string, std::string>* hit = nullptr;
        for (const auto& kv : values) {
          if (kv.first == name) hit = &kv;
        }
        if (!hit) throw PromptBuildError("unfilled placeholder {" + std::string(name) + "}");
        out += hit->second;
        if (filled) filled->insert(hit->first);
        i = j + 1;
        continue;
      }
    }
    out += tmpl[i++];
  }
  return out;
}

std::size_t estimate_tokens(std::string_view text) { return (text.size() + 3) / 4; }

PromptBundle build_sql_prompt(std::string_view schema_block, std::string_view demo_block, std::string_view question,
                              SqlPromptOptions options) {
  if (text::trim(question).empty()) throw PromptBuildError("question is empty");
  if (options.include_schema && text::trim(schema_block).empty()) {
    throw PromptBuildError("schema block is empty but schema information was requested");
  }
  std::string tmpl(sql_generation_template());
  if (!options.include_schema) {
    const auto pos = tmpl.find(kSchemaSection);
    if (pos == std::string::npos) throw PromptBuildError("template has no schema section");
    tmpl.erase(pos, kSchemaSection.size());
  }
  if (!options.include_cot) {
    if (!tmpl.ends_with(kCotSuffix)) throw PromptBuildError("template has no chain-of-thought suffix");
    tmpl.erase(tmpl.size() - kCotSuffix.size());
  }

  std::vector<std::pair<std::string, std::string>> values = {
      {"fewshot_demo", std::string(demo_block)},
      {"question", std::string(question)},
  };
  if (options.include_schema) values.emplace_back("schema_info", std::string(schema_block));

  std::set<std::string> filled;
  std::string text = fill_template(tmpl, values, &filled);
  if (filled != required_placeholders(PromptKind::sql_generation, options.include_schema)) {
    throw PromptBuildError("sql prompt template does not use every required placeholder");
  }
  return make_bundle(std::move(text), PromptKind::sql_generation, std::move(filled));
}

PromptBundle build_retry_prompt(const PromptBundle& previous, std::string_view failed_sql,
                                std::string_view error_message) {
  if (previous.kind != PromptKind::sql_generation && previous.kind != PromptKind::sql_retry) {
    throw PromptBuildError("retry prompt needs a sql prompt, got " + std::string(to_string(previous.kind)));
  }
  if (text::trim(error_message).empty()) throw PromptBuildError("retry prompt needs a non-empty error message");
  std::string text = previous.text;
  text += "\n\n### Your previous query failed.\nQuery: ";
  text += failed_sql;
  text += "\nError: ";
  text += error_message;
  text += "\nProduce a corrected DuckDB query in the same fenced format.";
  auto filled = previous.placeholders_filled;
  filled.insert({"failed_sql", "error_message"});
  return make_bundle(std::move(text), PromptKind::sql_retry, std::move(filled));
}

PromptBundle build_viz_prompt(std::span<const std::string> viz_names, std::span<const std::string> columns,
                              std::string_view question) {
  if (viz_names.empty()) throw PromptBuildError("no visualization types to offer");
  if (columns.empty()) throw PromptBuildError("no columns to plot");
  if (text::trim(question).empty()) throw PromptBuildError("question is empty");

  std::vector<std::string> numbered;
  for (std::size_t i = 0; i < viz_names.size(); ++i) numbered.push_back(std::to_string(i) + ": " + viz_names[i]);
  const std::pair<std::string, std::string> values[] = {
      {"viz_names", text::join(numbered, ", ")},
      {"columns", text::join(columns, "\n")},
      {"question", std::string(question)},
  };
  std::set<std::string> filled;
  std::string text = fill_template(viz_generation_template(), values, &filled);
  return make_bundle(std::move(text), PromptKind::viz, std::move(filled));
}

PromptBundle build_viz_retry_prompt(const PromptBundle& previous, std::string_view rejected_answer,
                                    std::string_view error_message) {
  if (previous.kind != PromptKind::viz && previous.kind != PromptKind::viz_retry) {
    throw PromptBuildError("viz retry prompt needs a viz prompt, got " + std::string(to_string(previous.kind)));
  }
  if (text::trim(error_message).empty()) throw PromptBuildError("viz retry prompt needs a non-empty error message");
  std::string text = previous.text;
  text += "\n\n### Your previous answer was rejected.\nAnswer: ";
  text += text::trim(rejected_answer);
  text += "\nError: ";
  text += error_message;
  text += "\nAnswer again using exactly the output format above.";
  auto filled = previous.placeholders_filled;
  filled.insert({"rejected_answer", "error_message"});
  return make_bundle(std::move(text), PromptKind::viz_retry, std::move(filled));
}

}  // namespace nlsql::prompt
