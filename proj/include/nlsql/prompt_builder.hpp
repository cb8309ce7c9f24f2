#pragma once

#include <cstddef>
#include <set>
#include <span>
#include <string>
#include <string_view>

namespace nlsql::prompt {

enum class PromptKind { sql_generation, sql_retry, viz, viz_retry };

std::string_view to_string(PromptKind kind);

struct PromptBundle {
  std::string text;
  PromptKind kind = PromptKind::sql_generation;
  std::set<std::string> placeholders_filled;
  std::size_t token_estimate = 0;  // ~4 characters per token; logging only
};

struct SqlPromptOptions {
  bool include_schema = true;
  bool include_cot = true;
};

// Placeholders a template must have filled for a bundle of the given kind.
std::set<std::string> required_placeholders(PromptKind kind, bool include_schema = true);

// Substitutes {name} placeholders in a single pass over the template; substituted values are
// not rescanned. Throws PromptBuildError when the template names a placeholder with no value.
std::string fill_template(std::string_view tmpl, std::span<const std::pair<std::string, std::string>> values,
                          std::set<std::string>* filled = nullptr);

std::size_t estimate_tokens(std::string_view text);

PromptBundle build_sql_prompt(std::string_view schema_block, std::string_view demo_block, std::string_view question,
                              SqlPromptOptions options = {});

// Appends a failure section: the failed query, the engine error, and a request for a corrected query.
PromptBundle build_retry_prompt(const PromptBundle& previous, std::string_view failed_sql,
                                std::string_view error_message);

PromptBundle build_viz_prompt(std::span<const std::string> viz_names, std::span<const std::string> columns,
                              std::string_view question);

// Appends the rejected answer and the reason it was rejected to a visualization prompt.
PromptBundle build_viz_retry_prompt(const PromptBundle& previous, std::string_view rejected_answer,
                                    std::string_view error_message);

std::string_view sql_generation_template();
std::string_view viz_generation_template();

}  // namespace nlsql::prompt
