#pragma once

#include <chrono>
#include <string>
#include <string_view>

#include <nlohmann/json.hpp>

namespace nlsql::detail {

// POSTs a JSON body to base_url + path and returns the parsed JSON response.
// Throws std::runtime_error with a description on transport errors or non-2xx statuses.
nlohmann::json http_post_json(std::string_view base_url, std::string_view path, const nlohmann::json& body,
                              const std::string& bearer_token, std::chrono::milliseconds timeout);

}  // namespace nlsql::detail
