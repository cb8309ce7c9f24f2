#include "http_json.hpp"

#include <stdexcept>

#include <httplib.h>

namespace nlsql::detail {

namespace {

struct SplitUrl {
  std::string origin;  // scheme://host[:port]
  std::string prefix;  // path below the origin, no trailing slash
};

SplitUrl split(std::string_view url) {
  const auto scheme_end = url.find("://");
  if (scheme_end == std::string_view::npos) throw std::runtime_error("endpoint has no scheme: " + std::string(url));
  const auto path_start = url.find('/', scheme_end + 3);
  SplitUrl out;
  if (path_start == std::string_view::npos) {
    out.origin = std::string(url);
  } else {
    out.origin = std::string(url.substr(0, path_start));
    out.prefix = std::string(url.substr(path_start));
  }
  while (!out.prefix.empty() && out.prefix.back() == '/') out.prefix.pop_back();
  return out;
}

}  // namespace

nlohmann::json http_post_json(std::string_view base_url, std::string_view path, const nlohmann::json& body,
                              const std::string& bearer_token, std::chrono::milliseconds timeout) {
  const SplitUrl url = split(base_url);
  httplib::Client client(url.origin);
  const auto secs = std::chrono::duration_cast<std::chrono::seconds>(timeout);
  const auto usecs = std::chrono::duration_cast<std::chrono::microseconds>(timeout - secs);
  client.set_connection_timeout(secs.count(), static_cast<time_t>(usecs.count()));
  client.set_read_timeout(secs.count(), static_cast<time_t>(usecs.count()));
  client.set_write_timeout(secs.count(), static_cast<time_t>(usecs.count()));
  httplib::Headers headers;
  if (!bearer_token.empty()) headers.emplace("Authorization", "Bearer " + bearer_token);

  auto res = client.Post(url.prefix + std::string(path), headers, body.dump(), "application/json");
  if (!res) throw std::runtime_error("request to " + url.origin + " failed: " + httplib::to_string(res.error()));
  if (res->status < 200 || res->status >= 300) {
    std::string snippet = res->body.substr(0, 300);
    throw std::runtime_error("HTTP " + std::to_string(res->status) + " from " + url.origin + ": " + snippet);
  }
  try {
    return nlohmann::json::parse(res->body);
  } catch (const nlohmann::json::parse_error& e) {
    throw std::runtime_error(std::string("response is not JSON: ") + e.what());
  }
}

}  // namespace nlsql::detail
