#include "nlsql/llm_gateway.hpp"

#include <openssl/evp.h>

#include <cstdlib>
#include <ctime>
#include <iomanip>
#include <sstream>

#include "http_json.hpp"
#include "nlsql/error.hpp"
#include "nlsql/text.hpp"

namespace nlsql::llm {

void ModelConfig::validate() const {
  if (text::trim(model_name).empty()) throw GatewayError("model_name is empty");
  if (timeout.count() <= 0) throw GatewayError("timeout must be positive");
}

nlohmann::json ModelConfig::default_decoding(std::string_view model_name) {
  const std::string m = text::to_lower(model_name);
  if (m.size() >= 2 && m[0] == 'o' && std::isdigit(static_cast<unsigned char>(m[1]))) return nlohmann::json::object();
  return {{"temperature", 0}};
}

ModelConfig ModelConfig::for_model(std::string model_name) {
  ModelConfig c;
  c.decoding = default_decoding(model_name);
  c.model_name = std::move(model_name);
  return c;
}

std::string sha256_hex(std::string_view data) {
  unsigned char digest[EVP_MAX_MD_SIZE];
  unsigned int len = 0;
  if (EVP_Digest(data.data(), data.size(), digest, &len, EVP_sha256(), nullptr) != 1) {
    throw Error("SHA-256 computation failed");
  }
  static constexpr char kHex[] = "0123456789abcdef";
  std::string out;
  out.reserve(len * 2);
  for (unsigned int i = 0; i < len; ++i) {
    out += kHex[digest[i] >> 4];
    out += kHex[digest[i] & 0xF];
  }
  return out;
}

std::string utc_now_iso8601() {
  const auto now = std::chrono::system_clock::now();
  const std::time_t t = std::chrono::system_clock::to_time_t(now);
  const auto ms = std::chrono::duration_cast<std::chrono::milliseconds>(now.time_since_epoch()).count() % 1000;
  std::tm tm{};
  gmtime_r(&t, &tm);
  std::ostringstream ss;
  ss << std::put_time(&tm, "%Y-%m-%dT%H:%M:%S") << '.' << std::setw(3) << std::setfill('0') << ms << 'Z';
  return ss.str();
}

nlohmann::json to_json(const CompletionRecord& r) {
  return {{"prompt_hash", r.prompt_hash}, {"prompt", r.prompt},
          {"completion", r.completion},   {"model_name", r.model_name},
          {"latency_seconds", r.latency_seconds}, {"timestamp", r.timestamp},
          {"decoding", r.decoding}};
}

CompletionRecord completion_from_json(const nlohmann::json& j) {
  CompletionRecord r;
  r.prompt = j.at("prompt").get<std::string>();
  r.prompt_hash = j.contains("prompt_hash") ? j.at("prompt_hash").get<std::string>() : sha256_hex(r.prompt);
  r.completion = j.at("completion").get<std::string>();
  r.model_name = j.at("model_name").get<std::string>();
  r.latency_seconds = j.value("latency_seconds", 0.0);
  r.timestamp = j.value("timestamp", "");
  r.decoding = j.value("decoding", nlohmann::json::object());
  return r;
}

// ---- live ----

CompletionRecord LiveBackend::complete(const std::string& prompt, const ModelConfig& config) {
  config.validate();
  std::string token;
  if (!config.credential_env.empty()) {
    const char* v = std::getenv(config.credential_env.c_str());
    if (!v || !*v) throw GatewayError("credential variable " + config.credential_env + " is not set");
    token = v;
  }
  nlohmann::json body = config.decoding.is_object() ? config.decoding : nlohmann::json::object();
  body["model"] = config.model_name;
  body["messages"] = nlohmann::json::array({{{"role", "user"}, {"content", prompt}}});

  CompletionRecord r;
  r.timestamp = utc_now_iso8601();
  const auto start = std::chrono::steady_clock::now();
  nlohmann::json res;
  try {
    res = detail::http_post_json(config.endpoint, "/chat/completions", body, token, config.timeout);
  } catch (const std::runtime_error& e) {
    throw GatewayError(e.what());
  }
  r.latency_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  try {
    r.completion = res.at("choices").at(0).at("message").at("content").get<std::string>();
  } catch (const nlohmann::json::exception& e) {
    throw GatewayError(std::string("malformed chat completion response: ") + e.what());
  }
  if (r.completion.empty()) throw GatewayError("model returned an empty completion");
  r.prompt = prompt;
  r.prompt_hash = sha256_hex(prompt);
  r.model_name = config.model_name;
  r.decoding = config.decoding;
  return r;
}

// ---- cassette ----

nlohmann::json Cassette::record_line(const CompletionRecord& record) {
  nlohmann::json j = to_json(record);
  j["cassette_version"] = kVersion;
  return j;
}

Cassette Cassette::load(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw GatewayError("cannot open cassette " + path.string());
  Cassette c;
  std::string line;
  std::size_t n = 0;
  while (std::getline(in, line)) {
    ++n;
    if (text::trim(line).empty()) continue;
    try {
      const auto j = nlohmann::json::parse(line);
      const int version = j.value("cassette_version", 0);
      if (version != kVersion) {
        throw GatewayError(path.string() + ":" + std::to_string(n) + ": unsupported cassette version " +
                           std::to_string(version));
      }
      CompletionRecord r = completion_from_json(j);
      if (r.prompt_hash != sha256_hex(r.prompt)) {
        throw GatewayError(path.string() + ":" + std::to_string(n) + ": prompt_hash does not match prompt");
      }
      c.add(std::move(r));
    } catch (const nlohmann::json::exception& e) {
      throw GatewayError(path.string() + ":" + std::to_string(n) + ": malformed cassette record: " + e.what());
    }
  }
  return c;
}

Cassette Cassette::load_all(std::span<const std::filesystem::path> paths) {
  Cassette all;
  for (const auto& p : paths) {
    Cassette c = load(p);
    for (auto& [key, recs] : c.records_) {
      for (auto& r : recs) all.add(std::move(r));
    }
  }
  return all;
}

void Cassette::add(CompletionRecord record) {
  auto key = std::make_pair(record.model_name, record.prompt_hash);
  records_[key].push_back(std::move(record));
  ++count_;
}

const std::vector<CompletionRecord>* Cassette::find(const std::string& model_name,
                                                    const std::string& prompt_hash) const {
  auto it = records_.find({model_name, prompt_hash});
  return it == records_.end() ? nullptr : &it->second;
}

void Cassette::save(const std::filesystem::path& path) const {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw GatewayError("cannot write cassette " + path.string());
  for (const auto& [key, recs] : records_) {
    for (const auto& r : recs) out << record_line(r).dump() << '\n';
  }
  if (!out) throw GatewayError("cannot write cassette " + path.string());
}

CompletionRecord ReplayBackend::complete(const std::string& prompt, const ModelConfig& config) {
  const std::string hash = sha256_hex(prompt);
  const auto* recs = cassette_.find(config.model_name, hash);
  if (!recs || recs->empty()) throw CassetteMissError(hash, config.model_name);
  std::lock_guard lock(mutex_);
  std::size_t& cur = cursor_[{config.model_name, hash}];
  const CompletionRecord& r = (*recs)[std::min(cur, recs->size() - 1)];
  ++cur;
  return r;
}

// ---- scripted ----

ScriptedBackend::ScriptedBackend(std::vector<std::string> responses) {
  for (auto& r : responses) queue_.push_back(std::move(r));
}

void ScriptedBackend::push(std::string response) {
  std::lock_guard lock(mutex_);
  queue_.push_back(std::move(response));
}

std::size_t ScriptedBackend::remaining() const {
  std::lock_guard lock(mutex_);
  return queue_.size();
}

CompletionRecord ScriptedBackend::complete(const std::string& prompt, const ModelConfig& config) {
  CompletionRecord r;
  {
    std::lock_guard lock(mutex_);
    if (queue_.empty()) throw ScriptExhaustedError("scripted backend has no queued response");
    r.completion = std::move(queue_.front());
    queue_.pop_front();
  }
  r.prompt = prompt;
  r.prompt_hash = sha256_hex(prompt);
  r.model_name = config.model_name;
  r.timestamp = utc_now_iso8601();
  r.decoding = config.decoding;
  return r;
}

// ---- recording ----

RecordingBackend::RecordingBackend(std::shared_ptr<Backend> inner, std::filesystem::path cassette_path)
    : inner_(std::move(inner)), path_(std::move(cassette_path)) {
  if (!inner_) throw GatewayError("recording backend needs an inner backend");
}

CompletionRecord RecordingBackend::complete(const std::string& prompt, const ModelConfig& config) {
  CompletionRecord r = inner_->complete(prompt, config);
  std::lock_guard lock(mutex_);
  std::ofstream out(path_, std::ios::app);
  out << Cassette::record_line(r).dump() << '\n';
  out.flush();
  if (!out) throw GatewayError("cannot append to cassette " + path_.string());
  return r;
}

// ---- audit ----

AuditLog::AuditLog(std::filesystem::path path) : path_(std::move(path)) {
  out_.open(path_, std::ios::app);
  if (!out_) throw AuditError("cannot open audit log " + path_.string());
}

void AuditLog::append(const AuditEntry& e) {
  const nlohmann::json j = {{"timestamp", e.timestamp},     {"model_name", e.model_name}, {"backend", e.backend},
                            {"prompt_kind", e.prompt_kind}, {"prompt_hash", e.prompt_hash}, {"prompt", e.prompt}};
  const std::string line = j.dump() + "\n";
  std::lock_guard lock(mutex_);
  out_ << line;
  out_.flush();
  if (!out_) throw AuditError("failed to write audit log " + path_.string());
  ++written_;
}

std::size_t AuditLog::entries_written() const {
  std::lock_guard lock(mutex_);
  return written_;
}

std::vector<AuditEntry> AuditLog::read(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw AuditError("cannot read audit log " + path.string());
  std::vector<AuditEntry> out;
  std::string line;
  while (std::getline(in, line)) {
    if (text::trim(line).empty()) continue;
    const auto j = nlohmann::json::parse(line);
    out.push_back({j.value("timestamp", ""), j.value("model_name", ""), j.value("backend", ""),
                   j.value("prompt_kind", ""), j.value("prompt_hash", ""), j.value("prompt", "")});
  }
  return out;
}

std::vector<CanaryHit> scan_for_tokens(const std::filesystem::path& path, std::span<const std::string> tokens) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw AuditError("cannot read " + path.string());
  std::vector<CanaryHit> hits;
  std::string line;
  std::size_t n = 0;
  while (std::getline(in, line)) {
    ++n;
    for (const auto& t : tokens) {
      if (t.empty()) continue;
      for (auto pos = line.find(t); pos != std::string::npos; pos = line.find(t, pos + 1)) hits.push_back({n, t});
    }
  }
  return hits;
}

// ---- gateway ----

Gateway::Gateway(std::shared_ptr<Backend> backend, ModelConfig config, std::shared_ptr<AuditLog> audit)
    : backend_(std::move(backend)), config_(std::move(config)), audit_(std::move(audit)) {
  if (!backend_) throw GatewayError("gateway needs a backend");
  if (!audit_) throw AuditError("gateway needs an audit log");
  config_.validate();
}

CompletionRecord Gateway::complete(const prompt::PromptBundle& prompt) {
  AuditEntry entry;
  entry.timestamp = utc_now_iso8601();
  entry.model_name = config_.model_name;
  entry.backend = backend_->name();
  entry.prompt_kind = std::string(prompt::to_string(prompt.kind));
  entry.prompt_hash = sha256_hex(prompt.text);
  entry.prompt = prompt.text;
  // Logged before anything leaves the process; an unwritable log stops the call.
  audit_->append(entry);
  return backend_->complete(prompt.text, config_);
}

}  // namespace nlsql::llm
