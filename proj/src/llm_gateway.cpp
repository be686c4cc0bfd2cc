#include "specharness/llm_gateway.hpp"

#include <chrono>
#include <cmath>
#include <cstdlib>
#include <fstream>
#include <regex>
#include <sstream>
#include <stdexcept>
#include <thread>

#include <httplib.h>
#include <json.hpp>

namespace specharness::llm {

using json = nlohmann::json;

namespace {

using Clock = std::chrono::steady_clock;

bool mentions_context_length(const std::string& body) {
  static const std::regex re("context[_ ]length|maximum context|too many tokens", std::regex::icase);
  return std::regex_search(body, re);
}

class SemaphoreGuard {
 public:
  explicit SemaphoreGuard(std::counting_semaphore<1024>& s) : s_(s) { s_.acquire(); }
  ~SemaphoreGuard() { s_.release(); }
  SemaphoreGuard(const SemaphoreGuard&) = delete;
  SemaphoreGuard& operator=(const SemaphoreGuard&) = delete;

 private:
  std::counting_semaphore<1024>& s_;
};

}  // namespace

std::string_view to_string(Role role) {
  switch (role) {
    case Role::system:
      return "system";
    case Role::assistant:
      return "assistant";
    case Role::user:
      break;
  }
  return "user";
}

void BackendConfig::validate() const {
  if (kind == BackendKind::scripted) {
    if (script.empty()) throw std::invalid_argument("scripted backend requires a non-empty script");
  } else {
    if (endpoint.empty()) throw std::invalid_argument("remote backend requires an endpoint");
    if (model_name.empty()) throw std::invalid_argument("remote backend requires a model name");
  }
  if (max_output_tokens <= 0) throw std::invalid_argument("max_output_tokens must be positive");
  if (retry.max_retries < 0 || retry.backoff_ms < 0) throw std::invalid_argument("invalid retry policy");
  if (price_per_input_token < 0 || price_per_output_token < 0) throw std::invalid_argument("prices must be >= 0");
  if (max_in_flight < 1 || max_in_flight > 1024) throw std::invalid_argument("max_in_flight must be in [1, 1024]");
}

std::int64_t estimate_tokens(std::string_view text) { return static_cast<std::int64_t>(text.size() / 4); }

std::int64_t estimate_tokens(std::span<const ChatMessage> messages) {
  std::size_t chars = 0;
  for (const auto& m : messages) chars += m.content.size();
  return static_cast<std::int64_t>(chars / 4);
}

ScriptedBackend::ScriptedBackend(std::vector<std::string> script, std::string id)
    : script_(std::move(script)), id_(std::move(id)) {}

GenerationResult ScriptedBackend::generate(std::span<const ChatMessage> messages) {
  if (cursor_ >= script_.size())
    throw BackendError(BackendError::Kind::script_exhausted,
                       "script exhausted after " + std::to_string(script_.size()) + " turns");
  GenerationResult r;
  r.text = script_[cursor_++];
  r.input_tokens = estimate_tokens(messages);
  r.output_tokens = estimate_tokens(r.text);
  r.tokens_estimated = true;
  r.backend_id = id_;
  return r;
}

RemoteBackend::RemoteBackend(BackendConfig config, std::string api_key)
    : config_(std::move(config)),
      api_key_(std::move(api_key)),
      in_flight_(static_cast<std::ptrdiff_t>(config_.max_in_flight)) {
  config_.kind = BackendKind::remote;
  config_.validate();
  if (api_key_.empty()) {
    if (const char* env = std::getenv(kApiKeyEnv)) api_key_ = env;
  }
  if (api_key_.empty())
    throw BackendError(BackendError::Kind::authentication, std::string(kApiKeyEnv) + " is not set");

  static const std::regex url_re(R"(^(https?://[^/]+)(/.*)?$)");
  std::smatch m;
  if (!std::regex_match(config_.endpoint, m, url_re)) throw std::invalid_argument("bad endpoint URL " + config_.endpoint);
  origin_ = m[1].str();
  path_ = m[2].matched ? m[2].str() : "/v1/chat/completions";
}

GenerationResult RemoteBackend::generate(std::span<const ChatMessage> messages) {
  json body{{"model", config_.model_name},
            {"max_tokens", config_.max_output_tokens},
            {"temperature", config_.temperature.value_or(0.0)},
            {"messages", json::array()}};
  for (const auto& m : messages) body["messages"].push_back({{"role", to_string(m.role)}, {"content", m.content}});
  const auto payload = body.dump();
  const httplib::Headers headers{{"Authorization", "Bearer " + api_key_}};

  SemaphoreGuard guard(in_flight_);
  const auto start = Clock::now();
  double delay_ms = config_.retry.backoff_ms;
  std::string last_error;
  for (int attempt = 0; attempt <= config_.retry.max_retries; ++attempt) {
    if (attempt > 0) {
      std::this_thread::sleep_for(std::chrono::milliseconds(static_cast<std::int64_t>(delay_ms)));
      delay_ms *= config_.retry.backoff_factor;
    }
    httplib::Client client(origin_);
    client.set_connection_timeout(config_.request_timeout_s, 0);
    client.set_read_timeout(config_.request_timeout_s, 0);
    client.set_write_timeout(config_.request_timeout_s, 0);
    const auto res = client.Post(path_, headers, payload, "application/json");
    if (!res) {
      last_error = "transport error: " + httplib::to_string(res.error());
      continue;
    }
    const int status = res->status;
    if (status == 429 || status >= 500) {
      last_error = "HTTP " + std::to_string(status);
      continue;
    }
    if (status == 401 || status == 403)
      throw BackendError(BackendError::Kind::authentication, "HTTP " + std::to_string(status) + ": " + res->body);
    if ((status == 400 || status == 413) && mentions_context_length(res->body))
      throw BackendError(BackendError::Kind::context_length_exceeded, res->body);
    if (status != 200)
      throw BackendError(BackendError::Kind::http, "HTTP " + std::to_string(status) + ": " + res->body);

    GenerationResult r;
    try {
      const auto j = json::parse(res->body);
      r.text = j.at("choices").at(0).at("message").at("content").get<std::string>();
      if (j.contains("usage") && j["usage"].is_object() && j["usage"].contains("prompt_tokens") &&
          j["usage"].contains("completion_tokens")) {
        r.input_tokens = j["usage"]["prompt_tokens"].get<std::int64_t>();
        r.output_tokens = j["usage"]["completion_tokens"].get<std::int64_t>();
      } else {
        r.input_tokens = estimate_tokens(messages);
        r.output_tokens = estimate_tokens(r.text);
        r.tokens_estimated = true;
      }
    } catch (const json::exception& e) {
      throw BackendError(BackendError::Kind::bad_response, std::string("unexpected response: ") + e.what());
    }
    r.retries = attempt;
    r.backend_id = id();
    r.latency_ms = std::chrono::duration_cast<std::chrono::milliseconds>(Clock::now() - start).count();
    return r;
  }
  throw BackendError(BackendError::Kind::exhausted_retries,
                     "gave up after " + std::to_string(config_.retry.max_retries) + " retries: " + last_error);
}

CostSummary accumulate_cost(std::span<const GenerationResult> results, double price_in, double price_out) {
  CostSummary s;
  for (const auto& r : results) {
    s.tokens_in += r.input_tokens;
    s.tokens_out += r.output_tokens;
  }
  s.cost = static_cast<double>(s.tokens_in) * price_in + static_cast<double>(s.tokens_out) * price_out;
  return s;
}

CostSummary accumulate_cost(std::span<const GenerationResult> results, const BackendConfig& config) {
  return accumulate_cost(results, config.price_per_input_token, config.price_per_output_token);
}

ScriptBook ScriptBook::load(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open script " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  ScriptBook book;
  book.raw_ = ss.str();
  json j;
  try {
    j = json::parse(book.raw_);
  } catch (const json::parse_error& e) {
    throw std::runtime_error("script " + path.string() + ": " + e.what());
  }
  const auto as_list = [&](const json& arr) {
    if (!arr.is_array()) throw std::runtime_error("script " + path.string() + ": expected an array of strings");
    std::vector<std::string> out;
    for (const auto& s : arr) {
      if (!s.is_string()) throw std::runtime_error("script " + path.string() + ": expected an array of strings");
      out.push_back(s.get<std::string>());
    }
    return out;
  };
  if (j.is_array()) {
    book.shared_ = as_list(j);
  } else if (j.is_object()) {
    for (const auto& [task, arr] : j.items()) book.per_task_[task] = as_list(arr);
  } else {
    throw std::runtime_error("script " + path.string() + ": expected an array or an object");
  }
  return book;
}

ScriptBook ScriptBook::shared(std::vector<std::string> script) {
  ScriptBook book;
  book.raw_ = json(script).dump();
  book.shared_ = std::move(script);
  return book;
}

const std::vector<std::string>& ScriptBook::script_for(const std::string& task_id) const {
  if (shared_) return *shared_;
  if (auto it = per_task_.find(task_id); it != per_task_.end()) return it->second;
  throw BackendError(BackendError::Kind::script_exhausted, "no script for task " + task_id);
}

}  // namespace specharness::llm
