#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <semaphore>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "specharness/error.hpp"

namespace specharness::llm {

enum class Role { system, user, assistant };
std::string_view to_string(Role role);

struct ChatMessage {
  Role role = Role::user;
  std::string content;

  friend bool operator==(const ChatMessage&, const ChatMessage&) = default;
};

struct GenerationResult {
  std::string text;
  std::int64_t input_tokens = 0;
  std::int64_t output_tokens = 0;
  std::int64_t latency_ms = 0;
  std::string backend_id;
  bool tokens_estimated = false;
  int retries = 0;
};

struct RetryPolicy {
  int max_retries = 3;
  int backoff_ms = 500;       // first delay
  double backoff_factor = 2.0;
};

enum class BackendKind { remote, scripted };

struct BackendConfig {
  BackendKind kind = BackendKind::scripted;
  std::string endpoint;  // full chat-completions URL (remote)
  std::string model_name;
  std::optional<double> temperature;  // unset: strategy default
  int max_output_tokens = 1024;
  RetryPolicy retry;
  double price_per_input_token = 0.0;
  double price_per_output_token = 0.0;
  std::vector<std::string> script;  // scripted
  std::size_t max_in_flight = 8;
  int request_timeout_s = 120;

  /// Throws std::invalid_argument. Remote credentials are checked when the
  /// backend is constructed.
  void validate() const;
};

class BackendError : public Error {
 public:
  enum class Kind { exhausted_retries, authentication, context_length_exceeded, script_exhausted, bad_response, http };

  BackendError(Kind kind, const std::string& message) : Error(message), kind_(kind) {}
  Kind kind() const noexcept { return kind_; }

 private:
  Kind kind_;
};

/// Character count / 4, the fallback when a backend reports no usage.
std::int64_t estimate_tokens(std::string_view text);
std::int64_t estimate_tokens(std::span<const ChatMessage> messages);

class ChatBackend {
 public:
  virtual ~ChatBackend() = default;
  virtual GenerationResult generate(std::span<const ChatMessage> messages) = 0;
  virtual std::string id() const = 0;
};

/// Replays a fixed list of completions, one per call. One instance per
/// session.
class ScriptedBackend final : public ChatBackend {
 public:
  explicit ScriptedBackend(std::vector<std::string> script, std::string id = "scripted");

  GenerationResult generate(std::span<const ChatMessage> messages) override;
  std::string id() const override { return id_; }

  std::size_t consumed() const noexcept { return cursor_; }
  std::size_t remaining() const noexcept { return script_.size() - cursor_; }

 private:
  std::vector<std::string> script_;
  std::size_t cursor_ = 0;
  std::string id_;
};

/// Chat-completions client over HTTP(S). Safe for concurrent use; at most
/// `max_in_flight` requests are outstanding at once.
class RemoteBackend final : public ChatBackend {
 public:
  static constexpr const char* kApiKeyEnv = "SPECHARNESS_API_KEY";

  /// Reads the key from SPECHARNESS_API_KEY when `api_key` is empty.
  explicit RemoteBackend(BackendConfig config, std::string api_key = {});

  GenerationResult generate(std::span<const ChatMessage> messages) override;
  std::string id() const override { return "remote:" + config_.model_name; }

 private:
  BackendConfig config_;
  std::string api_key_;
  std::string origin_;  // scheme://host[:port]
  std::string path_;
  std::counting_semaphore<1024> in_flight_;
};

struct CostSummary {
  std::int64_t tokens_in = 0;
  std::int64_t tokens_out = 0;
  double cost = 0.0;
};

CostSummary accumulate_cost(std::span<const GenerationResult> results, double price_in, double price_out);
CostSummary accumulate_cost(std::span<const GenerationResult> results, const BackendConfig& config);

/// Scripts on disk: either a JSON array of strings (every session replays it
/// from the start) or an object mapping task ids to arrays.
class ScriptBook {
 public:
  static ScriptBook load(const std::filesystem::path& path);
  static ScriptBook shared(std::vector<std::string> script);

  /// Script for `task_id`; throws BackendError(script_exhausted) when the
  /// book has no entry for it.
  const std::vector<std::string>& script_for(const std::string& task_id) const;
  const std::string& raw_text() const noexcept { return raw_; }

 private:
  std::optional<std::vector<std::string>> shared_;
  std::map<std::string, std::vector<std::string>> per_task_;
  std::string raw_;
};

}  // namespace specharness::llm
