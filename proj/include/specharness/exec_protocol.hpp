#pragma once

#include <atomic>
#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include <json.hpp>

namespace specharness::exec {

using json = nlohmann::json;

inline constexpr int kProtocolVersion = 1;
/// First line every worker writes to stdout, byte for byte.
inline constexpr std::string_view kHandshakeLine = R"({"hello":"specharness-runner","proto":1})";
inline constexpr int kDefaultTimeoutMs = 1000;

enum class RequestKind { run_function, eval_assertion };

enum class Status { ok, assert_fail, runtime_error, syntax_error, timeout, unserializable_output };

std::string_view to_string(RequestKind kind);
std::string_view to_string(Status status);
std::optional<Status> parse_status(std::string_view text);

// Request. For run_function `args` is the positional argument array. For
// eval_assertion `args` is an object binding parameter names to values and
// `bound_output` is bound to `return_value`; function_source/function_name
// are optional there and, when present, are loaded into the namespace first.
struct ExecRequest {
  std::string request_id;
  RequestKind kind = RequestKind::run_function;
  std::string function_source;
  std::string function_name;
  json args = json::array();
  std::string assertion_source;
  json bound_output;
  int timeout_ms = kDefaultTimeoutMs;

  /// Throws std::invalid_argument when kind-specific fields are inconsistent.
  void validate() const;
};

struct ExecVerdict {
  std::string request_id;
  Status status = Status::ok;
  std::optional<json> value;
  std::string error_type;
  std::string error_message;
  std::int64_t duration_ms = 0;

  bool ok() const noexcept { return status == Status::ok; }
};

json to_json(const ExecRequest& request);
ExecRequest request_from_json(const json& j);
json to_json(const ExecVerdict& verdict);
/// Throws std::invalid_argument on a malformed verdict object.
ExecVerdict verdict_from_json(const json& j);

/// Name -> value pairs for an assertion's namespace (return_value excluded).
struct Binding {
  std::vector<std::pair<std::string, json>> parameters;
  json return_value;
};

/// Binds positional `args` to `names`; extra args beyond the names are dropped.
Binding bind_positional(const std::vector<std::string>& names, const json& args, json return_value);

/// Anything that can answer exec-protocol requests. Implementations must be
/// safe to call from many threads.
class Executor {
 public:
  virtual ~Executor() = default;

  virtual ExecVerdict execute(const ExecRequest& request) = 0;
  virtual int default_timeout_ms() const { return kDefaultTimeoutMs; }

  ExecVerdict run_function(std::string source, std::string name, json args, int timeout_ms = 0);

  /// `function_source`/`function_name` may be empty.
  ExecVerdict eval_assertion(std::string function_source, std::string function_name,
                             std::string assertion_source, const Binding& binding,
                             int timeout_ms = 0);

 protected:
  std::string next_request_id();

 private:
  std::atomic<std::uint64_t> next_id_{1};
};

}  // namespace specharness::exec
