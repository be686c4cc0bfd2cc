#include "specharness/exec_protocol.hpp"

#include <array>
#include <stdexcept>

namespace specharness::exec {

namespace {

constexpr std::array<std::pair<Status, std::string_view>, 6> kStatusNames{{
    {Status::ok, "ok"},
    {Status::assert_fail, "assert_fail"},
    {Status::runtime_error, "runtime_error"},
    {Status::syntax_error, "syntax_error"},
    {Status::timeout, "timeout"},
    {Status::unserializable_output, "unserializable_output"},
}};

const json& require(const json& j, const char* key) {
  if (!j.is_object() || !j.contains(key)) throw std::invalid_argument(std::string("missing field ") + key);
  return j.at(key);
}

std::string require_string(const json& j, const char* key) {
  const auto& v = require(j, key);
  if (!v.is_string()) throw std::invalid_argument(std::string("field ") + key + " must be a string");
  return v.get<std::string>();
}

}  // namespace

std::string_view to_string(RequestKind kind) {
  return kind == RequestKind::run_function ? "run_function" : "eval_assertion";
}

std::string_view to_string(Status status) {
  for (const auto& [s, name] : kStatusNames)
    if (s == status) return name;
  return "runtime_error";
}

std::optional<Status> parse_status(std::string_view text) {
  for (const auto& [s, name] : kStatusNames)
    if (name == text) return s;
  return std::nullopt;
}

void ExecRequest::validate() const {
  if (timeout_ms <= 0) throw std::invalid_argument("timeout_ms must be positive");
  if (kind == RequestKind::run_function) {
    if (function_source.empty() || function_name.empty())
      throw std::invalid_argument("run_function requires function_source and function_name");
    if (!args.is_array()) throw std::invalid_argument("run_function args must be an array");
    if (!assertion_source.empty()) throw std::invalid_argument("run_function must not carry assertion_source");
  } else {
    if (assertion_source.empty()) throw std::invalid_argument("eval_assertion requires assertion_source");
    if (!args.is_object()) throw std::invalid_argument("eval_assertion args must be an object");
    if (function_source.empty() != function_name.empty())
      throw std::invalid_argument("function_source and function_name go together");
  }
}

json to_json(const ExecRequest& r) {
  json j{{"request_id", r.request_id}, {"kind", to_string(r.kind)}, {"args", r.args}, {"timeout_ms", r.timeout_ms}};
  if (!r.function_source.empty()) {
    j["function_source"] = r.function_source;
    j["function_name"] = r.function_name;
  }
  if (r.kind == RequestKind::eval_assertion) {
    j["assertion_source"] = r.assertion_source;
    j["bound_output"] = r.bound_output;
  }
  return j;
}

ExecRequest request_from_json(const json& j) {
  ExecRequest r;
  r.request_id = require_string(j, "request_id");
  const auto kind = require_string(j, "kind");
  if (kind == "run_function") {
    r.kind = RequestKind::run_function;
  } else if (kind == "eval_assertion") {
    r.kind = RequestKind::eval_assertion;
  } else {
    throw std::invalid_argument("unknown kind " + kind);
  }
  if (j.contains("function_source")) r.function_source = require_string(j, "function_source");
  if (j.contains("function_name")) r.function_name = require_string(j, "function_name");
  r.args = require(j, "args");
  if (r.kind == RequestKind::eval_assertion) {
    r.assertion_source = require_string(j, "assertion_source");
    r.bound_output = require(j, "bound_output");
  }
  const auto& timeout = require(j, "timeout_ms");
  if (!timeout.is_number_integer()) throw std::invalid_argument("field timeout_ms must be an integer");
  r.timeout_ms = timeout.get<int>();
  r.validate();
  return r;
}

json to_json(const ExecVerdict& v) {
  json j{{"request_id", v.request_id},
         {"status", to_string(v.status)},
         {"error_type", v.error_type},
         {"error_message", v.error_message},
         {"duration_ms", v.duration_ms}};
  if (v.value) j["value"] = *v.value;
  return j;
}

ExecVerdict verdict_from_json(const json& j) {
  ExecVerdict v;
  v.request_id = require_string(j, "request_id");
  const auto status = parse_status(require_string(j, "status"));
  if (!status) throw std::invalid_argument("unknown status " + j.at("status").get<std::string>());
  v.status = *status;
  if (j.contains("value")) v.value = j.at("value");
  if (j.contains("error_type") && j.at("error_type").is_string()) v.error_type = j.at("error_type").get<std::string>();
  if (j.contains("error_message") && j.at("error_message").is_string())
    v.error_message = j.at("error_message").get<std::string>();
  if (j.contains("duration_ms") && j.at("duration_ms").is_number()) v.duration_ms = j.at("duration_ms").get<std::int64_t>();
  return v;
}

Binding bind_positional(const std::vector<std::string>& names, const json& args, json return_value) {
  Binding b;
  b.return_value = std::move(return_value);
  for (std::size_t i = 0; i < names.size() && i < args.size(); ++i) b.parameters.emplace_back(names[i], args[i]);
  return b;
}

std::string Executor::next_request_id() { return "r" + std::to_string(next_id_.fetch_add(1)); }

ExecVerdict Executor::run_function(std::string source, std::string name, json args, int timeout_ms) {
  ExecRequest r;
  r.request_id = next_request_id();
  r.kind = RequestKind::run_function;
  r.function_source = std::move(source);
  r.function_name = std::move(name);
  r.args = std::move(args);
  r.timeout_ms = timeout_ms > 0 ? timeout_ms : default_timeout_ms();
  return execute(r);
}

ExecVerdict Executor::eval_assertion(std::string function_source, std::string function_name,
                                     std::string assertion_source, const Binding& binding, int timeout_ms) {
  ExecRequest r;
  r.request_id = next_request_id();
  r.kind = RequestKind::eval_assertion;
  r.function_source = std::move(function_source);
  r.function_name = std::move(function_name);
  r.assertion_source = std::move(assertion_source);
  r.args = json::object();
  for (const auto& [name, value] : binding.parameters) r.args[name] = value;
  r.bound_output = binding.return_value;
  r.timeout_ms = timeout_ms > 0 ? timeout_ms : default_timeout_ms();
  return execute(r);
}

}  // namespace specharness::exec
