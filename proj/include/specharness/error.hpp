#pragma once

#include <stdexcept>
#include <string>

namespace specharness {

/// Base class for every error the harness raises.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// A corpus file failed to load or validate. Carries the offending file and
/// the field (or invariant) that was violated.
class CorpusError : public Error {
 public:
  enum class Kind { io, malformed_json, schema, schema_version, duplicate_id, arity };

  CorpusError(Kind kind, std::string file, std::string field, const std::string& message)
      : Error(file + ": " + field + ": " + message),
        kind_(kind),
        file_(std::move(file)),
        field_(std::move(field)) {}

  Kind kind() const noexcept { return kind_; }
  const std::string& file() const noexcept { return file_; }
  const std::string& field() const noexcept { return field_; }

 private:
  Kind kind_;
  std::string file_;
  std::string field_;
};

/// The reference implementation could not produce an output for some input.
class InvalidTaskError : public Error {
 public:
  InvalidTaskError(std::string task_id, std::string input_id, const std::string& reason)
      : Error("task " + task_id + " invalid at input " + input_id + ": " + reason),
        task_id_(std::move(task_id)),
        input_id_(std::move(input_id)) {}

  const std::string& task_id() const noexcept { return task_id_; }
  const std::string& input_id() const noexcept { return input_id_; }

 private:
  std::string task_id_;
  std::string input_id_;
};

/// Execution infrastructure failure (pool startup, all workers dead, ...).
/// Distinct from a candidate being incorrect.
class ExecError : public Error {
 public:
  using Error::Error;
};

/// A metric has no defined value for the given input.
class UndefinedMetricError : public Error {
 public:
  using Error::Error;
};

}  // namespace specharness
