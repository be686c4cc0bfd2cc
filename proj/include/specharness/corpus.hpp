#pragma once

#include <filesystem>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "specharness/exec_protocol.hpp"
#include "specharness/python_source.hpp"

namespace specharness {

using json = nlohmann::json;

inline constexpr int kCorpusSchemaVersion = 1;

struct TestInput {
  std::string input_id;
  json args = json::array();          // positional arguments
  std::optional<std::string> setup;   // prepended to the function source for this input

  friend bool operator==(const TestInput&, const TestInput&) = default;
};

struct MutantSpec {
  std::string mutant_id;
  std::string implementation;

  friend bool operator==(const MutantSpec&, const MutantSpec&) = default;
};

/// One benchmark function with its test inputs and corpus-supplied mutants.
/// Immutable once loaded, except for the expected-output cache.
struct TaskSpec {
  std::string task_id;
  std::string function_name;
  std::string signature;
  std::optional<std::string> docstring;
  std::string implementation;
  std::vector<TestInput> test_inputs;
  std::vector<MutantSpec> mutants;

  /// Reference outputs, index-aligned with test_inputs. Not serialized;
  /// filled by materialize_expected_outputs.
  std::vector<json> expected_outputs;

  bool has_expected_outputs() const { return !test_inputs.empty() && expected_outputs.size() == test_inputs.size(); }
  std::vector<std::string> parameter_names() const;
  /// Function source to send for `input` (setup code prepended when present).
  std::string source_for(const TestInput& input, const std::string& implementation) const;
};

struct BugPair {
  std::string pair_id;
  std::string function_name;
  std::string correct_impl;
  std::string buggy_impl;
  std::vector<TestInput> regression_tests;
  std::vector<TestInput> trigger_tests;
};

struct CorpusManifest {
  std::string corpus_id;
  int schema_version = kCorpusSchemaVersion;
  std::vector<std::string> entries;  // task or pair ids, in load order
};

struct Corpus {
  CorpusManifest manifest;
  std::vector<TaskSpec> tasks;
};

struct BugCorpus {
  CorpusManifest manifest;
  std::vector<BugPair> pairs;
};

/// Loads every `*.json` under `path` (or the single file `path`) as a task.
/// An optional `manifest.json` supplies corpus_id; otherwise the directory
/// name is used. Throws CorpusError naming the file and field at fault.
Corpus load_corpus(const std::filesystem::path& path);
BugCorpus load_bugpair_corpus(const std::filesystem::path& path);

TaskSpec task_from_json(const json& j, const std::string& file = "<memory>");
BugPair bugpair_from_json(const json& j, const std::string& file = "<memory>");
json to_json(const TaskSpec& task);
json to_json(const BugPair& pair);
json to_json(const TestInput& input);

/// Sorted keys, two-space indent, trailing newline.
std::string canonical_json(const json& j);

/// Runs the reference implementation on every test input and caches the
/// outputs on `task`. With `check_determinism`, each input runs twice and a
/// mismatch flags the task invalid. Throws InvalidTaskError naming the input.
std::vector<std::pair<TestInput, json>> materialize_expected_outputs(TaskSpec& task, exec::Executor& executor,
                                                                     bool check_determinism = true,
                                                                     int timeout_ms = 0);

/// The task a bug pair induces: the correct implementation with regression
/// and trigger tests as its suite, and the buggy version as its only mutant.
TaskSpec task_from_bugpair(const BugPair& pair);

}  // namespace specharness
