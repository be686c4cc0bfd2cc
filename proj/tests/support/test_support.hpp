#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "specharness/corpus.hpp"
#include "specharness/runner_pool.hpp"

namespace specharness::testing {

inline std::filesystem::path data_dir() { return SPECHARNESS_TEST_DATA; }

inline std::vector<std::string> stub_command() { return {SPECHARNESS_PYTHON, SPECHARNESS_STUB_RUNNER}; }

inline exec::RunnerPoolConfig stub_pool_config(std::size_t size = 1, int timeout_ms = 1000) {
  exec::RunnerPoolConfig c;
  c.pool_size = size;
  c.default_timeout_ms = timeout_ms;
  c.runner_launch_command = stub_command();
  return c;
}

/// Loads the single task under `data/<dir>` and materializes its outputs.
inline TaskSpec materialized_task(const std::string& dir, exec::Executor& executor) {
  auto corpus = load_corpus(data_dir() / dir);
  auto task = corpus.tasks.at(0);
  materialize_expected_outputs(task, executor);
  return task;
}

/// `ident(x) -> x` with mutants `x + k` for k = 1..n, on the single input 0.
/// `ladder_candidate(k)` catches exactly the first k mutants, so submitted
/// scores can be dialed to k / n.
inline TaskSpec ladder_task(int n = 20) {
  json j{{"schema_version", 1},
         {"task_id", "ladder"},
         {"function_name", "ident"},
         {"signature", "def ident(x):"},
         {"implementation", "def ident(x):\n    return x\n"},
         {"test_inputs", json::array({{{"input_id", "t0"}, {"args", {0}}}})},
         {"mutants", json::array()}};
  for (int k = 1; k <= n; ++k)
    j["mutants"].push_back({{"mutant_id", "ladder/m" + std::string(k < 10 ? "0" : "") + std::to_string(k)},
                            {"implementation", "def ident(x):\n    return x + " + std::to_string(k) + "\n"}});
  return task_from_json(j);
}

inline std::string ladder_candidate(int k) {
  return "assert not (1 <= return_value <= " + std::to_string(k) + ")";
}

/// Rejects the reference output.
inline const char* kIncorrectLadderCandidate = "assert return_value == 1";

inline std::string turn(const std::string& tag, const std::string& body, const std::string& think = "t") {
  return "<think>" + think + "</think>\n<" + tag + ">\n" + body + "\n</" + tag + ">";
}

}  // namespace specharness::testing
