#pragma once

#include <cstdint>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "specharness/corpus.hpp"
#include "specharness/exec_protocol.hpp"

namespace specharness::feedback {

enum class Action { explore, submit };
enum class FeedbackMode { binary, enhanced };

std::string_view to_string(Action action);
std::string_view to_string(FeedbackMode mode);
std::optional<FeedbackMode> parse_feedback_mode(std::string_view text);

/// A postcondition: an assertion block over the parameter names and
/// `return_value`.
struct Candidate {
  std::string source;
  int attempt_index = 1;
  Action action = Action::submit;
};

struct CorrectnessReport {
  bool correct = false;
  std::optional<std::string> failing_input_id;
  std::optional<exec::Status> failure_status;
  std::string error_type;
  std::string error_message;
  std::size_t tests_checked = 0;
};

struct CompletenessReport {
  double score = 0.0;
  std::set<std::string> caught;
  std::set<std::string> uncaught;
  std::set<std::string> excluded;  // produced no output on any input
};

struct Feedback {
  CorrectnessReport correctness;
  std::optional<CompletenessReport> completeness;  // only when correct
  bool completeness_undefined = false;             // correct, but every mutant excluded (or none)
  double score = 0.0;
  bool threshold_met = false;
  FeedbackMode mode = FeedbackMode::binary;
  std::optional<std::string> revealed_mutant_id;
  std::optional<std::string> revealed_mutant_source;
  std::string observation_text;
};

struct FeedbackOptions {
  double tau = 1.0;             // completeness target in [0,1]
  std::uint64_t seed = 0;       // drives the enhanced-mode mutant choice
  int timeout_ms = 0;           // 0: executor default
  std::size_t parallelism = 1;  // concurrent mutant evaluations
};

struct TestOutcome {
  std::string input_id;
  bool trigger = false;
  exec::Status on_correct = exec::Status::ok;
  std::optional<exec::Status> on_buggy;  // nullopt: buggy version produced no output
};

struct BugDiscrimination {
  bool discriminating = false;
  bool holds_on_correct = false;  // passes every trigger and regression test
  bool fails_on_buggy = false;    // rejects the buggy output on some test
  std::vector<TestOutcome> tests;
};

/// Scores candidate postconditions against a task's reference outputs and
/// mutants. Stateless apart from the executor; safe to share across threads.
class FeedbackEngine {
 public:
  explicit FeedbackEngine(exec::Executor& executor, FeedbackOptions options = {})
      : executor_(executor), options_(options) {}

  const FeedbackOptions& options() const noexcept { return options_; }
  exec::Executor& executor() const noexcept { return executor_; }

  /// Same executor, different completeness target and seed.
  FeedbackEngine retargeted(double tau, std::uint64_t seed) const {
    auto opts = options_;
    opts.tau = tau;
    opts.seed = seed;
    return FeedbackEngine(executor_, opts);
  }

  /// Requires materialized expected outputs. Stops at the first failing input.
  CorrectnessReport check_correctness(const Candidate& candidate, const TaskSpec& task) const;

  /// A mutant is caught when the assertion is non-ok on the mutant's output
  /// for some input, excluded when it yields no output on any input.
  /// Throws UndefinedMetricError when nothing is left to score.
  CompletenessReport measure_completeness(const Candidate& candidate, const TaskSpec& task) const;

  Feedback evaluate_feedback(const Candidate& candidate, const TaskSpec& task, FeedbackMode mode) const;

  /// Observation for an explore action: tests only, no mutants.
  Feedback probe(const Candidate& candidate, const TaskSpec& task) const;

  /// Throws InvalidTaskError when the correct implementation fails on a test.
  BugDiscrimination is_bug_discriminating(const Candidate& candidate, const BugPair& pair) const;

 private:
  exec::ExecVerdict eval_on(const Candidate& candidate, const TaskSpec& task, std::size_t input,
                            const json& output) const;
  /// 1: caught, 0: uncaught, -1: excluded.
  int judge_mutant(const Candidate& candidate, const TaskSpec& task, const MutantSpec& mutant) const;

  exec::Executor& executor_;
  FeedbackOptions options_;
};

/// Seeded choice among `uncaught` (iterated in sorted order).
std::string pick_revealed_mutant(const std::set<std::string>& uncaught, std::uint64_t seed, int attempt_index);

/// Renders the observation shown to the model. Binary mode never includes
/// mutant source; enhanced mode embeds the revealed mutant when there is one.
std::string compose_observation(const Feedback& feedback, FeedbackMode mode);

/// Observation for an explore probe.
std::string compose_probe_observation(const CorrectnessReport& report);

}  // namespace specharness::feedback
