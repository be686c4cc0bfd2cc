#include "specharness/feedback.hpp"

#include <algorithm>
#include <atomic>
#include <exception>
#include <mutex>
#include <random>
#include <thread>

#include <fmt/format.h>

#include "specharness/error.hpp"
#include "specharness/observation_templates.hpp"

namespace specharness::feedback {

namespace {

std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

const MutantSpec* find_mutant(const TaskSpec& task, const std::string& id) {
  for (const auto& m : task.mutants)
    if (m.mutant_id == id) return &m;
  return nullptr;
}

// Runs fn(i) for i in [0, n) on up to `parallelism` threads; rethrows the
// first exception.
template <typename Fn>
void parallel_for(std::size_t n, std::size_t parallelism, Fn&& fn) {
  if (parallelism <= 1 || n <= 1) {
    for (std::size_t i = 0; i < n; ++i) fn(i);
    return;
  }
  std::atomic<std::size_t> next{0};
  std::exception_ptr error;
  std::mutex error_mutex;
  std::vector<std::thread> threads;
  const auto workers = std::min(parallelism, n);
  for (std::size_t w = 0; w < workers; ++w) {
    threads.emplace_back([&] {
      for (std::size_t i; (i = next.fetch_add(1)) < n;) {
        try {
          fn(i);
        } catch (...) {
          std::lock_guard lock(error_mutex);
          if (!error) error = std::current_exception();
          next = n;
        }
      }
    });
  }
  for (auto& t : threads) t.join();
  if (error) std::rethrow_exception(error);
}

}  // namespace

std::string_view to_string(Action action) { return action == Action::explore ? "explore" : "submit"; }

std::string_view to_string(FeedbackMode mode) { return mode == FeedbackMode::binary ? "binary" : "enhanced"; }

std::optional<FeedbackMode> parse_feedback_mode(std::string_view text) {
  if (text == "binary") return FeedbackMode::binary;
  if (text == "enhanced") return FeedbackMode::enhanced;
  return std::nullopt;
}

exec::ExecVerdict FeedbackEngine::eval_on(const Candidate& candidate, const TaskSpec& task, std::size_t input,
                                          const json& output) const {
  const auto& in = task.test_inputs[input];
  const auto binding = exec::bind_positional(task.parameter_names(), in.args, output);
  return executor_.eval_assertion(task.source_for(in, task.implementation), task.function_name, candidate.source,
                                  binding, options_.timeout_ms);
}

CorrectnessReport FeedbackEngine::check_correctness(const Candidate& candidate, const TaskSpec& task) const {
  if (!task.has_expected_outputs())
    throw std::logic_error("task " + task.task_id + " has no materialized expected outputs");
  CorrectnessReport report;
  for (std::size_t i = 0; i < task.test_inputs.size(); ++i) {
    const auto v = eval_on(candidate, task, i, task.expected_outputs[i]);
    ++report.tests_checked;
    if (!v.ok()) {
      report.correct = false;
      report.failing_input_id = task.test_inputs[i].input_id;
      report.failure_status = v.status;
      report.error_type = v.error_type;
      report.error_message = v.error_message;
      return report;
    }
  }
  report.correct = true;
  return report;
}

int FeedbackEngine::judge_mutant(const Candidate& candidate, const TaskSpec& task, const MutantSpec& mutant) const {
  bool produced_output = false;
  for (std::size_t i = 0; i < task.test_inputs.size(); ++i) {
    const auto& in = task.test_inputs[i];
    const auto run = executor_.run_function(task.source_for(in, mutant.implementation), task.function_name, in.args,
                                            options_.timeout_ms);
    if (!run.ok() || !run.value) continue;
    produced_output = true;
    if (!eval_on(candidate, task, i, *run.value).ok()) return 1;
  }
  return produced_output ? 0 : -1;
}

CompletenessReport FeedbackEngine::measure_completeness(const Candidate& candidate, const TaskSpec& task) const {
  std::vector<int> verdicts(task.mutants.size(), 0);
  parallel_for(task.mutants.size(), options_.parallelism,
               [&](std::size_t k) { verdicts[k] = judge_mutant(candidate, task, task.mutants[k]); });

  CompletenessReport report;
  for (std::size_t k = 0; k < task.mutants.size(); ++k) {
    const auto& id = task.mutants[k].mutant_id;
    if (verdicts[k] > 0) {
      report.caught.insert(id);
    } else if (verdicts[k] == 0) {
      report.uncaught.insert(id);
    } else {
      report.excluded.insert(id);
    }
  }
  const auto denominator = report.caught.size() + report.uncaught.size();
  if (denominator == 0) throw UndefinedMetricError("task " + task.task_id + ": no scorable mutants");
  report.score = static_cast<double>(report.caught.size()) / static_cast<double>(denominator);
  return report;
}

std::string pick_revealed_mutant(const std::set<std::string>& uncaught, std::uint64_t seed, int attempt_index) {
  if (uncaught.empty()) throw std::invalid_argument("no uncaught mutants to reveal");
  std::mt19937_64 rng(splitmix64(seed ^ splitmix64(static_cast<std::uint64_t>(attempt_index))));
  auto it = uncaught.begin();
  std::advance(it, static_cast<std::ptrdiff_t>(rng() % uncaught.size()));
  return *it;
}

Feedback FeedbackEngine::evaluate_feedback(const Candidate& candidate, const TaskSpec& task,
                                           FeedbackMode mode) const {
  Feedback fb;
  fb.mode = mode;
  fb.correctness = check_correctness(candidate, task);
  if (fb.correctness.correct) {
    try {
      fb.completeness = measure_completeness(candidate, task);
      fb.score = fb.completeness->score;
    } catch (const UndefinedMetricError&) {
      CompletenessReport empty;
      for (const auto& m : task.mutants) empty.excluded.insert(m.mutant_id);
      fb.completeness = empty;
      fb.completeness_undefined = true;
      fb.score = 0.0;
    }
    fb.threshold_met = !fb.completeness_undefined && fb.score >= options_.tau;
    if (mode == FeedbackMode::enhanced && !fb.completeness->uncaught.empty()) {
      fb.revealed_mutant_id = pick_revealed_mutant(fb.completeness->uncaught, options_.seed, candidate.attempt_index);
      if (const auto* m = find_mutant(task, *fb.revealed_mutant_id)) fb.revealed_mutant_source = m->implementation;
    }
  }
  fb.observation_text = compose_observation(fb, mode);
  return fb;
}

Feedback FeedbackEngine::probe(const Candidate& candidate, const TaskSpec& task) const {
  Feedback fb;
  fb.correctness = check_correctness(candidate, task);
  fb.observation_text = compose_probe_observation(fb.correctness);
  return fb;
}

BugDiscrimination FeedbackEngine::is_bug_discriminating(const Candidate& candidate, const BugPair& pair) const {
  auto task = task_from_bugpair(pair);
  materialize_expected_outputs(task, executor_, false, options_.timeout_ms);
  const auto& buggy = task.mutants.front();
  const auto n_regression = pair.regression_tests.size();

  BugDiscrimination result;
  result.holds_on_correct = true;
  for (std::size_t i = 0; i < task.test_inputs.size(); ++i) {
    const auto& in = task.test_inputs[i];
    TestOutcome t;
    t.input_id = in.input_id;
    t.trigger = i >= n_regression;
    t.on_correct = eval_on(candidate, task, i, task.expected_outputs[i]).status;
    if (t.on_correct != exec::Status::ok) result.holds_on_correct = false;
    const auto run =
        executor_.run_function(task.source_for(in, buggy.implementation), task.function_name, in.args, options_.timeout_ms);
    if (run.ok() && run.value) {
      t.on_buggy = eval_on(candidate, task, i, *run.value).status;
      if (*t.on_buggy != exec::Status::ok) result.fails_on_buggy = true;
    }
    result.tests.push_back(std::move(t));
  }
  result.discriminating = result.holds_on_correct && result.fails_on_buggy;
  return result;
}

std::string compose_probe_observation(const CorrectnessReport& report) {
  if (report.correct) return fmt::format(fmt::runtime(templates::kTestsPassed), fmt::arg("n", report.tests_checked));
  std::string text = fmt::format(fmt::runtime(templates::kTestsFailed),
                                 fmt::arg("input", report.failing_input_id.value_or("?")),
                                 fmt::arg("status", exec::to_string(report.failure_status.value_or(exec::Status::runtime_error))));
  if (!report.error_type.empty() || !report.error_message.empty()) {
    text += "\n";
    text += fmt::format(fmt::runtime(templates::kErrorDetail), fmt::arg("type", report.error_type),
                        fmt::arg("message", report.error_message));
  }
  return text;
}

std::string compose_observation(const Feedback& feedback, FeedbackMode mode) {
  std::string text = compose_probe_observation(feedback.correctness);
  if (!feedback.correctness.correct) return text;
  text += "\n";
  if (feedback.completeness_undefined) {
    text += templates::kNoMutantsScored;
  } else {
    text += feedback.threshold_met ? templates::kTargetMet : templates::kTargetNotMet;
  }
  if (mode == FeedbackMode::enhanced && feedback.revealed_mutant_source) {
    text += "\n";
    text += fmt::format(fmt::runtime(templates::kRevealedMutant), fmt::arg("source", *feedback.revealed_mutant_source));
  }
  return text;
}

}  // namespace specharness::feedback
