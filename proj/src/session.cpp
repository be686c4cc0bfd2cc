#include "specharness/session.hpp"

#include <algorithm>
#include <cctype>
#include <stdexcept>

#include <fmt/format.h>

#include "specharness/error.hpp"
#include "specharness/observation_templates.hpp"

namespace specharness::session {

namespace {

using feedback::FeedbackMode;

std::string trim(std::string_view s) {
  while (!s.empty() && std::isspace(static_cast<unsigned char>(s.front()))) s.remove_prefix(1);
  while (!s.empty() && std::isspace(static_cast<unsigned char>(s.back()))) s.remove_suffix(1);
  return std::string(s);
}

std::size_t count_of(std::string_view haystack, std::string_view needle) {
  std::size_t n = 0;
  for (auto pos = haystack.find(needle); pos != std::string_view::npos; pos = haystack.find(needle, pos + 1)) ++n;
  return n;
}

// Drops a surrounding ``` fence (with optional language tag).
std::string strip_code_fence(std::string text) {
  if (!text.starts_with("```") || !text.ends_with("```") || text.size() < 6) return text;
  const auto first_nl = text.find('\n');
  if (first_nl == std::string::npos) return text;
  return trim(std::string_view(text).substr(first_nl + 1, text.size() - 3 - first_nl - 1));
}

std::string_view format_reminder(StrategyMode mode) {
  return mode == StrategyMode::exploratory ? templates::kFormatReminderExploratory
                                           : templates::kFormatReminderSubmitOnly;
}

std::string render_turn(const HistoryEntry& e) {
  if (e.action == TurnAction::malformed) return e.raw_model_text.empty() ? "(empty response)" : e.raw_model_text;
  const auto tag = e.action == TurnAction::explore ? "assert" : "solution";
  return fmt::format("<think>{}</think>\n<{}>\n{}\n</{}>", e.think_text, tag, e.candidate_source.value_or(""), tag);
}

}  // namespace

std::string_view to_string(StrategyMode mode) {
  switch (mode) {
    case StrategyMode::greedy:
      return "greedy";
    case StrategyMode::random_sampling:
      return "random_sampling";
    case StrategyMode::exploratory:
      break;
  }
  return "exploratory";
}

std::optional<StrategyMode> parse_strategy_mode(std::string_view text) {
  for (auto m : {StrategyMode::exploratory, StrategyMode::greedy, StrategyMode::random_sampling})
    if (to_string(m) == text) return m;
  return std::nullopt;
}

double default_temperature(StrategyMode mode) { return mode == StrategyMode::random_sampling ? 1.0 : 0.0; }

void StrategyConfig::validate() const {
  if (!(tau >= 0.0 && tau <= 1.0)) throw std::invalid_argument("tau must be in [0,1]");
  if (mu < 1) throw std::invalid_argument("mu must be >= 1");
  if (enhanced_escalation && enhanced_escalation->extra_attempts < 0)
    throw std::invalid_argument("extra_attempts must be >= 0");
}

int StrategyConfig::effective_budget(bool escalated) const {
  return mu + (escalated && enhanced_escalation ? enhanced_escalation->extra_attempts : 0);
}

std::string_view to_string(TurnAction action) {
  switch (action) {
    case TurnAction::explore:
      return "explore";
    case TurnAction::submit:
      return "submit";
    case TurnAction::malformed:
      break;
  }
  return "malformed";
}

std::optional<TurnAction> parse_turn_action(std::string_view text) {
  for (auto a : {TurnAction::explore, TurnAction::submit, TurnAction::malformed})
    if (to_string(a) == text) return a;
  return std::nullopt;
}

std::string_view to_string(TerminationReason reason) {
  switch (reason) {
    case TerminationReason::threshold_met:
      return "threshold_met";
    case TerminationReason::script_exhausted:
      return "script_exhausted";
    case TerminationReason::infrastructure_error:
      return "infrastructure_error";
    case TerminationReason::budget_exhausted:
      break;
  }
  return "budget_exhausted";
}

ParsedTurn parse_turn(std::string_view raw, StrategyMode mode) {
  ParsedTurn out;
  std::string_view rest = raw;

  const auto think_open = rest.find("<think>");
  if (think_open != std::string_view::npos) {
    const auto think_close = rest.find("</think>", think_open);
    if (think_close == std::string_view::npos) return out;
    out.think = trim(rest.substr(think_open + 7, think_close - think_open - 7));
    rest = rest.substr(think_close + 8);
  } else if (rest.find("</think>") != std::string_view::npos) {
    return out;
  }

  const auto n_assert = count_of(rest, "<assert>");
  const auto n_solution = count_of(rest, "<solution>");
  if (n_assert + n_solution != 1) return out;
  const bool is_assert = n_assert == 1;
  if (is_assert && mode != StrategyMode::exploratory) return out;

  const std::string_view open = is_assert ? "<assert>" : "<solution>";
  const std::string_view close = is_assert ? "</assert>" : "</solution>";
  const auto begin = rest.find(open) + open.size();
  const auto end = rest.find(close, begin);
  if (end == std::string_view::npos || count_of(rest, close) != 1) return out;

  auto candidate = strip_code_fence(trim(rest.substr(begin, end - begin)));
  if (candidate.empty()) return out;
  out.candidate = std::move(candidate);
  out.action = is_assert ? TurnAction::explore : TurnAction::submit;
  return out;
}

std::vector<llm::ChatMessage> build_prompt(const TaskSpec& task, std::span<const HistoryEntry> history,
                                           const StrategyConfig& config) {
  std::string system(templates::kObjective);
  system += "\n\n";
  system += templates::kTurnStructureHead;
  if (config.mode == StrategyMode::exploratory) system += templates::kAssertAction;
  system += templates::kSolutionAction;

  std::string user = fmt::format(fmt::runtime(templates::kFunctionIntro), fmt::arg("name", task.function_name));
  user += "\n\nSignature:\n" + task.signature + "\n";
  if (task.docstring) user += "\nDescription:\n" + *task.docstring + "\n";
  user += "\nImplementation:\n```python\n" + task.implementation + "\n```\n\n";
  user += templates::kBegin;

  std::vector<llm::ChatMessage> messages{{llm::Role::system, std::move(system)}, {llm::Role::user, std::move(user)}};
  if (config.mode == StrategyMode::random_sampling) return messages;
  for (const auto& e : history) {
    messages.push_back({llm::Role::assistant, render_turn(e)});
    messages.push_back({llm::Role::user, "<observation>\n" + e.observation_text.value_or("") + "\n</observation>"});
  }
  return messages;
}

StopDecision decides_to_stop(const SessionState& state, const StrategyConfig& config) {
  if (state.terminated) return {true, state.termination_reason};
  if (!state.history.empty()) {
    const auto& last = state.history.back();
    if (last.action == TurnAction::submit && last.correct.value_or(false) && last.score.value_or(0.0) >= config.tau)
      return {true, TerminationReason::threshold_met};
  }
  if (state.attempts_used >= config.effective_budget(state.escalated)) return {true, TerminationReason::budget_exhausted};
  return {};
}

SessionState initial_state(const TaskSpec& task, const StrategyConfig& config) {
  SessionState state;
  state.task_id = task.task_id;
  state.feedback_mode = config.feedback_mode;
  return state;
}

void step(SessionState& state, const TaskSpec& task, const StrategyConfig& config, llm::ChatBackend& backend,
          const feedback::FeedbackEngine& engine) {
  if (state.terminated) throw std::logic_error("step on a terminated session");
  const auto terminate = [&](TerminationReason reason, std::string detail) {
    state.terminated = true;
    state.termination_reason = reason;
    state.termination_detail = std::move(detail);
  };

  llm::GenerationResult gen;
  for (;;) {
    const auto window = std::span<const HistoryEntry>(state.history).subspan(state.prompt_window_start);
    const auto prompt = build_prompt(task, window, config);
    try {
      gen = backend.generate(prompt);
      break;
    } catch (const llm::BackendError& e) {
      if (e.kind() == llm::BackendError::Kind::context_length_exceeded &&
          state.prompt_window_start < state.history.size()) {
        ++state.prompt_window_start;
        continue;
      }
      terminate(e.kind() == llm::BackendError::Kind::script_exhausted ? TerminationReason::script_exhausted
                                                                      : TerminationReason::infrastructure_error,
                e.what());
      return;
    }
  }

  HistoryEntry entry;
  entry.attempt_index = ++state.attempts_used;
  entry.raw_model_text = gen.text;
  entry.tokens_in = gen.input_tokens;
  entry.tokens_out = gen.output_tokens;

  const auto parsed = parse_turn(gen.text, config.mode);
  entry.action = parsed.action;
  entry.think_text = parsed.think;
  try {
    switch (parsed.action) {
      case TurnAction::malformed:
        entry.observation_text = std::string(format_reminder(config.mode));
        break;
      case TurnAction::explore: {
        entry.candidate_source = parsed.candidate;
        const auto fb = engine.probe({parsed.candidate, entry.attempt_index, feedback::Action::explore}, task);
        entry.correct = fb.correctness.correct;
        entry.observation_text = fb.observation_text;
        break;
      }
      case TurnAction::submit: {
        entry.candidate_source = parsed.candidate;
        ++state.submissions_used;
        const auto fb = engine.evaluate_feedback({parsed.candidate, entry.attempt_index, feedback::Action::submit},
                                                 task, state.feedback_mode);
        entry.correct = fb.correctness.correct;
        entry.score = fb.score;
        entry.observation_text = fb.observation_text;
        entry.revealed_mutant_id = fb.revealed_mutant_id;
        // A correct candidate is kept even at score 0 so that a vacuous but
        // correct answer is still returned; the score update is strict.
        if (fb.correctness.correct && (fb.score > state.s_best || !state.phi_best)) {
          state.phi_best = parsed.candidate;
          state.s_best = std::max(state.s_best, fb.score);
        }
        break;
      }
    }
  } catch (const Error& e) {
    state.history.push_back(std::move(entry));
    terminate(TerminationReason::infrastructure_error, e.what());
    return;
  }
  state.history.push_back(std::move(entry));
}

void escalate(SessionState& state, const TaskSpec& task, const StrategyConfig& config,
              const feedback::FeedbackEngine& engine) {
  (void)config;
  state.escalated = true;
  state.feedback_mode = FeedbackMode::enhanced;
  if (!state.phi_best || state.history.empty()) return;
  const auto fb = engine.evaluate_feedback({*state.phi_best, state.attempts_used, feedback::Action::submit}, task,
                                           FeedbackMode::enhanced);
  if (!fb.revealed_mutant_source) return;
  auto& last = state.history.back();
  last.observation_text = last.observation_text.value_or("") + "\n" +
                          fmt::format(fmt::runtime(templates::kRevealedMutant),
                                      fmt::arg("source", *fb.revealed_mutant_source));
  last.revealed_mutant_id = fb.revealed_mutant_id;
}

SessionOutcome outcome_of(const SessionState& state, const StrategyConfig& config) {
  SessionOutcome o;
  o.task_id = state.task_id;
  o.mode = config.mode;
  o.final_candidate = state.phi_best;
  o.final_score = state.phi_best ? state.s_best : 0.0;
  o.correct = state.phi_best.has_value();
  o.attempts_used = state.attempts_used;
  o.submissions_used = state.submissions_used;
  o.termination_reason = state.termination_reason.value_or(TerminationReason::budget_exhausted);
  o.escalated = state.escalated;
  o.trajectory = state.history;
  for (const auto& e : state.history) {
    o.tokens_in += e.tokens_in;
    o.tokens_out += e.tokens_out;
  }
  return o;
}

SessionOutcome run_session(const TaskSpec& task, const StrategyConfig& config, llm::ChatBackend& backend,
                           const feedback::FeedbackEngine& engine) {
  config.validate();
  if (!task.has_expected_outputs()) throw std::logic_error("task " + task.task_id + " has no expected outputs");
  const auto scorer = engine.retargeted(config.tau, config.seed);
  auto state = initial_state(task, config);
  for (;;) {
    step(state, task, config, backend, scorer);
    const auto decision = decides_to_stop(state, config);
    if (!decision.stop) continue;
    if (decision.reason == TerminationReason::budget_exhausted && config.enhanced_escalation && !state.escalated &&
        config.enhanced_escalation->extra_attempts > 0) {
      try {
        escalate(state, task, config, scorer);
      } catch (const Error& e) {
        state.terminated = true;
        state.termination_reason = TerminationReason::infrastructure_error;
        state.termination_detail = e.what();
        break;
      }
      continue;
    }
    state.terminated = true;
    state.termination_reason = decision.reason;
    break;
  }
  return outcome_of(state, config);
}

bool same_behavior(const SessionOutcome& a, const SessionOutcome& b) {
  auto strip = [](SessionOutcome o) {
    o.tokens_in = o.tokens_out = 0;
    for (auto& e : o.trajectory) e.tokens_in = e.tokens_out = 0;
    return o;
  };
  return strip(a) == strip(b);
}

}  // namespace specharness::session
