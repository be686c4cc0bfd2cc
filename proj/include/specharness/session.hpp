#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "specharness/corpus.hpp"
#include "specharness/feedback.hpp"
#include "specharness/llm_gateway.hpp"

namespace specharness::session {

enum class StrategyMode { exploratory, greedy, random_sampling };

std::string_view to_string(StrategyMode mode);
std::optional<StrategyMode> parse_strategy_mode(std::string_view text);

/// Decoding temperature used when the backend config leaves it unset.
double default_temperature(StrategyMode mode);

struct Escalation {
  int extra_attempts = 4;
};

struct StrategyConfig {
  StrategyMode mode = StrategyMode::exploratory;
  double tau = 0.9;  // completeness target in [0,1]
  int mu = 12;       // attempt budget
  feedback::FeedbackMode feedback_mode = feedback::FeedbackMode::binary;
  /// When set, a session that spends its budget below tau switches to
  /// enhanced feedback and gets `extra_attempts` more turns.
  std::optional<Escalation> enhanced_escalation;
  std::uint64_t seed = 0;

  void validate() const;
  int effective_budget(bool escalated) const;
};

enum class TurnAction { explore, submit, malformed };
std::string_view to_string(TurnAction action);
std::optional<TurnAction> parse_turn_action(std::string_view text);

struct ParsedTurn {
  TurnAction action = TurnAction::malformed;
  std::string think;
  std::string candidate;
};

/// Splits a model reply into an optional <think> block and exactly one
/// action block. <assert> is only an action in exploratory mode.
ParsedTurn parse_turn(std::string_view raw, StrategyMode mode);

struct HistoryEntry {
  int attempt_index = 0;
  std::string raw_model_text;
  TurnAction action = TurnAction::malformed;
  std::string think_text;
  std::optional<std::string> candidate_source;
  std::optional<std::string> observation_text;
  std::optional<double> score;   // submissions only
  std::optional<bool> correct;   // explores and submissions
  std::optional<std::string> revealed_mutant_id;
  std::int64_t tokens_in = 0;
  std::int64_t tokens_out = 0;

  friend bool operator==(const HistoryEntry&, const HistoryEntry&) = default;
};

enum class TerminationReason { threshold_met, budget_exhausted, script_exhausted, infrastructure_error };
std::string_view to_string(TerminationReason reason);

struct SessionState {
  std::string task_id;
  std::vector<HistoryEntry> history;
  std::optional<std::string> phi_best;
  double s_best = 0.0;
  int attempts_used = 0;
  int submissions_used = 0;
  bool terminated = false;
  std::optional<TerminationReason> termination_reason;
  std::string termination_detail;
  bool escalated = false;
  feedback::FeedbackMode feedback_mode = feedback::FeedbackMode::binary;
  /// History entries before this index are left out of the prompt after the
  /// backend reported a context-length overflow.
  std::size_t prompt_window_start = 0;
};

struct SessionOutcome {
  std::string task_id;
  StrategyMode mode = StrategyMode::exploratory;
  std::optional<std::string> final_candidate;
  double final_score = 0.0;
  bool correct = false;
  int attempts_used = 0;
  int submissions_used = 0;
  TerminationReason termination_reason = TerminationReason::budget_exhausted;
  bool escalated = false;
  std::vector<HistoryEntry> trajectory;
  std::int64_t tokens_in = 0;
  std::int64_t tokens_out = 0;

  friend bool operator==(const SessionOutcome&, const SessionOutcome&) = default;
};

/// Equality over everything the strategy decides (candidates, scores,
/// observations, counters, termination) ignoring token accounting, which
/// depends on prompt length and therefore on the mode's preamble.
bool same_behavior(const SessionOutcome& a, const SessionOutcome& b);

std::vector<llm::ChatMessage> build_prompt(const TaskSpec& task, std::span<const HistoryEntry> history,
                                           const StrategyConfig& config);

struct StopDecision {
  bool stop = false;
  std::optional<TerminationReason> reason;
};

StopDecision decides_to_stop(const SessionState& state, const StrategyConfig& config);

SessionState initial_state(const TaskSpec& task, const StrategyConfig& config);

/// One model turn: prompt, generate, parse, evaluate, record.
void step(SessionState& state, const TaskSpec& task, const StrategyConfig& config, llm::ChatBackend& backend,
          const feedback::FeedbackEngine& engine);

/// Switches the session to enhanced feedback and, when a best candidate
/// exists, appends a revealed uncaught mutant to the last observation.
void escalate(SessionState& state, const TaskSpec& task, const StrategyConfig& config,
              const feedback::FeedbackEngine& engine);

/// Runs the configured strategy to termination. `task` must have
/// materialized expected outputs.
SessionOutcome run_session(const TaskSpec& task, const StrategyConfig& config, llm::ChatBackend& backend,
                           const feedback::FeedbackEngine& engine);

SessionOutcome outcome_of(const SessionState& state, const StrategyConfig& config);

}  // namespace specharness::session
