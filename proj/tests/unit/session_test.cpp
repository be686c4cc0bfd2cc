#include <set>

#include <gtest/gtest.h>

#include "specharness/observation_templates.hpp"
#include "specharness/runner_pool.hpp"
#include "specharness/session.hpp"
#include "test_support.hpp"

using namespace specharness;
namespace support = specharness::testing;
using namespace specharness::session;
using support::ladder_candidate;
using support::turn;

namespace {

exec::CachingExecutor& executor() {
  static exec::RunnerPool pool(support::stub_pool_config(1));
  static exec::CachingExecutor cache(pool);
  return cache;
}

const TaskSpec& ladder() {
  static const TaskSpec t = [] {
    auto t = support::ladder_task(20);
    materialize_expected_outputs(t, executor());
    return t;
  }();
  return t;
}

const feedback::FeedbackEngine& engine() {
  static const feedback::FeedbackEngine e(executor());
  return e;
}

std::string submit(int k) { return turn("solution", ladder_candidate(k)); }
std::string explore(int k) { return turn("assert", ladder_candidate(k)); }

/// Records every prompt it is asked to complete.
class RecordingBackend final : public llm::ChatBackend {
 public:
  explicit RecordingBackend(std::vector<std::string> script) : inner_(std::move(script)) {}
  llm::GenerationResult generate(std::span<const llm::ChatMessage> messages) override {
    prompts.emplace_back(messages.begin(), messages.end());
    return inner_.generate(messages);
  }
  std::string id() const override { return "recording"; }
  std::vector<std::vector<llm::ChatMessage>> prompts;

 private:
  llm::ScriptedBackend inner_;
};

/// Throws the given error on the listed call numbers (1-based), otherwise
/// delegates to a script.
class FaultyBackend final : public llm::ChatBackend {
 public:
  FaultyBackend(std::vector<std::string> script, std::set<int> fail_on, llm::BackendError::Kind kind)
      : inner_(std::move(script)), fail_on_(std::move(fail_on)), kind_(kind) {}
  llm::GenerationResult generate(std::span<const llm::ChatMessage> messages) override {
    prompt_sizes.push_back(messages.size());
    if (fail_on_.count(++calls_)) throw llm::BackendError(kind_, "injected");
    return inner_.generate(messages);
  }
  std::string id() const override { return "faulty"; }
  std::vector<std::size_t> prompt_sizes;

 private:
  llm::ScriptedBackend inner_;
  std::set<int> fail_on_;
  llm::BackendError::Kind kind_;
  int calls_ = 0;
};

SessionOutcome run(const std::vector<std::string>& script, StrategyConfig config) {
  llm::ScriptedBackend backend(script);
  return run_session(ladder(), config, backend, engine());
}

}  // namespace

TEST(ParseTurn, WellFormedActions) {
  const auto a = parse_turn("<think>why</think>\n<assert>\nassert x > 0\n</assert>", StrategyMode::exploratory);
  EXPECT_EQ(a.action, TurnAction::explore);
  EXPECT_EQ(a.think, "why");
  EXPECT_EQ(a.candidate, "assert x > 0");

  const auto s = parse_turn("<think>done</think><solution>assert True</solution>", StrategyMode::greedy);
  EXPECT_EQ(s.action, TurnAction::submit);
  EXPECT_EQ(s.candidate, "assert True");

  const auto no_think = parse_turn("<solution>assert True</solution>", StrategyMode::exploratory);
  EXPECT_EQ(no_think.action, TurnAction::submit);
  EXPECT_EQ(no_think.think, "");

  const auto chatty = parse_turn("Sure!\n<think>a</think>Here it is:\n<solution>assert 1</solution>\nThanks.",
                                 StrategyMode::exploratory);
  EXPECT_EQ(chatty.action, TurnAction::submit);
  EXPECT_EQ(chatty.candidate, "assert 1");
}

TEST(ParseTurn, FencesAreStripped) {
  const auto t = parse_turn("<think>a</think><solution>\n```python\nassert return_value >= 0\n```\n</solution>",
                            StrategyMode::exploratory);
  EXPECT_EQ(t.action, TurnAction::submit);
  EXPECT_EQ(t.candidate, "assert return_value >= 0");
}

TEST(ParseTurn, MalformedShapes) {
  const auto m = StrategyMode::exploratory;
  EXPECT_EQ(parse_turn("", m).action, TurnAction::malformed);
  EXPECT_EQ(parse_turn("just prose", m).action, TurnAction::malformed);
  EXPECT_EQ(parse_turn("<think>never closed <solution>assert 1</solution>", m).action, TurnAction::malformed);
  EXPECT_EQ(parse_turn("<think>a</think><solution>assert 1", m).action, TurnAction::malformed);
  EXPECT_EQ(parse_turn("<think>a</think><solution>  </solution>", m).action, TurnAction::malformed);
  EXPECT_EQ(parse_turn("<think>a</think><assert>assert 1</assert><solution>assert 1</solution>", m).action,
            TurnAction::malformed);
  EXPECT_EQ(parse_turn("<think>a</think><solution>a</solution><solution>b</solution>", m).action,
            TurnAction::malformed);
  // <assert> is not an action outside exploratory mode.
  EXPECT_EQ(parse_turn("<think>a</think><assert>assert 1</assert>", StrategyMode::greedy).action,
            TurnAction::malformed);
  EXPECT_EQ(parse_turn("<think>a</think><assert>assert 1</assert>", StrategyMode::random_sampling).action,
            TurnAction::malformed);
}

TEST(BuildPrompt, PreambleDependsOnMode) {
  StrategyConfig c;
  const auto expl = build_prompt(ladder(), {}, c);
  ASSERT_EQ(expl.size(), 2u);
  EXPECT_EQ(expl[0].role, llm::Role::system);
  EXPECT_NE(expl[0].content.find(templates::kAssertAction), std::string::npos);
  EXPECT_NE(expl[1].content.find(ladder().implementation), std::string::npos);
  EXPECT_NE(expl[1].content.find(ladder().signature), std::string::npos);

  c.mode = StrategyMode::greedy;
  const auto greedy = build_prompt(ladder(), {}, c);
  EXPECT_EQ(greedy[0].content.find(templates::kAssertAction), std::string::npos);
  EXPECT_NE(greedy[0].content.find(templates::kSolutionAction), std::string::npos);
}

TEST(BuildPrompt, HistoryIntegrity) {
  StrategyConfig c;
  c.mu = 4;
  c.tau = 1.0;
  RecordingBackend backend({explore(3), submit(5), "garbage", submit(6)});
  const auto out = run_session(ladder(), c, backend, engine());
  ASSERT_EQ(backend.prompts.size(), 4u);
  for (std::size_t t = 0; t < backend.prompts.size(); ++t) {
    const auto& p = backend.prompts[t];
    ASSERT_EQ(p.size(), 2 + 2 * t);
    for (std::size_t i = 0; i < t; ++i) {
      const auto& entry = out.trajectory[i];
      EXPECT_EQ(p[2 + 2 * i].role, llm::Role::assistant);
      if (entry.candidate_source) EXPECT_NE(p[2 + 2 * i].content.find(*entry.candidate_source), std::string::npos);
      EXPECT_EQ(p[3 + 2 * i].content, "<observation>\n" + *entry.observation_text + "\n</observation>");
    }
  }
  EXPECT_EQ(backend.prompts[3][6].content, "garbage");
}

TEST(BuildPrompt, RandomSamplingHistoryIsAlwaysEmpty) {
  StrategyConfig c;
  c.mode = StrategyMode::random_sampling;
  c.mu = 3;
  c.tau = 1.0;
  RecordingBackend backend({submit(1), submit(2), submit(3)});
  run_session(ladder(), c, backend, engine());
  ASSERT_EQ(backend.prompts.size(), 3u);
  for (const auto& p : backend.prompts) EXPECT_EQ(p.size(), 2u);
  EXPECT_EQ(backend.prompts[0], backend.prompts[2]);
}

TEST(DecidesToStop, ThresholdAndBudget) {
  StrategyConfig c;  // tau 0.9, mu 12
  SessionState s;
  HistoryEntry e;
  e.action = TurnAction::submit;
  e.correct = true;
  e.score = 0.92;
  s.history.push_back(e);
  s.attempts_used = 1;
  auto d = decides_to_stop(s, c);
  EXPECT_TRUE(d.stop);
  EXPECT_EQ(d.reason, TerminationReason::threshold_met);

  s.history.back().score = 0.9;  // meeting the target counts
  EXPECT_EQ(decides_to_stop(s, c).reason, TerminationReason::threshold_met);

  s.history.back().score = 0.56;
  EXPECT_FALSE(decides_to_stop(s, c).stop);
  s.attempts_used = 12;
  d = decides_to_stop(s, c);
  EXPECT_TRUE(d.stop);
  EXPECT_EQ(d.reason, TerminationReason::budget_exhausted);

  c.enhanced_escalation = Escalation{4};
  s.escalated = true;
  EXPECT_FALSE(decides_to_stop(s, c).stop);
  s.attempts_used = 16;
  EXPECT_EQ(decides_to_stop(s, c).reason, TerminationReason::budget_exhausted);

  // An explore never meets the threshold.
  s.attempts_used = 1;
  s.history.back().action = TurnAction::explore;
  s.history.back().score = std::nullopt;
  EXPECT_FALSE(decides_to_stop(s, c).stop);
}

TEST(Step, ExploreProbeFailureLeavesSubmissionsAlone) {
  StrategyConfig c;
  auto state = initial_state(ladder(), c);
  llm::ScriptedBackend backend({turn("assert", support::kIncorrectLadderCandidate)});
  step(state, ladder(), c, backend, engine());
  ASSERT_EQ(state.history.size(), 1u);
  EXPECT_EQ(state.attempts_used, 1);
  EXPECT_EQ(state.submissions_used, 0);
  EXPECT_EQ(state.history[0].action, TurnAction::explore);
  EXPECT_EQ(state.history[0].correct, false);
  EXPECT_FALSE(state.history[0].score);
  EXPECT_NE(state.history[0].observation_text->find("AssertionError"), std::string::npos);
  EXPECT_FALSE(state.phi_best);
}

TEST(Step, StrictImprovementOnSubmissions) {
  StrategyConfig c;
  c.tau = 1.0;
  auto state = initial_state(ladder(), c);
  llm::ScriptedBackend backend({submit(10), submit(15), submit(12), submit(15)});
  step(state, ladder(), c, backend, engine());
  EXPECT_DOUBLE_EQ(state.s_best, 0.5);
  step(state, ladder(), c, backend, engine());
  EXPECT_DOUBLE_EQ(state.s_best, 0.75);
  EXPECT_EQ(state.phi_best, ladder_candidate(15));
  step(state, ladder(), c, backend, engine());
  EXPECT_DOUBLE_EQ(state.s_best, 0.75);
  EXPECT_EQ(state.phi_best, ladder_candidate(15));
  EXPECT_EQ(state.submissions_used, 3);
}

TEST(Step, MalformedTurnConsumesAnAttempt) {
  StrategyConfig c;
  c.mode = StrategyMode::greedy;
  auto state = initial_state(ladder(), c);
  llm::ScriptedBackend backend({"no tags at all"});
  step(state, ladder(), c, backend, engine());
  EXPECT_EQ(state.attempts_used, 1);
  EXPECT_EQ(state.submissions_used, 0);
  EXPECT_EQ(state.history[0].action, TurnAction::malformed);
  EXPECT_EQ(state.history[0].observation_text, std::string(templates::kFormatReminderSubmitOnly));
  EXPECT_EQ(state.history[0].raw_model_text, "no tags at all");
}

TEST(RunSession, GreedyFirstTurnMeetsTarget) {
  StrategyConfig c;
  c.mode = StrategyMode::greedy;
  const auto out = run({submit(19), submit(20)}, c);
  EXPECT_EQ(out.attempts_used, 1);
  EXPECT_EQ(out.termination_reason, TerminationReason::threshold_met);
  EXPECT_DOUBLE_EQ(out.final_score, 0.95);
}

TEST(RunSession, RandomSamplingEarlyStop) {
  StrategyConfig c;
  c.mode = StrategyMode::random_sampling;
  c.mu = 3;
  const auto out = run({submit(4), submit(19), submit(20)}, c);
  EXPECT_EQ(out.attempts_used, 2);
  EXPECT_EQ(out.submissions_used, 2);
  EXPECT_DOUBLE_EQ(out.final_score, 0.95);
  EXPECT_EQ(out.termination_reason, TerminationReason::threshold_met);
}

TEST(RunSession, BudgetExhaustedKeepsBestSoFar) {
  StrategyConfig c;
  c.mu = 3;
  const auto out = run({submit(8), submit(4), explore(20), submit(20)}, c);
  EXPECT_EQ(out.attempts_used, 3);
  EXPECT_EQ(out.termination_reason, TerminationReason::budget_exhausted);
  EXPECT_EQ(out.final_candidate, ladder_candidate(8));
  EXPECT_DOUBLE_EQ(out.final_score, 0.4);
  EXPECT_TRUE(out.correct);
}

TEST(RunSession, CorrectButVacuousCandidateIsStillReturned) {
  StrategyConfig c;
  c.mu = 2;
  const auto out = run({turn("solution", "assert True"), "oops"}, c);
  EXPECT_TRUE(out.correct);
  EXPECT_EQ(out.final_candidate, "assert True");
  EXPECT_EQ(out.final_score, 0.0);
}

TEST(RunSession, IncorrectOnlyMeansNoCandidate) {
  StrategyConfig c;
  c.mu = 2;
  const auto out = run({turn("solution", support::kIncorrectLadderCandidate), "oops"}, c);
  EXPECT_FALSE(out.correct);
  EXPECT_FALSE(out.final_candidate);
  EXPECT_EQ(out.final_score, 0.0);
  EXPECT_EQ(out.submissions_used, 1);
}

TEST(RunSession, ScriptExhaustionReturnsBestSoFar) {
  StrategyConfig c;
  c.mu = 6;
  const auto out = run({submit(5), explore(2)}, c);
  EXPECT_EQ(out.termination_reason, TerminationReason::script_exhausted);
  EXPECT_EQ(out.attempts_used, 2);
  EXPECT_DOUBLE_EQ(out.final_score, 0.25);
}

TEST(RunSession, EscalationExtendsBudgetAndRevealsMutants) {
  StrategyConfig c;
  c.mu = 2;
  c.enhanced_escalation = Escalation{4};
  c.seed = 5;
  const auto out = run(std::vector<std::string>(10, submit(3)), c);
  EXPECT_TRUE(out.escalated);
  EXPECT_EQ(out.attempts_used, 6);
  EXPECT_EQ(out.termination_reason, TerminationReason::budget_exhausted);
  // Binary turns never show mutant source.
  EXPECT_FALSE(out.trajectory[0].revealed_mutant_id);
  EXPECT_EQ(out.trajectory[0].observation_text->find("def ident"), std::string::npos);
  // The last pre-escalation observation gets the reveal appended, and every
  // later submission is scored in enhanced mode.
  for (std::size_t i = 1; i < out.trajectory.size(); ++i) {
    ASSERT_TRUE(out.trajectory[i].revealed_mutant_id) << i;
    EXPECT_NE(out.trajectory[i].observation_text->find("def ident(x):\n    return x + "), std::string::npos);
  }
}

TEST(RunSession, NoEscalationOnceTargetIsMet) {
  StrategyConfig c;
  c.mu = 1;
  c.enhanced_escalation = Escalation{4};
  const auto out = run({submit(20)}, c);
  EXPECT_FALSE(out.escalated);
  EXPECT_EQ(out.termination_reason, TerminationReason::threshold_met);
}

TEST(RunSession, ContextOverflowDropsOldestTurns) {
  StrategyConfig c;
  c.mu = 3;
  c.tau = 1.0;
  FaultyBackend backend({submit(1), submit(2), submit(3)}, {3}, llm::BackendError::Kind::context_length_exceeded);
  const auto out = run_session(ladder(), c, backend, engine());
  EXPECT_EQ(out.attempts_used, 3);
  // calls: turn1 (2 msgs), turn2 (4), turn3 overflow (6), retry without turn 1 (4)
  EXPECT_EQ(backend.prompt_sizes, (std::vector<std::size_t>{2, 4, 6, 4}));
}

TEST(RunSession, InfrastructureErrorKeepsBestSoFar) {
  StrategyConfig c;
  c.mu = 5;
  c.tau = 1.0;
  FaultyBackend backend({submit(7), submit(9)}, {2}, llm::BackendError::Kind::http);
  const auto out = run_session(ladder(), c, backend, engine());
  EXPECT_EQ(out.termination_reason, TerminationReason::infrastructure_error);
  EXPECT_EQ(out.final_candidate, ladder_candidate(7));
  EXPECT_EQ(out.attempts_used, 1);
}

TEST(RunSession, DeterministicForFixedSeedAndScript) {
  StrategyConfig c;
  c.mu = 4;
  c.feedback_mode = feedback::FeedbackMode::enhanced;
  c.seed = 99;
  const std::vector<std::string> script{explore(2), submit(3), "bad", submit(6)};
  EXPECT_EQ(run(script, c), run(script, c));
}

TEST(RunSession, GreedyIsExploratoryWithOnlySolutions) {
  const std::vector<std::string> script{submit(2), submit(9), submit(4), submit(1), submit(19)};
  StrategyConfig c;
  c.mu = 5;
  const auto exploratory = run(script, c);
  c.mode = StrategyMode::greedy;
  const auto greedy = run(script, c);
  auto g = greedy;
  g.mode = StrategyMode::exploratory;
  EXPECT_TRUE(same_behavior(exploratory, g));
  EXPECT_EQ(exploratory.attempts_used, 5);
}

TEST(StrategyConfig, Validation) {
  StrategyConfig c;
  c.tau = 1.5;
  EXPECT_THROW(c.validate(), std::invalid_argument);
  c.tau = 0.5;
  c.mu = 0;
  EXPECT_THROW(c.validate(), std::invalid_argument);
  EXPECT_EQ(default_temperature(StrategyMode::random_sampling), 1.0);
  EXPECT_EQ(default_temperature(StrategyMode::exploratory), 0.0);
  EXPECT_EQ(parse_strategy_mode("greedy"), StrategyMode::greedy);
  EXPECT_FALSE(parse_strategy_mode("beam"));
}
