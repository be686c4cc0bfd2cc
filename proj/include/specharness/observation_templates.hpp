#pragma once

#include <string_view>

// Fixed observation and prompt wording. Bump the version whenever any string
// changes so stored trajectories stay attributable.
namespace specharness::templates {

inline constexpr int kVersion = 1;

inline constexpr std::string_view kTestsPassed = "Tests: PASSED. The postcondition holds on all {n} test cases.";
inline constexpr std::string_view kTestsFailed = "Tests: FAILED on test case {input} ({status}).";
inline constexpr std::string_view kErrorDetail = "{type}: {message}";
inline constexpr std::string_view kTargetMet = "Completeness target: MET.";
inline constexpr std::string_view kTargetNotMet =
    "Completeness target: NOT MET. The postcondition does not reject enough incorrect implementations.";
inline constexpr std::string_view kNoMutantsScored =
    "Completeness could not be measured for this function (no incorrect implementation produced output).";
inline constexpr std::string_view kRevealedMutant =
    "Here is an incorrect implementation that your postcondition does not reject:\n"
    "```python\n{source}\n```\n"
    "Refine the postcondition so that it fails on this implementation while still passing all tests.";

inline constexpr std::string_view kFormatReminderExploratory =
    "Your response could not be parsed. Begin with a <think> block, then give exactly one "
    "<assert>...</assert> or <solution>...</solution> block.";
inline constexpr std::string_view kFormatReminderSubmitOnly =
    "Your response could not be parsed. Begin with a <think> block, then give exactly one "
    "<solution>...</solution> block.";

inline constexpr std::string_view kObjective =
    "Task: write a postcondition for the Python function shown below.\n"
    "A postcondition is a block of Python assert statements over the function's parameters (by name) and "
    "its result, available as `return_value`. It must hold on every correct run and should reject as many "
    "wrong results as possible.";

inline constexpr std::string_view kTurnStructureHead =
    "Reply format:\n"
    "Open every reply with a <think> block for your reasoning, then end it with exactly one action:\n";
inline constexpr std::string_view kAssertAction =
    "- <assert> a trial assertion. It is run against the tests and you get an <observation> back; it is "
    "not scored.\n";
inline constexpr std::string_view kSolutionAction =
    "- <solution> your postcondition for scoring. It is checked against the tests and against incorrect "
    "implementations.\n";

inline constexpr std::string_view kFunctionIntro = "Function {name}:";
inline constexpr std::string_view kBegin = "Start.";

}  // namespace specharness::templates
