#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>
#include <variant>
#include <vector>

#include "specharness/feedback.hpp"
#include "specharness/llm_gateway.hpp"
#include "specharness/metrics.hpp"
#include "specharness/session.hpp"

namespace specharness::cli {

inline constexpr std::string_view kToolVersion = "0.1.0";
inline constexpr const char* kRunnerEnv = "SPECHARNESS_RUNNER";

enum class Command { gen, bugdetect, report, validate_corpus, replay };
std::string_view to_string(Command command);

struct RunConfig {
  Command command = Command::gen;
  std::filesystem::path corpus_path;
  std::filesystem::path input_path;  // report: a report.json; replay: a run directory
  session::StrategyMode mode = session::StrategyMode::exploratory;
  double tau = 0.9;  // normalized; the command line takes a percentage
  int mu = 12;
  feedback::FeedbackMode feedback = feedback::FeedbackMode::binary;
  int escalate_extra_attempts = 0;
  llm::BackendKind backend = llm::BackendKind::scripted;
  std::filesystem::path script_path;
  std::string endpoint;
  std::string model;
  std::optional<double> temperature;
  int max_output_tokens = 1024;
  std::size_t pool_size = 1;
  int timeout_ms = exec::kDefaultTimeoutMs;
  std::uint64_t seed = 0;
  std::size_t jobs = 1;
  std::filesystem::path out_dir;
  std::optional<double> price_in;
  std::optional<double> price_out;
  std::vector<std::string> runner_command;
  metrics::ExportFormat format = metrics::ExportFormat::text;
  bool bug_pairs = false;         // validate-corpus: the path holds bug pairs
  bool check_references = false;  // validate-corpus: run every reference through the runner

  /// Throws std::invalid_argument.
  void validate() const;
  session::StrategyConfig strategy() const;
};

/// Parses argv. Returns the exit code instead when parsing ends the program
/// (help, usage errors).
std::variant<RunConfig, int> parse_command_line(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

/// Executes a parsed command. Exit status 0 iff every task produced an
/// outcome.
int run(const RunConfig& config, std::ostream& out, std::ostream& err);

int main(int argc, const char* const* argv);

/// Session seed for one task: the run seed mixed with the task id.
std::uint64_t task_seed(std::uint64_t run_seed, const std::string& task_id);

std::string sha256_hex(std::string_view data);

}  // namespace specharness::cli
