#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "specharness/corpus.hpp"
#include "specharness/feedback.hpp"
#include "specharness/llm_gateway.hpp"
#include "specharness/session.hpp"

namespace specharness::metrics {

using json = nlohmann::json;

inline constexpr int kReportSchema = 1;

enum class ExportFormat { json, csv, text };
std::optional<ExportFormat> parse_export_format(std::string_view text);

/// Header of the per-task CSV export, in column order.
inline constexpr std::string_view kCsvHeader =
    "task_id,mode,tau,mu,correct,completeness,attempts,submissions,tokens_in,tokens_out";

struct ConfigEcho {
  session::StrategyMode mode = session::StrategyMode::exploratory;
  double tau = 0.9;
  int mu = 12;
  std::string model;
  std::string feedback = "binary";
  int escalate_extra_attempts = 0;
};

struct Pricing {
  double per_input_token = 0.0;
  double per_output_token = 0.0;
};

struct Stats {
  double mean = 0.0;
  int min = 0;
  int max = 0;
};

struct TaskRow {
  std::string task_id;
  bool correct = false;
  double completeness = 0.0;  // 0 when the final candidate is not correct
  int attempts = 0;
  int submissions = 0;
  std::int64_t tokens_in = 0;
  std::int64_t tokens_out = 0;
  std::string termination_reason;
  bool escalated = false;
};

struct Failure {
  std::string task_id;
  std::string reason;
};

struct ExperimentReport {
  ConfigEcho config;
  Pricing pricing;
  std::size_t n_tasks = 0;
  double correctness_rate = 0.0;
  double completeness_mean = 0.0;
  Stats attempts_stats;
  Stats submissions_stats;
  double efficiency_E = 0.0;
  std::int64_t tokens_in_total = 0;
  std::int64_t tokens_out_total = 0;
  double tokens_in_mean = 0.0;
  double tokens_out_mean = 0.0;
  double cost_total = 0.0;
  std::vector<std::string> zero_submission_tasks;
  std::vector<TaskRow> tasks;       // sorted by task_id
  std::vector<Failure> failures;    // tasks without a usable outcome, sorted by task_id
};

/// Mean over outcomes of final_score / submissions_used. Incorrect final
/// candidates score 0; zero-submission outcomes contribute 0. Throws
/// UndefinedMetricError on an empty list.
double efficiency_score(std::span<const session::SessionOutcome> outcomes);

/// Throws std::invalid_argument when an outcome's mode differs from
/// `config.mode` or it used more attempts than the configured budget allows.
ExperimentReport aggregate(std::span<const session::SessionOutcome> outcomes, const ConfigEcho& config,
                           const Pricing& pricing, std::vector<Failure> failures = {});

struct PairDetail {
  std::string pair_id;
  std::optional<std::string> candidate;
  bool holds_on_correct = false;
  bool fails_on_buggy = false;
  bool discriminating = false;
  int attempts = 0;
  int submissions = 0;
  std::int64_t tokens_in = 0;
  std::int64_t tokens_out = 0;
};

struct BugReport {
  ConfigEcho config;
  std::size_t n_pairs = 0;           // pairs evaluated (skipped ones excluded)
  double correctness_rate = 0.0;     // holds on the correct version
  double discrimination_rate = 0.0;
  std::vector<PairDetail> pairs;     // sorted by pair_id
  std::vector<Failure> skipped;
};

/// Builds a backend for one session, keyed by task or pair id.
using BackendFactory = std::function<std::shared_ptr<llm::ChatBackend>(const std::string& id)>;

/// Runs `config` on each pair's induced task and classifies the final
/// candidate. Invalid pairs are skipped with their reason.
BugReport bug_study(std::span<const BugPair> pairs, const session::StrategyConfig& config, const BackendFactory& backends,
                    const feedback::FeedbackEngine& engine, const std::string& model = {}, std::size_t jobs = 1);

/// Rates over pair details.
BugReport summarize_bug_study(std::vector<PairDetail> pairs, std::vector<Failure> skipped, const ConfigEcho& config);

/// Reals rounded to 4 decimals, keys sorted.
json to_json(const ExperimentReport& report);
json to_json(const BugReport& report);
ExperimentReport experiment_report_from_json(const json& j);
BugReport bug_report_from_json(const json& j);

std::string render(const ExperimentReport& report, ExportFormat format);
std::string render(const BugReport& report, ExportFormat format);

/// Writes `render(report, format)`. Throws std::runtime_error on IO failure.
void export_report(const ExperimentReport& report, const std::filesystem::path& path, ExportFormat format);
void export_report(const BugReport& report, const std::filesystem::path& path, ExportFormat format);

double round4(double x);

}  // namespace specharness::metrics
