#include "specharness/metrics.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <fstream>
#include <limits>
#include <mutex>
#include <stdexcept>
#include <thread>

#include <fmt/format.h>

#include "specharness/error.hpp"

namespace specharness::metrics {

namespace {

constexpr std::string_view kBugCsvHeader =
    "pair_id,holds_on_correct,fails_on_buggy,discriminating,attempts,submissions,tokens_in,tokens_out";

double ratio(std::size_t num, std::size_t den) { return den == 0 ? 0.0 : static_cast<double>(num) / den; }

Stats stats_of(const std::vector<int>& xs) {
  if (xs.empty()) return {};
  Stats s{0.0, std::numeric_limits<int>::max(), std::numeric_limits<int>::min()};
  double sum = 0;
  for (int x : xs) {
    sum += x;
    s.min = std::min(s.min, x);
    s.max = std::max(s.max, x);
  }
  s.mean = sum / static_cast<double>(xs.size());
  return s;
}

json to_json(const Stats& s) { return {{"mean", round4(s.mean)}, {"min", s.min}, {"max", s.max}}; }
Stats stats_from_json(const json& j) { return {j.at("mean").get<double>(), j.at("min").get<int>(), j.at("max").get<int>()}; }

json to_json(const ConfigEcho& c) {
  return {{"mode", session::to_string(c.mode)},
          {"tau", round4(c.tau)},
          {"mu", c.mu},
          {"model", c.model},
          {"feedback", c.feedback},
          {"escalate_extra_attempts", c.escalate_extra_attempts}};
}

ConfigEcho config_from_json(const json& j) {
  ConfigEcho c;
  const auto mode = session::parse_strategy_mode(j.at("mode").get<std::string>());
  if (!mode) throw std::invalid_argument("unknown mode in report");
  c.mode = *mode;
  c.tau = j.at("tau").get<double>();
  c.mu = j.at("mu").get<int>();
  c.model = j.at("model").get<std::string>();
  c.feedback = j.at("feedback").get<std::string>();
  c.escalate_extra_attempts = j.at("escalate_extra_attempts").get<int>();
  return c;
}

json failures_to_json(const std::vector<Failure>& fs) {
  json arr = json::array();
  for (const auto& f : fs) arr.push_back({{"task_id", f.task_id}, {"reason", f.reason}});
  return arr;
}

std::vector<Failure> failures_from_json(const json& arr) {
  std::vector<Failure> out;
  for (const auto& f : arr) out.push_back({f.at("task_id").get<std::string>(), f.at("reason").get<std::string>()});
  return out;
}

std::string fixed4(double x) { return fmt::format("{:.4f}", round4(x)); }

std::string csv_field(const std::string& s) {
  if (s.find_first_of(",\"\n") == std::string::npos) return s;
  std::string out = "\"";
  for (char c : s) {
    if (c == '"') out += '"';
    out += c;
  }
  return out + "\"";
}

std::string config_text(const ConfigEcho& c) {
  return fmt::format("mode: {}\ntau: {}\nmu: {}\nmodel: {}\nfeedback: {}\nescalate_extra_attempts: {}\n",
                     session::to_string(c.mode), fixed4(c.tau), c.mu, c.model.empty() ? "-" : c.model, c.feedback,
                     c.escalate_extra_attempts);
}

void write_file(const std::filesystem::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << text;
  if (!out) throw std::runtime_error("write failed for " + path.string());
}

}  // namespace

double round4(double x) { return std::round(x * 10000.0) / 10000.0; }

std::optional<ExportFormat> parse_export_format(std::string_view text) {
  if (text == "json") return ExportFormat::json;
  if (text == "csv") return ExportFormat::csv;
  if (text == "text") return ExportFormat::text;
  return std::nullopt;
}

double efficiency_score(std::span<const session::SessionOutcome> outcomes) {
  if (outcomes.empty()) throw UndefinedMetricError("efficiency score of an empty outcome list");
  double sum = 0.0;
  for (const auto& o : outcomes) {
    if (o.submissions_used == 0) continue;
    sum += (o.correct ? o.final_score : 0.0) / o.submissions_used;
  }
  return sum / static_cast<double>(outcomes.size());
}

ExperimentReport aggregate(std::span<const session::SessionOutcome> outcomes, const ConfigEcho& config,
                           const Pricing& pricing, std::vector<Failure> failures) {
  const int budget = config.mu + config.escalate_extra_attempts;
  ExperimentReport r;
  r.config = config;
  r.pricing = pricing;
  r.n_tasks = outcomes.size();
  std::vector<int> attempts, submissions;
  std::size_t correct = 0;
  double completeness_sum = 0.0;
  for (const auto& o : outcomes) {
    if (o.mode != config.mode)
      throw std::invalid_argument("outcome for " + o.task_id + " ran in mode " + std::string(session::to_string(o.mode)) +
                                  ", report is for " + std::string(session::to_string(config.mode)));
    if (o.attempts_used > budget)
      throw std::invalid_argument("outcome for " + o.task_id + " used " + std::to_string(o.attempts_used) +
                                  " attempts, more than the configured budget");
    TaskRow row;
    row.task_id = o.task_id;
    row.correct = o.correct;
    row.completeness = o.correct ? o.final_score : 0.0;
    row.attempts = o.attempts_used;
    row.submissions = o.submissions_used;
    row.tokens_in = o.tokens_in;
    row.tokens_out = o.tokens_out;
    row.termination_reason = std::string(session::to_string(o.termination_reason));
    row.escalated = o.escalated;
    r.tasks.push_back(row);

    correct += o.correct ? 1 : 0;
    completeness_sum += row.completeness;
    attempts.push_back(o.attempts_used);
    submissions.push_back(o.submissions_used);
    r.tokens_in_total += o.tokens_in;
    r.tokens_out_total += o.tokens_out;
    if (o.submissions_used == 0) r.zero_submission_tasks.push_back(o.task_id);
  }
  std::sort(r.tasks.begin(), r.tasks.end(), [](const auto& a, const auto& b) { return a.task_id < b.task_id; });
  std::sort(r.zero_submission_tasks.begin(), r.zero_submission_tasks.end());
  std::sort(failures.begin(), failures.end(), [](const auto& a, const auto& b) { return a.task_id < b.task_id; });
  r.failures = std::move(failures);

  if (!outcomes.empty()) {
    const auto n = static_cast<double>(outcomes.size());
    r.correctness_rate = ratio(correct, outcomes.size());
    r.completeness_mean = completeness_sum / n;
    r.efficiency_E = efficiency_score(outcomes);
    r.tokens_in_mean = static_cast<double>(r.tokens_in_total) / n;
    r.tokens_out_mean = static_cast<double>(r.tokens_out_total) / n;
  }
  r.attempts_stats = stats_of(attempts);
  r.submissions_stats = stats_of(submissions);
  r.cost_total = static_cast<double>(r.tokens_in_total) * pricing.per_input_token +
                 static_cast<double>(r.tokens_out_total) * pricing.per_output_token;
  return r;
}

BugReport summarize_bug_study(std::vector<PairDetail> pairs, std::vector<Failure> skipped, const ConfigEcho& config) {
  BugReport r;
  r.config = config;
  std::sort(pairs.begin(), pairs.end(), [](const auto& a, const auto& b) { return a.pair_id < b.pair_id; });
  std::sort(skipped.begin(), skipped.end(), [](const auto& a, const auto& b) { return a.task_id < b.task_id; });
  std::size_t holds = 0, discriminating = 0;
  for (const auto& p : pairs) {
    holds += p.holds_on_correct ? 1 : 0;
    discriminating += p.discriminating ? 1 : 0;
  }
  r.n_pairs = pairs.size();
  r.correctness_rate = ratio(holds, pairs.size());
  r.discrimination_rate = ratio(discriminating, pairs.size());
  r.pairs = std::move(pairs);
  r.skipped = std::move(skipped);
  return r;
}

BugReport bug_study(std::span<const BugPair> pairs, const session::StrategyConfig& config, const BackendFactory& backends,
                    const feedback::FeedbackEngine& engine, const std::string& model, std::size_t jobs) {
  config.validate();
  std::vector<std::optional<PairDetail>> details(pairs.size());
  std::vector<std::optional<Failure>> skipped(pairs.size());
  exec::Executor& executor = engine.executor();

  auto run_one = [&](std::size_t i) {
    const auto& pair = pairs[i];
    try {
      auto task = task_from_bugpair(pair);
      materialize_expected_outputs(task, executor, false);
      auto backend = backends(pair.pair_id);
      const auto outcome = session::run_session(task, config, *backend, engine);
      if (outcome.termination_reason == session::TerminationReason::infrastructure_error) {
        skipped[i] = Failure{pair.pair_id, "infrastructure error during session"};
        return;
      }
      PairDetail d;
      d.pair_id = pair.pair_id;
      d.candidate = outcome.final_candidate;
      d.attempts = outcome.attempts_used;
      d.submissions = outcome.submissions_used;
      d.tokens_in = outcome.tokens_in;
      d.tokens_out = outcome.tokens_out;
      if (outcome.final_candidate) {
        const auto verdict = engine.is_bug_discriminating({*outcome.final_candidate}, pair);
        d.holds_on_correct = verdict.holds_on_correct;
        d.fails_on_buggy = verdict.fails_on_buggy;
        d.discriminating = verdict.discriminating;
      }
      details[i] = std::move(d);
    } catch (const Error& e) {
      skipped[i] = Failure{pair.pair_id, e.what()};
    }
  };

  std::atomic<std::size_t> next{0};
  auto worker = [&] {
    for (std::size_t i = next++; i < pairs.size(); i = next++) run_one(i);
  };
  std::vector<std::jthread> threads;
  for (std::size_t t = 1; t < std::min(jobs, pairs.size()); ++t) threads.emplace_back(worker);
  worker();
  threads.clear();

  std::vector<PairDetail> ok;
  std::vector<Failure> bad;
  for (std::size_t i = 0; i < pairs.size(); ++i) {
    if (details[i]) ok.push_back(std::move(*details[i]));
    if (skipped[i]) bad.push_back(std::move(*skipped[i]));
  }
  ConfigEcho echo{config.mode, config.tau, config.mu, model, std::string(feedback::to_string(config.feedback_mode)),
                  config.enhanced_escalation ? config.enhanced_escalation->extra_attempts : 0};
  return summarize_bug_study(std::move(ok), std::move(bad), echo);
}

json to_json(const ExperimentReport& r) {
  json tasks = json::array();
  for (const auto& t : r.tasks)
    tasks.push_back({{"task_id", t.task_id},
                     {"correct", t.correct},
                     {"completeness", round4(t.completeness)},
                     {"attempts", t.attempts},
                     {"submissions", t.submissions},
                     {"tokens_in", t.tokens_in},
                     {"tokens_out", t.tokens_out},
                     {"termination_reason", t.termination_reason},
                     {"escalated", t.escalated}});
  return {{"report_schema", kReportSchema},
          {"kind", "experiment"},
          {"config", to_json(r.config)},
          {"pricing", {{"per_input_token", r.pricing.per_input_token}, {"per_output_token", r.pricing.per_output_token}}},
          {"n_tasks", r.n_tasks},
          {"correctness_rate", round4(r.correctness_rate)},
          {"completeness_mean", round4(r.completeness_mean)},
          {"incorrect_counted_as_zero_completeness", true},
          {"attempts_stats", to_json(r.attempts_stats)},
          {"submissions_stats", to_json(r.submissions_stats)},
          {"efficiency_E", round4(r.efficiency_E)},
          {"tokens_in_total", r.tokens_in_total},
          {"tokens_out_total", r.tokens_out_total},
          {"tokens_in_mean", round4(r.tokens_in_mean)},
          {"tokens_out_mean", round4(r.tokens_out_mean)},
          {"cost_total", round4(r.cost_total)},
          {"zero_submission_tasks", r.zero_submission_tasks},
          {"failures", failures_to_json(r.failures)},
          {"tasks", tasks}};
}

ExperimentReport experiment_report_from_json(const json& j) {
  try {
    if (j.at("report_schema").get<int>() != kReportSchema) throw std::invalid_argument("unsupported report_schema");
    if (j.at("kind").get<std::string>() != "experiment") throw std::invalid_argument("not an experiment report");
    ExperimentReport r;
    r.config = config_from_json(j.at("config"));
    r.pricing = {j.at("pricing").at("per_input_token").get<double>(), j.at("pricing").at("per_output_token").get<double>()};
    r.n_tasks = j.at("n_tasks").get<std::size_t>();
    r.correctness_rate = j.at("correctness_rate").get<double>();
    r.completeness_mean = j.at("completeness_mean").get<double>();
    r.attempts_stats = stats_from_json(j.at("attempts_stats"));
    r.submissions_stats = stats_from_json(j.at("submissions_stats"));
    r.efficiency_E = j.at("efficiency_E").get<double>();
    r.tokens_in_total = j.at("tokens_in_total").get<std::int64_t>();
    r.tokens_out_total = j.at("tokens_out_total").get<std::int64_t>();
    r.tokens_in_mean = j.at("tokens_in_mean").get<double>();
    r.tokens_out_mean = j.at("tokens_out_mean").get<double>();
    r.cost_total = j.at("cost_total").get<double>();
    r.zero_submission_tasks = j.at("zero_submission_tasks").get<std::vector<std::string>>();
    r.failures = failures_from_json(j.at("failures"));
    for (const auto& t : j.at("tasks"))
      r.tasks.push_back({t.at("task_id").get<std::string>(), t.at("correct").get<bool>(),
                         t.at("completeness").get<double>(), t.at("attempts").get<int>(), t.at("submissions").get<int>(),
                         t.at("tokens_in").get<std::int64_t>(), t.at("tokens_out").get<std::int64_t>(),
                         t.at("termination_reason").get<std::string>(), t.at("escalated").get<bool>()});
    return r;
  } catch (const json::exception& e) {
    throw std::invalid_argument(std::string("malformed report: ") + e.what());
  }
}

json to_json(const BugReport& r) {
  json pairs = json::array();
  for (const auto& p : r.pairs)
    pairs.push_back({{"pair_id", p.pair_id},
                     {"candidate", p.candidate ? json(*p.candidate) : json(nullptr)},
                     {"holds_on_correct", p.holds_on_correct},
                     {"fails_on_buggy", p.fails_on_buggy},
                     {"discriminating", p.discriminating},
                     {"attempts", p.attempts},
                     {"submissions", p.submissions},
                     {"tokens_in", p.tokens_in},
                     {"tokens_out", p.tokens_out}});
  return {{"report_schema", kReportSchema},
          {"kind", "bug_detection"},
          {"config", to_json(r.config)},
          {"n_pairs", r.n_pairs},
          {"correctness_rate", round4(r.correctness_rate)},
          {"discrimination_rate", round4(r.discrimination_rate)},
          {"pairs", pairs},
          {"skipped", failures_to_json(r.skipped)}};
}

BugReport bug_report_from_json(const json& j) {
  try {
    if (j.at("report_schema").get<int>() != kReportSchema) throw std::invalid_argument("unsupported report_schema");
    if (j.at("kind").get<std::string>() != "bug_detection") throw std::invalid_argument("not a bug-detection report");
    BugReport r;
    r.config = config_from_json(j.at("config"));
    r.n_pairs = j.at("n_pairs").get<std::size_t>();
    r.correctness_rate = j.at("correctness_rate").get<double>();
    r.discrimination_rate = j.at("discrimination_rate").get<double>();
    for (const auto& p : j.at("pairs")) {
      PairDetail d;
      d.pair_id = p.at("pair_id").get<std::string>();
      if (!p.at("candidate").is_null()) d.candidate = p["candidate"].get<std::string>();
      d.holds_on_correct = p.at("holds_on_correct").get<bool>();
      d.fails_on_buggy = p.at("fails_on_buggy").get<bool>();
      d.discriminating = p.at("discriminating").get<bool>();
      d.attempts = p.at("attempts").get<int>();
      d.submissions = p.at("submissions").get<int>();
      d.tokens_in = p.at("tokens_in").get<std::int64_t>();
      d.tokens_out = p.at("tokens_out").get<std::int64_t>();
      r.pairs.push_back(std::move(d));
    }
    r.skipped = failures_from_json(j.at("skipped"));
    return r;
  } catch (const json::exception& e) {
    throw std::invalid_argument(std::string("malformed report: ") + e.what());
  }
}

std::string render(const ExperimentReport& r, ExportFormat format) {
  switch (format) {
    case ExportFormat::json:
      return canonical_json(to_json(r));
    case ExportFormat::csv: {
      std::string out(kCsvHeader);
      out += '\n';
      for (const auto& t : r.tasks)
        out += fmt::format("{},{},{},{},{},{},{},{},{},{}\n", csv_field(t.task_id), session::to_string(r.config.mode),
                           fixed4(r.config.tau), r.config.mu, t.correct ? "true" : "false", fixed4(t.completeness),
                           t.attempts, t.submissions, t.tokens_in, t.tokens_out);
      return out;
    }
    case ExportFormat::text:
      break;
  }
  std::string out = "experiment report\n";
  out += config_text(r.config);
  out += fmt::format("tasks: {}\n", r.n_tasks);
  out += fmt::format("correctness: {}\n", fixed4(r.correctness_rate));
  out += fmt::format("completeness (incorrect counted as 0): {}\n", fixed4(r.completeness_mean));
  out += fmt::format("attempts: mean {} min {} max {}\n", fixed4(r.attempts_stats.mean), r.attempts_stats.min,
                     r.attempts_stats.max);
  out += fmt::format("submissions: mean {} min {} max {}\n", fixed4(r.submissions_stats.mean),
                     r.submissions_stats.min, r.submissions_stats.max);
  out += fmt::format("efficiency E: {}\n", fixed4(r.efficiency_E));
  out += fmt::format("tokens in: {} (mean {})\n", r.tokens_in_total, fixed4(r.tokens_in_mean));
  out += fmt::format("tokens out: {} (mean {})\n", r.tokens_out_total, fixed4(r.tokens_out_mean));
  out += fmt::format("cost: {}\n", fixed4(r.cost_total));
  for (const auto& id : r.zero_submission_tasks) out += fmt::format("zero submissions: {}\n", id);
  for (const auto& f : r.failures) out += fmt::format("failed: {}: {}\n", f.task_id, f.reason);
  return out;
}

std::string render(const BugReport& r, ExportFormat format) {
  switch (format) {
    case ExportFormat::json:
      return canonical_json(to_json(r));
    case ExportFormat::csv: {
      std::string out(kBugCsvHeader);
      out += '\n';
      for (const auto& p : r.pairs)
        out += fmt::format("{},{},{},{},{},{},{},{}\n", csv_field(p.pair_id), p.holds_on_correct, p.fails_on_buggy,
                           p.discriminating, p.attempts, p.submissions, p.tokens_in, p.tokens_out);
      return out;
    }
    case ExportFormat::text:
      break;
  }
  std::string out = "bug detection report\n";
  out += config_text(r.config);
  out += fmt::format("pairs: {}\n", r.n_pairs);
  out += fmt::format("holds on correct version: {}\n", fixed4(r.correctness_rate));
  out += fmt::format("discriminating: {}\n", fixed4(r.discrimination_rate));
  for (const auto& p : r.pairs)
    out += fmt::format("  {}: {}\n", p.pair_id,
                       p.discriminating ? "discriminating" : (p.holds_on_correct ? "holds, misses bug" : "wrong on correct"));
  for (const auto& f : r.skipped) out += fmt::format("skipped: {}: {}\n", f.task_id, f.reason);
  return out;
}

void export_report(const ExperimentReport& report, const std::filesystem::path& path, ExportFormat format) {
  write_file(path, render(report, format));
}

void export_report(const BugReport& report, const std::filesystem::path& path, ExportFormat format) {
  write_file(path, render(report, format));
}

}  // namespace specharness::metrics
