#include "specharness/cli.hpp"

#include <algorithm>
#include <atomic>
#include <cstdlib>
#include <fstream>
#include <iostream>
#include <mutex>
#include <random>
#include <sstream>
#include <thread>

#include <CLI11.hpp>
#include <fmt/format.h>
#include <openssl/evp.h>

#include "specharness/corpus.hpp"
#include "specharness/error.hpp"
#include "specharness/runner_pool.hpp"
#include "specharness/trajectory.hpp"

namespace specharness::cli {

namespace fs = std::filesystem;

namespace {

std::vector<std::string> split_words(const std::string& s) {
  std::istringstream in(s);
  std::vector<std::string> out;
  for (std::string w; in >> w;) out.push_back(w);
  return out;
}

std::string read_file(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_file(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << text;
}

metrics::ConfigEcho echo_of(const RunConfig& c) {
  return {c.mode, c.tau, c.mu, c.model, std::string(feedback::to_string(c.feedback)), c.escalate_extra_attempts};
}

metrics::Pricing pricing_of(const RunConfig& c) { return {c.price_in.value_or(0.0), c.price_out.value_or(0.0)}; }

exec::RunnerPoolConfig pool_config(const RunConfig& c) {
  exec::RunnerPoolConfig p;
  p.pool_size = c.pool_size;
  p.default_timeout_ms = c.timeout_ms;
  p.runner_launch_command = c.runner_command;
  return p;
}

json manifest_base(const RunConfig& c) {
  json m{{"tool_version", kToolVersion},
         {"report_schema", metrics::kReportSchema},
         {"corpus_schema", kCorpusSchemaVersion},
         {"protocol", exec::kProtocolVersion},
         {"command", to_string(c.command)},
         {"corpus_path", c.corpus_path.string()},
         {"mode", session::to_string(c.mode)},
         {"tau", c.tau},
         {"mu", c.mu},
         {"feedback", feedback::to_string(c.feedback)},
         {"escalate_extra_attempts", c.escalate_extra_attempts},
         {"backend", c.backend == llm::BackendKind::scripted ? "scripted" : "remote"},
         {"model", c.model},
         {"seed", c.seed},
         {"pool_size", c.pool_size},
         {"timeout_ms", c.timeout_ms},
         {"jobs", c.jobs},
         {"price_in", c.price_in.value_or(0.0)},
         {"price_out", c.price_out.value_or(0.0)}};
  if (c.backend == llm::BackendKind::remote) {
    m["endpoint"] = c.endpoint;
    if (c.temperature) m["temperature"] = *c.temperature;
  }
  return m;
}

/// Builds per-session backends. Scripted: a fresh replay of the script for
/// each id. Remote: one shared client.
struct Backends {
  std::optional<llm::ScriptBook> book;
  std::shared_ptr<llm::ChatBackend> remote;

  static Backends make(const RunConfig& c) {
    Backends b;
    if (c.backend == llm::BackendKind::scripted) {
      b.book = llm::ScriptBook::load(c.script_path);
    } else {
      llm::BackendConfig bc;
      bc.kind = llm::BackendKind::remote;
      bc.endpoint = c.endpoint;
      bc.model_name = c.model;
      bc.temperature = c.temperature.value_or(session::default_temperature(c.mode));
      bc.max_output_tokens = c.max_output_tokens;
      bc.price_per_input_token = c.price_in.value_or(0.0);
      bc.price_per_output_token = c.price_out.value_or(0.0);
      bc.max_in_flight = std::max<std::size_t>(1, c.jobs);
      b.remote = std::make_shared<llm::RemoteBackend>(bc);
    }
    return b;
  }

  std::shared_ptr<llm::ChatBackend> operator()(const std::string& id) const {
    if (remote) return remote;
    return std::make_shared<llm::ScriptedBackend>(book->script_for(id), "scripted");
  }

  std::string script_hash() const { return book ? sha256_hex(book->raw_text()) : std::string(); }
};

template <typename F>
void for_each_parallel(std::size_t n, std::size_t jobs, F&& body) {
  std::atomic<std::size_t> next{0};
  auto worker = [&] {
    for (std::size_t i = next++; i < n; i = next++) body(i);
  };
  std::vector<std::jthread> threads;
  for (std::size_t t = 1; t < std::min(jobs, n); ++t) threads.emplace_back(worker);
  worker();
}

void write_reports(const metrics::ExperimentReport& report, const fs::path& dir) {
  metrics::export_report(report, dir / "report.json", metrics::ExportFormat::json);
  metrics::export_report(report, dir / "report.csv", metrics::ExportFormat::csv);
  metrics::export_report(report, dir / "report.txt", metrics::ExportFormat::text);
}

int cmd_gen(const RunConfig& c, std::ostream& out, std::ostream& err) {
  auto corpus = load_corpus(c.corpus_path);
  const auto backends = Backends::make(c);
  fs::create_directories(c.out_dir / "trajectories");

  exec::RunnerPool pool(pool_config(c));
  feedback::FeedbackOptions fo;
  fo.timeout_ms = c.timeout_ms;
  fo.parallelism = c.pool_size;
  const feedback::FeedbackEngine engine(pool, fo);
  const auto base = c.strategy();

  std::vector<std::size_t> order(corpus.tasks.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  std::mt19937_64 rng(c.seed);
  std::shuffle(order.begin(), order.end(), rng);

  std::vector<std::optional<session::SessionOutcome>> outcomes(order.size());
  std::vector<std::optional<metrics::Failure>> failures(order.size());
  std::mutex log_mutex;
  for_each_parallel(order.size(), c.jobs, [&](std::size_t k) {
    const auto i = order[k];
    auto& task = corpus.tasks[i];
    try {
      materialize_expected_outputs(task, pool, true, c.timeout_ms);
      auto config = base;
      config.seed = task_seed(c.seed, task.task_id);
      auto backend = backends(task.task_id);
      auto outcome = session::run_session(task, config, *backend, engine);
      if (outcome.termination_reason == session::TerminationReason::infrastructure_error)
        failures[i] = metrics::Failure{task.task_id, "infrastructure error"};
      trajectory::write(c.out_dir / "trajectories" / trajectory::file_name(task.task_id, c.mode), outcome.trajectory);
      std::lock_guard lock(log_mutex);
      err << fmt::format("{}: {} after {} attempts, score {:.4f}\n", task.task_id,
                         session::to_string(outcome.termination_reason), outcome.attempts_used, outcome.final_score);
      outcomes[i] = std::move(outcome);
    } catch (const Error& e) {
      failures[i] = metrics::Failure{task.task_id, e.what()};
      std::lock_guard lock(log_mutex);
      err << task.task_id << ": failed: " << e.what() << "\n";
    }
  });

  std::vector<session::SessionOutcome> done;
  std::vector<metrics::Failure> failed;
  json sessions = json::array();
  for (std::size_t i = 0; i < corpus.tasks.size(); ++i) {
    if (outcomes[i]) {
      sessions.push_back({{"task_id", outcomes[i]->task_id},
                          {"termination_reason", session::to_string(outcomes[i]->termination_reason)},
                          {"escalated", outcomes[i]->escalated}});
      done.push_back(*outcomes[i]);
    }
    if (failures[i]) failed.push_back(*failures[i]);
  }
  const auto report = metrics::aggregate(done, echo_of(c), pricing_of(c), failed);
  write_reports(report, c.out_dir);

  auto manifest = manifest_base(c);
  manifest["corpus_id"] = corpus.manifest.corpus_id;
  manifest["script_sha256"] = backends.script_hash();
  manifest["sessions"] = sessions;
  manifest["failures"] = metrics::to_json(report)["failures"];
  write_file(c.out_dir / "manifest.json", canonical_json(manifest));

  out << metrics::render(report, metrics::ExportFormat::text);
  return failed.empty() ? 0 : 1;
}

int cmd_bugdetect(const RunConfig& c, std::ostream& out, std::ostream& err) {
  const auto corpus = load_bugpair_corpus(c.corpus_path);
  const auto backends = Backends::make(c);
  fs::create_directories(c.out_dir);

  exec::RunnerPool pool(pool_config(c));
  feedback::FeedbackOptions fo;
  fo.timeout_ms = c.timeout_ms;
  fo.parallelism = c.pool_size;
  const feedback::FeedbackEngine engine(pool, fo);
  const auto report = metrics::bug_study(corpus.pairs, c.strategy(), std::cref(backends), engine, c.model, c.jobs);

  metrics::export_report(report, c.out_dir / "report.json", metrics::ExportFormat::json);
  metrics::export_report(report, c.out_dir / "report.csv", metrics::ExportFormat::csv);
  metrics::export_report(report, c.out_dir / "report.txt", metrics::ExportFormat::text);
  auto manifest = manifest_base(c);
  manifest["corpus_id"] = corpus.manifest.corpus_id;
  manifest["script_sha256"] = backends.script_hash();
  write_file(c.out_dir / "manifest.json", canonical_json(manifest));

  for (const auto& s : report.skipped) err << s.task_id << ": skipped: " << s.reason << "\n";
  out << metrics::render(report, metrics::ExportFormat::text);
  return report.skipped.empty() ? 0 : 1;
}

int cmd_report(const RunConfig& c, std::ostream& out) {
  const auto j = json::parse(read_file(c.input_path));
  if (j.value("kind", "") == "bug_detection")
    out << metrics::render(metrics::bug_report_from_json(j), c.format);
  else
    out << metrics::render(metrics::experiment_report_from_json(j), c.format);
  return 0;
}

int cmd_replay(const RunConfig& c, std::ostream& out) {
  const auto manifest_path = c.input_path / "manifest.json";
  json m;
  try {
    m = json::parse(read_file(manifest_path));
  } catch (const json::parse_error& e) {
    throw CorpusError(CorpusError::Kind::malformed_json, manifest_path.string(), "", e.what());
  }
  if (m.value("command", "") != "gen" || m.value("report_schema", 0) != metrics::kReportSchema)
    throw CorpusError(CorpusError::Kind::schema_version, manifest_path.string(), "report_schema",
                      "not a replayable gen run of this schema");

  metrics::ConfigEcho echo;
  try {
    const auto mode = session::parse_strategy_mode(m.at("mode").get<std::string>());
    if (!mode) throw std::invalid_argument("unknown mode");
    echo = {*mode,
            m.at("tau").get<double>(),
            m.at("mu").get<int>(),
            m.at("model").get<std::string>(),
            m.at("feedback").get<std::string>(),
            m.at("escalate_extra_attempts").get<int>()};
  } catch (const std::exception& e) {
    throw CorpusError(CorpusError::Kind::schema, manifest_path.string(), "config", e.what());
  }
  const metrics::Pricing pricing{c.price_in.value_or(m.value("price_in", 0.0)),
                                 c.price_out.value_or(m.value("price_out", 0.0))};

  std::vector<session::SessionOutcome> outcomes;
  for (const auto& s : m.at("sessions")) {
    trajectory::SessionFacts facts;
    facts.task_id = s.at("task_id").get<std::string>();
    facts.mode = echo.mode;
    facts.escalated = s.at("escalated").get<bool>();
    for (auto r : {session::TerminationReason::threshold_met, session::TerminationReason::budget_exhausted,
                   session::TerminationReason::script_exhausted, session::TerminationReason::infrastructure_error})
      if (session::to_string(r) == s.at("termination_reason").get<std::string>()) facts.termination_reason = r;
    const auto history =
        trajectory::read(c.input_path / "trajectories" / trajectory::file_name(facts.task_id, echo.mode));
    outcomes.push_back(trajectory::outcome_from(facts, history));
  }
  std::vector<metrics::Failure> failures;
  for (const auto& f : m.at("failures"))
    failures.push_back({f.at("task_id").get<std::string>(), f.at("reason").get<std::string>()});

  const auto report = metrics::aggregate(outcomes, echo, pricing, failures);
  if (!c.out_dir.empty()) {
    fs::create_directories(c.out_dir);
    write_reports(report, c.out_dir);
  }
  out << metrics::render(report, c.format);
  return 0;
}

int cmd_validate(const RunConfig& c, std::ostream& out, std::ostream& err) {
  if (c.bug_pairs) {
    const auto corpus = load_bugpair_corpus(c.corpus_path);
    out << fmt::format("{}: {} bug pairs ok\n", corpus.manifest.corpus_id, corpus.pairs.size());
    if (!c.check_references) return 0;
    exec::RunnerPool pool(pool_config(c));
    int bad = 0;
    for (const auto& p : corpus.pairs) {
      auto task = task_from_bugpair(p);
      try {
        materialize_expected_outputs(task, pool, true, c.timeout_ms);
      } catch (const InvalidTaskError& e) {
        err << e.what() << "\n";
        ++bad;
      }
    }
    return bad == 0 ? 0 : 1;
  }
  auto corpus = load_corpus(c.corpus_path);
  std::size_t mutants = 0;
  for (const auto& t : corpus.tasks) mutants += t.mutants.size();
  out << fmt::format("{}: {} tasks, {} mutants ok\n", corpus.manifest.corpus_id, corpus.tasks.size(), mutants);
  if (!c.check_references) return 0;
  exec::RunnerPool pool(pool_config(c));
  int bad = 0;
  for (auto& t : corpus.tasks) {
    try {
      materialize_expected_outputs(t, pool, true, c.timeout_ms);
    } catch (const InvalidTaskError& e) {
      err << e.what() << "\n";
      ++bad;
    }
  }
  return bad == 0 ? 0 : 1;
}

}  // namespace

std::string_view to_string(Command command) {
  switch (command) {
    case Command::gen:
      return "gen";
    case Command::bugdetect:
      return "bugdetect";
    case Command::report:
      return "report";
    case Command::validate_corpus:
      return "validate-corpus";
    case Command::replay:
      break;
  }
  return "replay";
}

void RunConfig::validate() const {
  if (!(tau >= 0.0 && tau <= 1.0)) throw std::invalid_argument("tau must be within 0..100 percent");
  if (mu < 1) throw std::invalid_argument("mu must be >= 1");
  if (escalate_extra_attempts < 0) throw std::invalid_argument("escalate-extra-attempts must be >= 0");
  if (pool_size < 1) throw std::invalid_argument("pool-size must be >= 1");
  if (jobs < 1) throw std::invalid_argument("jobs must be >= 1");
  if (timeout_ms < 1) throw std::invalid_argument("timeout-ms must be >= 1");
  if (price_in.value_or(0) < 0 || price_out.value_or(0) < 0) throw std::invalid_argument("prices must be >= 0");
  switch (command) {
    case Command::gen:
    case Command::bugdetect:
      if (corpus_path.empty()) throw std::invalid_argument("a corpus path is required");
      if (out_dir.empty()) throw std::invalid_argument("--out-dir is required");
      if (backend == llm::BackendKind::scripted && script_path.empty())
        throw std::invalid_argument("--backend scripted needs --script");
      if (backend == llm::BackendKind::remote && (endpoint.empty() || model.empty()))
        throw std::invalid_argument("--backend remote needs --endpoint and --model");
      if (runner_command.empty()) throw std::invalid_argument("--runner is empty");
      break;
    case Command::validate_corpus:
      if (corpus_path.empty()) throw std::invalid_argument("a corpus path is required");
      break;
    case Command::report:
    case Command::replay:
      if (input_path.empty()) throw std::invalid_argument("an input path is required");
      break;
  }
}

session::StrategyConfig RunConfig::strategy() const {
  session::StrategyConfig s;
  s.mode = mode;
  s.tau = tau;
  s.mu = mu;
  s.feedback_mode = feedback;
  if (escalate_extra_attempts > 0) s.enhanced_escalation = session::Escalation{escalate_extra_attempts};
  s.seed = seed;
  return s;
}

std::uint64_t task_seed(std::uint64_t run_seed, const std::string& task_id) {
  std::uint64_t h = 1469598103934665603ULL;
  for (unsigned char ch : task_id) h = (h ^ ch) * 1099511628211ULL;
  return run_seed ^ h;
}

std::string sha256_hex(std::string_view data) {
  unsigned char digest[EVP_MAX_MD_SIZE];
  unsigned int len = 0;
  if (EVP_Digest(data.data(), data.size(), digest, &len, EVP_sha256(), nullptr) != 1)
    throw std::runtime_error("sha256 failed");
  std::string hex;
  for (unsigned int i = 0; i < len; ++i) hex += fmt::format("{:02x}", digest[i]);
  return hex;
}

std::variant<RunConfig, int> parse_command_line(int argc, const char* const* argv, std::ostream& out,
                                                std::ostream& err) {
  RunConfig c;
  CLI::App app{"Postcondition generation and evaluation harness", "specharness"};
  app.require_subcommand(1);

  double tau_percent = 90.0;
  std::string mode = "exploratory", feedback = "binary", backend = "scripted", format = "text";
  std::string runner = std::getenv(kRunnerEnv) ? std::getenv(kRunnerEnv) : "specharness-runner";
  double price_in = 0, price_out = 0;

  auto add_run_options = [&](CLI::App* sub) {
    sub->add_option("--mode", mode, "exploratory | greedy | random_sampling")
        ->check(CLI::IsMember({"exploratory", "greedy", "random_sampling"}));
    sub->add_option("--tau", tau_percent, "completeness target, percent")->check(CLI::Range(0.0, 100.0));
    sub->add_option("--mu", c.mu, "attempt budget")->check(CLI::PositiveNumber);
    sub->add_option("--feedback", feedback, "binary | enhanced")->check(CLI::IsMember({"binary", "enhanced"}));
    sub->add_option("--escalate-extra-attempts", c.escalate_extra_attempts,
                    "switch to enhanced feedback with this many extra attempts once the budget is spent")
        ->check(CLI::NonNegativeNumber);
    sub->add_option("--backend", backend, "scripted | remote")->check(CLI::IsMember({"scripted", "remote"}));
    sub->add_option("--script", c.script_path, "script file for the scripted backend")->check(CLI::ExistingFile);
    sub->add_option("--endpoint", c.endpoint, "chat-completions URL");
    sub->add_option("--model", c.model, "model name");
    sub->add_option("--temperature", c.temperature, "sampling temperature (default depends on mode)");
    sub->add_option("--max-output-tokens", c.max_output_tokens)->check(CLI::PositiveNumber);
    sub->add_option("--jobs", c.jobs, "tasks run concurrently")->check(CLI::PositiveNumber);
    sub->add_option("--seed", c.seed);
    sub->add_option("--out-dir", c.out_dir)->required();
    sub->add_option("--price-in", price_in, "price per input token")->check(CLI::NonNegativeNumber);
    sub->add_option("--price-out", price_out, "price per output token")->check(CLI::NonNegativeNumber);
  };
  auto add_runner_options = [&](CLI::App* sub) {
    sub->add_option("--runner", runner, "command that launches one runner process")->capture_default_str();
    sub->add_option("--pool-size", c.pool_size)->check(CLI::PositiveNumber);
    sub->add_option("--timeout-ms", c.timeout_ms)->check(CLI::PositiveNumber);
  };

  auto* gen = app.add_subcommand("gen", "generate postconditions for every task in a corpus");
  gen->add_option("corpus", c.corpus_path)->required()->check(CLI::ExistingPath);
  add_run_options(gen);
  add_runner_options(gen);

  auto* bug = app.add_subcommand("bugdetect", "bug-detection study over correct/buggy pairs");
  bug->add_option("corpus", c.corpus_path)->required()->check(CLI::ExistingPath);
  add_run_options(bug);
  add_runner_options(bug);

  auto* report = app.add_subcommand("report", "re-render a report.json");
  report->add_option("report", c.input_path)->required()->check(CLI::ExistingFile);
  report->add_option("--format", format)->check(CLI::IsMember({"json", "csv", "text"}));

  auto* validate = app.add_subcommand("validate-corpus", "load and check a corpus");
  validate->add_option("corpus", c.corpus_path)->required()->check(CLI::ExistingPath);
  validate->add_flag("--bug-pairs", c.bug_pairs, "the corpus holds bug pairs");
  validate->add_flag("--check-references", c.check_references, "run every reference implementation");
  add_runner_options(validate);

  auto* replay = app.add_subcommand("replay", "recompute a gen run's report from its trajectories");
  replay->add_option("run-dir", c.input_path)->required()->check(CLI::ExistingDirectory);
  replay->add_option("--out-dir", c.out_dir, "also write report files here");
  replay->add_option("--format", format)->check(CLI::IsMember({"json", "csv", "text"}));
  replay->add_option("--price-in", c.price_in)->check(CLI::NonNegativeNumber);
  replay->add_option("--price-out", c.price_out)->check(CLI::NonNegativeNumber);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e, out, err);
  }

  c.command = gen->parsed()        ? Command::gen
              : bug->parsed()      ? Command::bugdetect
              : report->parsed()   ? Command::report
              : validate->parsed() ? Command::validate_corpus
                                   : Command::replay;
  c.tau = tau_percent / 100.0;
  c.mode = *session::parse_strategy_mode(mode);
  c.feedback = *feedback::parse_feedback_mode(feedback);
  c.backend = backend == "remote" ? llm::BackendKind::remote : llm::BackendKind::scripted;
  c.format = *metrics::parse_export_format(format);
  c.runner_command = split_words(runner);
  if (c.command == Command::gen || c.command == Command::bugdetect) {
    c.price_in = price_in;
    c.price_out = price_out;
  }
  try {
    c.validate();
  } catch (const std::invalid_argument& e) {
    err << "error: " << e.what() << "\n";
    return 2;
  }
  return c;
}

int run(const RunConfig& config, std::ostream& out, std::ostream& err) {
  try {
    config.validate();
    switch (config.command) {
      case Command::gen:
        return cmd_gen(config, out, err);
      case Command::bugdetect:
        return cmd_bugdetect(config, out, err);
      case Command::report:
        return cmd_report(config, out);
      case Command::validate_corpus:
        return cmd_validate(config, out, err);
      case Command::replay:
        return cmd_replay(config, out);
    }
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
  }
  return 1;
}

int main(int argc, const char* const* argv) {
  auto parsed = parse_command_line(argc, argv, std::cout, std::cerr);
  if (const auto* code = std::get_if<int>(&parsed)) return *code;
  return run(std::get<RunConfig>(parsed), std::cout, std::cerr);
}

}  // namespace specharness::cli
