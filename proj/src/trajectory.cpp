#include "specharness/trajectory.hpp"

#include <algorithm>
#include <fstream>
#include <sstream>
#include <stdexcept>

#include "specharness/error.hpp"

namespace specharness::trajectory {

namespace {

using session::HistoryEntry;
using session::TurnAction;

template <typename T>
json nullable(const std::optional<T>& v) {
  return v ? json(*v) : json(nullptr);
}

template <typename T>
std::optional<T> optional_field(const json& j, const char* key) {
  if (!j.contains(key) || j[key].is_null()) return std::nullopt;
  return j[key].get<T>();
}

}  // namespace

std::string file_name(const std::string& task_id, session::StrategyMode mode) {
  return task_id + "." + std::string(session::to_string(mode)) + ".jsonl";
}

json to_json(const HistoryEntry& e) {
  json j{{"attempt_index", e.attempt_index},
         {"action", session::to_string(e.action)},
         {"think", e.think_text},
         {"candidate", nullable(e.candidate_source)},
         {"observation", nullable(e.observation_text)},
         {"score", nullable(e.score)},
         {"correct", nullable(e.correct)},
         {"tokens_in", e.tokens_in},
         {"tokens_out", e.tokens_out}};
  if (e.revealed_mutant_id) j["revealed_mutant_id"] = *e.revealed_mutant_id;
  return j;
}

HistoryEntry entry_from_json(const json& j) {
  if (!j.is_object()) throw std::invalid_argument("trajectory entry must be an object");
  HistoryEntry e;
  try {
    e.attempt_index = j.at("attempt_index").get<int>();
    const auto action = session::parse_turn_action(j.at("action").get<std::string>());
    if (!action) throw std::invalid_argument("unknown action " + j.at("action").dump());
    e.action = *action;
    e.think_text = j.at("think").get<std::string>();
    for (const char* key : {"candidate", "observation", "score", "tokens_in", "tokens_out"})
      if (!j.contains(key)) throw std::invalid_argument(std::string("missing field ") + key);
    e.candidate_source = optional_field<std::string>(j, "candidate");
    e.observation_text = optional_field<std::string>(j, "observation");
    e.score = optional_field<double>(j, "score");
    e.correct = optional_field<bool>(j, "correct");
    e.revealed_mutant_id = optional_field<std::string>(j, "revealed_mutant_id");
    e.tokens_in = j.at("tokens_in").get<std::int64_t>();
    e.tokens_out = j.at("tokens_out").get<std::int64_t>();
  } catch (const json::exception& ex) {
    throw std::invalid_argument(ex.what());
  }
  return e;
}

std::string to_jsonl(const std::vector<HistoryEntry>& history) {
  std::string out;
  for (const auto& e : history) {
    out += to_json(e).dump();
    out += '\n';
  }
  return out;
}

void write(const std::filesystem::path& path, const std::vector<HistoryEntry>& history) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << to_jsonl(history);
  if (!out) throw std::runtime_error("write failed for " + path.string());
}

std::vector<HistoryEntry> read(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw CorpusError(CorpusError::Kind::io, path.string(), "", "cannot open trajectory");
  std::vector<HistoryEntry> history;
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    const std::string where = "line " + std::to_string(line_no);
    try {
      history.push_back(entry_from_json(json::parse(line)));
    } catch (const json::parse_error& e) {
      throw CorpusError(CorpusError::Kind::malformed_json, path.string(), where, e.what());
    } catch (const std::invalid_argument& e) {
      throw CorpusError(CorpusError::Kind::schema, path.string(), where, e.what());
    }
    if (history.back().attempt_index != static_cast<int>(history.size()))
      throw CorpusError(CorpusError::Kind::schema, path.string(), where, "attempt_index out of sequence");
  }
  return history;
}

session::SessionOutcome outcome_from(const SessionFacts& facts, const std::vector<HistoryEntry>& history) {
  session::SessionOutcome o;
  o.task_id = facts.task_id;
  o.mode = facts.mode;
  o.termination_reason = facts.termination_reason;
  o.escalated = facts.escalated;
  o.trajectory = history;
  double s_best = 0.0;
  for (const auto& e : history) {
    ++o.attempts_used;
    o.tokens_in += e.tokens_in;
    o.tokens_out += e.tokens_out;
    if (e.action != TurnAction::submit) continue;
    ++o.submissions_used;
    const double score = e.score.value_or(0.0);
    if (e.correct.value_or(false) && (score > s_best || !o.final_candidate)) {
      o.final_candidate = e.candidate_source;
      s_best = std::max(s_best, score);
    }
  }
  o.correct = o.final_candidate.has_value();
  o.final_score = o.correct ? s_best : 0.0;
  return o;
}

}  // namespace specharness::trajectory
