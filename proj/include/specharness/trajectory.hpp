#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include <json.hpp>

#include "specharness/session.hpp"

namespace specharness::trajectory {

using json = nlohmann::json;

/// `<task_id>.<mode>.jsonl`
std::string file_name(const std::string& task_id, session::StrategyMode mode);

json to_json(const session::HistoryEntry& entry);
/// Throws std::invalid_argument on a missing or mistyped field.
session::HistoryEntry entry_from_json(const json& j);

/// One line per attempt, keys sorted.
std::string to_jsonl(const std::vector<session::HistoryEntry>& history);
void write(const std::filesystem::path& path, const std::vector<session::HistoryEntry>& history);

/// Throws CorpusError (kind malformed_json) naming the file and line.
std::vector<session::HistoryEntry> read(const std::filesystem::path& path);

/// Session-level facts a trajectory alone cannot carry.
struct SessionFacts {
  std::string task_id;
  session::StrategyMode mode = session::StrategyMode::exploratory;
  session::TerminationReason termination_reason = session::TerminationReason::budget_exhausted;
  bool escalated = false;
};

/// Rebuilds an outcome from its turns with the session engine's best-so-far
/// rule. The raw model text is not stored, so it is left empty.
session::SessionOutcome outcome_from(const SessionFacts& facts, const std::vector<session::HistoryEntry>& history);

}  // namespace specharness::trajectory
