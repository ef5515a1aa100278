#pragma once

#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "soldernet/common.hpp"
#include "soldernet/service/event_log.hpp"
#include "soldernet/triage.hpp"

namespace soldernet::service {

// `failed` is reachable from pending or scored when an image cannot be read or
// scored; it is terminal.
enum class CaseState { pending, scored, auto_defect, in_review, auto_pass, reviewed_defect, reviewed_pass, reworked, failed };

std::string_view to_string(CaseState s);
CaseState case_state_from_string(std::string_view s);

// Whether the state machine has an edge from -> to.
bool transition_allowed(CaseState from, CaseState to);

struct ExplanationArtifact {
  std::filesystem::path json_path;
  std::filesystem::path overlay_path;
  std::size_t factor_count = 0;
  bool operator==(const ExplanationArtifact&) const = default;
};

struct JointCase {
  std::string id;
  std::filesystem::path image_path;
  std::string dataset_id;
  std::optional<Label> oracle_label;
  std::optional<std::string> kind;
  std::optional<double> confidence;
  std::optional<triage::TriageDecision> triage;
  CaseState state = CaseState::pending;
  std::optional<Label> verdict;
  std::optional<std::string> verdict_by;
  std::optional<std::string> verdict_note;
  std::optional<ExplanationArtifact> explanation;
  std::optional<std::string> error;
  std::map<std::string, std::string> timestamps;  // state name -> time entered

  bool operator==(const JointCase&) const = default;
};

using CaseMap = std::map<std::string, JointCase>;

nlohmann::json to_json(const JointCase& c);
JointCase joint_case_from_json(const nlohmann::json& j);

struct ReviewVerdict {
  std::string case_id;
  Label decision = Label::defective;
  std::string operator_id;
  std::optional<std::string> note;
};

struct TransitionError : ConflictError {
  using ConflictError::ConflictError;
};

// Folds one event into the map. Throws TransitionError when the event's edge
// is not allowed (or the case is unknown / already ingested).
void apply_event(CaseMap& cases, const Event& event);

// Folds the whole log. Illegal transitions surface as IntegrityError.
CaseMap replay_events(const std::vector<Event>& events, CaseMap start = {}, std::uint64_t after_seq = 0);
CaseMap replay_state(const std::filesystem::path& log_path);

}  // namespace soldernet::service
