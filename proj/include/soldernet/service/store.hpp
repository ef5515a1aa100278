#pragma once

#include <filesystem>
#include <memory>
#include <mutex>
#include <optional>
#include <string>

#include "soldernet/config.hpp"
#include "soldernet/service/case_state.hpp"
#include "soldernet/service/event_log.hpp"

namespace soldernet::service {

struct VerdictResult {
  JointCase joint_case;
  bool created = false;  // false when an identical verdict was already stored
};

// Materialised case state over an event log. Every mutation is checked against
// the state machine and appended under one writer lock, so check-then-transition
// cannot interleave. Readers get immutable snapshots.
class CaseStore {
 public:
  // Uses dir/events.jsonl and dir/snapshot.json. Starts from the snapshot when
  // it is consistent with the log, then folds the remaining events.
  explicit CaseStore(const std::filesystem::path& dir, ServiceSettings settings = {});

  JointCase ingest(const std::string& id, const std::filesystem::path& image_path, const std::string& dataset_id,
                   std::optional<Label> label, std::optional<std::string> kind);
  JointCase record_score(const std::string& id, double confidence);
  JointCase record_triage(const std::string& id, triage::TriageDecision decision);
  JointCase record_explanation(const std::string& id, const ExplanationArtifact& artifact);
  JointCase record_failure(const std::string& id, const std::string& error);

  // ConflictError unless the case is in_review; NotFoundError for unknown ids.
  // Repeating the verdict that moved the case returns it unchanged.
  VerdictResult submit_verdict(const ReviewVerdict& verdict);
  JointCase rework(const std::string& id);

  std::shared_ptr<const CaseMap> snapshot() const;
  std::optional<JointCase> get(const std::string& id) const;
  bool contains(const std::string& id) const;

  std::uint64_t last_seq() const;
  const std::filesystem::path& log_path() const { return log_.path(); }
  std::filesystem::path snapshot_path() const { return dir_ / "snapshot.json"; }

  // Writes the snapshot file now (temp file + rename).
  void write_snapshot() const;

 private:
  JointCase commit(Event event);
  void write_snapshot_locked() const;

  std::filesystem::path dir_;
  ServiceSettings settings_;
  EventLog log_;
  CaseMap cases_;
  std::uint64_t events_since_snapshot_ = 0;
  mutable std::mutex writer_;
  mutable std::shared_ptr<const CaseMap> view_;
};

}  // namespace soldernet::service
