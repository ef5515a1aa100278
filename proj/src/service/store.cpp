#include "soldernet/service/store.hpp"

#include <algorithm>
#include <fstream>

namespace soldernet::service {
namespace {

using nlohmann::json;

std::filesystem::path prepare_dir(const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  return dir;
}

}  // namespace

CaseStore::CaseStore(const std::filesystem::path& dir, ServiceSettings settings)
    : dir_(prepare_dir(dir)), settings_(settings), log_(dir_ / "events.jsonl", settings.fsync) {
  const LogContents contents = read_log(log_.path());
  CaseMap start;
  std::uint64_t after = 0;
  if (std::ifstream in(snapshot_path()); in) {
    try {
      const json snap = json::parse(in);
      const auto seq = snap.at("last_seq").get<std::uint64_t>();
      const bool seq_in_log =
          seq == 0 || std::any_of(contents.events.begin(), contents.events.end(), [&](const Event& e) { return e.seq == seq; });
      if (seq_in_log) {
        for (const auto& c : snap.at("cases")) {
          JointCase jc = joint_case_from_json(c);
          start.emplace(jc.id, std::move(jc));
        }
        after = seq;
      }
    } catch (const std::exception&) {
      // A damaged snapshot only costs a full replay.
      start.clear();
      after = 0;
    }
  }
  cases_ = replay_events(contents.events, std::move(start), after);
}

JointCase CaseStore::commit(Event event) {
  // Caller holds writer_.
  CaseMap preview;
  if (auto it = cases_.find(event.case_id); it != cases_.end()) preview.emplace(it->first, it->second);
  if (event.timestamp.empty()) event.timestamp = utc_timestamp();
  apply_event(preview, event);
  log_.append(event);
  JointCase updated = preview.at(event.case_id);
  cases_[event.case_id] = updated;
  view_.reset();
  if (settings_.snapshot_interval > 0 && ++events_since_snapshot_ >= static_cast<std::uint64_t>(settings_.snapshot_interval)) {
    write_snapshot_locked();
    events_since_snapshot_ = 0;
  }
  return updated;
}

JointCase CaseStore::ingest(const std::string& id, const std::filesystem::path& image_path,
                            const std::string& dataset_id, std::optional<Label> label, std::optional<std::string> kind) {
  if (id.empty()) throw ValidationError("case id must not be empty");
  Event e;
  e.case_id = id;
  e.kind = EventKind::ingested;
  e.payload = {{"image_path", image_path.string()}, {"dataset_id", dataset_id}};
  e.payload["label"] = label ? json(static_cast<int>(*label)) : json(nullptr);
  e.payload["kind"] = kind ? json(*kind) : json(nullptr);
  std::lock_guard lock(writer_);
  return commit(std::move(e));
}

JointCase CaseStore::record_score(const std::string& id, double confidence) {
  if (!(confidence >= 0.0 && confidence <= 1.0)) throw ValidationError("confidence outside [0,1]");
  std::lock_guard lock(writer_);
  return commit({0, {}, id, EventKind::scored, {{"confidence", confidence}}});
}

JointCase CaseStore::record_triage(const std::string& id, triage::TriageDecision decision) {
  std::lock_guard lock(writer_);
  return commit({0, {}, id, EventKind::triaged, {{"decision", triage::to_string(decision)}}});
}

JointCase CaseStore::record_explanation(const std::string& id, const ExplanationArtifact& a) {
  std::lock_guard lock(writer_);
  return commit({0,
                 {},
                 id,
                 EventKind::explained,
                 {{"json_path", a.json_path.string()},
                  {"overlay_path", a.overlay_path.string()},
                  {"factor_count", a.factor_count}}});
}

JointCase CaseStore::record_failure(const std::string& id, const std::string& error) {
  std::lock_guard lock(writer_);
  return commit({0, {}, id, EventKind::failed, {{"error", error}}});
}

VerdictResult CaseStore::submit_verdict(const ReviewVerdict& v) {
  if (v.operator_id.empty()) throw ValidationError("operator must not be empty");
  std::lock_guard lock(writer_);
  const auto it = cases_.find(v.case_id);
  if (it == cases_.end()) throw NotFoundError("unknown case '" + v.case_id + "'");
  const JointCase& current = it->second;
  if (current.state != CaseState::in_review) {
    if (current.verdict == v.decision && current.verdict_by == v.operator_id && current.verdict_note == v.note) {
      return {current, false};
    }
    throw ConflictError("case '" + v.case_id + "' is " + std::string(to_string(current.state)) +
                        ", verdicts need in_review");
  }
  json payload = {{"decision", v.decision == Label::defective ? "defective" : "non_defective"},
                  {"operator", v.operator_id}};
  payload["note"] = v.note ? json(*v.note) : json(nullptr);
  return {commit({0, {}, v.case_id, EventKind::verdict, std::move(payload)}), true};
}

JointCase CaseStore::rework(const std::string& id) {
  std::lock_guard lock(writer_);
  if (!cases_.contains(id)) throw NotFoundError("unknown case '" + id + "'");
  return commit({0, {}, id, EventKind::reworked, json::object()});
}

std::shared_ptr<const CaseMap> CaseStore::snapshot() const {
  std::lock_guard lock(writer_);
  if (!view_) view_ = std::make_shared<const CaseMap>(cases_);
  return view_;
}

std::optional<JointCase> CaseStore::get(const std::string& id) const {
  const auto view = snapshot();
  const auto it = view->find(id);
  if (it == view->end()) return std::nullopt;
  return it->second;
}

bool CaseStore::contains(const std::string& id) const { return snapshot()->contains(id); }

std::uint64_t CaseStore::last_seq() const { return log_.last_seq(); }

void CaseStore::write_snapshot() const {
  std::lock_guard lock(writer_);
  write_snapshot_locked();
}

void CaseStore::write_snapshot_locked() const {
  json cases = json::array();
  for (const auto& [_, c] : cases_) cases.push_back(to_json(c));
  const json snap = {{"last_seq", log_.last_seq()}, {"cases", std::move(cases)}};
  const auto tmp = snapshot_path().string() + ".tmp";
  {
    std::ofstream out(tmp, std::ios::trunc);
    if (!out) throw StorageError("cannot write " + tmp);
    out << snap.dump() << '\n';
    if (!out.flush()) throw StorageError("cannot write " + tmp);
  }
  std::filesystem::rename(tmp, snapshot_path());
}

}  // namespace soldernet::service
