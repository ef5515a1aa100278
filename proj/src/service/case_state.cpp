#include "soldernet/service/case_state.hpp"

namespace soldernet::service {
namespace {

using nlohmann::json;

constexpr CaseState kAllStates[] = {CaseState::pending,         CaseState::scored,        CaseState::auto_defect,
                                    CaseState::in_review,       CaseState::auto_pass,     CaseState::reviewed_defect,
                                    CaseState::reviewed_pass,   CaseState::reworked,      CaseState::failed};

CaseState state_for(triage::TriageDecision d) {
  switch (d) {
    case triage::TriageDecision::defective: return CaseState::auto_defect;
    case triage::TriageDecision::possibly_defective: return CaseState::in_review;
    case triage::TriageDecision::non_defective: return CaseState::auto_pass;
  }
  return CaseState::in_review;
}

std::string label_name(Label l) { return l == Label::defective ? "defective" : "non_defective"; }

Label label_from_name(const std::string& s) {
  if (s == "defective") return Label::defective;
  if (s == "non_defective") return Label::non_defective;
  throw ValidationError("decision must be \"defective\" or \"non_defective\", got '" + s + "'");
}

void move_to(JointCase& c, CaseState to, const Event& e) {
  if (!transition_allowed(c.state, to)) {
    throw TransitionError("case '" + c.id + "': " + std::string(to_string(e.kind)) + " not allowed in state " +
                          std::string(to_string(c.state)));
  }
  c.state = to;
  c.timestamps[std::string(to_string(to))] = e.timestamp;
}

template <typename T>
T field(const json& payload, const char* key, const Event& e) {
  try {
    return payload.at(key).get<T>();
  } catch (const json::exception&) {
    throw IntegrityError("event " + std::to_string(e.seq) + " (" + std::string(to_string(e.kind)) +
                         ") lacks a valid '" + key + "'");
  }
}

}  // namespace

std::string_view to_string(CaseState s) {
  switch (s) {
    case CaseState::pending: return "pending";
    case CaseState::scored: return "scored";
    case CaseState::auto_defect: return "auto_defect";
    case CaseState::in_review: return "in_review";
    case CaseState::auto_pass: return "auto_pass";
    case CaseState::reviewed_defect: return "reviewed_defect";
    case CaseState::reviewed_pass: return "reviewed_pass";
    case CaseState::reworked: return "reworked";
    case CaseState::failed: return "failed";
  }
  return "?";
}

CaseState case_state_from_string(std::string_view s) {
  for (auto st : kAllStates)
    if (to_string(st) == s) return st;
  throw ValidationError("unknown case state '" + std::string(s) + "'");
}

bool transition_allowed(CaseState from, CaseState to) {
  using S = CaseState;
  switch (from) {
    case S::pending: return to == S::scored || to == S::failed;
    case S::scored: return to == S::auto_defect || to == S::in_review || to == S::auto_pass || to == S::failed;
    case S::in_review: return to == S::reviewed_defect || to == S::reviewed_pass;
    case S::auto_defect:
    case S::reviewed_defect: return to == S::reworked;
    default: return false;
  }
}

json to_json(const JointCase& c) {
  json j = {{"id", c.id},
            {"image_path", c.image_path.string()},
            {"dataset_id", c.dataset_id},
            {"state", to_string(c.state)},
            {"timestamps", c.timestamps}};
  j["oracle_label"] = c.oracle_label ? json(static_cast<int>(*c.oracle_label)) : json(nullptr);
  j["kind"] = c.kind ? json(*c.kind) : json(nullptr);
  j["confidence"] = c.confidence ? json(*c.confidence) : json(nullptr);
  j["triage"] = c.triage ? json(to_string(*c.triage)) : json(nullptr);
  j["verdict"] = c.verdict ? json(label_name(*c.verdict)) : json(nullptr);
  j["verdict_by"] = c.verdict_by ? json(*c.verdict_by) : json(nullptr);
  j["verdict_note"] = c.verdict_note ? json(*c.verdict_note) : json(nullptr);
  j["error"] = c.error ? json(*c.error) : json(nullptr);
  if (c.explanation) {
    j["explanation"] = {{"json_path", c.explanation->json_path.string()},
                        {"overlay_path", c.explanation->overlay_path.string()},
                        {"factor_count", c.explanation->factor_count}};
  } else {
    j["explanation"] = nullptr;
  }
  return j;
}

JointCase joint_case_from_json(const json& j) {
  JointCase c;
  c.id = j.at("id").get<std::string>();
  c.image_path = j.at("image_path").get<std::string>();
  c.dataset_id = j.at("dataset_id").get<std::string>();
  c.state = case_state_from_string(j.at("state").get<std::string>());
  c.timestamps = j.at("timestamps").get<std::map<std::string, std::string>>();
  if (!j.at("oracle_label").is_null()) c.oracle_label = label_from_int(j["oracle_label"].get<int>());
  if (!j.at("kind").is_null()) c.kind = j["kind"].get<std::string>();
  if (!j.at("confidence").is_null()) c.confidence = j["confidence"].get<double>();
  if (!j.at("triage").is_null()) c.triage = triage::triage_decision_from_string(j["triage"].get<std::string>());
  if (!j.at("verdict").is_null()) c.verdict = label_from_name(j["verdict"].get<std::string>());
  if (!j.at("verdict_by").is_null()) c.verdict_by = j["verdict_by"].get<std::string>();
  if (!j.at("verdict_note").is_null()) c.verdict_note = j["verdict_note"].get<std::string>();
  if (!j.at("error").is_null()) c.error = j["error"].get<std::string>();
  if (!j.at("explanation").is_null()) {
    const auto& e = j["explanation"];
    c.explanation = ExplanationArtifact{e.at("json_path").get<std::string>(), e.at("overlay_path").get<std::string>(),
                                        e.at("factor_count").get<std::size_t>()};
  }
  return c;
}

void apply_event(CaseMap& cases, const Event& e) {
  if (e.kind == EventKind::ingested) {
    if (cases.contains(e.case_id)) throw TransitionError("case '" + e.case_id + "' already ingested");
    JointCase c;
    c.id = e.case_id;
    c.image_path = field<std::string>(e.payload, "image_path", e);
    c.dataset_id = e.payload.value("dataset_id", "");
    if (e.payload.contains("label") && !e.payload["label"].is_null()) {
      c.oracle_label = label_from_int(field<int>(e.payload, "label", e));
    }
    if (e.payload.contains("kind") && !e.payload["kind"].is_null()) c.kind = field<std::string>(e.payload, "kind", e);
    c.timestamps["pending"] = e.timestamp;
    cases.emplace(c.id, std::move(c));
    return;
  }

  const auto it = cases.find(e.case_id);
  if (it == cases.end()) throw NotFoundError("unknown case '" + e.case_id + "'");
  JointCase c = it->second;
  switch (e.kind) {
    case EventKind::scored: {
      const double conf = field<double>(e.payload, "confidence", e);
      if (!(conf >= 0.0 && conf <= 1.0)) throw IntegrityError("scored event with confidence outside [0,1]");
      move_to(c, CaseState::scored, e);
      c.confidence = conf;
      break;
    }
    case EventKind::triaged: {
      const auto d = triage::triage_decision_from_string(field<std::string>(e.payload, "decision", e));
      move_to(c, state_for(d), e);
      c.triage = d;
      break;
    }
    case EventKind::explained:
      if (c.state != CaseState::in_review || c.explanation) {
        throw TransitionError("case '" + c.id + "': explanation only attaches once, while in_review");
      }
      c.explanation = ExplanationArtifact{field<std::string>(e.payload, "json_path", e),
                                          field<std::string>(e.payload, "overlay_path", e),
                                          field<std::size_t>(e.payload, "factor_count", e)};
      break;
    case EventKind::verdict: {
      const Label d = label_from_name(field<std::string>(e.payload, "decision", e));
      move_to(c, d == Label::defective ? CaseState::reviewed_defect : CaseState::reviewed_pass, e);
      c.verdict = d;
      c.verdict_by = field<std::string>(e.payload, "operator", e);
      if (e.payload.contains("note") && !e.payload["note"].is_null()) c.verdict_note = e.payload["note"].get<std::string>();
      break;
    }
    case EventKind::reworked: move_to(c, CaseState::reworked, e); break;
    case EventKind::failed:
      move_to(c, CaseState::failed, e);
      c.error = field<std::string>(e.payload, "error", e);
      break;
    case EventKind::ingested: break;
  }
  it->second = std::move(c);
}

CaseMap replay_events(const std::vector<Event>& events, CaseMap start, std::uint64_t after_seq) {
  for (const auto& e : events) {
    if (e.seq <= after_seq) continue;
    try {
      apply_event(start, e);
    } catch (const ConflictError& ex) {
      throw IntegrityError("event " + std::to_string(e.seq) + ": " + ex.what());
    } catch (const NotFoundError& ex) {
      throw IntegrityError("event " + std::to_string(e.seq) + ": " + ex.what());
    } catch (const ValidationError& ex) {
      throw IntegrityError("event " + std::to_string(e.seq) + ": " + ex.what());
    }
  }
  return start;
}

CaseMap replay_state(const std::filesystem::path& log_path) { return replay_events(read_log(log_path).events); }

}  // namespace soldernet::service
