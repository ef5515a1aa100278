#include "soldernet/triage.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>

namespace soldernet::triage {

void TriageThresholds::validate() const {
  if (!(t_low >= 0.0 && t_low <= t_high && t_high <= 1.0)) {
    throw ParameterError("thresholds must satisfy 0 <= t_low <= t_high <= 1, got (" + std::to_string(t_low) + ", " +
                         std::to_string(t_high) + ")");
  }
}

std::string_view to_string(TriageDecision d) {
  switch (d) {
    case TriageDecision::non_defective: return "non_defective";
    case TriageDecision::possibly_defective: return "possibly_defective";
    case TriageDecision::defective: return "defective";
  }
  return "?";
}

TriageDecision triage_decision_from_string(std::string_view s) {
  if (s == "non_defective") return TriageDecision::non_defective;
  if (s == "possibly_defective") return TriageDecision::possibly_defective;
  if (s == "defective") return TriageDecision::defective;
  throw ValidationError("unknown triage decision '" + std::string(s) + "'");
}

TriageDecision triage(classifier::Confidence c, const TriageThresholds& th) {
  th.validate();
  const double v = c.value();
  if (v < th.t_low) return TriageDecision::non_defective;
  if (v > th.t_high) return TriageDecision::defective;
  return TriageDecision::possibly_defective;
}

EvalReport evaluate(const std::vector<classifier::ScoreRecord>& records, double threshold) {
  if (records.empty()) throw ParameterError("evaluate needs at least one record");
  EvalReport r;
  r.threshold = threshold;
  r.n = records.size();
  for (const auto& rec : records) {
    if (!rec.oracle_label) throw ValidationError("record '" + rec.id + "' has no oracle label");
    const bool truth = *rec.oracle_label == Label::defective;
    const bool pred = predict(rec.confidence.value(), threshold) == Label::defective;
    if (truth && pred) ++r.tp;
    else if (!truth && !pred) ++r.tn;
    else if (pred) ++r.fp;
    else ++r.fn;
  }
  const auto n = static_cast<double>(r.n);
  r.accuracy = static_cast<double>(r.tp + r.tn) / n;
  r.overkill = static_cast<double>(r.fp) / n;
  r.escape = static_cast<double>(r.fn) / n;
  return r;
}

nlohmann::json to_json(const EvalReport& r) {
  return {{"n", r.n},
          {"accuracy", r.accuracy},
          {"overkill", r.overkill},
          {"escape", r.escape},
          {"threshold", r.threshold},
          {"confusion", {{"tp", r.tp}, {"tn", r.tn}, {"fp", r.fp}, {"fn", r.fn}}}};
}

std::string format_percent(double fraction) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.1f", fraction * 100.0);
  return buf;
}

std::array<int, 3> row_tenths(const EvalReport& r) {
  const std::array<double, 3> exact{r.accuracy * 1000.0, r.overkill * 1000.0, r.escape * 1000.0};
  std::array<int, 3> out{};
  int total = 0;
  for (int i = 0; i < 3; ++i) {
    // Nudge before flooring so 91.0 stored as 909.9999999 still floors to 910.
    out[i] = static_cast<int>(std::floor(exact[i] + 1e-6));
    total += out[i];
  }
  std::array<int, 3> order{0, 1, 2};
  std::stable_sort(order.begin(), order.end(),
                   [&](int a, int b) { return exact[a] - out[a] > exact[b] - out[b]; });
  for (int k = 0; total < 1000 && k < 3; ++k, ++total) ++out[order[k]];
  return out;
}

std::string format_eval_table(const std::vector<std::pair<std::string, EvalReport>>& rows) {
  std::size_t width = 5;
  for (const auto& [name, _] : rows) width = std::max(width, name.size());
  std::string out;
  char line[256];
  std::snprintf(line, sizeof line, "%-*s  %12s  %12s  %10s\n", static_cast<int>(width), "model", "Accuracy (%)",
                "Overkill (%)", "Escape (%)");
  out += line;
  for (const auto& [name, r] : rows) {
    const auto t = row_tenths(r);
    std::snprintf(line, sizeof line, "%-*s  %10d.%d  %10d.%d  %8d.%d\n", static_cast<int>(width), name.c_str(),
                  t[0] / 10, t[0] % 10, t[1] / 10, t[1] % 10, t[2] / 10, t[2] % 10);
    out += line;
  }
  return out;
}

}  // namespace soldernet::triage
