#include "soldernet/trust.hpp"

#include <cmath>
#include <string>

#include "soldernet/triage.hpp"

namespace soldernet::trust {
namespace {

const Label& require_label(const classifier::ScoreRecord& r) {
  if (!r.oracle_label) throw ValidationError("record '" + r.id + "' has no oracle label");
  return *r.oracle_label;
}

double record_trust(const classifier::ScoreRecord& r, Label oracle, double threshold, const TrustParams& params) {
  const Label pred = triage::predict(r.confidence.value(), threshold);
  return qa_trust(answer_confidence(r.confidence.value(), pred), pred, oracle, params);
}

}  // namespace

void TrustParams::validate() const {
  if (!(std::isfinite(alpha) && alpha > 0) || !(std::isfinite(beta) && beta > 0)) {
    throw ParameterError("trust exponents must be positive, got alpha=" + std::to_string(alpha) +
                         " beta=" + std::to_string(beta));
  }
}

double answer_confidence(double defect_confidence, Label predicted) {
  return predicted == Label::defective ? defect_confidence : 1.0 - defect_confidence;
}

double qa_trust(double confidence, Label predicted, Label oracle, const TrustParams& params) {
  params.validate();
  if (!(confidence >= 0.0 && confidence <= 1.0)) {
    throw ValidationError("confidence " + std::to_string(confidence) + " outside [0,1]");
  }
  return predicted == oracle ? std::pow(confidence, params.alpha) : std::pow(1.0 - confidence, params.beta);
}

TrustMatrix trust_matrix(const std::vector<classifier::ScoreRecord>& records, double threshold,
                         const TrustParams& params) {
  TrustMatrix m;
  std::array<std::array<double, 2>, 2> sums{};
  for (const auto& r : records) {
    const Label oracle = require_label(r);
    const Label pred = triage::predict(r.confidence.value(), threshold);
    const int o = static_cast<int>(oracle), p = static_cast<int>(pred);
    sums[o][p] += record_trust(r, oracle, threshold, params);
    ++m.counts[o][p];
  }
  for (int o = 0; o < 2; ++o)
    for (int p = 0; p < 2; ++p)
      if (m.counts[o][p] > 0) m.cells[o][p] = sums[o][p] / static_cast<double>(m.counts[o][p]);
  return m;
}

double net_trust_score(const std::vector<classifier::ScoreRecord>& records, double threshold,
                       const TrustParams& params) {
  if (records.empty()) throw ParameterError("NetTrustScore needs at least one record");
  double sum = 0;
  for (const auto& r : records) sum += record_trust(r, require_label(r), threshold, params);
  return sum / static_cast<double>(records.size());
}

TrustReport trust_report(const std::vector<classifier::ScoreRecord>& records, double threshold,
                         const TrustParams& params) {
  TrustReport rep;
  rep.matrix = trust_matrix(records, threshold, params);
  rep.net_trust_score = net_trust_score(records, threshold, params);
  rep.n = records.size();
  rep.threshold = threshold;
  rep.params = params;
  return rep;
}

nlohmann::json to_json(const TrustReport& r) {
  nlohmann::json cells = nlohmann::json::array(), counts = nlohmann::json::array();
  for (int o = 0; o < 2; ++o) {
    nlohmann::json row = nlohmann::json::array(), crow = nlohmann::json::array();
    for (int p = 0; p < 2; ++p) {
      const auto& c = r.matrix.cells[o][p];
      row.push_back(c ? nlohmann::json(*c) : nlohmann::json(nullptr));
      crow.push_back(r.matrix.counts[o][p]);
    }
    cells.push_back(row);
    counts.push_back(crow);
  }
  return {{"matrix", cells},
          {"counts", counts},
          {"net_trust_score", r.net_trust_score},
          {"n", r.n},
          {"threshold", r.threshold},
          {"params", {{"alpha", r.params.alpha}, {"beta", r.params.beta}}}};
}

}  // namespace soldernet::trust
