#pragma once

#include <array>
#include <optional>
#include <vector>

#include <json.hpp>

#include "soldernet/classifier.hpp"

namespace soldernet::trust {

struct TrustParams {
  double alpha = 1.0;  // reward exponent
  double beta = 1.0;   // penalty exponent

  void validate() const;  // both must be finite and > 0
};

// Question-answer trust. `confidence` is the model's confidence in the answer
// it gave: confidence^alpha when that answer matches the oracle, else
// (1 - confidence)^beta.
double qa_trust(double confidence, Label predicted, Label oracle, const TrustParams& params = {});

// Confidence in the predicted answer given a raw defect confidence.
double answer_confidence(double defect_confidence, Label predicted);

// Indexed [oracle][predicted] with Label values as indices. A cell with no
// records is nullopt.
struct TrustMatrix {
  std::array<std::array<std::optional<double>, 2>, 2> cells{};
  std::array<std::array<std::size_t, 2>, 2> counts{};

  std::optional<double> at(Label oracle, Label predicted) const {
    return cells[static_cast<int>(oracle)][static_cast<int>(predicted)];
  }
};

struct TrustReport {
  TrustMatrix matrix;
  double net_trust_score = 0;
  std::size_t n = 0;
  double threshold = 0.5;
  TrustParams params;
};

// Throws ValidationError naming the first unlabeled record.
TrustMatrix trust_matrix(const std::vector<classifier::ScoreRecord>& records, double threshold = 0.5,
                         const TrustParams& params = {});

// Uniform mean of qa_trust over all records. ParameterError when empty.
double net_trust_score(const std::vector<classifier::ScoreRecord>& records, double threshold = 0.5,
                       const TrustParams& params = {});

TrustReport trust_report(const std::vector<classifier::ScoreRecord>& records, double threshold = 0.5,
                         const TrustParams& params = {});

// {matrix: [[...]], counts: [[...]], net_trust_score, n, threshold, params: {alpha, beta}}; null cells are JSON null.
nlohmann::json to_json(const TrustReport& r);

}  // namespace soldernet::trust
