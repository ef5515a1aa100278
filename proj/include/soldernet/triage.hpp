#pragma once

#include <array>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "soldernet/classifier.hpp"

namespace soldernet::triage {

struct TriageThresholds {
  double t_low = 0.3;
  double t_high = 0.7;

  // Throws ParameterError unless 0 <= t_low <= t_high <= 1.
  void validate() const;
};

// Ordered by severity.
enum class TriageDecision { non_defective = 0, possibly_defective = 1, defective = 2 };

std::string_view to_string(TriageDecision d);
TriageDecision triage_decision_from_string(std::string_view s);

// The middle band is closed: c == t_low and c == t_high both need review.
TriageDecision triage(classifier::Confidence c, const TriageThresholds& th);

// Ties at the threshold predict defective.
inline Label predict(double confidence, double threshold) {
  return confidence >= threshold ? Label::defective : Label::non_defective;
}

struct EvalReport {
  std::size_t n = 0;
  double accuracy = 0;
  double overkill = 0;  // false positives / n
  double escape = 0;    // false negatives / n
  double threshold = 0.5;
  std::size_t tp = 0, tn = 0, fp = 0, fn = 0;
};

// Throws ValidationError naming the first record without a label, and
// ParameterError on an empty record list.
EvalReport evaluate(const std::vector<classifier::ScoreRecord>& records, double threshold = 0.5);

nlohmann::json to_json(const EvalReport& r);

// Percentage with one decimal, e.g. 0.866 -> "86.6".
std::string format_percent(double fraction);

// Accuracy, overkill and escape in tenths of a percent. Rounded by largest
// remainder so the three always add up to 1000 (100.0%).
std::array<int, 3> row_tenths(const EvalReport& r);

// One row per model: name, accuracy, overkill, escape as percentages.
std::string format_eval_table(const std::vector<std::pair<std::string, EvalReport>>& rows);

}  // namespace soldernet::triage
