#pragma once

#include <array>
#include <chrono>
#include <filesystem>
#include <functional>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "soldernet/image.hpp"

namespace soldernet::classifier {

// Model confidence that a joint is defective. Always within [0,1].
class Confidence {
 public:
  Confidence() = default;
  // Throws ValidationError outside [0,1] or on NaN.
  explicit Confidence(double v);
  double value() const { return value_; }
  auto operator<=>(const Confidence&) const = default;

 private:
  double value_ = 0.0;
};

struct ScoreRecord {
  std::string id;
  Confidence confidence;
  std::optional<Label> oracle_label;
};

// Pluggable scoring backend. Implementations must be safe to call
// concurrently from several threads.
class ScorerBackend {
 public:
  virtual ~ScorerBackend() = default;
  virtual Confidence score(const NormalizedImage& image) const = 0;
  // Optional internal representation, used by the SOXAI embedding.
  virtual std::optional<std::vector<double>> features(const NormalizedImage&) const { return std::nullopt; }
  virtual std::string name() const = 0;
};

// Adapts a plain function; handy for tests and ad-hoc scorers.
class FunctionScorer final : public ScorerBackend {
 public:
  using Fn = std::function<double(const NormalizedImage&)>;
  explicit FunctionScorer(Fn fn, std::string name = "function") : fn_(std::move(fn)), name_(std::move(name)) {}
  Confidence score(const NormalizedImage& image) const override { return Confidence(fn_(image)); }
  std::string name() const override { return name_; }

 private:
  Fn fn_;
  std::string name_;
};

// Raw detector responses in pixels.
struct FeatureCounts {
  double off_pad_mass = 0;       // solder-coloured pixels outside the largest solder component
  double boundary_roughness = 0; // copper pixels at chessboard distance >= 7 from non-copper
  double dark_patch = 0;         // dark, low-saturation pixels
  double thin_structure = 0;     // near-white ridges at most 3 px wide
  double ripple_energy = 0;      // strong Laplacian inside solder interiors
};

inline constexpr std::size_t kNumReferenceFeatures = 5;
using FeatureVector = std::array<double, kNumReferenceFeatures>;

FeatureCounts detect_features(const NormalizedImage& image);
// phi_k = log(1 + count_k / 64), in FeatureCounts order.
FeatureVector feature_vector(const FeatureCounts& counts);

// Handcrafted logistic scorer: confidence = sigmoid(w . phi + b).
class ReferenceScorer final : public ScorerBackend {
 public:
  static constexpr double kBias = -4.0;
  static constexpr FeatureVector kWeights{3.0, 3.5, 3.5, 3.5, 3.0};

  Confidence score(const NormalizedImage& image) const override;
  std::optional<std::vector<double>> features(const NormalizedImage& image) const override;
  std::string name() const override { return "reference"; }
};

// Free-function form of ReferenceScorer::score.
Confidence reference_score(const NormalizedImage& image);

// Line-delimited JSON {id, confidence[, label]}. Throws ValidationError with
// the line number on malformed input, or naming the record when a confidence
// is out of range.
std::vector<ScoreRecord> load_external_scores(const std::filesystem::path& path);
void save_scores(const std::vector<ScoreRecord>& records, const std::filesystem::path& path);

struct LatencyReport {
  double mean_seconds = 0;
  int warmups = 0;
  int runs = 0;
  std::vector<double> samples;  // timed runs only
};

struct LatencyError : std::runtime_error {
  LatencyError(int invocation, const std::string& what)
      : std::runtime_error("backend failed at invocation " + std::to_string(invocation) + ": " + what),
        invocation_index(invocation) {}
  int invocation_index;
};

// Calls the backend warmups + runs times, strictly sequentially, and averages
// the monotonic-clock durations of the last `runs` calls.
LatencyReport measure_latency(const ScorerBackend& backend, const NormalizedImage& input, int warmups = 20,
                              int runs = 100);

}  // namespace soldernet::classifier
