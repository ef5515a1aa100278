#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "soldernet/image.hpp"
#include "soldernet/synthgen.hpp"
#include "soldernet/xai.hpp"

namespace soldernet::soxai {

inline constexpr std::size_t kPooledDims = 64;     // 8x8 mean grey of the factor-masked image
inline constexpr std::size_t kHistogramDims = 24;  // 8 bins per channel over factor pixels
inline constexpr std::size_t kGeometryDims = 3;    // area fraction, centroid x, centroid y
inline constexpr std::size_t kEmbeddingDims = kPooledDims + kHistogramDims + kGeometryDims;

struct ExplanationEmbedding {
  std::string id;
  std::vector<double> vector;
  std::size_t scorer_feature_dims = 0;  // trailing entries copied from the scorer, if any
};

// Grey is the mean of the three channels. Each channel's histogram sums to 1
// (all zero with no factor pixels). Centroids use pixel centres, so a full
// mask sits at (0.5, 0.5); an empty one is defined to be there too.
ExplanationEmbedding embed_explanation(const NormalizedImage& image, const xai::Explanation& explanation,
                                       const std::optional<std::vector<double>>& scorer_features = std::nullopt,
                                       std::string id = {});

struct TsneParams {
  double perplexity = 30;
  int iterations = 1000;
  double learning_rate = 200;
  double early_exaggeration = 12;
  int exaggeration_iterations = 250;
  double initial_momentum = 0.5;
  double final_momentum = 0.8;
  std::uint64_t seed = 0;

  void validate() const;
};

// Dense row-major n x n matrix.
struct SquareMatrix {
  std::size_t n = 0;
  std::vector<double> v;

  explicit SquareMatrix(std::size_t size = 0) : n(size), v(size * size, 0.0) {}
  double& operator()(std::size_t i, std::size_t j) { return v[i * n + j]; }
  double operator()(std::size_t i, std::size_t j) const { return v[i * n + j]; }
};

using Points = std::vector<std::vector<double>>;

SquareMatrix squared_distances(const Points& x);
SquareMatrix squared_distances_serial(const Points& x);

struct Affinities {
  SquareMatrix p;                          // symmetric, sums to 1
  std::vector<double> row_perplexity;      // achieved perplexity of each conditional row
  std::vector<double> row_beta;            // Gaussian precision 1 / (2 sigma^2) per row
};

// Conditional Gaussian rows calibrated to `perplexity` by bisection on log(beta)
// (at most 50 steps, stopping once |H - log(perplexity)| < 1e-5 nats), then
// symmetrised as (P_j|i + P_i|j) / 2n.
Affinities joint_probabilities(const Points& x, double perplexity);

// 2-D layout, row-major (y[2i], y[2i+1]).
using Layout = std::vector<double>;

// KL(P || Q) for the Student-t Q of layout y.
double kl_divergence(const SquareMatrix& p, const Layout& y);

// Writes dKL/dy (with P scaled by `exaggeration`) into grad and returns
// KL(P || Q) for the unscaled P. Rows run in parallel; every sum has a fixed
// order, so the result does not depend on the thread count.
double kl_gradient(const SquareMatrix& p, const Layout& y, double exaggeration, Layout& grad);
double kl_gradient_serial(const SquareMatrix& p, const Layout& y, double exaggeration, Layout& grad);

struct TsneResult {
  Layout y;
  std::vector<double> kl_history;  // KL(P || Q) before each update
  double perplexity_used = 0;
  Affinities affinities;

  std::size_t size() const { return y.size() / 2; }
  double x(std::size_t i) const { return y[2 * i]; }
  double yv(std::size_t i) const { return y[2 * i + 1]; }
};

// Exact O(n^2) t-SNE. ParameterError when n < 8 or when one vector repeats more
// than n - 3 times; ValidationError on non-finite input. Perplexity above
// (n - 1) / 3 is clamped.
TsneResult tsne(const Points& vectors, const TsneParams& params = {});

struct ScatterPoint {
  std::string id;
  double x = 0, y = 0;
  std::string kind;  // defect kind name or "unknown"
  std::filesystem::path thumbnail_path;
};

struct SoxaiInput {
  std::string id;
  NormalizedImage image;
  std::optional<synthgen::DefectKind> kind;
};

struct SoxaiOutput {
  std::vector<ScatterPoint> points;
  std::vector<ExplanationEmbedding> embeddings;
  TsneResult tsne;
  std::filesystem::path scatter_path;
  std::filesystem::path plot_path;
};

// Embeds every explanation, runs t-SNE and writes out_dir/scatter.jsonl,
// out_dir/soxai.png and out_dir/thumbs/<id>.png. ValidationError listing every
// id without an explanation; ParameterError for fewer than 8 inputs.
SoxaiOutput export_soxai_scatter(const std::vector<SoxaiInput>& dataset,
                                 const std::map<std::string, xai::Explanation>& explanations,
                                 const TsneParams& params, const std::filesystem::path& out_dir,
                                 const classifier::ScorerBackend* scorer_features = nullptr);

nlohmann::json to_json(const ScatterPoint& p);

// Scatter raster: each thumbnail centred at its scaled coordinate with a
// kind-coloured frame.
ImageU8 render_scatter(const std::vector<ScatterPoint>& points, const std::vector<ImageU8>& thumbnails,
                       int canvas = 1024);

}  // namespace soldernet::soxai
