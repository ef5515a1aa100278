#include "soldernet/soxai.hpp"

#include <algorithm>
#include <array>
#include <cctype>
#include <cmath>
#include <fstream>
#include <limits>

#include "soldernet/imaging.hpp"
#include "soldernet/png_io.hpp"
#include "soldernet/rng.hpp"

namespace soldernet::soxai {
namespace {

constexpr int kPoolGrid = 8;
constexpr int kBins = 8;
constexpr int kBisectionSteps = 50;
constexpr double kEntropyTolerance = 1e-5;
constexpr double kJitter = 1e-9;
constexpr double kInitSigma = 1e-4;
constexpr double kMinGain = 0.01;

void check_points(const Points& x) {
  if (x.empty()) return;
  const std::size_t dim = x.front().size();
  for (std::size_t i = 0; i < x.size(); ++i) {
    if (x[i].size() != dim) throw ValidationError("row " + std::to_string(i) + " has a different dimension");
    for (double v : x[i])
      if (!std::isfinite(v)) throw ValidationError("row " + std::to_string(i) + " has a non-finite value");
  }
}

double row_distance(const std::vector<double>& a, const std::vector<double>& b) {
  double s = 0;
  for (std::size_t k = 0; k < a.size(); ++k) {
    const double d = a[k] - b[k];
    s += d * d;
  }
  return s;
}

// Calibrates row i; writes p_j|i into cond and returns {beta, perplexity}.
std::pair<double, double> calibrate_row(const SquareMatrix& d2, std::size_t i, double log_target,
                                        std::vector<double>& cond) {
  const std::size_t n = d2.n;
  double dmin = std::numeric_limits<double>::infinity();
  for (std::size_t j = 0; j < n; ++j)
    if (j != i) dmin = std::min(dmin, d2(i, j));

  double lo = -100.0, hi = 100.0, log_beta = 0.0, entropy = 0.0, beta = 1.0;
  for (int step = 0; step < kBisectionSteps; ++step) {
    beta = std::exp(log_beta);
    double sum = 0, weighted = 0;
    for (std::size_t j = 0; j < n; ++j) {
      if (j == i) continue;
      const double shifted = d2(i, j) - dmin;
      const double w = std::exp(-beta * shifted);
      cond[j] = w;
      sum += w;
      weighted += w * shifted;
    }
    entropy = std::log(sum) + beta * weighted / sum;
    for (std::size_t j = 0; j < n; ++j) cond[j] = j == i ? 0.0 : cond[j] / sum;
    const double diff = entropy - log_target;
    if (std::abs(diff) < kEntropyTolerance) break;
    if (diff > 0) lo = log_beta;
    else hi = log_beta;
    log_beta = 0.5 * (lo + hi);
  }
  return {beta, std::exp(entropy)};
}

template <bool Parallel>
double gradient_impl(const SquareMatrix& p, const Layout& y, double exaggeration, Layout& grad) {
  const std::size_t n = p.n;
  const auto sn = static_cast<std::ptrdiff_t>(n);
  grad.assign(2 * n, 0.0);
  std::vector<double> row_z(n, 0.0);

#pragma omp parallel for schedule(static) if (Parallel)
  for (std::ptrdiff_t si = 0; si < sn; ++si) {
    const auto i = static_cast<std::size_t>(si);
    double z = 0;
    for (std::size_t j = 0; j < n; ++j) {
      if (j == i) continue;
      const double dx = y[2 * i] - y[2 * j], dy = y[2 * i + 1] - y[2 * j + 1];
      z += 1.0 / (1.0 + dx * dx + dy * dy);
    }
    row_z[i] = z;
  }
  double z = 0;
  for (double v : row_z) z += v;

  std::vector<double> row_kl(n, 0.0);
#pragma omp parallel for schedule(static) if (Parallel)
  for (std::ptrdiff_t si = 0; si < sn; ++si) {
    const auto i = static_cast<std::size_t>(si);
    double gx = 0, gy = 0, kl = 0;
    for (std::size_t j = 0; j < n; ++j) {
      if (j == i) continue;
      const double dx = y[2 * i] - y[2 * j], dy = y[2 * i + 1] - y[2 * j + 1];
      const double num = 1.0 / (1.0 + dx * dx + dy * dy);
      const double q = num / z;
      const double pij = p(i, j);
      if (pij > 0) kl += pij * std::log(pij / q);
      const double m = (exaggeration * pij - q) * num;
      gx += m * dx;
      gy += m * dy;
    }
    grad[2 * i] = 4.0 * gx;
    grad[2 * i + 1] = 4.0 * gy;
    row_kl[i] = kl;
  }
  double kl = 0;
  for (double v : row_kl) kl += v;
  return kl;
}

std::string safe_file_stem(const std::string& id) {
  std::string s = id;
  for (char& c : s)
    if (!(std::isalnum(static_cast<unsigned char>(c)) || c == '-' || c == '_' || c == '.')) c = '_';
  return s.empty() ? "_" : s;
}

std::array<std::uint8_t, 3> kind_color(const std::string& kind) {
  if (kind == "none") return {60, 160, 60};
  if (kind == "splash") return {230, 120, 20};
  if (kind == "crack") return {200, 30, 30};
  if (kind == "poor_wetting") return {30, 90, 200};
  if (kind == "fiber") return {150, 40, 170};
  if (kind == "burn") return {90, 60, 30};
  if (kind == "disturbed") return {20, 170, 170};
  return {128, 128, 128};
}

}  // namespace

ExplanationEmbedding embed_explanation(const NormalizedImage& image, const xai::Explanation& explanation,
                                       const std::optional<std::vector<double>>& scorer_features, std::string id) {
  if (image.width != kImageSize || image.height != kImageSize || image.channels != 3) {
    throw ParameterError("embedding requires a 256x256x3 normalized image");
  }
  const Mask mask = explanation.combined_mask();
  ExplanationEmbedding e;
  e.id = std::move(id);
  e.vector.assign(kEmbeddingDims, 0.0);

  const int block = kImageSize / kPoolGrid;
  std::array<std::array<double, kBins>, 3> hist{};
  double count = 0, sx = 0, sy = 0;
  for (int y = 0; y < kImageSize; ++y) {
    for (int x = 0; x < kImageSize; ++x) {
      if (!mask.at(x, y)) continue;
      const double grey = (image.at(x, y, 0) + image.at(x, y, 1) + image.at(x, y, 2)) / 3.0;
      e.vector[static_cast<std::size_t>((y / block) * kPoolGrid + x / block)] += grey;
      for (int c = 0; c < 3; ++c) {
        const int bin = std::clamp(static_cast<int>(image.at(x, y, c) * kBins), 0, kBins - 1);
        hist[c][bin] += 1;
      }
      count += 1;
      sx += x + 0.5;
      sy += y + 0.5;
    }
  }
  const double block_area = static_cast<double>(block) * block;
  for (std::size_t k = 0; k < kPooledDims; ++k) e.vector[k] /= block_area;
  if (count > 0) {
    for (int c = 0; c < 3; ++c)
      for (int b = 0; b < kBins; ++b) e.vector[kPooledDims + c * kBins + b] = hist[c][b] / count;
  }
  const std::size_t g = kPooledDims + kHistogramDims;
  e.vector[g] = count / (static_cast<double>(kImageSize) * kImageSize);
  e.vector[g + 1] = count > 0 ? sx / count / kImageSize : 0.5;
  e.vector[g + 2] = count > 0 ? sy / count / kImageSize : 0.5;

  if (scorer_features) {
    e.vector.insert(e.vector.end(), scorer_features->begin(), scorer_features->end());
    e.scorer_feature_dims = scorer_features->size();
  }
  return e;
}

void TsneParams::validate() const {
  if (!(perplexity > 0) || !std::isfinite(perplexity)) throw ParameterError("perplexity must be positive");
  if (iterations < 250) throw ParameterError("t-SNE needs at least 250 iterations");
  if (!(learning_rate > 0)) throw ParameterError("learning rate must be positive");
  if (!(early_exaggeration >= 1)) throw ParameterError("early exaggeration must be >= 1");
  if (exaggeration_iterations < 0 || exaggeration_iterations > iterations) {
    throw ParameterError("exaggeration iterations must lie within [0, iterations]");
  }
}

SquareMatrix squared_distances_serial(const Points& x) {
  SquareMatrix d(x.size());
  for (std::size_t i = 0; i < d.n; ++i)
    for (std::size_t j = 0; j < d.n; ++j) d(i, j) = i == j ? 0.0 : row_distance(x[i], x[j]);
  return d;
}

SquareMatrix squared_distances(const Points& x) {
  SquareMatrix d(x.size());
  const auto sn = static_cast<std::ptrdiff_t>(d.n);
#pragma omp parallel for schedule(static)
  for (std::ptrdiff_t si = 0; si < sn; ++si) {
    const auto i = static_cast<std::size_t>(si);
    for (std::size_t j = 0; j < d.n; ++j) d(i, j) = i == j ? 0.0 : row_distance(x[i], x[j]);
  }
  return d;
}

Affinities joint_probabilities(const Points& x, double perplexity) {
  check_points(x);
  const std::size_t n = x.size();
  if (n < 2) throw ParameterError("affinities need at least two points");
  if (!(perplexity > 0) || perplexity > static_cast<double>(n - 1)) {
    throw ParameterError("perplexity must lie in (0, n-1]");
  }
  const SquareMatrix d2 = squared_distances(x);
  SquareMatrix cond(n);
  Affinities a;
  a.row_beta.assign(n, 0.0);
  a.row_perplexity.assign(n, 0.0);
  const double log_target = std::log(perplexity);
  const auto sn = static_cast<std::ptrdiff_t>(n);
#pragma omp parallel
  {
    std::vector<double> row(n, 0.0);
#pragma omp for schedule(dynamic)
    for (std::ptrdiff_t si = 0; si < sn; ++si) {
      const auto i = static_cast<std::size_t>(si);
      const auto [beta, perp] = calibrate_row(d2, i, log_target, row);
      a.row_beta[i] = beta;
      a.row_perplexity[i] = perp;
      std::copy(row.begin(), row.end(), cond.v.begin() + static_cast<std::ptrdiff_t>(i * n));
    }
  }
  a.p = SquareMatrix(n);
  const double scale = 1.0 / (2.0 * static_cast<double>(n));
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < n; ++j) a.p(i, j) = (cond(i, j) + cond(j, i)) * scale;
  return a;
}

double kl_divergence(const SquareMatrix& p, const Layout& y) {
  Layout scratch;
  return gradient_impl<false>(p, y, 1.0, scratch);
}

double kl_gradient(const SquareMatrix& p, const Layout& y, double exaggeration, Layout& grad) {
  return gradient_impl<true>(p, y, exaggeration, grad);
}

double kl_gradient_serial(const SquareMatrix& p, const Layout& y, double exaggeration, Layout& grad) {
  return gradient_impl<false>(p, y, exaggeration, grad);
}

TsneResult tsne(const Points& vectors, const TsneParams& params) {
  params.validate();
  const std::size_t n = vectors.size();
  if (n < 8) throw ParameterError("t-SNE needs at least 8 points, got " + std::to_string(n));
  check_points(vectors);
  {
    std::map<std::vector<double>, std::size_t> copies;
    for (const auto& v : vectors)
      if (++copies[v] > n - 3) throw ParameterError("a single vector repeats more than n-3 times");
  }

  Points x = vectors;
  Rng jitter = Rng::stream(params.seed, 1);
  for (auto& row : x)
    for (double& v : row) v += kJitter * jitter.normal();

  TsneResult r;
  r.perplexity_used = std::min(params.perplexity, std::nextafter(static_cast<double>(n - 1) / 3.0, 0.0));
  r.affinities = joint_probabilities(x, r.perplexity_used);
  const SquareMatrix& p = r.affinities.p;

  Rng init = Rng::stream(params.seed, 2);
  r.y.resize(2 * n);
  for (double& v : r.y) v = kInitSigma * init.normal();

  Layout grad, update(2 * n, 0.0), gains(2 * n, 1.0);
  r.kl_history.reserve(static_cast<std::size_t>(params.iterations) + 1);
  for (int it = 0; it < params.iterations; ++it) {
    const bool early = it < params.exaggeration_iterations;
    const double exaggeration = early ? params.early_exaggeration : 1.0;
    const double momentum = early ? params.initial_momentum : params.final_momentum;
    r.kl_history.push_back(kl_gradient(p, r.y, exaggeration, grad));
    for (std::size_t k = 0; k < 2 * n; ++k) {
      const bool same_sign = (grad[k] > 0) == (update[k] > 0);
      gains[k] = std::max(kMinGain, same_sign ? gains[k] * 0.8 : gains[k] + 0.2);
      update[k] = momentum * update[k] - params.learning_rate * gains[k] * grad[k];
      r.y[k] += update[k];
    }
    double mx = 0, my = 0;
    for (std::size_t i = 0; i < n; ++i) {
      mx += r.y[2 * i];
      my += r.y[2 * i + 1];
    }
    mx /= static_cast<double>(n);
    my /= static_cast<double>(n);
    for (std::size_t i = 0; i < n; ++i) {
      r.y[2 * i] -= mx;
      r.y[2 * i + 1] -= my;
    }
  }
  r.kl_history.push_back(kl_divergence(p, r.y));
  return r;
}

nlohmann::json to_json(const ScatterPoint& p) {
  return {{"id", p.id}, {"x", p.x}, {"y", p.y}, {"kind", p.kind}, {"thumbnail_path", p.thumbnail_path.generic_string()}};
}

ImageU8 render_scatter(const std::vector<ScatterPoint>& points, const std::vector<ImageU8>& thumbnails, int canvas) {
  ImageU8 out(canvas, canvas, 3, 255);
  if (points.empty()) return out;
  double x0 = points[0].x, x1 = x0, y0 = points[0].y, y1 = y0;
  for (const auto& p : points) {
    x0 = std::min(x0, p.x);
    x1 = std::max(x1, p.x);
    y0 = std::min(y0, p.y);
    y1 = std::max(y1, p.y);
  }
  const int margin = 40;
  const double span = std::max({x1 - x0, y1 - y0, 1e-12});
  const double scale = (canvas - 2.0 * margin) / span;
  for (std::size_t k = 0; k < points.size(); ++k) {
    const ImageU8& t = thumbnails[k];
    const int cx = margin + static_cast<int>((points[k].x - x0) * scale);
    const int cy = margin + static_cast<int>((points[k].y - y0) * scale);
    const auto color = kind_color(points[k].kind);
    const int left = cx - t.width / 2 - 2, top = cy - t.height / 2 - 2;
    for (int y = 0; y < t.height + 4; ++y) {
      for (int x = 0; x < t.width + 4; ++x) {
        const int px = left + x, py = top + y;
        if (px < 0 || py < 0 || px >= canvas || py >= canvas) continue;
        const bool frame = x < 2 || y < 2 || x >= t.width + 2 || y >= t.height + 2;
        for (int c = 0; c < 3; ++c)
          out.at(px, py, c) = frame ? color[static_cast<std::size_t>(c)] : t.at(x - 2, y - 2, c);
      }
    }
  }
  return out;
}

SoxaiOutput export_soxai_scatter(const std::vector<SoxaiInput>& dataset,
                                 const std::map<std::string, xai::Explanation>& explanations,
                                 const TsneParams& params, const std::filesystem::path& out_dir,
                                 const classifier::ScorerBackend* scorer_features) {
  if (dataset.size() < 8) {
    throw ParameterError("SOXAI needs at least 8 explained images, got " + std::to_string(dataset.size()));
  }
  std::string missing;
  for (const auto& d : dataset) {
    if (!explanations.contains(d.id)) missing += (missing.empty() ? "" : ", ") + d.id;
  }
  if (!missing.empty()) throw ValidationError("missing explanations for: " + missing);

  SoxaiOutput out;
  Points vectors;
  for (const auto& d : dataset) {
    std::optional<std::vector<double>> feats;
    if (scorer_features) feats = scorer_features->features(d.image);
    out.embeddings.push_back(embed_explanation(d.image, explanations.at(d.id), feats, d.id));
    vectors.push_back(out.embeddings.back().vector);
  }
  out.tsne = tsne(vectors, params);

  std::filesystem::create_directories(out_dir / "thumbs");
  std::vector<ImageU8> thumbs;
  for (std::size_t i = 0; i < dataset.size(); ++i) {
    ScatterPoint p;
    p.id = dataset[i].id;
    p.x = out.tsne.x(i);
    p.y = out.tsne.yv(i);
    p.kind = dataset[i].kind ? std::string(synthgen::to_string(*dataset[i].kind)) : "unknown";
    p.thumbnail_path = std::filesystem::path("thumbs") / (safe_file_stem(p.id) + ".png");
    thumbs.push_back(to_u8(imaging::resize_bilinear(dataset[i].image, 48, 48)));
    write_png(out_dir / p.thumbnail_path, thumbs.back());
    out.points.push_back(std::move(p));
  }

  out.scatter_path = out_dir / "scatter.jsonl";
  std::ofstream f(out.scatter_path);
  if (!f) throw std::runtime_error("cannot write " + out.scatter_path.string());
  for (const auto& p : out.points) f << to_json(p).dump() << '\n';
  f.close();

  out.plot_path = out_dir / "soxai.png";
  write_png(out.plot_path, render_scatter(out.points, thumbs));
  return out;
}

}  // namespace soldernet::soxai
