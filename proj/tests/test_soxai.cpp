#include <doctest.h>

#include <cmath>
#include <fstream>
#include <set>

#include <json.hpp>

#include "soldernet/soxai.hpp"
#include "support.hpp"

using namespace soldernet;
using namespace soldernet::soxai;
using synthgen::DefectKind;

namespace {

xai::Explanation full_mask_explanation() {
  xai::CriticalFactor f;
  f.cells = {{0, 0}};
  f.mask = Mask(256, 256);
  std::fill(f.mask.data.begin(), f.mask.data.end(), 1);
  f.heatmap.assign(256 * 256, 1.0f);
  xai::Explanation e;
  e.factors.push_back(f);
  return e;
}

Points gaussian_clusters(std::uint64_t seed, int per_cluster, std::vector<int>& labels) {
  Rng r(seed);
  Points pts;
  labels.clear();
  for (int c = 0; c < 3; ++c) {
    std::vector<double> mu(10, 0.0);
    mu[static_cast<std::size_t>(c)] = 10.0 / std::sqrt(2.0);
    for (int k = 0; k < per_cluster; ++k) {
      std::vector<double> v(10);
      for (int d = 0; d < 10; ++d) v[static_cast<std::size_t>(d)] = mu[static_cast<std::size_t>(d)] + r.normal();
      pts.push_back(v);
      labels.push_back(c);
    }
  }
  return pts;
}

double silhouette(const TsneResult& t, const std::vector<int>& labels, int k) {
  const std::size_t n = t.size();
  double total = 0;
  for (std::size_t i = 0; i < n; ++i) {
    std::vector<double> sum(static_cast<std::size_t>(k), 0.0);
    std::vector<int> cnt(static_cast<std::size_t>(k), 0);
    for (std::size_t j = 0; j < n; ++j) {
      if (i == j) continue;
      sum[static_cast<std::size_t>(labels[j])] += std::hypot(t.x(i) - t.x(j), t.yv(i) - t.yv(j));
      ++cnt[static_cast<std::size_t>(labels[j])];
    }
    const auto own = static_cast<std::size_t>(labels[i]);
    const double a = sum[own] / cnt[own];
    double b = 1e300;
    for (std::size_t c = 0; c < sum.size(); ++c)
      if (c != own) b = std::min(b, sum[c] / cnt[c]);
    total += (b - a) / std::max(a, b);
  }
  return total / static_cast<double>(n);
}

Points random_points(std::uint64_t seed, std::size_t n, std::size_t dim) {
  Rng r(seed);
  Points p(n, std::vector<double>(dim));
  for (auto& row : p)
    for (auto& v : row) v = r.normal();
  return p;
}

}  // namespace

TEST_CASE("embedding of an empty explanation") {
  const auto img = testing::noise_image(1);
  const auto e = embed_explanation(img, xai::Explanation{}, std::nullopt, "x");
  REQUIRE(e.vector.size() == kEmbeddingDims);
  CHECK(kEmbeddingDims == 91);
  CHECK(e.id == "x");
  for (std::size_t i = 0; i < kPooledDims + kHistogramDims; ++i) CHECK(e.vector[i] == 0.0);
  CHECK(e.vector[88] == 0.0);
  CHECK(e.vector[89] == 0.5);
  CHECK(e.vector[90] == 0.5);
}

TEST_CASE("embedding of a full mask on uniform grey") {
  const NormalizedImage grey(256, 256, 3, 0.5f);
  const auto e = embed_explanation(grey, full_mask_explanation());
  REQUIRE(e.vector.size() == 91);
  for (std::size_t i = 0; i < 64; ++i) CHECK(e.vector[i] == doctest::Approx(0.5).epsilon(1e-12));
  for (std::size_t ch = 0; ch < 3; ++ch)
    for (std::size_t b = 0; b < 8; ++b) CHECK(e.vector[64 + ch * 8 + b] == (b == 4 ? 1.0 : 0.0));
  CHECK(e.vector[88] == 1.0);
  CHECK(e.vector[89] == doctest::Approx(0.5).epsilon(1e-12));
  CHECK(e.vector[90] == doctest::Approx(0.5).epsilon(1e-12));
}

TEST_CASE("embedding components on a quadrant mask") {
  // Mask = top-left quadrant; image bright there (0.9) and dark elsewhere.
  NormalizedImage img(256, 256, 3, 0.1f);
  auto ex = full_mask_explanation();
  std::fill(ex.factors[0].mask.data.begin(), ex.factors[0].mask.data.end(), 0);
  for (int y = 0; y < 128; ++y)
    for (int x = 0; x < 128; ++x) {
      ex.factors[0].mask.at(x, y) = 1;
      for (int c = 0; c < 3; ++c) img.at(x, y, c) = 0.9f;
    }
  const auto e = embed_explanation(img, ex);
  for (int by = 0; by < 8; ++by)
    for (int bx = 0; bx < 8; ++bx)
      CHECK(e.vector[static_cast<std::size_t>(by * 8 + bx)] == doctest::Approx(bx < 4 && by < 4 ? 0.9 : 0.0).epsilon(1e-6));
  CHECK(e.vector[64 + 7] == 1.0);
  CHECK(e.vector[88] == 0.25);
  CHECK(e.vector[89] == doctest::Approx(0.25).epsilon(1e-12));
  CHECK(e.vector[90] == doctest::Approx(0.25).epsilon(1e-12));
}

TEST_CASE("embedding is deterministic and appends scorer features") {
  const auto s = testing::joint(3, DefectKind::splash);
  const auto img = testing::normalized(s.image);
  const classifier::ReferenceScorer scorer;
  const auto ex = xai::explain(img, scorer);
  const auto a = embed_explanation(img, ex);
  const auto b = embed_explanation(img, ex);
  CHECK(a.vector == b.vector);
  const auto with = embed_explanation(img, ex, scorer.features(img));
  CHECK(with.vector.size() == 96);
  CHECK(with.scorer_feature_dims == 5);
  CHECK(std::equal(a.vector.begin(), a.vector.end(), with.vector.begin()));
}

TEST_CASE("squared distances, parallel and serial") {
  const auto pts = random_points(4, 37, 6);
  const auto a = squared_distances(pts);
  const auto b = squared_distances_serial(pts);
  CHECK(a.v == b.v);
  for (std::size_t i = 0; i < pts.size(); ++i) {
    CHECK(a(i, i) == 0.0);
    for (std::size_t j = 0; j < pts.size(); ++j) {
      double d = 0;
      for (std::size_t k = 0; k < 6; ++k) d += (pts[i][k] - pts[j][k]) * (pts[i][k] - pts[j][k]);
      REQUIRE(a(i, j) == doctest::Approx(d).epsilon(1e-12));
    }
  }
}

TEST_CASE("joint probabilities are a calibrated symmetric distribution") {
  const auto pts = random_points(5, 50, 8);
  const double target = 12.0;
  const auto aff = joint_probabilities(pts, target);
  const std::size_t n = pts.size();
  double sum = 0;
  for (std::size_t i = 0; i < n; ++i) {
    CHECK(aff.p(i, i) == 0.0);
    for (std::size_t j = 0; j < n; ++j) {
      REQUIRE(aff.p(i, j) >= 0.0);
      REQUIRE(aff.p(i, j) == aff.p(j, i));
      sum += aff.p(i, j);
    }
  }
  CHECK(std::abs(sum - 1.0) <= 1e-9);

  // Recompute each row's perplexity from its precision.
  const auto d = squared_distances_serial(pts);
  for (std::size_t i = 0; i < n; ++i) {
    REQUIRE(std::abs(std::log2(aff.row_perplexity[i]) - std::log2(target)) <= 1e-3);
    double z = 0, h = 0;
    std::vector<double> w(n, 0.0);
    double dmin = 1e300;
    for (std::size_t j = 0; j < n; ++j)
      if (j != i) dmin = std::min(dmin, d(i, j));
    for (std::size_t j = 0; j < n; ++j)
      if (j != i) z += w[j] = std::exp(-aff.row_beta[i] * (d(i, j) - dmin));
    for (std::size_t j = 0; j < n; ++j) {
      if (j == i || w[j] == 0.0) continue;
      const double p = w[j] / z;
      h -= p * std::log(p);
    }
    REQUIRE(std::abs(std::log2(std::exp(h)) - std::log2(target)) <= 1e-3);
  }
  CHECK_THROWS_AS(joint_probabilities(pts, 0.0), ParameterError);
}

TEST_CASE("analytic gradient matches finite differences") {
  const auto pts = random_points(6, 10, 5);
  const auto aff = joint_probabilities(pts, 3.0);
  Rng r(7);
  Layout y(20);
  for (auto& v : y) v = r.normal();
  for (double exaggeration : {1.0, 4.0}) {
    Layout g;
    const double kl = kl_gradient(aff.p, y, exaggeration, g);
    CHECK(kl == doctest::Approx(kl_divergence(aff.p, y)).epsilon(1e-12));
    // The exaggerated update 4 sum (a p_ij - q_ij) w_ij (y_i - y_j) is the
    // gradient of -a sum p_ij log w_ij + log Z, with w the Student-t kernel.
    auto objective = [&](const Layout& yy) {
      const std::size_t n = 10;
      double attract = 0, z = 0;
      for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < n; ++j) {
          if (i == j) continue;
          const double dx = yy[2 * i] - yy[2 * j], dy = yy[2 * i + 1] - yy[2 * j + 1];
          const double w = 1.0 / (1.0 + dx * dx + dy * dy);
          z += w;
          attract -= exaggeration * aff.p(i, j) * std::log(w);
        }
      return attract + std::log(z);
    };
    double num = 0, den = 0;
    const double h = 1e-5;
    for (std::size_t k = 0; k < y.size(); ++k) {
      Layout yp = y, ym = y;
      yp[k] += h;
      ym[k] -= h;
      const double fd = (objective(yp) - objective(ym)) / (2 * h);
      num += (fd - g[k]) * (fd - g[k]);
      den += g[k] * g[k];
    }
    INFO("exaggeration " << exaggeration);
    CHECK(std::sqrt(num / den) <= 1e-4);
  }
  // And against the library's own KL at exaggeration 1.
  Layout g;
  kl_gradient(aff.p, y, 1.0, g);
  double worst = 0;
  for (std::size_t k = 0; k < y.size(); ++k) {
    Layout yp = y, ym = y;
    yp[k] += 1e-5;
    ym[k] -= 1e-5;
    const double fd = (kl_divergence(aff.p, yp) - kl_divergence(aff.p, ym)) / 2e-5;
    worst = std::max(worst, std::abs(fd - g[k]) / std::max(std::abs(g[k]), 1e-3));
  }
  CHECK(worst <= 1e-4);
}

TEST_CASE("gradient kernels agree bit for bit") {
  const auto pts = random_points(8, 64, 4);
  const auto aff = joint_probabilities(pts, 10.0);
  Rng r(9);
  Layout y(128);
  for (auto& v : y) v = r.normal();
  Layout a, b;
  const double ka = kl_gradient(aff.p, y, 12.0, a);
  const double kb = kl_gradient_serial(aff.p, y, 12.0, b);
  CHECK(ka == kb);
  CHECK(a == b);
}

TEST_CASE("two far groups of copies separate") {
  Points pts;
  for (int i = 0; i < 8; ++i) pts.push_back(std::vector<double>(5, i < 4 ? 0.0 : 10.0));
  const auto t = tsne(pts, {});
  CHECK(t.perplexity_used < 7.0 / 3.0);
  double cx[2] = {0, 0}, cy[2] = {0, 0};
  for (std::size_t i = 0; i < 8; ++i) {
    cx[i / 4] += t.x(i) / 4;
    cy[i / 4] += t.yv(i) / 4;
  }
  double within = 0;
  int pairs = 0;
  for (std::size_t i = 0; i < 8; ++i)
    for (std::size_t j = i + 1; j < 8; ++j)
      if (i / 4 == j / 4) {
        within += std::hypot(t.x(i) - t.x(j), t.yv(i) - t.yv(j));
        ++pairs;
      }
  within /= pairs;
  CHECK(std::hypot(cx[0] - cx[1], cy[0] - cy[1]) > 5 * within);
}

TEST_CASE("three Gaussian clusters come apart") {
  std::vector<int> labels;
  const auto pts = gaussian_clusters(5, 20, labels);
  const auto t = tsne(pts, {});
  CHECK(t.size() == 60);
  for (double v : t.y) REQUIRE(std::isfinite(v));
  CHECK(silhouette(t, labels, 3) >= 0.5);
  const auto again = tsne(pts, {});
  CHECK(again.y == t.y);
  TsneParams other;
  other.seed = 1;
  CHECK_FALSE(tsne(pts, other).y == t.y);
}

TEST_CASE("KL history on a 120-point fixture") {
  std::vector<int> labels;
  const auto pts = gaussian_clusters(11, 40, labels);
  const auto t = tsne(pts, {});
  const auto& h = t.kl_history;
  REQUIRE(h.size() == 1001);
  for (double v : h) REQUIRE(v >= 0.0);
  double prev = 1e300;
  for (int w = 250; w + 50 <= 1000; w += 50) {
    double s = 0;
    for (int i = w; i < w + 50; ++i) s += h[static_cast<std::size_t>(i)];
    s /= 50;
    INFO("window " << w);
    CHECK(s <= prev);
    prev = s;
  }
  CHECK(h.back() < 0.5 * h[250]);
}

TEST_CASE("t-SNE preconditions") {
  CHECK_THROWS_AS(tsne(random_points(1, 7, 3), {}), ParameterError);
  Points dup(8, std::vector<double>{1.0, 2.0});
  dup[0] = {5.0, 5.0};
  dup[1] = {9.0, 1.0};
  dup[2] = {3.0, -4.0};
  CHECK_NOTHROW(tsne(dup, {}));
  dup[2] = {1.0, 2.0};
  CHECK_THROWS_AS(tsne(dup, {}), ParameterError);
  auto bad = random_points(2, 10, 3);
  bad[4][1] = std::nan("");
  CHECK_THROWS_AS(tsne(bad, {}), ValidationError);
  bad[4][1] = INFINITY;
  CHECK_THROWS_AS(tsne(bad, {}), ValidationError);
  TsneParams p;
  p.iterations = 100;
  CHECK_THROWS_AS(tsne(random_points(2, 10, 3), p), ParameterError);
}

TEST_CASE("scatter export") {
  testing::TempDir dir;
  const classifier::ReferenceScorer scorer;
  std::vector<SoxaiInput> inputs;
  std::map<std::string, xai::Explanation> explanations;
  CHECK_THROWS_AS(export_soxai_scatter(inputs, explanations, {}, dir.path()), ParameterError);

  const DefectKind kinds[] = {DefectKind::splash, DefectKind::burn};
  for (int i = 0; i < 10; ++i) {
    const auto k = kinds[i % 2];
    const auto s = testing::joint(static_cast<std::uint64_t>(200 + i), k);
    SoxaiInput in{"case" + std::to_string(i), testing::normalized(s.image), k};
    explanations[in.id] = xai::explain(in.image, scorer);
    inputs.push_back(std::move(in));
  }
  inputs.push_back({"lonely", inputs[0].image, std::nullopt});
  inputs.push_back({"orphan", inputs[1].image, std::nullopt});
  try {
    export_soxai_scatter(inputs, explanations, {}, dir.path());
    FAIL("expected ValidationError");
  } catch (const ValidationError& e) {
    const std::string msg = e.what();
    CHECK(msg.find("lonely") != std::string::npos);
    CHECK(msg.find("orphan") != std::string::npos);
  }
  inputs.pop_back();
  explanations["lonely"] = explanations["case0"];

  TsneParams p;
  p.iterations = 300;
  const auto out = export_soxai_scatter(inputs, explanations, p, dir.path());
  REQUIRE(out.points.size() == 11);
  std::set<std::string> ids;
  for (const auto& pt : out.points) {
    CHECK(ids.insert(pt.id).second);
    CHECK(std::isfinite(pt.x));
    CHECK(pt.thumbnail_path.is_relative());
    CHECK(std::filesystem::exists(dir.path() / pt.thumbnail_path));
  }
  CHECK(out.points.back().kind == "unknown");
  CHECK(out.points.front().kind == "splash");
  CHECK(std::filesystem::exists(out.plot_path));
  std::ifstream in(out.scatter_path);
  std::string line;
  std::size_t lines = 0;
  while (std::getline(in, line)) {
    const auto j = nlohmann::json::parse(line);
    CHECK(j.contains("id"));
    CHECK(j.contains("x"));
    CHECK(j.contains("y"));
    CHECK(j.contains("kind"));
    CHECK(j.contains("thumbnail_path"));
    ++lines;
  }
  CHECK(lines == 11);
  for (const auto& e : out.embeddings) CHECK(e.vector.size() == kEmbeddingDims);
}
