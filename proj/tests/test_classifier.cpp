#include <doctest.h>

#include <atomic>
#include <cmath>
#include <fstream>
#include <thread>

#include "soldernet/classifier.hpp"
#include "support.hpp"

using namespace soldernet;
using namespace soldernet::classifier;
using synthgen::DefectKind;

namespace {

// Counts calls; the first `slow_calls` of them sleep for `slow`.
class CountingBackend final : public ScorerBackend {
 public:
  explicit CountingBackend(int slow_calls = 0, std::chrono::microseconds slow = {})
      : slow_calls_(slow_calls), slow_(slow) {}
  Confidence score(const NormalizedImage&) const override {
    const int i = calls.fetch_add(1);
    if (i < slow_calls_) std::this_thread::sleep_for(slow_);
    return Confidence(0.5);
  }
  std::string name() const override { return "counting"; }
  mutable std::atomic<int> calls{0};

 private:
  int slow_calls_;
  std::chrono::microseconds slow_;
};

class SleepingBackend final : public ScorerBackend {
 public:
  Confidence score(const NormalizedImage&) const override {
    std::this_thread::sleep_for(std::chrono::milliseconds(10));
    return Confidence(0.1);
  }
  std::string name() const override { return "sleeping"; }
};

class FailingBackend final : public ScorerBackend {
 public:
  Confidence score(const NormalizedImage&) const override {
    if (calls++ == 7) throw std::runtime_error("boom");
    return Confidence(0.0);
  }
  std::string name() const override { return "failing"; }
  mutable int calls = 0;
};

double sigmoid(double z) { return 1.0 / (1.0 + std::exp(-z)); }

void write_file(const std::filesystem::path& p, const std::string& text) {
  std::ofstream out(p);
  out << text;
}

}  // namespace

TEST_CASE("Confidence is confined to [0,1]") {
  CHECK(Confidence(0.0).value() == 0.0);
  CHECK(Confidence(1.0).value() == 1.0);
  CHECK_THROWS_AS(Confidence(-0.1), ValidationError);
  CHECK_THROWS_AS(Confidence(1.1), ValidationError);
  CHECK_THROWS_AS(Confidence(std::nan("")), ValidationError);
}

TEST_CASE("uniform grey has no structure") {
  const NormalizedImage grey(256, 256, 3, 0.5f);
  const auto counts = detect_features(grey);
  CHECK(counts.off_pad_mass == 0);
  CHECK(counts.boundary_roughness == 0);
  CHECK(counts.dark_patch == 0);
  CHECK(counts.thin_structure == 0);
  CHECK(counts.ripple_energy == 0);
  // Every phi is log(1 + 0) = 0, so only the bias remains.
  const double expected = sigmoid(-4.0);
  CHECK(reference_score(grey).value() == doctest::Approx(expected).epsilon(1e-12));
  CHECK(reference_score(grey).value() < 0.5);
}

TEST_CASE("feature_vector is log1p(count / 64)") {
  FeatureCounts c{64, 0, 128, 6.4, 1};
  const auto phi = feature_vector(c);
  CHECK(phi[0] == doctest::Approx(std::log(2.0)));
  CHECK(phi[1] == 0.0);
  CHECK(phi[2] == doctest::Approx(std::log(3.0)));
  CHECK(phi[3] == doctest::Approx(std::log(1.1)));
  CHECK(phi[4] == doctest::Approx(std::log1p(1.0 / 64)));
  const auto img = testing::normalized(testing::joint(4, DefectKind::burn).image);
  const auto f = feature_vector(detect_features(img));
  double z = ReferenceScorer::kBias;
  for (std::size_t k = 0; k < f.size(); ++k) z += ReferenceScorer::kWeights[k] * f[k];
  CHECK(reference_score(img).value() == doctest::Approx(sigmoid(z)).epsilon(1e-12));
  const auto hook = ReferenceScorer{}.features(img);
  REQUIRE(hook.has_value());
  CHECK(hook->size() == kNumReferenceFeatures);
}

TEST_CASE("golden confidences on seed 1") {
  const double clean = reference_score(testing::normalized(testing::joint(1, DefectKind::none).image)).value();
  const double splash = reference_score(testing::normalized(testing::joint(1, DefectKind::splash).image)).value();
  CHECK(clean < 0.5);
  CHECK(splash > 0.5);
}

TEST_CASE("each defect kind is detected on most seeds") {
  for (DefectKind k : synthgen::kDefectKinds) {
    int hits = 0;
    for (std::uint64_t seed = 0; seed < 20; ++seed)
      hits += reference_score(testing::normalized(testing::joint(seed, k).image)).value() >= 0.5;
    INFO(synthgen::to_string(k));
    CHECK(hits >= 16);
  }
  int false_alarms = 0;
  for (std::uint64_t seed = 0; seed < 40; ++seed)
    false_alarms += reference_score(testing::normalized(testing::joint(seed, DefectKind::none).image)).value() >= 0.5;
  CHECK(false_alarms <= 2);
}

TEST_CASE("larger splashes never lower the confidence") {
  for (std::uint64_t seed : {1ULL, 5ULL, 17ULL, 42ULL}) {
    const auto base = testing::joint(seed, DefectKind::none);
    const double cx = base.geometry.cx + base.geometry.pad_radius + 24;
    double prev = -1;
    for (double r : {3.0, 5.0, 7.0, 9.0, 11.0}) {
      ImageU8 img = base.image;
      synthgen::paint_solder_disc(img, nullptr, std::min(cx, 240.0), base.geometry.cy, r);
      const double c = reference_score(testing::normalized(img)).value();
      INFO("seed " << seed << " r " << r);
      CHECK(c >= prev);
      prev = c;
    }
  }
}

TEST_CASE("backends stay within [0,1] on 500 images") {
  const ReferenceScorer ref;
  const FunctionScorer mean_scorer([](const NormalizedImage& img) {
    double s = 0;
    for (float v : img.data) s += v;
    return s / img.data.size();
  });
  Rng rng(500);
  for (int i = 0; i < 500; ++i) {
    NormalizedImage img;
    if (i % 2 == 0) {
      img = testing::noise_image(rng.next());
    } else {
      const auto kind = static_cast<DefectKind>(rng.integer(0, 6));
      img = testing::normalized(testing::joint(rng.next(), kind).image);
    }
    for (const ScorerBackend* b : {static_cast<const ScorerBackend*>(&ref), static_cast<const ScorerBackend*>(&mean_scorer)}) {
      const double c = b->score(img).value();
      REQUIRE(c >= 0.0);
      REQUIRE(c <= 1.0);
    }
  }
}

TEST_CASE("load_external_scores") {
  testing::TempDir dir;
  write_file(dir / "one.jsonl", R"({"id":"a","confidence":0.91})" "\n");
  auto recs = load_external_scores(dir / "one.jsonl");
  REQUIRE(recs.size() == 1);
  CHECK(recs[0].id == "a");
  CHECK(recs[0].confidence.value() == 0.91);
  CHECK_FALSE(recs[0].oracle_label.has_value());

  write_file(dir / "empty.jsonl", "");
  CHECK(load_external_scores(dir / "empty.jsonl").empty());

  write_file(dir / "labels.jsonl", R"({"id":"a","confidence":0.2,"label":1})" "\n" R"({"id":"b","confidence":0.7,"label":0})" "\n");
  recs = load_external_scores(dir / "labels.jsonl");
  REQUIRE(recs.size() == 2);
  CHECK(recs[0].oracle_label == Label::defective);
  CHECK(recs[1].oracle_label == Label::non_defective);

  write_file(dir / "range.jsonl", R"({"id":"ok","confidence":0.5})" "\n" R"({"confidence":1.2})" "\n");
  try {
    load_external_scores(dir / "range.jsonl");
    FAIL("expected ValidationError");
  } catch (const ValidationError& e) {
    const std::string msg = e.what();
    CHECK(msg.find(":2") != std::string::npos);
    CHECK(msg.find("1.2") != std::string::npos);
  }

  write_file(dir / "bad.jsonl", R"({"id":"a","confidence":0.5})" "\n\n" "{oops\n");
  try {
    load_external_scores(dir / "bad.jsonl");
    FAIL("expected ValidationError");
  } catch (const ValidationError& e) {
    CHECK(std::string(e.what()).find(":3") != std::string::npos);
  }
}

TEST_CASE("save_scores round-trips") {
  testing::TempDir dir;
  std::vector<ScoreRecord> recs{{"x", Confidence(0.25), Label::defective}, {"y", Confidence(1.0), std::nullopt}};
  save_scores(recs, dir / "s.jsonl");
  const auto back = load_external_scores(dir / "s.jsonl");
  REQUIRE(back.size() == 2);
  CHECK(back[0].id == "x");
  CHECK(back[0].confidence == recs[0].confidence);
  CHECK(back[0].oracle_label == Label::defective);
  CHECK_FALSE(back[1].oracle_label.has_value());
}

TEST_CASE("latency harness runs 20 warmups then averages 100 runs") {
  // The first 20 calls sleep 20 ms; if any of them leaked into the mean it
  // would exceed 0.2 ms.
  const CountingBackend backend(20, std::chrono::milliseconds(20));
  const NormalizedImage img(256, 256, 3, 0.0f);
  const auto report = measure_latency(backend, img);
  CHECK(backend.calls == 120);
  CHECK(report.samples.size() == 100);
  CHECK(report.warmups == 20);
  CHECK(report.runs == 100);
  double sum = 0;
  for (double s : report.samples) sum += s;
  CHECK(report.mean_seconds == doctest::Approx(sum / 100).epsilon(1e-12));
  CHECK(report.mean_seconds < 0.0002);
}

TEST_CASE("latency of a 10 ms backend") {
  const SleepingBackend backend;
  const auto report = measure_latency(backend, NormalizedImage(256, 256, 3), 2, 10);
  CHECK(report.mean_seconds >= 0.010);
  CHECK(report.mean_seconds <= 0.020);
}

TEST_CASE("single run equals its sample") {
  const CountingBackend backend;
  const auto report = measure_latency(backend, NormalizedImage(256, 256, 3), 0, 1);
  CHECK(backend.calls == 1);
  REQUIRE(report.samples.size() == 1);
  CHECK(report.mean_seconds == report.samples[0]);
  CHECK_THROWS_AS(measure_latency(backend, NormalizedImage(256, 256, 3), 0, 0), ParameterError);
}

TEST_CASE("backend failure reports the invocation index") {
  const FailingBackend backend;
  try {
    measure_latency(backend, NormalizedImage(256, 256, 3));
    FAIL("expected LatencyError");
  } catch (const LatencyError& e) {
    CHECK(e.invocation_index == 7);
  }
}
