#include <doctest.h>

#include <cmath>

#include "soldernet/trust.hpp"
#include "support.hpp"

using namespace soldernet;
using namespace soldernet::trust;
using classifier::Confidence;
using classifier::ScoreRecord;

namespace {

const Label D = Label::defective;
const Label N = Label::non_defective;

// Straight from the definitions, without going through the library.
double brute_trust(double raw, Label oracle, double th, double alpha, double beta) {
  const bool pred_def = raw >= th;
  const double answer = pred_def ? raw : 1.0 - raw;
  const bool correct = pred_def == (oracle == D);
  return correct ? std::pow(answer, alpha) : std::pow(1.0 - answer, beta);
}

std::vector<ScoreRecord> random_records(Rng& rng, std::size_t n) {
  std::vector<ScoreRecord> r;
  for (std::size_t i = 0; i < n; ++i)
    r.push_back({"r" + std::to_string(i), Confidence(rng.uniform()), label_from_int(static_cast<int>(rng.integer(0, 1)))});
  return r;
}

}  // namespace

TEST_CASE("qa_trust examples") {
  CHECK(qa_trust(1.0, D, D) == 1.0);
  CHECK(qa_trust(1.0, D, N) == 0.0);
  CHECK(qa_trust(0.8, N, N) == 0.8);
  CHECK(qa_trust(0.8, N, D) == doctest::Approx(0.2));
  CHECK(qa_trust(0.5, D, D, {2.0, 1.0}) == 0.25);
  CHECK(qa_trust(0.5, D, N, {1.0, 3.0}) == 0.125);
  CHECK_THROWS_AS(qa_trust(1.5, D, D), ValidationError);
  CHECK_THROWS_AS(qa_trust(0.5, D, D, {0.0, 1.0}), ParameterError);
  CHECK_THROWS_AS(qa_trust(0.5, D, D, {1.0, -2.0}), ParameterError);
}

TEST_CASE("answer confidence flips for non-defective predictions") {
  CHECK(answer_confidence(0.9, D) == 0.9);
  CHECK(answer_confidence(0.1, N) == doctest::Approx(0.9));
}

TEST_CASE("qa_trust range and monotonicity") {
  Rng rng(8);
  for (int i = 0; i < 10000; ++i) {
    const double c = rng.uniform();
    const TrustParams p{rng.uniform(0.05, 5.0), rng.uniform(0.05, 5.0)};
    const Label pred = label_from_int(static_cast<int>(rng.integer(0, 1)));
    const Label oracle = label_from_int(static_cast<int>(rng.integer(0, 1)));
    const double t = qa_trust(c, pred, oracle, p);
    REQUIRE(t >= 0.0);
    REQUIRE(t <= 1.0);
    const double c2 = std::min(1.0, c + rng.uniform(0.0, 0.1));
    const double t2 = qa_trust(c2, pred, oracle, p);
    if (pred == oracle) REQUIRE(t2 >= t);
    else REQUIRE(t2 <= t);
  }
}

TEST_CASE("trust_matrix worked examples") {
  auto m = trust_matrix({{"a", Confidence(0.9), D}});
  CHECK(m.at(D, D) == doctest::Approx(0.9));
  CHECK_FALSE(m.at(D, N).has_value());
  CHECK_FALSE(m.at(N, D).has_value());
  CHECK_FALSE(m.at(N, N).has_value());
  CHECK(m.counts[1][1] == 1);

  m = trust_matrix({{"a", Confidence(1.0), D}, {"b", Confidence(0.0), N}});
  CHECK(m.at(D, D) == 1.0);
  CHECK(m.at(N, N) == 1.0);
  CHECK_FALSE(m.at(D, N).has_value());
  CHECK_FALSE(m.at(N, D).has_value());

  m = trust_matrix({{"a", Confidence(0.9), D}, {"b", Confidence(0.7), D}});
  CHECK(*m.at(D, D) == doctest::Approx(0.8).epsilon(1e-12));

  CHECK_THROWS_AS(trust_matrix({{"x", Confidence(0.2), std::nullopt}}), ValidationError);
}

TEST_CASE("NetTrustScore examples") {
  CHECK(net_trust_score({{"a", Confidence(1.0), D}, {"b", Confidence(0.0), N}, {"c", Confidence(1.0), D}}) == 1.0);
  // correct at 0.9; wrong with confidence 0.6 in the (defective) answer.
  CHECK(net_trust_score({{"a", Confidence(0.9), D}, {"b", Confidence(0.6), N}}) == doctest::Approx(0.65).epsilon(1e-12));
  CHECK(net_trust_score({{"a", Confidence(1.0), N}, {"b", Confidence(0.0), D}}) == 0.0);
  CHECK_THROWS_AS(net_trust_score({}), ParameterError);
}

TEST_CASE("NetTrustScore matches a brute-force mean") {
  Rng rng(31);
  for (int trial = 0; trial < 300; ++trial) {
    const auto recs = random_records(rng, static_cast<std::size_t>(rng.integer(1, 200)));
    const double th = rng.uniform(0.05, 0.95);
    const TrustParams p{rng.uniform(0.2, 3.0), rng.uniform(0.2, 3.0)};
    double sum = 0;
    for (const auto& r : recs) sum += brute_trust(r.confidence.value(), *r.oracle_label, th, p.alpha, p.beta);
    REQUIRE(std::abs(net_trust_score(recs, th, p) - sum / recs.size()) <= 1e-12);
  }
}

TEST_CASE("NetTrustScore is the count-weighted mean of the matrix") {
  Rng rng(32);
  for (int trial = 0; trial < 300; ++trial) {
    const auto recs = random_records(rng, static_cast<std::size_t>(rng.integer(1, 200)));
    const double th = rng.uniform(0.05, 0.95);
    const auto rep = trust_report(recs, th);
    double weighted = 0;
    std::size_t total = 0;
    for (int o = 0; o < 2; ++o) {
      for (int p = 0; p < 2; ++p) {
        const auto& cell = rep.matrix.cells[o][p];
        REQUIRE(cell.has_value() == (rep.matrix.counts[o][p] > 0));
        if (!cell) continue;
        REQUIRE(*cell >= 0.0);
        REQUIRE(*cell <= 1.0);
        weighted += *cell * rep.matrix.counts[o][p];
        total += rep.matrix.counts[o][p];
      }
    }
    REQUIRE(total == recs.size());
    REQUIRE(std::abs(rep.net_trust_score - weighted / total) <= 1e-9);
    REQUIRE(rep.n == recs.size());
  }
}

TEST_CASE("diagonal cells dominate off-diagonal ones") {
  Rng rng(500);
  for (int trial = 0; trial < 500; ++trial) {
    const auto recs = random_records(rng, static_cast<std::size_t>(rng.integer(1, 100)));
    const auto m = trust_matrix(recs, 0.5);
    for (Label o : {N, D}) {
      for (Label p : {N, D}) {
        const auto cell = m.at(o, p);
        if (!cell) continue;
        if (o == p) REQUIRE(*cell >= 0.5);
        else REQUIRE(*cell <= 0.5);
      }
    }
  }
}

TEST_CASE("TrustReport JSON keeps empty cells as null") {
  const auto j = to_json(trust_report({{"a", Confidence(0.9), D}}, 0.5, {2.0, 1.0}));
  CHECK(j["matrix"][0][0].is_null());
  CHECK(j["matrix"][1][1] == doctest::Approx(0.81));
  CHECK(j["counts"][1][1] == 1);
  CHECK(j["counts"][0][1] == 0);
  CHECK(j["n"] == 1);
  CHECK(j["params"]["alpha"] == 2.0);
  CHECK(j["net_trust_score"] == doctest::Approx(0.81));
}
