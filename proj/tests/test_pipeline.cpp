#include <doctest.h>

#include "soldernet/service/pipeline.hpp"
#include "support.hpp"

using namespace soldernet;
using namespace soldernet::service;
using classifier::FunctionScorer;

namespace {

ServiceSettings fast() {
  ServiceSettings s;
  s.fsync = FsyncPolicy::never;
  return s;
}

PipelineOptions options_in(const testing::TempDir& dir) {
  PipelineOptions o;
  o.artifacts_dir = dir / "artifacts";
  o.dataset_id = "ds-1";
  return o;
}

void check_invariants(const CaseMap& cases) {
  for (const auto& [id, c] : cases) {
    INFO(id);
    if (c.state == CaseState::in_review) {
      REQUIRE(c.explanation.has_value());
      CHECK(std::filesystem::exists(c.explanation->json_path));
      CHECK(std::filesystem::exists(c.explanation->overlay_path));
    } else {
      CHECK_FALSE(c.explanation.has_value());
    }
  }
}

}  // namespace

TEST_CASE("empty manifest") {
  testing::TempDir dir;
  CaseStore store(dir / "store", fast());
  const classifier::ReferenceScorer scorer;
  const auto s = run_pipeline({}, scorer, store, options_in(dir));
  CHECK(s.total == 0);
  CHECK(s.scored() == 0);
  CHECK(s.failed == 0);
  CHECK(s.explained == 0);
  CHECK(store.last_seq() == 0);
  CHECK(read_log(store.log_path()).events.empty());
}

TEST_CASE("a confidence of 0.5 goes to review with an explanation") {
  testing::TempDir dir;
  const auto m = synthgen::generate_dataset(1, 1.0, synthgen::uniform_kind_weights(), 3, dir / "data");
  CaseStore store(dir / "store", fast());
  const FunctionScorer half([](const NormalizedImage&) { return 0.5; });
  const auto s = run_pipeline(m, half, store, options_in(dir));
  CHECK(s.possibly_defective == 1);
  CHECK(s.explained == 1);
  const auto c = store.get(m.entries[0].id);
  REQUIRE(c.has_value());
  CHECK(c->state == CaseState::in_review);
  CHECK(c->confidence == 0.5);
  CHECK(c->dataset_id == "ds-1");
  CHECK(c->oracle_label == Label::defective);
  REQUIRE(c->explanation.has_value());
  CHECK(c->explanation->json_path == case_artifact_dir(dir / "artifacts", c->id) / "explanation.json");
  CHECK(std::filesystem::exists(c->explanation->json_path));
  CHECK(std::filesystem::exists(c->explanation->overlay_path));
}

TEST_CASE("unreadable images fail their case and the run continues") {
  testing::TempDir dir;
  auto m = synthgen::generate_dataset(4, 0.5, synthgen::uniform_kind_weights(), 8, dir / "data");
  m.entries[1].image_path = dir / "data" / "nope.png";
  m.entries[2].image_path = dir / "data" / "manifest.jsonl";
  CaseStore store(dir / "store", fast());
  const classifier::ReferenceScorer scorer;
  const auto s = run_pipeline(m, scorer, store, options_in(dir));
  CHECK(s.failed == 2);
  CHECK(s.scored() == 2);
  CHECK(store.get(m.entries[1].id)->state == CaseState::failed);
  CHECK(store.get(m.entries[1].id)->error.has_value());
  CHECK(store.get(m.entries[2].id)->state == CaseState::failed);
  CHECK(store.get(m.entries[0].id)->state != CaseState::failed);
}

TEST_CASE("external scores replace the backend's confidence") {
  testing::TempDir dir;
  const auto m = synthgen::generate_dataset(3, 0.5, synthgen::uniform_kind_weights(), 9, dir / "data");
  std::map<std::string, double> scores{{m.entries[0].id, 0.1}, {m.entries[1].id, 0.95}};
  CaseStore store(dir / "store", fast());
  const classifier::ReferenceScorer scorer;
  auto o = options_in(dir);
  o.external_scores = &scores;
  const auto s = run_pipeline(m, scorer, store, o);
  CHECK(store.get(m.entries[0].id)->confidence == 0.1);
  CHECK(store.get(m.entries[0].id)->state == CaseState::auto_pass);
  CHECK(store.get(m.entries[1].id)->state == CaseState::auto_defect);
  CHECK(store.get(m.entries[2].id)->state == CaseState::failed);
  CHECK(s.failed == 1);
}

TEST_CASE("a reference run conserves counts and replays exactly") {
  testing::TempDir dir;
  const auto m = synthgen::generate_dataset(40, 0.6, synthgen::uniform_kind_weights(), 21, dir / "data");
  CaseStore store(dir / "store", fast());
  const classifier::ReferenceScorer scorer;
  auto o = options_in(dir);
  o.thresholds = {0.2, 0.9};
  const auto s = run_pipeline(m, scorer, store, o);
  CHECK(s.total == 40);
  CHECK(s.failed == 0);
  CHECK(s.non_defective + s.possibly_defective + s.defective == 40);
  CHECK(s.explained == s.possibly_defective);

  const auto live = store.snapshot();
  std::size_t counts[3] = {0, 0, 0};
  for (const auto& [_, c] : *live) {
    counts[0] += c.state == CaseState::auto_pass;
    counts[1] += c.state == CaseState::in_review;
    counts[2] += c.state == CaseState::auto_defect;
    REQUIRE(c.confidence.has_value());
    CHECK(c.triage == triage::triage(classifier::Confidence(*c.confidence), o.thresholds));
  }
  CHECK(counts[0] == s.non_defective);
  CHECK(counts[1] == s.possibly_defective);
  CHECK(counts[2] == s.defective);
  check_invariants(*live);
  CHECK(replay_state(store.log_path()) == *live);
  CHECK(replay_state(store.log_path()) == replay_state(store.log_path()));

  // Re-running the manifest skips everything already ingested.
  const auto again = run_pipeline(m, scorer, store, o);
  CHECK(again.skipped == 40);
  CHECK(again.scored() == 0);
  CHECK(*store.snapshot() == *live);
}
