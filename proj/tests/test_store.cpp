#include <doctest.h>

#include <fstream>
#include <thread>

#include "soldernet/service/store.hpp"
#include "support.hpp"

using namespace soldernet;
using namespace soldernet::service;
using triage::TriageDecision;

namespace {

ServiceSettings fast() {
  ServiceSettings s;
  s.fsync = FsyncPolicy::never;
  return s;
}

void to_review(CaseStore& store, const std::string& id) {
  store.ingest(id, id + ".png", "ds", Label::defective, "splash");
  store.record_score(id, 0.5);
  store.record_triage(id, TriageDecision::possibly_defective);
}

std::size_t verdict_events(const std::filesystem::path& log) {
  std::size_t n = 0;
  for (const auto& e : read_log(log).events) n += e.kind == EventKind::verdict;
  return n;
}

}  // namespace

TEST_CASE("lifecycle through the store") {
  testing::TempDir dir;
  CaseStore store(dir.path(), fast());
  const auto c = store.ingest("a", "a.png", "ds-1", Label::non_defective, std::nullopt);
  CHECK(c.state == CaseState::pending);
  CHECK(store.record_score("a", 0.2).confidence == 0.2);
  const auto t = store.record_triage("a", TriageDecision::non_defective);
  CHECK(t.state == CaseState::auto_pass);
  CHECK(t.triage == TriageDecision::non_defective);
  CHECK(t.timestamps.contains("auto_pass"));
  CHECK(store.last_seq() == 3);

  CHECK_THROWS_AS(store.ingest("a", "a.png", "ds-1", std::nullopt, std::nullopt), ConflictError);
  CHECK_THROWS_AS(store.record_score("zzz", 0.1), NotFoundError);
  CHECK_THROWS_AS(store.record_score("a", 1.1), ValidationError);
  CHECK(store.last_seq() == 3);
}

TEST_CASE("verdicts") {
  testing::TempDir dir;
  CaseStore store(dir.path(), fast());
  to_review(store, "r");
  store.ingest("p", "p.png", "ds", Label::non_defective, std::nullopt);
  store.record_score("p", 0.1);
  store.record_triage("p", TriageDecision::non_defective);

  const auto res = store.submit_verdict({"r", Label::defective, "alice", "solder ball"});
  CHECK(res.created);
  CHECK(res.joint_case.state == CaseState::reviewed_defect);
  CHECK(res.joint_case.verdict == Label::defective);
  CHECK(res.joint_case.verdict_by == "alice");
  CHECK(res.joint_case.verdict_note == "solder ball");

  const auto seq = store.last_seq();
  const auto again = store.submit_verdict({"r", Label::defective, "alice", "solder ball"});
  CHECK_FALSE(again.created);
  CHECK(again.joint_case == res.joint_case);
  CHECK(store.last_seq() == seq);

  CHECK_THROWS_AS(store.submit_verdict({"r", Label::non_defective, "bob", std::nullopt}), ConflictError);
  CHECK_THROWS_AS(store.submit_verdict({"p", Label::defective, "alice", std::nullopt}), ConflictError);
  CHECK(store.get("p")->state == CaseState::auto_pass);
  CHECK_THROWS_AS(store.submit_verdict({"nobody", Label::defective, "alice", std::nullopt}), NotFoundError);
  CHECK_THROWS_AS(store.submit_verdict({"r", Label::defective, "", std::nullopt}), ValidationError);
  CHECK(store.last_seq() == seq);
  CHECK(verdict_events(store.log_path()) == 1);
}

TEST_CASE("rework") {
  testing::TempDir dir;
  CaseStore store(dir.path(), fast());
  store.ingest("d", "d.png", "ds", Label::defective, std::nullopt);
  store.record_score("d", 0.9);
  store.record_triage("d", TriageDecision::defective);
  CHECK(store.rework("d").state == CaseState::reworked);
  CHECK_THROWS_AS(store.rework("d"), ConflictError);
  to_review(store, "r");
  CHECK_THROWS_AS(store.rework("r"), ConflictError);
  store.submit_verdict({"r", Label::non_defective, "op", std::nullopt});
  CHECK_THROWS_AS(store.rework("r"), ConflictError);
  CHECK_THROWS_AS(store.rework("none"), NotFoundError);
}

TEST_CASE("concurrent verdicts admit exactly one winner") {
  for (int round = 0; round < 10; ++round) {
    testing::TempDir dir;
    CaseStore store(dir.path(), fast());
    to_review(store, "x");
    std::atomic<int> wins{0}, conflicts{0};
    std::vector<std::thread> threads;
    for (int t = 0; t < 8; ++t) {
      threads.emplace_back([&, t] {
        try {
          store.submit_verdict({"x", t % 2 ? Label::defective : Label::non_defective, "op" + std::to_string(t), std::nullopt});
          ++wins;
        } catch (const ConflictError&) {
          ++conflicts;
        }
      });
    }
    for (auto& th : threads) th.join();
    CHECK(wins == 1);
    CHECK(conflicts == 7);
    CHECK(verdict_events(store.log_path()) == 1);
    CHECK(replay_state(store.log_path()) == *store.snapshot());
  }
}

TEST_CASE("readers keep an immutable view") {
  testing::TempDir dir;
  CaseStore store(dir.path(), fast());
  to_review(store, "v");
  const auto before = store.snapshot();
  store.submit_verdict({"v", Label::defective, "op", std::nullopt});
  CHECK(before->at("v").state == CaseState::in_review);
  CHECK(store.snapshot()->at("v").state == CaseState::reviewed_defect);
  CHECK(store.snapshot() == store.snapshot());
}

TEST_CASE("reopening replays to the same state") {
  testing::TempDir dir;
  CaseMap live;
  {
    CaseStore store(dir.path(), fast());
    for (int i = 0; i < 30; ++i) {
      const std::string id = "c" + std::to_string(i);
      if (i % 3 == 0) {
        to_review(store, id);
        if (i % 2 == 0) store.submit_verdict({id, Label::defective, "op", std::nullopt});
      } else {
        store.ingest(id, id + ".png", "ds", std::nullopt, std::nullopt);
        store.record_score(id, 0.95);
        store.record_triage(id, TriageDecision::defective);
      }
    }
    live = *store.snapshot();
  }
  CaseStore reopened(dir.path(), fast());
  CHECK(*reopened.snapshot() == live);
  CHECK(replay_state(dir / "events.jsonl") == live);
}

TEST_CASE("snapshots") {
  testing::TempDir dir;
  ServiceSettings s = fast();
  s.snapshot_interval = 10;
  {
    CaseStore store(dir.path(), s);
    for (int i = 0; i < 7; ++i) to_review(store, "c" + std::to_string(i));  // 21 events
  }
  REQUIRE(std::filesystem::exists(dir / "snapshot.json"));
  nlohmann::json snap;
  {
    std::ifstream in(dir / "snapshot.json");
    snap = nlohmann::json::parse(in);
  }
  CHECK(snap["last_seq"] == 20);

  const auto full = replay_state(dir / "events.jsonl");
  {
    CaseStore store(dir.path(), s);
    CHECK(*store.snapshot() == full);
  }

  // A snapshot that agrees with the log is trusted for the prefix it covers.
  snap["cases"][0]["kind"] = "edited";
  {
    std::ofstream out(dir / "snapshot.json");
    out << snap.dump();
  }
  {
    CaseStore store(dir.path(), s);
    CHECK(store.get("c0")->kind == "edited");
  }

  // One pointing past the log, or a damaged one, is ignored.
  snap["last_seq"] = 9999;
  {
    std::ofstream out(dir / "snapshot.json");
    out << snap.dump();
  }
  {
    CaseStore store(dir.path(), s);
    CHECK(*store.snapshot() == full);
  }
  {
    std::ofstream out(dir / "snapshot.json");
    out << "{\"last_seq\": 3, \"cases\": [";
  }
  {
    CaseStore store(dir.path(), s);
    CHECK(*store.snapshot() == full);
  }
}
