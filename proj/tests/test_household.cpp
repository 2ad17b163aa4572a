#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <sstream>

#include "actchain/household.hpp"
#include "test_support.hpp"

using namespace actchain;
using namespace actchain::testing;

namespace {

ChainStore store_of(std::vector<ActivityChain> chains) {
  ChainStore s;
  for (auto& c : chains) s.commit(std::move(c));
  return s;
}

}  // namespace

TEST_CASE("chain store keeps one chain per owner") {
  ChainStore s;
  s.commit({"p1", "hx", {act(ActivityType::home, 0, 100)}});
  CHECK_THROWS_AS(s.commit({"p1", "hx", {act(ActivityType::home, 0, 100)}}), std::invalid_argument);
  CHECK(s.find("p1") != nullptr);
  CHECK(s.find("p2") == nullptr);

  std::stringstream lines;
  lines << encode_chain_line(*s.find("p1")) << "\n\n";
  CHECK(ChainStore::from_jsonl(lines).chains() == s.chains());
  std::stringstream broken("{\"owner\":\n");
  CHECK_THROWS_AS(ChainStore::from_jsonl(broken), std::runtime_error);
}

TEST_CASE("chain store writer appends, indexes and truncates") {
  const auto dir = scratch_dir("writer");
  const auto path = dir / "chains.jsonl";
  std::mt19937_64 rng(81);
  const auto h = three_person_household();
  std::vector<ActivityChain> first = {random_chain(rng, h, "p1"), random_chain(rng, h, "p2")};
  auto h2 = three_person_household("hy");
  std::vector<ActivityChain> second = {random_chain(rng, h2, "p1")};
  std::uintmax_t after_first = 0;
  {
    ChainStoreWriter w(path);
    w.append(first);
    after_first = w.bytes();
    w.append(second);
    w.write_index();
    CHECK(w.lines() == 3);
    CHECK(w.bytes() == std::filesystem::file_size(path));
  }
  const auto idx = read_file(ChainStoreWriter::index_path(path));
  CHECK(idx == "household_id\tbyte_offset\tfirst_line\tline_count\nhx\t0\t0\t2\nhy\t" +
                   std::to_string(after_first) + "\t2\t1\n");
  {
    ChainStoreWriter w(path, after_first);
    CHECK(w.lines() == 2);
    CHECK(w.bytes() == after_first);
  }
  CHECK(std::filesystem::file_size(path) == after_first);
  CHECK_THROWS(ChainStoreWriter(dir / "missing.jsonl", std::uintmax_t{10}));
}

TEST_CASE("build_context: summaries, anchors and pending members") {
  const auto h = three_person_household();
  const auto store = store_of({
      {"p1", "hx", {act(ActivityType::home, 0, 420), act(ActivityType::buy_meals, 1110, 1170, {"p2", "p3"})}},
  });
  const auto ctx = build_context(store, h, "p2");
  REQUIRE(ctx.member_summaries.size() == 1);
  CHECK(ctx.member_summaries[0].agent_id == "p1");
  REQUIRE(ctx.anchors.size() == 1);
  CHECK(ctx.anchors[0].required_participants == std::vector<AgentId>{"p1", "p3"});
  REQUIRE(ctx.pending_members.size() == 1);
  CHECK(ctx.pending_members[0].agent_id == "p3");

  const auto text = render_context(ctx);
  CHECK(text.find("p1 (head)") != std::string::npos);
  CHECK(text.find("18:30-19:30") != std::string::npos);

  const auto empty = build_context(ChainStore{}, h, "p1");
  CHECK(empty.empty());
  CHECK(render_context(empty).empty());
  CHECK(empty.pending_members.size() == 2);
}

TEST_CASE("build_context merges the same joint activity claimed by two members") {
  const auto h = three_person_household();
  const auto store = store_of({
      {"p1", "hx", {act(ActivityType::buy_meals, 1110, 1170, {"p2", "p3"})}},
      {"p2", "hx", {act(ActivityType::buy_meals, 1110, 1170, {"p1", "p3"})}},
  });
  const auto ctx = build_context(store, h, "p3");
  REQUIRE(ctx.anchors.size() == 1);
  CHECK(ctx.anchors[0].required_participants == std::vector<AgentId>{"p1", "p2"});
  CHECK(ctx.pending_members.empty());
}

TEST_CASE("match_claim outcomes") {
  const auto claim = act(ActivityType::buy_meals, 1110, 1170, {"p2"});
  const ActivityChain good{"p2", "hx", {act(ActivityType::buy_meals, 1120, 1180, {"p1"})}};
  CHECK(match_claim("p1", claim, good).matched);
  CHECK(match_claim("p1", claim, good).deviation == 10);
  const ActivityChain late{"p2", "hx", {act(ActivityType::buy_meals, 1130, 1190, {"p1"})}};
  CHECK(match_claim("p1", claim, late).reason == "time outside tolerance");
  CHECK(match_claim("p1", claim, late, 20).matched);
  const ActivityChain solo{"p2", "hx", {act(ActivityType::buy_meals, 1110, 1170)}};
  CHECK(match_claim("p1", claim, solo).reason == "partner does not reciprocate participant");
  const ActivityChain other{"p2", "hx", {act(ActivityType::home, 1110, 1170, {"p1"})}};
  CHECK(match_claim("p1", claim, other).reason == "type mismatch");
  CHECK(match_claim("p1", claim, ActivityChain{"p2", "hx", {}}).reason == "partner chain is empty");
}

TEST_CASE("property: match_claim is symmetric when both sides reciprocate") {
  std::mt19937_64 rng(82);
  std::uniform_int_distribution<int> start(0, 1300), len(1, 120), jitter(-25, 25);
  for (int i = 0; i < 5000; ++i) {
    const int s = start(rng), e = s + len(rng);
    const int s2 = std::clamp(s + jitter(rng), 0, 1439);
    const int e2 = std::clamp(e + jitter(rng), s2 + 1, 1440);
    const auto a = act(ActivityType::recreational, s, e, {"p2"});
    const auto b = act(ActivityType::recreational, s2, e2, {"p1"});
    const bool ab = match_claim("p1", a, ActivityChain{"p2", "hx", {b}}).matched;
    const bool ba = match_claim("p2", b, ActivityChain{"p1", "hx", {a}}).matched;
    CHECK(ab == ba);
  }
}

TEST_CASE("reconcile snaps a near miss onto the committed window") {
  const auto h = three_person_household();
  auto store = store_of({{"p1", "hx", {act(ActivityType::buy_meals, 1110, 1170, {"p2"})}}});
  ActivityChain c{"p2", "hx", {act(ActivityType::home, 0, 600), act(ActivityType::buy_meals, 1150, 1210, {"p1"})}};
  const auto r = reconcile(c, store, h, ReconcilePolicy{});
  REQUIRE(r.log.size() == 1);
  CHECK(r.log[0].kind == RepairKind::snap);
  CHECK(r.chain.activities[1].start.value() == 1110);
  CHECK(validate_chain(r.chain, h).ok());
}

TEST_CASE("reconcile regenerates, then demotes") {
  const auto h = three_person_household();
  const ActivityChain committed{"p1", "hx", {act(ActivityType::buy_meals, 1110, 1170, {"p2"})}};
  const ActivityChain phantom{"p2", "hx", {act(ActivityType::recreational, 600, 700, {"p1"})}};

  SUBCASE("a regeneration that honors the anchor resolves everything") {
    auto store = store_of({committed});
    int calls = 0;
    const auto r = reconcile(phantom, store, h, ReconcilePolicy{}, [&](int attempt) {
      ++calls;
      CHECK(attempt == 1);
      return std::optional<ActivityChain>(
          ActivityChain{"p2", "hx", {act(ActivityType::buy_meals, 1110, 1170, {"p1"})}});
    });
    CHECK(calls == 1);
    CHECK(r.log.back().kind == RepairKind::regenerate);
    CHECK(store.find("p1")->activities[0].participants == std::vector<AgentId>{"p2"});
  }

  SUBCASE("without a regenerator both sides are demoted") {
    auto store = store_of({committed});
    const auto r = reconcile(phantom, store, h, ReconcilePolicy{});
    CHECK(r.chain.activities[0].participants.empty());
    CHECK(store.find("p1")->activities[0].participants.empty());
    int demotions = 0;
    for (const auto& e : r.log) demotions += e.kind == RepairKind::demote;
    CHECK(demotions == 2);
  }

  SUBCASE("regeneration budget is respected") {
    auto store = store_of({committed});
    int calls = 0;
    ReconcilePolicy policy;
    policy.max_regenerations = 2;
    reconcile(phantom, store, h, policy, [&](int) {
      ++calls;
      return std::optional<ActivityChain>(phantom);
    });
    CHECK(calls == 2);
  }

  SUBCASE("disabled policy leaves everything alone") {
    auto store = store_of({committed});
    ReconcilePolicy off;
    off.enabled = false;
    const auto r = reconcile(phantom, store, h, off);
    CHECK(r.chain == phantom);
    CHECK(r.log.empty());
    CHECK(*store.find("p1") == committed);
  }
}

TEST_CASE("property: reconciled households audit clean and stay valid") {
  std::mt19937_64 rng(83);
  for (int trial = 0; trial < 300; ++trial) {
    auto h = three_person_household("t" + std::to_string(trial));
    ChainStore store;
    for (const auto& m : h.members) {
      auto c = random_chain(rng, h, m.agent_id);
      auto r = reconcile(c, store, h, ReconcilePolicy{});
      REQUIRE(validate_chain(r.chain, h).ok());
      store.commit(std::move(r.chain));
    }
    for (const auto& c : store.chains()) CHECK(validate_chain(c, h).ok());
    const auto audit = audit_consistency(store, std::vector<Household>{h});
    CHECK(audit.inconsistent == 0);
  }
}

TEST_CASE("audit counts every claim from its owner's side") {
  const auto h = three_person_household();
  const auto store = store_of({
      {"p1", "hx", {act(ActivityType::buy_meals, 1110, 1170, {"p2", "p3"})}},
      {"p2", "hx", {act(ActivityType::buy_meals, 1115, 1170, {"p1"})}},
      {"p3", "hx", {act(ActivityType::school, 480, 900, {"q9"})}},
  });
  const auto audit = audit_consistency(store, std::vector<Household>{h});
  CHECK(audit.total() == 4);
  CHECK(audit.consistent == 2);  // p1->p2 and p2->p1
  std::stringstream csv;
  write_audit_csv(csv, audit);
  CHECK(csv.str().find("owner,activity_index,partner,matched,reason\n") == 0);
  CHECK(csv.str().find("p3,0,q9,false,partner not in household") != std::string::npos);
  CHECK(ConsistencyAudit{}.rate() == 1.0);
}
