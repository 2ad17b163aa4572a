#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <sstream>

#include "actchain/pipeline.hpp"
#include "actchain/roster.hpp"
#include "stub_server.hpp"
#include "test_support.hpp"

using namespace actchain;
using namespace actchain::testing;

namespace {

struct Inputs {
  std::vector<Household> roster;
  ReferenceStats stats;
  FewShotPool pool;
};

const Inputs& inputs() {
  static const Inputs in = [] {
    Inputs i;
    auto roster = read_roster_file(fixture_dir() / "roster.csv");
    roster.resize(40);
    i.roster = std::move(roster);
    i.stats = load_stats(fixture_dir() / "stats.json");
    auto ex = ingest_diary_file(fixture_dir() / "diaries.csv");
    i.pool.chains = std::move(ex.chains);
    i.pool.agents = std::move(ex.agents);
    return i;
  }();
  return in;
}

RunConfig mock_config() {
  RunConfig c;
  c.sample_size = member_count(inputs().roster);
  c.seed = 5;
  c.mock.seed = 5;
  c.mock.hallucination_rate = 0.3;
  c.mock.guidance_compliance = 0.9;
  return c;
}

RunResult run(const RunConfig& c, const std::filesystem::path& dir, RunOptions options = {}) {
  options.out_dir = dir;
  return run_generation(c, inputs().roster, inputs().stats, inputs().pool, options);
}

}  // namespace

TEST_CASE("config file parsing") {
  std::istringstream in(R"(# comment
[run]
seed = 11
sample_size = 20
feedback = false
roster = "people.csv"
out = /abs/out

[backend]
kind = "http"
endpoint_url = "http://localhost:9/v1"
model = "m"
timeout_s = 1.5

[mock]
length_bias = "3:1,4:1"
)");
  const auto cfg = parse_experiment_config(in, "/base", {"run.seed=12", "mock.hallucination_rate=0.25"});
  CHECK(cfg.run.seed == 12);
  CHECK(cfg.run.sample_size == 20);
  CHECK_FALSE(cfg.run.feedback_enabled);
  CHECK(cfg.run.reconcile_enabled);
  CHECK(cfg.paths.roster == std::filesystem::path("/base/people.csv"));
  CHECK(cfg.paths.out == std::filesystem::path("/abs/out"));
  CHECK(cfg.run.backend == BackendKind::http);
  CHECK(cfg.run.http.timeout.count() == 1500);
  CHECK(cfg.run.mock.hallucination_rate == 0.25);
  CHECK(cfg.run.mock.length_bias->probabilities()[2] == 0.5);

  auto bad = [](const std::string& text, std::vector<std::string> overrides = {}) {
    std::istringstream s(text);
    CHECK_THROWS_AS(parse_experiment_config(s, ".", overrides), ConfigError);
  };
  bad("[runn]\nseed = 1\n");
  bad("[run]\nsed = 1\n");
  bad("[run]\nseed = x\n");
  bad("[run]\nfeedback = maybe\n");
  bad("[backend]\nkind = grpc\n");
  bad("[run]\nconcurrency = 0\n");
  bad("[run]\nfew_shot = 1\n");
  bad("[run]\nmax_parse_retries = 16\n");
  bad("[mock]\nhallucination_rate = 2\n");
  bad("[run]\n", {"run.seed"});
  bad("[run]\n", {"nosection=1"});
}

TEST_CASE("fixture config loads") {
  const auto cfg = load_experiment_config(fixture_dir() / "run.toml");
  CHECK(cfg.run.backend == BackendKind::mock);
  CHECK(cfg.run.mock.hallucination_rate == 0.3);
  CHECK(std::filesystem::exists(cfg.paths.roster));
  CHECK(std::filesystem::exists(cfg.paths.stats));
}

TEST_CASE("agent sampling") {
  const auto& roster = inputs().roster;
  const auto a = sample_agents(roster, 30, 1);
  const auto b = sample_agents(roster, 30, 1);
  CHECK(a.sampled == b.sampled);
  CHECK(a.sampled.size() == 30);
  CHECK(a.sampled != sample_agents(roster, 30, 2).sampled);
  for (const auto& id : a.sampled) {
    CHECK(std::any_of(a.households.begin(), a.households.end(), [&](const Household& h) { return h.contains(id); }));
  }
  // households keep roster order
  std::size_t pos = 0;
  for (const auto& h : a.households) {
    while (pos < roster.size() && roster[pos].household_id != h.household_id) ++pos;
    CHECK(pos < roster.size());
  }
  CHECK_THROWS_AS(sample_agents(roster, 0, 1), std::invalid_argument);
  CHECK_THROWS_AS(sample_agents(roster, member_count(roster) + 1, 1), std::invalid_argument);
}

TEST_CASE("runs are deterministic and every chain validates") {
  const auto c = mock_config();
  const auto r1 = run(c, scratch_dir("det_a"));
  const auto r2 = run(c, scratch_dir("det_b"));
  CHECK(read_file(scratch_dir("det_a").parent_path() / "det_a" / kChainStoreFile) ==
        read_file(scratch_dir("det_b").parent_path() / "det_b" / kChainStoreFile));
  CHECK(r1.store.chains() == r2.store.chains());
  CHECK(r1.manifest.status == "complete");
  CHECK(r1.manifest.counts.generated == member_count(inputs().roster));
  for (const auto& h : inputs().roster) {
    for (const auto& m : h.members) {
      const auto* chain = r1.store.find(m.agent_id);
      REQUIRE(chain != nullptr);
      CHECK(validate_chain(*chain, h).ok());
    }
  }
}

TEST_CASE("byte-identical stores across two runs") {
  const auto c = mock_config();
  const auto a = scratch_dir("bytes_a"), b = scratch_dir("bytes_b");
  run(c, a);
  run(c, b);
  CHECK(read_file(a / kChainStoreFile) == read_file(b / kChainStoreFile));
  CHECK(read_file(a / "chains.jsonl.idx") == read_file(b / "chains.jsonl.idx"));
  CHECK(read_file(a / kRosterFile) == read_file(b / kRosterFile));
}

TEST_CASE("interrupted run resumes to the same bytes") {
  const auto c = mock_config();
  const auto full = scratch_dir("resume_full"), part = scratch_dir("resume_part");
  run(c, full);
  RunOptions stop;
  const auto households = inputs().roster.size();
  stop.stop_after_households = households / 2;
  const auto partial = run(c, part, stop);
  CHECK(partial.manifest.status == "running");
  CHECK(partial.manifest.households_completed == households / 2);
  // a torn write after the checkpoint is discarded on resume
  std::ofstream(part / kChainStoreFile, std::ios::app) << "{\"owner\":\"torn";
  RunOptions resume;
  resume.resume = true;
  const auto resumed = run(c, part, resume);
  CHECK(resumed.manifest.status == "complete");
  CHECK(read_file(full / kChainStoreFile) == read_file(part / kChainStoreFile));
  CHECK(read_file(full / "chains.jsonl.idx") == read_file(part / "chains.jsonl.idx"));
  const auto m_full = load_manifest(full / kManifestFile);
  const auto m_part = load_manifest(part / kManifestFile);
  CHECK(m_full.counts == m_part.counts);
  CHECK(m_full.feedback == m_part.feedback);

  auto other = c;
  other.seed = 99;
  CHECK_THROWS(run(other, part, resume));
}

TEST_CASE("member k sees exactly members 1..k-1") {
  const auto c = mock_config();
  std::map<HouseholdId, std::vector<AgentId>> generated;
  RunOptions options;
  options.on_context = [&](const SocioProfile& p, const HouseholdContext& ctx) {
    auto& before = generated[ctx.household_id];
    std::vector<AgentId> seen;
    for (const auto& m : ctx.member_summaries) seen.push_back(m.agent_id);
    CHECK(seen == before);
    before.push_back(p.agent_id);
  };
  run(c, scratch_dir("ordering"), options);
  for (const auto& h : inputs().roster) {
    std::vector<AgentId> expected;
    for (const auto* m : coordination_order(h)) expected.push_back(m->agent_id);
    CHECK(generated[h.household_id] == expected);
  }
}

TEST_CASE("concurrency does not change results when feedback is off") {
  auto c = mock_config();
  c.feedback_enabled = false;
  const auto serial = scratch_dir("conc_1"), parallel = scratch_dir("conc_4");
  run(c, serial);
  c.concurrency = 4;
  run(c, parallel);
  CHECK(read_file(serial / kChainStoreFile) == read_file(parallel / kChainStoreFile));
}

TEST_CASE("concurrent runs with feedback are deterministic") {
  auto c = mock_config();
  c.concurrency = 3;
  const auto a = scratch_dir("conc_fb_a"), b = scratch_dir("conc_fb_b");
  run(c, a);
  run(c, b);
  CHECK(read_file(a / kChainStoreFile) == read_file(b / kChainStoreFile));
}

TEST_CASE("reconciliation leaves no inconsistent claims") {
  const auto c = mock_config();
  const auto r = run(c, scratch_dir("reconciled"));
  const auto audit = audit_consistency(r.store, inputs().roster);
  CHECK(audit.total() > 0);
  CHECK(audit.inconsistent == 0);
}

TEST_CASE("http backend: malformed reply is retried with a corrective note") {
  const std::string valid = R"([{"type": 1, "start": "00:00", "end": "08:00", "participants": []},
                               {"type": 2, "start": "08:30", "end": "17:00", "participants": []}])";
  StubServer server({{200, StubServer::envelope("Sorry, here it is: [{\"type\": 1, \"start\": ")},
                     {200, StubServer::envelope(valid)}});
  Household solo{"solo", {make_profile("solo-1", Relationship::head)}};
  RunConfig c;
  c.backend = BackendKind::http;
  c.http.endpoint_url = server.url();
  c.http.model_name = "stub";
  c.http.backoff_base = std::chrono::milliseconds(1);
  c.sample_size = 1;
  const auto dir = scratch_dir("http_retry");
  RunOptions options;
  options.out_dir = dir;
  const auto r = run_generation(c, std::vector<Household>{solo}, inputs().stats, inputs().pool, options);
  CHECK(r.manifest.parse_retries.at("solo-1") == 1);
  CHECK(r.manifest.counts.parse_failures == 1);
  CHECK(r.manifest.counts.backend_calls == 2);
  REQUIRE(r.store.size() == 1);
  CHECK(r.store.chains()[0].activities.size() == 2);
  const auto seen = server.seen();
  REQUIRE(seen.size() == 2);
  const std::string retry_user = seen[1].body["messages"][1]["content"];
  CHECK(retry_user.find("invalid_json") != std::string::npos);
}

TEST_CASE("agents whose replies never parse are skipped with a reason") {
  StubServer server({{200, StubServer::envelope("I cannot help with that.")}});
  Household solo{"solo", {make_profile("solo-1", Relationship::head)}};
  RunConfig c;
  c.backend = BackendKind::http;
  c.http.endpoint_url = server.url();
  c.http.model_name = "stub";
  c.sample_size = 1;
  c.max_parse_retries = 2;
  RunOptions options;
  options.out_dir = scratch_dir("http_skip");
  const auto r = run_generation(c, std::vector<Household>{solo}, inputs().stats, inputs().pool, options);
  CHECK(r.store.empty());
  REQUIRE(r.manifest.skipped.size() == 1);
  CHECK(r.manifest.skipped[0].reason == "no_json_array");
  CHECK(server.seen().size() == 3);
}

TEST_CASE("manifest JSON round-trip") {
  const auto r = run(mock_config(), scratch_dir("manifest"));
  const auto j = r.manifest.to_json();
  CHECK(RunManifest::from_json(j).to_json() == j);
  CHECK(j["status"] == "complete");
}
