#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "actchain/csv.hpp"
#include "actchain/evaluation.hpp"
#include "actchain/roster.hpp"
#include "test_support.hpp"

using namespace actchain;
using namespace actchain::testing;

namespace {

struct Generated {
  std::vector<Household> roster;
  ReferenceStats reference;
  FewShotPool pool;
  RunResult run;
};

const Generated& generated() {
  static const Generated g = [] {
    Generated out;
    out.roster = read_roster_file(fixture_dir() / "roster.csv");
    out.roster.resize(60);
    out.reference = load_stats(fixture_dir() / "stats.json");
    auto ex = ingest_diary_file(fixture_dir() / "diaries.csv");
    out.pool.chains = std::move(ex.chains);
    out.pool.agents = std::move(ex.agents);
    RunConfig c;
    c.sample_size = member_count(out.roster);
    c.mock.seed = 1;
    c.mock.hallucination_rate = 0.3;
    RunOptions o;
    o.out_dir = scratch_dir("eval_run");
    out.run = run_generation(c, out.roster, out.reference, out.pool, o);
    return out;
  }();
  return g;
}

struct Panel {
  std::vector<std::string> labels;
  std::vector<double> reference, generated;
};

Panel read_panel(const std::filesystem::path& p) {
  std::ifstream in(p);
  std::string line;
  std::getline(in, line);
  REQUIRE(line == kPlotHeader);
  Panel out;
  while (std::getline(in, line)) {
    const auto f = split_csv_line(line);
    REQUIRE(f.size() == 3);
    out.labels.push_back(f[0]);
    out.reference.push_back(std::stod(f[1]));
    out.generated.push_back(std::stod(f[2]));
  }
  return out;
}

}  // namespace

TEST_CASE("self-comparison is zero") {
  const auto& g = generated();
  const auto profiles = profiles_of(g.roster);
  const auto self = chains_to_stats(g.run.store.chains(), profiles);
  const auto report = evaluate(g.run.store, profiles, self);
  REQUIRE(report.jsd_by_dimension.size() == 5);
  for (const auto& [dim, v] : report.jsd_by_dimension) CHECK(v == 0.0);
  for (const auto& [tag, dims] : report.slices)
    for (const auto& [dim, v] : dims) CHECK(v == 0.0);
  for (const auto& [slug, t] : report.per_activity_timing) {
    CHECK(t.start == 0.0);
    CHECK(t.end == 0.0);
  }
  for (const auto& [pair, row] : report.joint_rate_jsd)
    for (const auto& [slug, v] : row) CHECK(v == 0.0);
}

TEST_CASE("report divergences equal recomputation from the plot CSVs") {
  const auto& g = generated();
  const auto profiles = profiles_of(g.roster);
  const auto stats = chains_to_stats(g.run.store.chains(), profiles);
  const auto report = evaluate(g.run.store, profiles, g.reference, g.roster);
  const auto dir = scratch_dir("plots");
  const auto files = emit_plot_data(stats, g.reference, dir);
  CHECK(files.size() == 5 + 5 * report.slices.size() + 2 * kTimingActivities.size() + 3);

  auto check_panel = [&](const std::string& name, double reported) {
    INFO(name);
    const auto p = read_panel(dir / (name + ".csv"));
    CHECK(std::abs(brute_force_jsd(p.generated, p.reference) - reported) <= 1e-12);
  };
  for (const auto& dim : kDimensions) check_panel(std::string(dim), report.jsd_by_dimension.at(std::string(dim)));
  for (const auto& [tag, dims] : report.slices)
    for (const auto& dim : kDimensions) check_panel("slice_" + tag + "_" + std::string(dim), dims.at(std::string(dim)));
  for (const auto& [slug, t] : report.per_activity_timing) {
    check_panel("activity_" + slug + "_start", t.start);
    check_panel("activity_" + slug + "_end", t.end);
  }
  const auto length = read_panel(dir / "length.csv");
  CHECK(length.labels.front() == "1");
  CHECK(length.labels.back() == "13+");
  CHECK(read_panel(dir / "duration.csv").labels.back() == "840+");
  CHECK(read_panel(dir / "start.csv").labels[9] == "09:00-10:00");
  CHECK(read_panel(dir / "joint_head-spouse.csv").labels.size() == 15);
}

TEST_CASE("slice divergences use only owners carrying the tag") {
  const auto& g = generated();
  const auto profiles = profiles_of(g.roster);
  const auto report = evaluate(g.run.store, profiles, g.reference);
  for (const auto& [tag, dims] : report.slices) {
    std::vector<ActivityChain> members;
    for (const auto& c : g.run.store.chains()) {
      const auto tags = group_tags(profiles.at(c.owner));
      if (std::find(tags.begin(), tags.end(), tag) != tags.end()) members.push_back(c);
    }
    REQUIRE_FALSE(members.empty());
    const auto only = chains_to_stats(members, profiles);
    const auto expect = compare_dimensions(only, g.reference.per_group.at(tag));
    CHECK(dims == expect);
  }
}

TEST_CASE("consistency summary and JSON round-trip") {
  const auto& g = generated();
  const auto profiles = profiles_of(g.roster);
  const auto report = evaluate(g.run.store, profiles, g.reference, g.roster);
  REQUIRE(report.consistency);
  CHECK(report.consistency->inconsistent == 0);
  CHECK(report.chains_evaluated == g.run.store.size());
  const auto back = EvalReport::from_json(report.to_json());
  CHECK(back.to_json() == report.to_json());
  const auto dir = scratch_dir("report_json");
  save_report(report, dir / "report.json");
  CHECK(load_report(dir / "report.json").to_json() == report.to_json());
  CHECK_THROWS_AS(evaluate(ChainStore{}, profiles, g.reference), std::invalid_argument);
}

TEST_CASE("one-sided empty timing counts diverge fully") {
  auto h = three_person_household();
  ProfileMap profiles;
  for (const auto& m : h.members) profiles[m.agent_id] = m;
  const std::vector<ActivityChain> a = {{"p1", "hx", {act(ActivityType::work, 480, 1020)}}};
  const std::vector<ActivityChain> b = {{"p1", "hx", {act(ActivityType::home, 0, 1440)}}};
  const auto report = compare_stats(chains_to_stats(a, profiles), chains_to_stats(b, profiles));
  CHECK(report.per_activity_timing.at("work").start == 1.0);
  CHECK(report.per_activity_timing.at("home").end == 1.0);
  CHECK(report.per_activity_timing.count("buy_meals") == 0);
  CHECK(report.jsd_by_dimension.at("type") == 1.0);
}

TEST_CASE("ablation writes both arms and the deltas") {
  const auto& g = generated();
  RunConfig c;
  c.sample_size = member_count(g.roster);
  c.mock.seed = 2;
  c.mock.hallucination_rate = 0.3;
  const auto dir = scratch_dir("ablation");
  const auto r = run_ablation(c, g.roster, g.reference, g.pool, dir);
  for (const auto* arm : {"with", "without"}) {
    CHECK(std::filesystem::exists(dir / arm / kChainStoreFile));
    CHECK(std::filesystem::exists(dir / arm / "report.json"));
    CHECK(std::filesystem::exists(dir / arm / "plots" / "length.csv"));
  }
  CHECK(std::filesystem::exists(dir / "ablation.json"));
  const double d = r.deltas["jsd_by_dimension"]["length"];
  CHECK(d == doctest::Approx(r.without_feedback.jsd_by_dimension.at("length") -
                             r.with_feedback.jsd_by_dimension.at("length")));
  REQUIRE(r.with_feedback.consistency);
  REQUIRE(r.without_feedback.consistency);
  CHECK(r.with_feedback.consistency->rate > r.without_feedback.consistency->rate);
}
