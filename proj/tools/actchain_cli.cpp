#include <cstdio>
#include <fstream>
#include <iostream>

#include <CLI11.hpp>

#include "actchain/evaluation.hpp"
#include "actchain/household.hpp"
#include "actchain/pipeline.hpp"
#include "actchain/roster.hpp"
#include "actchain/stats.hpp"

namespace fs = std::filesystem;
using namespace actchain;

namespace {

// Usage problems map to exit code 1, everything else to 2.
struct UsageError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct GenerateFlags {
  std::string config;
  std::optional<std::uint64_t> seed;
  std::optional<std::size_t> sample_size;
  bool no_feedback = false;
  bool no_reconcile = false;
  std::optional<std::string> backend;
  std::optional<int> concurrency;
  std::optional<std::string> out;
  std::vector<std::string> set;
  bool resume = false;
};

void add_generate_flags(CLI::App* cmd, GenerateFlags& f) {
  cmd->add_option("--config", f.config, "Run config file ([run], [backend], [mock] sections)")->required();
  cmd->add_option("--seed", f.seed, "Agent sampling seed (run.seed); the mock draws from mock.seed");
  cmd->add_option("--sample-size", f.sample_size, "Agents to sample (run.sample_size)");
  cmd->add_flag("--no-feedback", f.no_feedback, "Disable chain-length feedback");
  cmd->add_flag("--no-reconcile", f.no_reconcile, "Disable household reconciliation");
  cmd->add_option("--backend", f.backend, "Backend kind")->check(CLI::IsMember({"http", "mock"}));
  cmd->add_option("--concurrency", f.concurrency, "Households generated at once");
  cmd->add_option("--out", f.out, "Output directory (run.out)");
  cmd->add_option("--set", f.set, "Config override section.key=value (repeatable)");
}

ExperimentConfig resolve_config(const GenerateFlags& f) {
  auto overrides = f.set;
  if (f.seed) overrides.push_back("run.seed=" + std::to_string(*f.seed));
  if (f.sample_size) overrides.push_back("run.sample_size=" + std::to_string(*f.sample_size));
  if (f.no_feedback) overrides.push_back("run.feedback=false");
  if (f.no_reconcile) overrides.push_back("run.reconcile=false");
  if (f.backend) overrides.push_back("backend.kind=" + *f.backend);
  if (f.concurrency) overrides.push_back("run.concurrency=" + std::to_string(*f.concurrency));
  if (f.out) overrides.push_back("run.out=" + *f.out);
  ExperimentConfig cfg;
  try {
    cfg = load_experiment_config(f.config, overrides);
  } catch (const ConfigError& e) {
    throw UsageError(e.what());
  }
  for (auto [name, path] : {std::pair{"run.roster", &cfg.paths.roster}, std::pair{"run.stats", &cfg.paths.stats},
                            std::pair{"run.examples", &cfg.paths.examples}, std::pair{"run.out", &cfg.paths.out}}) {
    if (path->empty()) throw UsageError(std::string("config is missing ") + name);
  }
  return cfg;
}

struct Inputs {
  std::vector<Household> roster;
  ReferenceStats stats;
  FewShotPool pool;
};

Inputs load_inputs(const ExperimentConfig& cfg) {
  Inputs in;
  in.roster = read_roster_file(cfg.paths.roster);
  in.stats = load_stats(cfg.paths.stats);
  auto examples = ingest_diary_file(cfg.paths.examples);
  in.pool.chains = std::move(examples.chains);
  in.pool.agents = std::move(examples.agents);
  return in;
}

int cmd_ingest(const std::string& diaries, const std::string& out_path) {
  auto ingest = ingest_diary_file(diaries);
  for (const auto& d : ingest.diagnostics) std::cerr << "warning: " << d << '\n';
  save_stats(ingest.stats, out_path);
  std::cout << "ingested " << ingest.chains.size() << " chains from " << ingest.rows_read << " rows ("
            << ingest.rows_skipped << " skipped) -> " << out_path << '\n';
  return 0;
}

int cmd_generate(const GenerateFlags& f) {
  const auto cfg = resolve_config(f);
  const auto in = load_inputs(cfg);
  RunOptions options;
  options.out_dir = cfg.paths.out;
  options.resume = f.resume;
  auto result = run_generation(cfg.run, in.roster, in.stats, in.pool, options);
  const auto& m = result.manifest;
  std::cout << "committed " << m.counts.generated << " chains (" << m.counts.sampled_generated << " of "
            << m.sampled_agents << " sampled agents), " << m.skipped.size() << " skipped, " << m.counts.snaps
            << " snaps, " << m.counts.regenerations << " regenerations, " << m.counts.demotions << " demotions -> "
            << (cfg.paths.out / kChainStoreFile).string() << '\n';
  return 0;
}

int cmd_evaluate(const std::string& chains_path, const std::string& stats_path, std::string roster_path,
                 const std::string& out_dir, bool all_timing) {
  const auto store = ChainStore::load_jsonl(chains_path);
  const auto reference = load_stats(stats_path);
  if (roster_path.empty()) roster_path = (fs::path(chains_path).parent_path() / kRosterFile).string();
  const auto roster = read_roster_file(roster_path);
  const auto profiles = profiles_of(roster);

  std::vector<ActivityType> timing(kTimingActivities.begin(), kTimingActivities.end());
  if (all_timing) {
    timing.clear();
    for (int code = 1; code <= kActivityTypeCount; ++code) timing.push_back(static_cast<ActivityType>(code));
  }
  auto report = evaluate(store, profiles, reference, roster, timing);
  const auto manifest_path = fs::path(chains_path).parent_path() / kManifestFile;
  if (fs::exists(manifest_path)) report.skipped_agents = load_manifest(manifest_path).skipped.size();

  fs::create_directories(out_dir);
  save_report(report, fs::path(out_dir) / "report.json");
  const auto files = emit_plot_data(chains_to_stats(store.chains(), profiles), reference, fs::path(out_dir) / "plots",
                                    timing);
  std::cout << "report -> " << (fs::path(out_dir) / "report.json").string() << ", " << files.size()
            << " plot panels\n";
  return 0;
}

int cmd_ablate(const GenerateFlags& f) {
  const auto cfg = resolve_config(f);
  const auto in = load_inputs(cfg);
  auto result = run_ablation(cfg.run, in.roster, in.stats, in.pool, cfg.paths.out);
  std::printf("%-10s %10s %10s\n", "dimension", "with", "without");
  for (auto dim : kDimensions) {
    const std::string d(dim);
    std::printf("%-10s %10.4f %10.4f\n", d.c_str(), result.with_feedback.jsd_by_dimension.at(d),
                result.without_feedback.jsd_by_dimension.at(d));
  }
  if (result.with_feedback.consistency && result.without_feedback.consistency) {
    std::printf("%-10s %9.1f%% %9.1f%%\n", "consistent", 100.0 * result.with_feedback.consistency->rate,
                100.0 * result.without_feedback.consistency->rate);
  }
  std::cout << "reports -> " << cfg.paths.out.string() << '\n';
  return 0;
}

int cmd_audit(const std::string& chains_path, std::string roster_path, const std::string& out_path, int tolerance) {
  const auto store = ChainStore::load_jsonl(chains_path);
  if (roster_path.empty()) roster_path = (fs::path(chains_path).parent_path() / kRosterFile).string();
  const auto roster = read_roster_file(roster_path);
  const auto audit = audit_consistency(store, roster, tolerance);
  std::ofstream out(out_path, std::ios::trunc);
  if (!out) throw std::runtime_error("cannot write " + out_path);
  write_audit_csv(out, audit);
  std::printf("consistent %llu (%.1f%%), inconsistent %llu (%.1f%%) -> %s\n",
              static_cast<unsigned long long>(audit.consistent), 100.0 * audit.rate(),
              static_cast<unsigned long long>(audit.inconsistent), 100.0 * (1.0 - audit.rate()), out_path.c_str());
  return 0;
}

int cmd_report(const std::string& report_path) {
  const auto r = load_report(report_path);
  std::printf("chains evaluated: %zu (skipped agents: %zu)\n", r.chains_evaluated, r.skipped_agents);
  std::printf("%-12s", "slice");
  for (auto d : kDimensions) std::printf(" %9s", std::string(d).c_str());
  std::printf("\n%-12s", "all");
  for (auto d : kDimensions) std::printf(" %9.4f", r.jsd_by_dimension.at(std::string(d)));
  std::printf("\n");
  for (const auto& [tag, dims] : r.slices) {
    std::printf("%-12s", tag.c_str());
    for (auto d : kDimensions) std::printf(" %9.4f", dims.at(std::string(d)));
    std::printf("\n");
  }
  for (const auto& [slug, t] : r.per_activity_timing) {
    std::printf("timing %-16s start %.4f end %.4f\n", slug.c_str(), t.start, t.end);
  }
  if (r.consistency) {
    std::printf("consistency: %llu consistent, %llu inconsistent (%.1f%%)\n",
                static_cast<unsigned long long>(r.consistency->consistent),
                static_cast<unsigned long long>(r.consistency->inconsistent), 100.0 * r.consistency->rate);
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Synthesize and evaluate household activity chains"};
  app.require_subcommand(1);

  std::string ingest_in, ingest_out;
  auto* ingest = app.add_subcommand("ingest", "Build reference statistics from a travel diary CSV");
  ingest->add_option("diaries", ingest_in, "Diary CSV")->required()->check(CLI::ExistingFile);
  ingest->add_option("-o,--out", ingest_out, "Statistics JSON to write")->required();

  GenerateFlags gen_flags;
  auto* generate = app.add_subcommand("generate", "Generate chains for a sampled roster");
  add_generate_flags(generate, gen_flags);
  generate->add_flag("--resume", gen_flags.resume, "Continue an interrupted run in the output directory");

  std::string eval_chains, eval_stats, eval_roster, eval_out = "eval";
  bool eval_all_timing = false;
  auto* evaluate_cmd = app.add_subcommand("evaluate", "Compare generated chains with reference statistics");
  evaluate_cmd->add_option("--chains", eval_chains, "Chain store (JSONL)")->required()->check(CLI::ExistingFile);
  evaluate_cmd->add_option("--stats", eval_stats, "Reference statistics JSON")->required()->check(CLI::ExistingFile);
  evaluate_cmd->add_option("--roster", eval_roster, "Roster CSV (default: roster.csv beside the chains)");
  evaluate_cmd->add_option("--out", eval_out, "Directory for report.json and plots/")->capture_default_str();
  evaluate_cmd->add_flag("--all-timing", eval_all_timing,
                         "Start/end timing panels for all 15 activity types (default: home, work, buy_meals)");

  GenerateFlags ablate_flags;
  auto* ablate = app.add_subcommand("ablate", "Paired runs with and without feedback and reconciliation");
  add_generate_flags(ablate, ablate_flags);

  std::string audit_chains, audit_roster, audit_out = "audit.csv";
  int audit_tolerance = kDefaultMatchTolerance;
  auto* audit = app.add_subcommand("audit", "Household consistency audit of joint activities");
  audit->add_option("--chains", audit_chains, "Chain store (JSONL)")->required()->check(CLI::ExistingFile);
  audit->add_option("--roster", audit_roster, "Roster CSV (default: roster.csv beside the chains)");
  audit->add_option("-o,--out", audit_out, "Audit CSV to write")->capture_default_str();
  audit->add_option("--tolerance", audit_tolerance, "Endpoint tolerance in minutes")->capture_default_str();

  std::string report_path;
  auto* report = app.add_subcommand("report", "Print a report.json as tables");
  report->add_option("report", report_path, "report.json")->required()->check(CLI::ExistingFile);

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return 1;
  }

  try {
    if (*ingest) return cmd_ingest(ingest_in, ingest_out);
    if (*generate) return cmd_generate(gen_flags);
    if (*evaluate_cmd) return cmd_evaluate(eval_chains, eval_stats, eval_roster, eval_out, eval_all_timing);
    if (*ablate) return cmd_ablate(ablate_flags);
    if (*audit) return cmd_audit(audit_chains, audit_roster, audit_out, audit_tolerance);
    if (*report) return cmd_report(report_path);
  } catch (const UsageError& e) {
    std::cerr << "actchain: " << e.what() << '\n';
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "actchain: " << e.what() << '\n';
    return 2;
  }
  return 1;
}
