#include "actchain/evaluation.hpp"

#include <cstdio>
#include <fstream>

#include "actchain/feedback.hpp"
#include "actchain/roster.hpp"

namespace actchain {
namespace {

namespace fs = std::filesystem;

constexpr const char* kReportSchema = "actchain.eval_report/1";

// Divergence of two count vectors; nullopt when both are empty, 1 when only one is.
template <typename Counts>
std::optional<double> count_jsd(const Counts& a, const Counts& b) {
  const auto pa = Distribution::from_counts(a);
  const auto pb = Distribution::from_counts(b);
  const bool ea = !pa.is_normalized();
  const bool eb = !pb.is_normalized();
  if (ea && eb) return std::nullopt;
  if (ea || eb) return 1.0;
  return jsd(pa, pb);
}

std::string fmt(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

fs::path write_panel(const fs::path& dir, const std::string& name, const std::vector<std::string>& labels,
                     const std::vector<double>& reference, const std::vector<double>& generated) {
  const auto path = dir / (name + ".csv");
  std::ofstream out(path, std::ios::trunc | std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << kPlotHeader << '\n';
  for (std::size_t i = 0; i < labels.size(); ++i) {
    out << labels[i] << ',' << fmt(reference[i]) << ',' << fmt(generated[i]) << '\n';
  }
  if (!out.flush()) throw std::runtime_error("failed writing " + path.string());
  return path;
}

template <typename Counts>
std::vector<double> probs(const Counts& c) {
  return Distribution::from_counts(c).probabilities();
}

void write_bundle_panels(const fs::path& dir, const std::string& prefix, const StatsBundle& gen,
                         const StatsBundle& ref, std::vector<fs::path>& files) {
  files.push_back(write_panel(dir, prefix + "type", type_bin_labels(), probs(ref.type_counts), probs(gen.type_counts)));
  files.push_back(
      write_panel(dir, prefix + "start", time_bin_labels(), probs(ref.start_hist.counts), probs(gen.start_hist.counts)));
  files.push_back(
      write_panel(dir, prefix + "end", time_bin_labels(), probs(ref.end_hist.counts), probs(gen.end_hist.counts)));
  files.push_back(write_panel(dir, prefix + "duration", duration_bin_labels(), probs(ref.duration_hist.counts),
                              probs(gen.duration_hist.counts)));
  files.push_back(
      write_panel(dir, prefix + "length", length_bin_labels(), probs(ref.length_counts), probs(gen.length_counts)));
}

nlohmann::json dims_json(const DimensionJsd& d) {
  auto j = nlohmann::json::object();
  for (const auto& [k, v] : d) j[k] = v;
  return j;
}

// b - a for every number present in both documents.
nlohmann::json diff_numbers(const nlohmann::json& a, const nlohmann::json& b) {
  if (a.is_number() && b.is_number()) return b.get<double>() - a.get<double>();
  if (a.is_object() && b.is_object()) {
    auto out = nlohmann::json::object();
    for (auto it = a.begin(); it != a.end(); ++it) {
      if (!b.contains(it.key())) continue;
      auto d = diff_numbers(it.value(), b.at(it.key()));
      if (!d.is_null()) out[it.key()] = std::move(d);
    }
    return out.empty() ? nlohmann::json(nullptr) : out;
  }
  return nullptr;
}

}  // namespace

std::vector<std::string> time_bin_labels() {
  std::vector<std::string> out;
  for (int b = 0; b < kTimeBins; ++b) {
    char buf[16];
    std::snprintf(buf, sizeof(buf), "%02d:00-%02d:00", b, b + 1);
    out.emplace_back(buf);
  }
  return out;
}

std::vector<std::string> duration_bin_labels() {
  std::vector<std::string> out;
  for (int b = 0; b < kDurationBins - 1; ++b) out.push_back(std::to_string(b * 30) + "-" + std::to_string(b * 30 + 30));
  out.push_back(std::to_string((kDurationBins - 1) * 30) + "+");
  return out;
}

std::vector<std::string> length_bin_labels() {
  std::vector<std::string> out;
  for (int b = 0; b < kLengthBins; ++b) out.push_back(length_bin_label(b));
  return out;
}

std::vector<std::string> type_bin_labels() {
  std::vector<std::string> out;
  for (int c = 1; c <= kActivityTypeCount; ++c) out.push_back(activity_slug(static_cast<ActivityType>(c)));
  return out;
}

DimensionJsd compare_dimensions(const StatsBundle& g, const StatsBundle& r) {
  DimensionJsd d;
  d["type"] = count_jsd(g.type_counts, r.type_counts).value_or(0.0);
  d["start"] = count_jsd(g.start_hist.counts, r.start_hist.counts).value_or(0.0);
  d["end"] = count_jsd(g.end_hist.counts, r.end_hist.counts).value_or(0.0);
  d["duration"] = count_jsd(g.duration_hist.counts, r.duration_hist.counts).value_or(0.0);
  d["length"] = count_jsd(g.length_counts, r.length_counts).value_or(0.0);
  return d;
}

EvalReport compare_stats(const ReferenceStats& generated, const ReferenceStats& reference,
                         std::span<const ActivityType> timing_activities) {
  EvalReport report;
  report.chains_evaluated = generated.chain_count;
  report.jsd_by_dimension = compare_dimensions(generated, reference);
  for (const auto& [tag, ref_bundle] : reference.per_group) {
    auto it = generated.per_group.find(tag);
    if (it == generated.per_group.end()) continue;
    report.slices[tag] = compare_dimensions(it->second, ref_bundle);
  }
  for (auto t : timing_activities) {
    const int i = activity_index(t);
    auto s = count_jsd(generated.type_start_counts[i], reference.type_start_counts[i]);
    auto e = count_jsd(generated.type_end_counts[i], reference.type_end_counts[i]);
    if (s && e) report.per_activity_timing[activity_slug(t)] = TimingJsd{*s, *e};
  }
  for (auto pair : kRelationPairs) {
    const int p = static_cast<int>(pair);
    auto& row = report.joint_rate_jsd[std::string(relation_pair_name(pair))];
    for (int t = 0; t < kActivityTypeCount; ++t) {
      const auto gt = generated.joint_totals[p][t];
      const auto rt = reference.joint_totals[p][t];
      if (gt == 0 && rt == 0) continue;
      const auto slug = activity_slug(static_cast<ActivityType>(t + 1));
      if (gt == 0 || rt == 0) {
        row[slug] = 1.0;
        continue;
      }
      const std::array<std::uint64_t, 2> g{generated.joint_counts[p][t], gt - generated.joint_counts[p][t]};
      const std::array<std::uint64_t, 2> r{reference.joint_counts[p][t], rt - reference.joint_counts[p][t]};
      row[slug] = *count_jsd(g, r);
    }
  }
  return report;
}

EvalReport evaluate(const ChainStore& generated, const ProfileMap& profiles, const ReferenceStats& reference,
                    std::span<const Household> households, std::span<const ActivityType> timing_activities) {
  if (generated.empty()) throw std::invalid_argument("evaluate: chain store is empty");
  const auto stats = chains_to_stats(generated.chains(), profiles);
  auto report = compare_stats(stats, reference, timing_activities);
  if (!households.empty()) {
    const auto audit = audit_consistency(generated, households);
    report.consistency = ConsistencySummary{audit.consistent, audit.inconsistent, audit.rate()};
  }
  return report;
}

std::vector<fs::path> emit_plot_data(const ReferenceStats& generated, const ReferenceStats& reference,
                                     const fs::path& out_dir, std::span<const ActivityType> timing_activities) {
  fs::create_directories(out_dir);
  std::vector<fs::path> files;
  write_bundle_panels(out_dir, "", generated, reference, files);
  for (const auto& [tag, ref_bundle] : reference.per_group) {
    auto it = generated.per_group.find(tag);
    if (it == generated.per_group.end()) continue;
    write_bundle_panels(out_dir, "slice_" + tag + "_", it->second, ref_bundle, files);
  }
  for (auto t : timing_activities) {
    const int i = activity_index(t);
    const auto slug = activity_slug(t);
    files.push_back(write_panel(out_dir, "activity_" + slug + "_start", time_bin_labels(),
                                probs(reference.type_start_counts[i]), probs(generated.type_start_counts[i])));
    files.push_back(write_panel(out_dir, "activity_" + slug + "_end", time_bin_labels(),
                                probs(reference.type_end_counts[i]), probs(generated.type_end_counts[i])));
  }
  for (auto pair : kRelationPairs) {
    const int p = static_cast<int>(pair);
    std::vector<double> ref(kActivityTypeCount), gen(kActivityTypeCount);
    for (int t = 0; t < kActivityTypeCount; ++t) {
      ref[t] = reference.joint_rates[p][t];
      gen[t] = generated.joint_rates[p][t];
    }
    files.push_back(write_panel(out_dir, "joint_" + std::string(relation_pair_name(pair)), type_bin_labels(), ref, gen));
  }
  return files;
}

nlohmann::json EvalReport::to_json() const {
  nlohmann::json j;
  j["schema"] = kReportSchema;
  j["chains_evaluated"] = chains_evaluated;
  j["skipped_agents"] = skipped_agents;
  j["jsd_by_dimension"] = dims_json(jsd_by_dimension);
  auto slices_json = nlohmann::json::object();
  for (const auto& [tag, d] : slices) slices_json[tag] = dims_json(d);
  j["slices"] = slices_json;
  auto timing = nlohmann::json::object();
  for (const auto& [slug, t] : per_activity_timing) timing[slug] = {{"start", t.start}, {"end", t.end}};
  j["per_activity_timing"] = timing;
  auto joint = nlohmann::json::object();
  for (const auto& [pair, row] : joint_rate_jsd) {
    auto r = nlohmann::json::object();
    for (const auto& [slug, v] : row) r[slug] = v;
    joint[pair] = r;
  }
  j["joint_rate_jsd"] = joint;
  if (consistency) {
    j["consistency"] = {{"consistent", consistency->consistent},
                        {"inconsistent", consistency->inconsistent},
                        {"rate", consistency->rate}};
  } else {
    j["consistency"] = nullptr;
  }
  return j;
}

EvalReport EvalReport::from_json(const nlohmann::json& j) {
  if (j.value("schema", "") != kReportSchema) throw std::runtime_error("not an evaluation report");
  EvalReport r;
  r.chains_evaluated = j.at("chains_evaluated").get<std::size_t>();
  r.skipped_agents = j.at("skipped_agents").get<std::size_t>();
  r.jsd_by_dimension = j.at("jsd_by_dimension").get<DimensionJsd>();
  r.slices = j.at("slices").get<std::map<std::string, DimensionJsd>>();
  for (const auto& [slug, t] : j.at("per_activity_timing").items()) {
    r.per_activity_timing[slug] = TimingJsd{t.at("start").get<double>(), t.at("end").get<double>()};
  }
  r.joint_rate_jsd = j.at("joint_rate_jsd").get<std::map<std::string, std::map<std::string, double>>>();
  if (const auto& c = j.at("consistency"); !c.is_null()) {
    r.consistency = ConsistencySummary{c.at("consistent").get<std::uint64_t>(), c.at("inconsistent").get<std::uint64_t>(),
                                       c.at("rate").get<double>()};
  }
  return r;
}

void save_report(const EvalReport& report, const fs::path& path) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << report.to_json().dump(2) << '\n';
}

EvalReport load_report(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open report " + path.string());
  auto j = nlohmann::json::parse(in, nullptr, false);
  if (j.is_discarded()) throw std::runtime_error("report " + path.string() + " is not valid JSON");
  return EvalReport::from_json(j);
}

AblationResult run_ablation(const RunConfig& config, std::span<const Household> roster, const ReferenceStats& stats,
                            const FewShotPool& pool, const fs::path& out_dir) {
  AblationResult result;
  for (bool on : {true, false}) {
    auto arm = config;
    arm.feedback_enabled = on;
    arm.reconcile_enabled = on;
    const auto dir = out_dir / (on ? "with" : "without");
    RunOptions options;
    options.out_dir = dir;
    auto run = run_generation(arm, roster, stats, pool, options);
    const auto sample = sample_agents(roster, arm.sample_size, arm.seed);
    const auto profiles = profiles_of(sample.households);
    auto report = evaluate(run.store, profiles, stats, sample.households);
    report.skipped_agents = run.manifest.skipped.size();
    save_report(report, dir / "report.json");
    emit_plot_data(chains_to_stats(run.store.chains(), profiles), stats, dir / "plots");
    (on ? result.with_feedback : result.without_feedback) = std::move(report);
  }
  result.deltas = diff_numbers(result.with_feedback.to_json(), result.without_feedback.to_json());
  std::ofstream out(out_dir / "ablation.json", std::ios::trunc);
  if (!out) throw std::runtime_error("cannot write " + (out_dir / "ablation.json").string());
  out << nlohmann::json{{"with", result.with_feedback.to_json()},
                        {"without", result.without_feedback.to_json()},
                        {"deltas_without_minus_with", result.deltas}}
             .dump(2)
      << '\n';
  return result;
}

}  // namespace actchain
