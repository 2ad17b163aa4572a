#pragma once

#include <array>
#include <filesystem>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "actchain/household.hpp"
#include "actchain/pipeline.hpp"
#include "actchain/stats.hpp"

namespace actchain {

inline constexpr std::array<std::string_view, 5> kDimensions = {"type", "start", "end", "duration", "length"};
inline constexpr std::array<ActivityType, 3> kTimingActivities = {ActivityType::home, ActivityType::work,
                                                                  ActivityType::buy_meals};

using DimensionJsd = std::map<std::string, double>;

struct TimingJsd {
  double start = 0.0;
  double end = 0.0;
  bool operator==(const TimingJsd&) const = default;
};

struct ConsistencySummary {
  std::uint64_t consistent = 0;
  std::uint64_t inconsistent = 0;
  double rate = 1.0;
  bool operator==(const ConsistencySummary&) const = default;
};

struct EvalReport {
  std::size_t chains_evaluated = 0;
  std::size_t skipped_agents = 0;
  DimensionJsd jsd_by_dimension;
  std::map<std::string, DimensionJsd> slices;             // group tag -> dimensions
  std::map<std::string, TimingJsd> per_activity_timing;   // activity slug -> start/end
  std::map<std::string, std::map<std::string, double>> joint_rate_jsd;  // pair -> activity slug -> jsd
  std::optional<ConsistencySummary> consistency;

  nlohmann::json to_json() const;
  static EvalReport from_json(const nlohmann::json& j);
};

// Dimension-wise divergences between two stat bundles.
DimensionJsd compare_dimensions(const StatsBundle& generated, const StatsBundle& reference);

// Full comparison: dimensions, group slices present on both sides, timing of
// the given activity types, and joint-rate divergences. Timing or joint
// entries where both sides are empty are left out; where only one side is
// empty the divergence is 1.
EvalReport compare_stats(const ReferenceStats& generated, const ReferenceStats& reference,
                         std::span<const ActivityType> timing_activities = kTimingActivities);

// Throws std::invalid_argument on an empty store. With households given, the
// consistency audit is included.
EvalReport evaluate(const ChainStore& generated, const ProfileMap& profiles, const ReferenceStats& reference,
                    std::span<const Household> households = {},
                    std::span<const ActivityType> timing_activities = kTimingActivities);

// CSV panels with header "bin_label,reference,generated". Returns the written files.
std::vector<std::filesystem::path> emit_plot_data(const ReferenceStats& generated, const ReferenceStats& reference,
                                                  const std::filesystem::path& out_dir,
                                                  std::span<const ActivityType> timing_activities = kTimingActivities);

inline constexpr std::string_view kPlotHeader = "bin_label,reference,generated";

// Bin labels per panel.
std::vector<std::string> time_bin_labels();
std::vector<std::string> duration_bin_labels();
std::vector<std::string> length_bin_labels();
std::vector<std::string> type_bin_labels();

struct AblationResult {
  EvalReport with_feedback;     // feedback and reconciliation on
  EvalReport without_feedback;  // both off
  nlohmann::json deltas;        // without - with, per reported number
};

// Two runs under out_dir/with and out_dir/without that differ only in
// feedback_enabled and reconcile_enabled. Each directory also receives
// report.json and plots/.
AblationResult run_ablation(const RunConfig& config, std::span<const Household> roster, const ReferenceStats& stats,
                            const FewShotPool& pool, const std::filesystem::path& out_dir);

void save_report(const EvalReport& report, const std::filesystem::path& path);
EvalReport load_report(const std::filesystem::path& path);

}  // namespace actchain
