#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <map>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

#include <nlohmann/json.hpp>

#include "actchain/domain.hpp"
#include "actchain/kernels.hpp"

namespace actchain {

using kernels::bin_duration;
using kernels::bin_length;
using kernels::bin_time;
using kernels::kDurationBins;
using kernels::kLengthBins;
using kernels::kMaxChainLength;
using kernels::kTimeBins;

struct Histogram {
  std::vector<double> bin_edges;  // bins + 1 strictly increasing edges
  std::vector<std::uint64_t> counts;

  std::size_t bins() const { return counts.size(); }
  std::uint64_t total() const;
  bool operator==(const Histogram&) const = default;

  // 24 hourly bins over [0, 1440].
  static Histogram time_of_day();
  // 30-minute bins; the last bin [840, 1441) holds every duration of 14 h or more.
  static Histogram duration();
};

class Distribution {
 public:
  Distribution() = default;
  // Throws std::invalid_argument if values are negative or do not sum to 1 within 1e-9.
  explicit Distribution(std::vector<double> probabilities);

  // All-zero counts yield an all-zero (degenerate) distribution; is_normalized() is false then.
  template <typename Range>
  static Distribution from_counts(const Range& counts) {
    std::vector<std::uint64_t> c(std::begin(counts), std::end(counts));
    return from_count_vector(c);
  }
  static Distribution from_count_vector(std::span<const std::uint64_t> counts);

  const std::vector<double>& probabilities() const { return p_; }
  std::size_t size() const { return p_.size(); }
  double operator[](std::size_t i) const { return p_[i]; }
  bool is_normalized() const;
  bool operator==(const Distribution&) const = default;

 private:
  std::vector<double> p_;
};

// Base-2 Jensen-Shannon divergence in [0, 1]. Throws std::invalid_argument on
// arity mismatch or inputs that are not normalized within 1e-9.
double jsd(const Distribution& p, const Distribution& q);
double jsd(std::span<const double> p, std::span<const double> q);

enum class RelationPair { head_spouse = 0, head_child = 1, any = 2 };
inline constexpr std::array<RelationPair, 3> kRelationPairs = {RelationPair::head_spouse, RelationPair::head_child,
                                                               RelationPair::any};
std::string_view relation_pair_name(RelationPair pair);  // "head-spouse", "head-child", "any"

// Statistics for one population (everything, or one group slice).
struct StatsBundle {
  std::uint64_t chain_count = 0;
  std::uint64_t activity_count = 0;
  std::array<std::uint64_t, kActivityTypeCount> type_counts{};
  Distribution type_dist;
  Histogram start_hist = Histogram::time_of_day();
  Histogram end_hist = Histogram::time_of_day();
  Histogram duration_hist = Histogram::duration();
  std::array<std::uint64_t, kLengthBins> length_counts{};
  Distribution length_dist;  // lengths 1..12 plus overflow
  // Per-type hourly start/end counts (activity-type timing slices).
  std::array<std::array<std::uint64_t, kTimeBins>, kActivityTypeCount> type_start_counts{};
  std::array<std::array<std::uint64_t, kTimeBins>, kActivityTypeCount> type_end_counts{};
  // Participation: activities of a type carrying a partner of the pair's other relation.
  std::array<std::array<std::uint64_t, kActivityTypeCount>, 3> joint_counts{};
  std::array<std::array<std::uint64_t, kActivityTypeCount>, 3> joint_totals{};
  std::array<std::array<double, kActivityTypeCount>, 3> joint_rates{};

  Distribution start_dist() const { return Distribution::from_counts(start_hist.counts); }
  Distribution end_dist() const { return Distribution::from_counts(end_hist.counts); }
  Distribution duration_dist() const { return Distribution::from_counts(duration_hist.counts); }
  double joint_rate(RelationPair pair, ActivityType t) const {
    return joint_rates[static_cast<int>(pair)][activity_index(t)];
  }

  static StatsBundle from_counts(const kernels::BinCounts& counts);
  bool operator==(const StatsBundle&) const = default;
};

struct ReferenceStats : StatsBundle {
  // Group slices ("student", "worker"); only groups with at least one chain.
  std::map<std::string, StatsBundle> per_group;

  bool operator==(const ReferenceStats&) const = default;
};

// What the statistics need to know about a chain owner or participant.
struct AgentInfo {
  Relationship relationship = Relationship::other;
  std::uint8_t groups = 0;
};
using AgentDirectory = std::unordered_map<AgentId, AgentInfo>;
using ProfileMap = std::unordered_map<AgentId, SocioProfile>;

std::uint8_t group_mask(const std::vector<std::string>& tags);
AgentDirectory directory_from_profiles(const ProfileMap& profiles);

// Flattens chains for the counting kernels. Throws std::invalid_argument for an
// owner or participant missing from the directory.
kernels::FlatChains flatten(std::span<const ActivityChain> chains, const AgentDirectory& agents);
ReferenceStats stats_from_flat(const kernels::FlatChains& flat);

// Throws std::invalid_argument on an empty chain list or an unknown owner.
ReferenceStats chains_to_stats(std::span<const ActivityChain> chains, const ProfileMap& profiles);
ReferenceStats chains_to_stats(std::span<const ActivityChain> chains, const AgentDirectory& agents);

// ---- travel diaries ----

inline constexpr std::string_view kDiaryHeader =
    "household_id,agent_id,relationship,group_tags,activity_code,start,end,participants";

struct DiaryIngest {
  ReferenceStats stats;
  std::vector<ActivityChain> chains;  // usable chains, first-appearance order
  AgentDirectory agents;
  std::unordered_map<AgentId, std::vector<std::string>> tags;
  std::size_t rows_read = 0;
  std::size_t rows_skipped = 0;
  std::vector<std::string> diagnostics;
};

// Throws SchemaError("schema", ...) on a malformed header and
// std::runtime_error("no usable records") when nothing survives validation.
DiaryIngest ingest_diary(std::istream& in);
DiaryIngest ingest_diary_file(const std::filesystem::path& path);

void write_diary_csv(std::ostream& out, std::span<const ActivityChain> chains, const ProfileMap& profiles);

// ---- JSON ----

nlohmann::json stats_to_json(const ReferenceStats& stats);
// Throws SchemaError on structural problems.
ReferenceStats stats_from_json(const nlohmann::json& j);
void save_stats(const ReferenceStats& stats, const std::filesystem::path& path);
ReferenceStats load_stats(const std::filesystem::path& path);

}  // namespace actchain
