#pragma once

#include <array>
#include <cstdint>
#include <span>
#include <vector>

#include "actchain/domain.hpp"

// Counting and divergence kernels behind reference-stats and evaluation.
// Each kernel has a serial reference and an OpenMP version; both must agree
// exactly (integer counts) or to rounding (divergences).
namespace actchain::kernels {

inline constexpr int kTimeBins = 24;
inline constexpr int kDurationBins = 29;
inline constexpr int kMaxChainLength = 12;
inline constexpr int kLengthBins = kMaxChainLength + 1;  // last bin is overflow (13+)
inline constexpr int kRelationPairs = 3;                  // head-spouse, head-child, any

// Bit masks over owner group tags.
inline constexpr std::uint8_t kGroupStudent = 1u << 0;
inline constexpr std::uint8_t kGroupWorker = 1u << 1;

constexpr std::uint8_t relation_bit(Relationship r) { return static_cast<std::uint8_t>(1u << static_cast<int>(r)); }

struct FlatActivity {
  std::uint8_t type_index = 0;  // 0..14
  std::uint16_t start = 0;
  std::uint16_t end = 0;
  std::uint8_t owner_relation = 0;     // Relationship value
  std::uint8_t partner_relations = 0;  // OR of relation_bit() over participants
  std::uint8_t groups = 0;             // owner group mask
};

// Columnar view of a chain set. activities are grouped by chain, in order.
struct FlatChains {
  std::vector<FlatActivity> activities;
  std::vector<std::uint32_t> chain_lengths;
  std::vector<std::uint8_t> chain_groups;
};

struct BinCounts {
  std::uint64_t chains = 0;
  std::uint64_t activities = 0;
  std::array<std::uint64_t, kActivityTypeCount> type{};
  std::array<std::uint64_t, kTimeBins> start{};
  std::array<std::uint64_t, kTimeBins> end{};
  std::array<std::uint64_t, kDurationBins> duration{};
  std::array<std::uint64_t, kLengthBins> length{};
  std::array<std::array<std::uint64_t, kTimeBins>, kActivityTypeCount> type_start{};
  std::array<std::array<std::uint64_t, kTimeBins>, kActivityTypeCount> type_end{};
  std::array<std::array<std::uint64_t, kActivityTypeCount>, kRelationPairs> joint{};
  std::array<std::array<std::uint64_t, kActivityTypeCount>, kRelationPairs> joint_total{};

  void merge(const BinCounts& other);
  bool operator==(const BinCounts&) const = default;
};

// Time bin: floor(t / 60), 1440 -> 23. Throws std::out_of_range outside 0..1440.
int bin_time(int minute);
// 30-minute bins, bin 28 is [840, inf). Throws std::invalid_argument for minutes < 1.
int bin_duration(int minutes);
// Lengths 1..12 -> 0..11, longer chains -> 12. Throws std::invalid_argument for 0.
int bin_length(std::size_t length);

// group_filter == 0 counts every chain; otherwise only chains whose group mask
// intersects the filter.
BinCounts count_bins_serial(const FlatChains& chains, std::uint8_t group_filter = 0);
BinCounts count_bins_omp(const FlatChains& chains, std::uint8_t group_filter = 0);

// Divergence of many distribution pairs stored row-major with a fixed arity.
std::vector<double> jsd_many_serial(std::span<const double> p, std::span<const double> q, std::size_t arity);
std::vector<double> jsd_many_omp(std::span<const double> p, std::span<const double> q, std::size_t arity);

// Unchecked base-2 divergence of one pair; callers validate inputs.
double jsd_unchecked(std::span<const double> p, std::span<const double> q);

}  // namespace actchain::kernels
