#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <string>

#include <nlohmann/json.hpp>

#include "actchain/domain.hpp"
#include "actchain/stats.hpp"

namespace actchain {

// Guidance handed to the next generation. target_length is set when the
// guidance names a specific length; neutral reminders leave it empty.
struct Guidance {
  std::string text;
  std::optional<int> target_length;

  bool operator==(const Guidance&) const = default;
};

// Recovers the structured form from guidance text ("... about N activities ...").
std::optional<Guidance> parse_guidance(std::string_view text);

// Running chain-length histogram of generated chains against the reference
// length distribution. Only chain length is tracked and fed back.
class FeedbackState {
 public:
  static constexpr std::uint64_t kDefaultWarmup = 20;
  static constexpr double kDefaultEpsilon = 0.01;

  FeedbackState() = default;
  FeedbackState(Distribution target_length_dist, bool enabled, std::uint64_t warmup = kDefaultWarmup,
                double epsilon = kDefaultEpsilon);

  const Distribution& target() const { return target_; }
  const std::array<std::uint64_t, kLengthBins>& counts() const { return counts_; }
  std::uint64_t chains_seen() const { return chains_seen_; }
  bool enabled() const { return enabled_; }
  std::uint64_t warmup() const { return warmup_; }
  double epsilon() const { return epsilon_; }

  // Fraction of generated chains per length bin; all zero before any chain.
  Distribution generated() const { return Distribution::from_counts(counts_); }

  void record(std::size_t length);

  nlohmann::json to_json() const;
  static FeedbackState from_json(const nlohmann::json& j);
  bool operator==(const FeedbackState&) const = default;

 private:
  Distribution target_;
  std::array<std::uint64_t, kLengthBins> counts_{};
  std::uint64_t chains_seen_ = 0;
  bool enabled_ = true;
  std::uint64_t warmup_ = kDefaultWarmup;
  double epsilon_ = kDefaultEpsilon;
};

FeedbackState record_chain(FeedbackState state, const ActivityChain& chain);

// None while disabled or warming up. Otherwise names the length with the
// largest positive deficit (ties toward the shorter length), or a neutral
// reminder when no deficit exceeds epsilon.
std::optional<Guidance> next_guidance(const FeedbackState& state);

// Human-readable bin label for a length bin index ("5", "13+").
std::string length_bin_label(int bin);

}  // namespace actchain
