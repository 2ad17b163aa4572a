#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <iosfwd>
#include <map>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <unordered_set>
#include <vector>

#include <nlohmann/json.hpp>

#include "actchain/domain.hpp"
#include "actchain/feedback.hpp"
#include "actchain/gateway.hpp"
#include "actchain/household.hpp"
#include "actchain/stats.hpp"

namespace actchain {

enum class BackendKind { mock, http };
std::string_view backend_kind_name(BackendKind kind);

struct RunConfig {
  BackendKind backend = BackendKind::mock;
  BackendConfig http;
  MockConfig mock;
  bool feedback_enabled = true;
  bool reconcile_enabled = true;
  std::size_t sample_size = 500;
  std::uint64_t seed = 0;
  int tolerance = kDefaultMatchTolerance;
  int max_parse_retries = 3;
  int concurrency = 1;
  std::size_t few_shot = 3;

  // Throws ConfigError.
  void validate() const;
  nlohmann::json to_json() const;
};

struct ConfigError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Input and output locations named by the config file.
struct RunPaths {
  std::filesystem::path roster;
  std::filesystem::path stats;
  std::filesystem::path examples;  // diary CSV supplying few-shot chains
  std::filesystem::path out;
};

struct ExperimentConfig {
  RunConfig run;
  RunPaths paths;
};

// INI/TOML-style file with [run], [backend] and [mock] sections. Overrides are
// "section.key=value" and win over file values. Relative paths resolve against
// base_dir. Unknown sections or keys throw ConfigError.
ExperimentConfig parse_experiment_config(std::istream& in, const std::filesystem::path& base_dir,
                                         const std::vector<std::string>& overrides = {});
ExperimentConfig load_experiment_config(const std::filesystem::path& path,
                                        const std::vector<std::string>& overrides = {});

// Parses "3" (point mass) or "3:0.5,4:0.5" into a 13-bin length distribution.
Distribution parse_length_bias(std::string_view text);

struct Sample {
  std::vector<Household> households;  // whole households, roster order
  std::unordered_set<AgentId> sampled;  // agents drawn; the rest ride along with their household
};

// Seeded uniform draw of n agents, expanded to their households. Throws
// std::invalid_argument when n is 0 or exceeds the population.
Sample sample_agents(std::span<const Household> roster, std::size_t n, std::uint64_t seed);

struct FewShotPool {
  std::vector<ActivityChain> chains;
  AgentDirectory agents;
};

struct SkippedAgent {
  AgentId agent_id;
  HouseholdId household_id;
  std::string reason;
  bool operator==(const SkippedAgent&) const = default;
};

struct RunCounts {
  std::uint64_t generated = 0;          // committed chains
  std::uint64_t sampled_generated = 0;  // committed chains of sampled agents
  std::uint64_t backend_calls = 0;
  std::uint64_t parse_failures = 0;
  std::uint64_t snaps = 0;
  std::uint64_t regenerations = 0;
  std::uint64_t demotions = 0;

  void merge(const RunCounts& other);
  bool operator==(const RunCounts&) const = default;
};

struct RunManifest {
  nlohmann::json config;
  std::string status = "running";  // "running" until every household is done, then "complete"
  std::size_t households_total = 0;
  std::size_t households_completed = 0;
  std::size_t sampled_agents = 0;
  std::uintmax_t store_bytes = 0;
  std::uint64_t store_lines = 0;
  RunCounts counts;
  std::vector<SkippedAgent> skipped;
  std::map<AgentId, int> parse_retries;  // agents that needed at least one retry
  FeedbackState feedback;
  double wall_clock_s = 0.0;
  std::uint64_t latency_calls = 0;
  double latency_total_ms = 0.0;
  double latency_max_ms = 0.0;

  nlohmann::json to_json() const;
  static RunManifest from_json(const nlohmann::json& j);
};

void save_manifest(const RunManifest& manifest, const std::filesystem::path& path);
RunManifest load_manifest(const std::filesystem::path& path);

std::unique_ptr<ChainBackend> make_backend(const RunConfig& config, const ReferenceStats& stats);

struct RunOptions {
  std::filesystem::path out_dir;
  // Continue from out_dir's manifest and chain store if present.
  bool resume = false;
  // Stop after this many households have been completed (simulated interruption).
  std::optional<std::size_t> stop_after_households;
  // Called with each member's context right before generation.
  std::function<void(const SocioProfile&, const HouseholdContext&)> on_context;
  // Used instead of make_backend() when set.
  ChainBackend* backend = nullptr;
};

struct RunResult {
  ChainStore store;
  RunManifest manifest;
};

inline constexpr const char* kChainStoreFile = "chains.jsonl";
inline constexpr const char* kManifestFile = "manifest.json";
inline constexpr const char* kRosterFile = "roster.csv";

// Generates every member of every sampled household. Households run in waves
// of `concurrency`; each wave starts from the same feedback snapshot, and
// results are committed and checkpointed in household order after the wave.
// Writes chains.jsonl (+ .idx), manifest.json and roster.csv under out_dir.
RunResult run_generation(const RunConfig& config, std::span<const Household> roster, const ReferenceStats& stats,
                         const FewShotPool& pool, const RunOptions& options);

}  // namespace actchain
