#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

#include "actchain/domain.hpp"

namespace actchain {

inline constexpr int kDefaultMatchTolerance = 15;

// Committed chains, in commit order, at most one per owner.
class ChainStore {
 public:
  // Throws std::invalid_argument if the owner already has a chain.
  void commit(ActivityChain chain);

  const ActivityChain* find(std::string_view owner) const;
  ActivityChain* find_mutable(std::string_view owner);
  const std::vector<ActivityChain>& chains() const { return chains_; }
  std::size_t size() const { return chains_.size(); }
  bool empty() const { return chains_.empty(); }

  // One canonical record per line, commit order.
  static ChainStore load_jsonl(const std::filesystem::path& path);
  static ChainStore from_jsonl(std::istream& in);

 private:
  std::vector<ActivityChain> chains_;
  std::unordered_map<AgentId, std::size_t> by_owner_;
};

// Appends households to a JSONL chain file and keeps the household index
// (household_id -> byte offset, first line, line count) beside it.
class ChainStoreWriter {
 public:
  // Opens for append; truncate_to (bytes) drops a partially written tail.
  explicit ChainStoreWriter(std::filesystem::path path, std::optional<std::uintmax_t> truncate_to = std::nullopt);

  void append(const std::vector<ActivityChain>& household_chains);
  void write_index() const;
  std::uintmax_t bytes() const { return bytes_; }
  std::uint64_t lines() const { return lines_; }
  const std::filesystem::path& path() const { return path_; }

  static std::filesystem::path index_path(const std::filesystem::path& store_path);

 private:
  struct IndexEntry {
    HouseholdId household_id;
    std::uintmax_t offset;
    std::uint64_t first_line;
    std::uint64_t count;
  };
  std::filesystem::path path_;
  std::uintmax_t bytes_ = 0;
  std::uint64_t lines_ = 0;
  std::vector<IndexEntry> index_;
};

struct MemberSummary {
  AgentId agent_id;
  Relationship relationship = Relationship::other;
  std::vector<Activity> activities;
};

// A joint activity another member already committed to that names the next member.
struct Anchor {
  ActivityType activity_type = ActivityType::home;
  MinuteOfDay start;
  MinuteOfDay end;
  // Who the next member's activity must list: the claim owners plus their
  // other co-participants, excluding the next member.
  std::vector<AgentId> required_participants;

  bool operator==(const Anchor&) const = default;
};

struct PendingMember {
  AgentId agent_id;
  Relationship relationship = Relationship::other;
};

struct HouseholdContext {
  HouseholdId household_id;
  std::vector<MemberSummary> member_summaries;
  std::vector<Anchor> anchors;
  // Members not generated yet (other than the one being generated).
  std::vector<PendingMember> pending_members;

  bool empty() const { return member_summaries.empty() && anchors.empty(); }
};

HouseholdContext build_context(const ChainStore& store, const Household& household, std::string_view next_member);

// Plain-text digest of the context for prompts; empty string when there is nothing to say.
std::string render_context(const HouseholdContext& context);

struct MatchResult {
  bool matched = false;
  std::string reason;        // "matched", "type mismatch", "time outside tolerance", ...
  int partner_index = -1;    // closest same-type partner activity, if any
  int deviation = 0;         // max endpoint difference to that activity, minutes

  explicit operator bool() const { return matched; }
};

// True iff the partner chain has an activity of the same type, both endpoints
// within tolerance, listing the claim owner as a participant.
MatchResult match_claim(std::string_view claim_owner, const Activity& claim, const ActivityChain& partner_chain,
                        int tolerance = kDefaultMatchTolerance);

struct ReconcilePolicy {
  bool enabled = true;
  int tolerance = kDefaultMatchTolerance;
  int snap_window = 60;  // how far beyond tolerance a snap may reach
  int max_regenerations = 2;
};

enum class RepairKind { snap, regenerate, demote };
std::string_view repair_kind_name(RepairKind kind);

struct RepairEntry {
  RepairKind kind;
  std::string detail;
};

struct ReconcileResult {
  ActivityChain chain;
  std::vector<RepairEntry> log;
};

// Produces a fresh, already validated chain for the given attempt (1-based),
// or nullopt if generation failed.
using Regenerator = std::function<std::optional<ActivityChain>(int attempt)>;

// Resolves every joint claim between the new chain and members already in the
// household store: snap, then regenerate, then demote. Demotion may also strip
// the new member from a committed member's unreciprocated claim, so the store
// is mutable. Claims naming members not generated yet are left as anchors.
ReconcileResult reconcile(ActivityChain chain, ChainStore& household_store, const Household& household,
                          const ReconcilePolicy& policy, const Regenerator& regenerate = {});

struct ClaimAudit {
  AgentId owner;
  int activity_index = 0;
  AgentId partner;
  bool matched = false;
  std::string reason;
};

struct ConsistencyAudit {
  std::uint64_t consistent = 0;
  std::uint64_t inconsistent = 0;
  std::vector<ClaimAudit> per_claim;

  std::uint64_t total() const { return consistent + inconsistent; }
  // Share of consistent claims; 1.0 when there are no claims.
  double rate() const;
};

// Audits every claim once, from its owner's side. With a non-empty household
// list, partners outside the owner's household are reported as such.
ConsistencyAudit audit_consistency(const ChainStore& store, std::span<const Household> households,
                                   int tolerance = kDefaultMatchTolerance);

// "owner,activity_index,partner,matched,reason"
void write_audit_csv(std::ostream& out, const ConsistencyAudit& audit);

}  // namespace actchain
