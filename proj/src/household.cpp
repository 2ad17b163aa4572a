#include "actchain/household.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <istream>
#include <ostream>
#include <set>

namespace actchain {
namespace {

int deviation(const Activity& a, const Activity& b) {
  return std::max(std::abs(a.start.value() - b.start.value()), std::abs(a.end.value() - b.end.value()));
}

// Closest same-type activity in `chain` that lists `partner`, by endpoint deviation.
std::optional<std::size_t> closest_reciprocating(const ActivityChain& chain, const Activity& target,
                                                 std::string_view partner) {
  std::optional<std::size_t> best;
  int best_dev = 0;
  for (std::size_t i = 0; i < chain.activities.size(); ++i) {
    const auto& a = chain.activities[i];
    if (a.activity_type != target.activity_type || !a.names(partner)) continue;
    const int d = deviation(a, target);
    if (!best || d < best_dev) {
      best = i;
      best_dev = d;
    }
  }
  return best;
}

void remove_participant(Activity& a, std::string_view id) {
  a.participants.erase(std::remove(a.participants.begin(), a.participants.end(), id), a.participants.end());
}

struct Issue {
  enum Side { own_claim, anchor } side;
  std::size_t activity;  // index in the new chain (own_claim) or in the partner chain (anchor)
  AgentId partner;
};

std::vector<Issue> collect_issues(const ActivityChain& chain, const ChainStore& store, const ReconcilePolicy& policy) {
  std::vector<Issue> issues;
  for (std::size_t i = 0; i < chain.activities.size(); ++i) {
    for (const auto& p : chain.activities[i].participants) {
      const auto* partner = store.find(p);
      if (partner == nullptr) continue;  // not generated yet: becomes an anchor later
      if (!match_claim(chain.owner, chain.activities[i], *partner, policy.tolerance)) {
        issues.push_back({Issue::own_claim, i, p});
      }
    }
  }
  for (const auto& committed : store.chains()) {
    if (committed.owner == chain.owner) continue;
    for (std::size_t j = 0; j < committed.activities.size(); ++j) {
      const auto& a = committed.activities[j];
      if (!a.names(chain.owner)) continue;
      if (!match_claim(committed.owner, a, chain, policy.tolerance)) {
        issues.push_back({Issue::anchor, j, committed.owner});
      }
    }
  }
  return issues;
}

// Moves chain activity `index` onto `window`'s times if the chain stays valid.
bool try_snap(ActivityChain& chain, std::size_t index, const Activity& window, const Household& household) {
  auto candidate = chain;
  candidate.activities[index].start = window.start;
  candidate.activities[index].end = window.end;
  if (!validate_chain(candidate, household).ok()) return false;
  chain = std::move(candidate);
  return true;
}

}  // namespace

// ---- ChainStore ----

void ChainStore::commit(ActivityChain chain) {
  if (by_owner_.count(chain.owner) != 0) {
    throw std::invalid_argument("a chain for " + chain.owner + " is already committed");
  }
  by_owner_.emplace(chain.owner, chains_.size());
  chains_.push_back(std::move(chain));
}

const ActivityChain* ChainStore::find(std::string_view owner) const {
  auto it = by_owner_.find(std::string(owner));
  return it == by_owner_.end() ? nullptr : &chains_[it->second];
}

ActivityChain* ChainStore::find_mutable(std::string_view owner) {
  auto it = by_owner_.find(std::string(owner));
  return it == by_owner_.end() ? nullptr : &chains_[it->second];
}

ChainStore ChainStore::from_jsonl(std::istream& in) {
  ChainStore store;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    try {
      store.commit(decode_chain_line(line));
    } catch (const std::exception& e) {
      throw std::runtime_error("chain store line " + std::to_string(line_no) + ": " + e.what());
    }
  }
  return store;
}

ChainStore ChainStore::load_jsonl(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open chain store " + path.string());
  return from_jsonl(in);
}

// ---- ChainStoreWriter ----

ChainStoreWriter::ChainStoreWriter(std::filesystem::path path, std::optional<std::uintmax_t> truncate_to)
    : path_(std::move(path)) {
  namespace fs = std::filesystem;
  if (truncate_to) {
    if (fs::exists(path_)) {
      fs::resize_file(path_, *truncate_to);
    } else if (*truncate_to != 0) {
      throw std::runtime_error("cannot resume: chain store " + path_.string() + " is missing");
    }
    // Rebuild line/index bookkeeping from what is kept.
    std::ifstream in(path_);
    std::string line;
    std::uintmax_t offset = 0;
    while (std::getline(in, line)) {
      auto chain = decode_chain_line(line);
      if (index_.empty() || index_.back().household_id != chain.household_id) {
        index_.push_back({chain.household_id, offset, lines_, 0});
      }
      ++index_.back().count;
      ++lines_;
      offset += line.size() + 1;
    }
    bytes_ = offset;
  } else {
    std::ofstream out(path_, std::ios::trunc);
    if (!out) throw std::runtime_error("cannot write chain store " + path_.string());
  }
}

void ChainStoreWriter::append(const std::vector<ActivityChain>& household_chains) {
  if (household_chains.empty()) return;
  std::string block;
  for (const auto& c : household_chains) {
    block += encode_chain_line(c);
    block += '\n';
  }
  std::ofstream out(path_, std::ios::app | std::ios::binary);
  if (!out) throw std::runtime_error("cannot append to chain store " + path_.string());
  out << block;
  out.flush();
  if (!out) throw std::runtime_error("failed writing chain store " + path_.string());
  index_.push_back({household_chains.front().household_id, bytes_, lines_, household_chains.size()});
  bytes_ += block.size();
  lines_ += household_chains.size();
}

std::filesystem::path ChainStoreWriter::index_path(const std::filesystem::path& store_path) {
  auto p = store_path;
  p += ".idx";
  return p;
}

void ChainStoreWriter::write_index() const {
  const auto target = index_path(path_);
  auto tmp = target;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::trunc);
    if (!out) throw std::runtime_error("cannot write index " + tmp.string());
    out << "household_id\tbyte_offset\tfirst_line\tline_count\n";
    for (const auto& e : index_) {
      out << e.household_id << '\t' << e.offset << '\t' << e.first_line << '\t' << e.count << '\n';
    }
  }
  std::filesystem::rename(tmp, target);
}

// ---- context ----

HouseholdContext build_context(const ChainStore& store, const Household& household, std::string_view next_member) {
  HouseholdContext ctx;
  ctx.household_id = household.household_id;
  for (const auto* member : coordination_order(household)) {
    if (member->agent_id == next_member) continue;
    const auto* chain = store.find(member->agent_id);
    if (chain == nullptr) {
      ctx.pending_members.push_back({member->agent_id, member->household_relationship});
      continue;
    }
    ctx.member_summaries.push_back({member->agent_id, member->household_relationship, chain->activities});
    for (const auto& a : chain->activities) {
      if (!a.names(next_member)) continue;
      std::vector<AgentId> required{chain->owner};
      for (const auto& p : a.participants) {
        if (p != next_member) required.push_back(p);
      }
      // Several members may claim the same joint activity; merge them.
      auto same = std::find_if(ctx.anchors.begin(), ctx.anchors.end(), [&](const Anchor& x) {
        return x.activity_type == a.activity_type && x.start == a.start && x.end == a.end;
      });
      if (same == ctx.anchors.end()) {
        std::sort(required.begin(), required.end());
        required.erase(std::unique(required.begin(), required.end()), required.end());
        ctx.anchors.push_back({a.activity_type, a.start, a.end, std::move(required)});
      } else {
        same->required_participants.insert(same->required_participants.end(), required.begin(), required.end());
        std::sort(same->required_participants.begin(), same->required_participants.end());
        same->required_participants.erase(
            std::unique(same->required_participants.begin(), same->required_participants.end()),
            same->required_participants.end());
      }
    }
  }
  std::stable_sort(ctx.anchors.begin(), ctx.anchors.end(),
                   [](const Anchor& a, const Anchor& b) { return a.start < b.start; });
  return ctx;
}

std::string render_context(const HouseholdContext& context) {
  if (context.empty()) return {};
  std::string out;
  if (!context.member_summaries.empty()) {
    out += "Schedules already generated for this household:\n";
    for (const auto& m : context.member_summaries) {
      out += "- " + m.agent_id + " (" + std::string(relationship_name(m.relationship)) + "): ";
      bool first = true;
      for (const auto& a : m.activities) {
        if (!first) out += ", ";
        first = false;
        out += std::string(activity_label(a.activity_type)) + " " + format_hhmm(a.start) + "-" + format_hhmm(a.end);
        if (a.is_joint()) {
          out += " with ";
          for (std::size_t i = 0; i < a.participants.size(); ++i) out += (i ? "+" : "") + a.participants[i];
        }
      }
      out += "\n";
    }
  }
  if (!context.anchors.empty()) {
    out += "Joint activities already agreed with this person:\n";
    for (const auto& a : context.anchors) {
      out += "- " + std::string(activity_label(a.activity_type)) + " (type " +
             std::to_string(activity_code(a.activity_type)) + ") " + format_hhmm(a.start) + "-" + format_hhmm(a.end) +
             " with ";
      for (std::size_t i = 0; i < a.required_participants.size(); ++i) {
        out += (i ? ", " : "") + a.required_participants[i];
      }
      out += "\n";
    }
  }
  return out;
}

// ---- matching ----

MatchResult match_claim(std::string_view claim_owner, const Activity& claim, const ActivityChain& partner_chain,
                        int tolerance) {
  MatchResult r;
  bool same_type_within = false;
  for (std::size_t i = 0; i < partner_chain.activities.size(); ++i) {
    const auto& a = partner_chain.activities[i];
    if (a.activity_type != claim.activity_type) continue;
    const int d = deviation(a, claim);
    const bool reciprocates = a.names(claim_owner);
    if (d <= tolerance && reciprocates) {
      return MatchResult{true, "matched", static_cast<int>(i), d};
    }
    if (d <= tolerance) same_type_within = true;
    if (r.partner_index < 0 || d < r.deviation) {
      r.partner_index = static_cast<int>(i);
      r.deviation = d;
    }
  }
  if (partner_chain.activities.empty()) {
    r.reason = "partner chain is empty";
  } else if (same_type_within) {
    r.reason = "partner does not reciprocate participant";
  } else if (r.partner_index >= 0) {
    r.reason = "time outside tolerance";
  } else {
    r.reason = "type mismatch";
  }
  return r;
}

// ---- reconciliation ----

std::string_view repair_kind_name(RepairKind kind) {
  switch (kind) {
    case RepairKind::snap: return "snap";
    case RepairKind::regenerate: return "regenerate";
    case RepairKind::demote: return "demote";
  }
  return "unknown";
}

ReconcileResult reconcile(ActivityChain chain, ChainStore& household_store, const Household& household,
                          const ReconcilePolicy& policy, const Regenerator& regenerate) {
  ReconcileResult result;
  if (!policy.enabled) {
    result.chain = std::move(chain);
    return result;
  }
  const int snap_reach = policy.tolerance + policy.snap_window;
  int regenerations = 0;

  for (;;) {
    auto issues = collect_issues(chain, household_store, policy);
    if (issues.empty()) break;

    // 1. snap near misses onto the partner's window.
    for (const auto& issue : issues) {
      if (issue.side == Issue::own_claim) {
        const auto& claim = chain.activities[issue.activity];
        const auto* partner = household_store.find(issue.partner);
        auto idx = closest_reciprocating(*partner, claim, chain.owner);
        if (!idx) continue;
        const auto& target = partner->activities[*idx];
        const int d = deviation(target, claim);
        if (d <= policy.tolerance || d > snap_reach) continue;
        if (try_snap(chain, issue.activity, target, household)) {
          result.log.push_back({RepairKind::snap, "snap " + std::to_string(d) + "min"});
        }
      } else {
        const auto& anchor = household_store.find(issue.partner)->activities[issue.activity];
        auto idx = closest_reciprocating(chain, anchor, issue.partner);
        if (!idx) continue;
        const int d = deviation(chain.activities[*idx], anchor);
        if (d <= policy.tolerance || d > snap_reach) continue;
        if (try_snap(chain, *idx, anchor, household)) {
          result.log.push_back({RepairKind::snap, "snap " + std::to_string(d) + "min"});
        }
      }
    }
    issues = collect_issues(chain, household_store, policy);
    if (issues.empty()) break;

    // 2. ask for a fresh generation that carries the anchors explicitly.
    if (regenerate && regenerations < policy.max_regenerations) {
      ++regenerations;
      auto fresh = regenerate(regenerations);
      result.log.push_back({RepairKind::regenerate, "regenerate attempt " + std::to_string(regenerations) +
                                                        (fresh ? "" : " failed")});
      if (fresh) chain = std::move(*fresh);
      continue;
    }

    // 3. demote whatever is still unmatched to solo activities.
    while (!issues.empty()) {
      for (const auto& issue : issues) {
        if (issue.side == Issue::own_claim) {
          remove_participant(chain.activities[issue.activity], issue.partner);
          result.log.push_back({RepairKind::demote, "demote " + chain.owner + " activity " +
                                                        std::to_string(issue.activity + 1) + " partner " +
                                                        issue.partner});
        } else {
          auto* partner = household_store.find_mutable(issue.partner);
          remove_participant(partner->activities[issue.activity], chain.owner);
          result.log.push_back({RepairKind::demote, "demote " + issue.partner + " activity " +
                                                        std::to_string(issue.activity + 1) + " partner " +
                                                        chain.owner});
        }
      }
      issues = collect_issues(chain, household_store, policy);
    }
    break;
  }
  result.chain = std::move(chain);
  return result;
}

// ---- audit ----

double ConsistencyAudit::rate() const {
  return total() == 0 ? 1.0 : static_cast<double>(consistent) / static_cast<double>(total());
}

ConsistencyAudit audit_consistency(const ChainStore& store, std::span<const Household> households, int tolerance) {
  std::unordered_map<std::string_view, const Household*> by_id;
  for (const auto& h : households) by_id.emplace(h.household_id, &h);

  ConsistencyAudit audit;
  for (const auto& chain : store.chains()) {
    const Household* hh = nullptr;
    if (!by_id.empty()) {
      auto it = by_id.find(chain.household_id);
      if (it != by_id.end()) hh = it->second;
    }
    for (std::size_t i = 0; i < chain.activities.size(); ++i) {
      const auto& a = chain.activities[i];
      for (const auto& p : a.participants) {
        ClaimAudit c{chain.owner, static_cast<int>(i), p, false, {}};
        const auto* partner = store.find(p);
        if (!by_id.empty() && (hh == nullptr || !hh->contains(p))) {
          c.reason = "partner not in household";
        } else if (partner == nullptr) {
          c.reason = "partner chain missing";
        } else {
          auto m = match_claim(chain.owner, a, *partner, tolerance);
          c.matched = m.matched;
          c.reason = m.reason;
        }
        (c.matched ? audit.consistent : audit.inconsistent) += 1;
        audit.per_claim.push_back(std::move(c));
      }
    }
  }
  return audit;
}

void write_audit_csv(std::ostream& out, const ConsistencyAudit& audit) {
  out << "owner,activity_index,partner,matched,reason\n";
  for (const auto& c : audit.per_claim) {
    out << c.owner << ',' << c.activity_index << ',' << c.partner << ',' << (c.matched ? "true" : "false") << ','
        << c.reason << '\n';
  }
}

}  // namespace actchain
