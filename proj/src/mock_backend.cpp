#include "actchain/gateway.hpp"

#include <algorithm>
#include <map>
#include <random>

namespace actchain {
namespace {

constexpr int kMaxStartDraws = 50;
constexpr int kMinPhantomShift = 20;
constexpr int kMaxPhantomShift = 120;

std::uint64_t fnv1a(std::string_view s) {
  std::uint64_t h = 0xcbf29ce484222325ull;
  for (unsigned char c : s) {
    h ^= c;
    h *= 0x100000001b3ull;
  }
  return h;
}

std::uint64_t mix(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ull;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ull;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebull;
  return x ^ (x >> 31);
}

// Library distributions differ between standard libraries, so draws are done by hand.
class Sampler {
 public:
  explicit Sampler(std::uint64_t seed) : rng_(seed) {}

  double uniform01() { return static_cast<double>(rng_() >> 11) * 0x1.0p-53; }
  bool bernoulli(double p) { return uniform01() < p; }
  int uniform_int(int lo, int hi) {  // inclusive
    return lo + static_cast<int>(uniform01() * static_cast<double>(hi - lo + 1));
  }

  // Index drawn proportionally to weights; -1 when all weights are zero.
  template <typename Weights>
  int categorical(const Weights& w) {
    double total = 0.0;
    for (auto x : w) total += static_cast<double>(x);
    if (total <= 0.0) return -1;
    double u = uniform01() * total;
    int last_positive = -1;
    for (std::size_t i = 0; i < std::size(w); ++i) {
      const double x = static_cast<double>(w[i]);
      if (x <= 0.0) continue;
      last_positive = static_cast<int>(i);
      if (u < x) return static_cast<int>(i);
      u -= x;
    }
    return last_positive;
  }

 private:
  std::mt19937_64 rng_;
};

struct Slot {
  Activity activity;
  bool pinned = false;
};

bool overlaps(int s1, int e1, int s2, int e2) { return s1 < e2 && s2 < e1; }

bool fits(const std::vector<Slot>& pinned, int start, int end) {
  for (const auto& p : pinned) {
    if (overlaps(start, end, p.activity.start.value(), p.activity.end.value())) return false;
  }
  return true;
}

RelationPair pair_for(Relationship a, Relationship b) {
  auto is = [&](Relationship x, Relationship y) { return (a == x && b == y) || (a == y && b == x); };
  if (is(Relationship::head, Relationship::spouse)) return RelationPair::head_spouse;
  if (is(Relationship::head, Relationship::child)) return RelationPair::head_child;
  return RelationPair::any;
}

int sample_length(Sampler& rng, const Distribution& dist) {
  const int bin = rng.categorical(dist.probabilities());
  return bin < 0 ? 1 : bin + 1;  // the overflow bin yields 13
}

// Reply to an anchor that misses its counterpart: shifted off the agreed
// window, or retyped when no shift fits. A shift never lands on another
// anchor's window.
std::optional<Activity> phantom_of(Sampler& rng, const Anchor& anchor, const StatsBundle& stats,
                                   const std::vector<Slot>& pinned, const std::vector<Anchor>& anchors) {
  Activity a{anchor.activity_type, anchor.start, anchor.end, anchor.required_participants};
  const int shift = rng.uniform_int(kMinPhantomShift, kMaxPhantomShift) * (rng.bernoulli(0.5) ? 1 : -1);
  for (int s : {shift, -shift}) {
    const int start = anchor.start.value() + s;
    const int end = anchor.end.value() + s;
    const bool clear = std::none_of(anchors.begin(), anchors.end(), [&](const Anchor& o) {
      return &o != &anchor && overlaps(start, end, o.start.value(), o.end.value());
    });
    if (start >= 0 && end <= MinuteOfDay::kMax && clear && fits(pinned, start, end)) {
      a.start = MinuteOfDay(start);
      a.end = MinuteOfDay(end);
      return a;
    }
  }
  auto weights = stats.type_counts;
  weights[activity_index(anchor.activity_type)] = 0;
  const int t = rng.categorical(weights);
  if (t < 0) return std::nullopt;
  a.activity_type = static_cast<ActivityType>(t + 1);
  return a;
}

// Windows already claimed for each pending member by committed members.
std::map<AgentId, std::vector<std::pair<int, int>>> claimed_windows(const HouseholdContext& ctx) {
  std::map<AgentId, std::vector<std::pair<int, int>>> out;
  for (const auto& m : ctx.member_summaries) {
    for (const auto& a : m.activities) {
      for (const auto& p : a.participants) out[p].emplace_back(a.start.value(), a.end.value());
    }
  }
  return out;
}

}  // namespace

void MockConfig::validate() const {
  auto rate_ok = [](double r) { return r >= 0.0 && r <= 1.0; };
  if (!rate_ok(hallucination_rate)) throw std::invalid_argument("hallucination_rate must be in [0, 1]");
  if (!rate_ok(guidance_compliance)) throw std::invalid_argument("guidance_compliance must be in [0, 1]");
  if (length_bias && (length_bias->size() != static_cast<std::size_t>(kLengthBins) || !length_bias->is_normalized())) {
    throw std::invalid_argument("length_bias must be a normalized distribution over 13 length bins");
  }
}

RawCompletion mock_complete(const MockConfig& mock, const ReferenceStats& stats, const SocioProfile& profile,
                            const std::optional<Guidance>& guidance, const HouseholdContext* household_context,
                            int attempt) {
  Sampler rng(mix(mix(mock.seed) ^ fnv1a(profile.agent_id)) ^ mix(static_cast<std::uint64_t>(attempt) + 1));

  const StatsBundle* bundle = &stats;
  for (const auto& tag : group_tags(profile)) {
    if (auto it = stats.per_group.find(tag); it != stats.per_group.end()) {
      bundle = &it->second;
      break;
    }
  }

  int length = 0;
  if (guidance && guidance->target_length && rng.bernoulli(mock.guidance_compliance)) {
    length = *guidance->target_length;
  } else if (mock.length_bias) {
    length = sample_length(rng, *mock.length_bias);
  } else {
    length = sample_length(rng, bundle->length_dist);
  }

  // Agreed joint activities are pinned first.
  std::vector<Slot> pinned;
  if (household_context != nullptr) {
    for (const auto& anchor : household_context->anchors) {
      std::optional<Activity> a;
      if (rng.bernoulli(mock.hallucination_rate)) {
        a = phantom_of(rng, anchor, *bundle, pinned, household_context->anchors);
      } else {
        a = Activity{anchor.activity_type, anchor.start, anchor.end, anchor.required_participants};
      }
      if (a && fits(pinned, a->start.value(), a->end.value())) pinned.push_back({*a, true});
    }
  }

  // Free activities fill the rest of the requested length.
  const int free_count = std::max(length - static_cast<int>(pinned.size()), 0);
  std::vector<int> starts;
  for (int i = 0; i < free_count; ++i) {
    for (int draw = 0; draw < kMaxStartDraws; ++draw) {
      const int hour = rng.categorical(bundle->start_hist.counts);
      if (hour < 0) break;
      const int s = hour * 60 + rng.uniform_int(0, 59);
      if (std::find(starts.begin(), starts.end(), s) != starts.end()) continue;
      if (!fits(pinned, s, s + 1)) continue;
      starts.push_back(s);
      break;
    }
  }
  if (starts.empty() && pinned.empty()) starts.push_back(0);
  std::sort(starts.begin(), starts.end());

  std::vector<Slot> slots = pinned;
  for (int s : starts) {
    Slot slot;
    slot.activity.start = MinuteOfDay(s);
    const int hour = bin_time(s);
    std::array<std::uint64_t, kActivityTypeCount> by_type{};
    for (int t = 0; t < kActivityTypeCount; ++t) by_type[t] = bundle->type_start_counts[t][hour];
    int t = rng.categorical(by_type);
    if (t < 0) t = rng.categorical(bundle->type_counts);
    slot.activity.activity_type = static_cast<ActivityType>(t < 0 ? 1 : t + 1);
    slots.push_back(std::move(slot));
  }
  std::stable_sort(slots.begin(), slots.end(),
                   [](const Slot& a, const Slot& b) { return a.activity.start < b.activity.start; });

  // Ends: free activities run until shortly before whatever comes next.
  for (std::size_t i = 0; i < slots.size(); ++i) {
    if (slots[i].pinned) continue;
    const int s = slots[i].activity.start.value();
    const int next = i + 1 < slots.size() ? slots[i + 1].activity.start.value() : MinuteOfDay::kMax;
    const int gap = next == MinuteOfDay::kMax || rng.bernoulli(0.5) ? 0 : rng.uniform_int(5, 30);
    slots[i].activity.end = MinuteOfDay(std::max(s + 1, next - gap));
  }

  // Forward claims to members not generated yet.
  if (household_context != nullptr && !household_context->pending_members.empty()) {
    const auto& pending = household_context->pending_members;
    auto busy = claimed_windows(*household_context);
    for (auto& slot : slots) {
      if (slot.pinned) continue;
      const auto& partner = pending[rng.uniform_int(0, static_cast<int>(pending.size()) - 1)];
      const auto pair = pair_for(profile.household_relationship, partner.relationship);
      if (!rng.bernoulli(bundle->joint_rate(pair, slot.activity.activity_type))) continue;
      const int s = slot.activity.start.value();
      const int e = slot.activity.end.value();
      auto& windows = busy[partner.agent_id];
      const bool taken = std::any_of(windows.begin(), windows.end(),
                                     [&](const auto& w) { return overlaps(s, e, w.first, w.second); });
      if (taken) continue;
      slot.activity.participants = {partner.agent_id};
      windows.emplace_back(s, e);
    }
  }

  std::vector<Activity> activities;
  activities.reserve(slots.size());
  for (auto& s : slots) activities.push_back(std::move(s.activity));

  RawCompletion out;
  out.text = encode_wire(activities);
  out.usage = TokenUsage{0, static_cast<int>(proxy_token_count(out.text))};
  return out;
}

}  // namespace actchain
