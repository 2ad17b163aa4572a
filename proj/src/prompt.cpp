#include "actchain/prompt.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>

namespace actchain {
namespace {

std::string percent(double p) { return std::to_string(static_cast<int>(std::lround(p * 100.0))) + "%"; }

std::string hour_label(int bin) {
  return format_hhmm(MinuteOfDay(bin * 60)) + "-" + format_hhmm(MinuteOfDay((bin + 1) * 60));
}

std::string duration_label(int bin) {
  if (bin == kDurationBins - 1) return "14 h or more";
  auto fmt = [](int minutes) {
    if (minutes < 60) return std::to_string(minutes) + " min";
    if (minutes % 60 == 0) return std::to_string(minutes / 60) + " h";
    return std::to_string(minutes / 60) + " h " + std::to_string(minutes % 60) + " min";
  };
  return fmt(bin * 30) + " to " + fmt(bin * 30 + 30);
}

// Indices sorted by descending weight, ties by index.
template <typename Values>
std::vector<int> ranked(const Values& values) {
  std::vector<int> idx(values.size());
  std::iota(idx.begin(), idx.end(), 0);
  std::stable_sort(idx.begin(), idx.end(), [&](int a, int b) { return values[a] > values[b]; });
  return idx;
}

std::string top_hours(const Histogram& h, std::size_t k) {
  const auto dist = Distribution::from_counts(h.counts);
  std::string out;
  for (int bin : ranked(dist.probabilities())) {
    if (k-- == 0 || dist[bin] <= 0.0) break;
    if (!out.empty()) out += ", ";
    out += hour_label(bin) + " (" + percent(dist[bin]) + ")";
  }
  return out;
}

std::string verbalize_stats(const ReferenceStats& stats, const SocioProfile& profile) {
  std::string out;

  out += "- Share of all activities by type: ";
  {
    bool first = true;
    std::string rare;
    for (int t : ranked(stats.type_dist.probabilities())) {
      const double p = stats.type_dist[t];
      const auto label = std::string(activity_label(static_cast<ActivityType>(t + 1)));
      if (std::lround(p * 100.0) >= 1) {
        out += (first ? "" : ", ") + label + " " + percent(p);
        first = false;
      } else if (p > 0.0) {
        rare += (rare.empty() ? "" : ", ") + label;
      }
    }
    if (!rare.empty()) out += "; under 1%: " + rare;
    out += ".\n";
  }

  {
    const auto dur = stats.duration_dist();
    const int mode = ranked(dur.probabilities()).front();
    double under_hour = dur[0] + dur[1];
    double long_blocks = 0.0;
    for (int b = 16; b < kDurationBins; ++b) long_blocks += dur[b];
    out += "- Typical activity durations: the most common duration is " + duration_label(mode) + "; " +
           percent(under_hour) + " of activities last under 1 h and " + percent(long_blocks) +
           " last 8 h or more.\n";
  }

  out += "- Most common activity start windows: " + top_hours(stats.start_hist, 4) + ".\n";
  out += "- Most common activity end windows: " + top_hours(stats.end_hist, 4) + ".\n";

  out += "- Activities per person per day: ";
  {
    bool first = true;
    for (int b : ranked(stats.length_dist.probabilities())) {
      if (stats.length_dist[b] < 0.005) break;
      std::string label = b == kLengthBins - 1 ? std::to_string(kMaxChainLength + 1) + " or more" : std::to_string(b + 1);
      out += (first ? "" : ", ") + label + " (" + percent(stats.length_dist[b]) + ")";
      first = false;
    }
    out += ".\n";
  }

  out += "- Household coordination, share of each activity type done together with another household member: ";
  {
    const auto& rates = stats.joint_rates[static_cast<int>(RelationPair::any)];
    bool first = true;
    for (int t : ranked(rates)) {
      if (std::lround(rates[t] * 100.0) < 1) break;
      out += (first ? "" : ", ") + std::string(activity_label(static_cast<ActivityType>(t + 1))) + " " +
             percent(rates[t]);
      first = false;
    }
    if (first) out += "joint activities are rare";
    out += ".\n";
  }

  for (const auto& tag : group_tags(profile)) {
    auto it = stats.per_group.find(tag);
    if (it == stats.per_group.end()) continue;
    out += "- For " + tag + "s, the most common activity start windows are " +
           top_hours(it->second.start_hist, 3) + ".\n";
  }
  if (!out.empty() && out.back() == '\n') out.pop_back();
  return out;
}

std::string activity_codes() {
  std::string out;
  for (int c = 1; c <= kActivityTypeCount; ++c) {
    if (c > 1) out += ", ";
    out += std::to_string(c) + "=" + std::string(activity_label(static_cast<ActivityType>(c)));
  }
  return out;
}

std::string household_members_line(const HouseholdContext* ctx) {
  if (ctx == nullptr) return "Household members: none listed.";
  std::vector<std::string> parts;
  for (const auto& m : ctx->member_summaries) {
    parts.push_back(m.agent_id + " (" + std::string(relationship_name(m.relationship)) + ")");
  }
  for (const auto& m : ctx->pending_members) {
    parts.push_back(m.agent_id + " (" + std::string(relationship_name(m.relationship)) + ")");
  }
  if (parts.empty()) return "Household members: this person lives alone.";
  std::string out = "Other household members: ";
  for (std::size_t i = 0; i < parts.size(); ++i) out += (i ? ", " : "") + parts[i];
  return out + ".";
}

std::string alignment_instructions(const HouseholdContext* ctx) {
  if (ctx == nullptr || ctx->anchors.empty()) return "No joint activities have been agreed for this person yet.";
  std::string out = "This chain must include these joint activities exactly as agreed:";
  for (const auto& a : ctx->anchors) {
    out += "\n- " + std::string(activity_label(a.activity_type)) + " (type " +
           std::to_string(activity_code(a.activity_type)) + ") from " + format_hhmm(a.start) + " to " +
           format_hhmm(a.end) + " with participants [";
    for (std::size_t i = 0; i < a.required_participants.size(); ++i) {
      out += (i ? ", " : "") + std::string("\"") + a.required_participants[i] + "\"";
    }
    out += "]";
  }
  return out;
}

std::string few_shot_text(std::span<const ActivityChain> few_shot) {
  std::string out;
  for (std::size_t i = 0; i < few_shot.size(); ++i) {
    if (i) out += "\n";
    out += "Example " + std::to_string(i + 1) + ": " + encode_wire(few_shot[i].activities);
  }
  return out;
}

}  // namespace

std::string render_template(std::string_view tpl, const std::map<std::string, std::string, std::less<>>& values) {
  std::string out;
  out.reserve(tpl.size() * 2);
  std::size_t pos = 0;
  while (pos < tpl.size()) {
    auto open = tpl.find("{{", pos);
    if (open == std::string_view::npos) {
      out.append(tpl.substr(pos));
      break;
    }
    out.append(tpl.substr(pos, open - pos));
    auto close = tpl.find("}}", open + 2);
    if (close == std::string_view::npos) throw std::invalid_argument("unterminated template placeholder");
    auto name = tpl.substr(open + 2, close - open - 2);
    auto it = values.find(name);
    if (it == values.end()) throw std::invalid_argument("no value for template placeholder " + std::string(name));
    out.append(it->second);
    pos = close + 2;
  }
  return out;
}

std::string_view prompt_section_name(PromptSection s) {
  switch (s) {
    case PromptSection::task: return "task";
    case PromptSection::statistics: return "statistics";
    case PromptSection::guidelines: return "guidelines";
    case PromptSection::few_shot: return "few_shot";
    case PromptSection::rag_feedback: return "rag_feedback";
  }
  return "unknown";
}

const std::string& PromptBundle::section(PromptSection s) const {
  for (const auto& [label, text] : sections) {
    if (label == s) return text;
  }
  throw std::out_of_range("prompt bundle has no " + std::string(prompt_section_name(s)) + " section");
}

std::string render_profile(const SocioProfile& p) {
  std::ostringstream os;
  os << "This person (id " << p.agent_id << ") is a " << p.age << "-year-old " << p.gender << " living in "
     << p.location_descriptor << ". Education level: " << p.education << ". Student status: " << p.student_status
     << ". Employment status: " << p.employment_status
     << ". Household relationship: " << relationship_name(p.household_relationship)
     << ". Income level: " << p.income_level << ". This person "
     << (p.has_driver_license ? "holds a driver license." : "does not hold a driver license.");
  return os.str();
}

PromptBundle build_prompt(const SocioProfile& profile, const ReferenceStats& stats,
                          const std::optional<std::string>& guidance, const HouseholdContext* household_context,
                          std::span<const ActivityChain> few_shot) {
  if (few_shot.size() < 2) throw std::invalid_argument("build_prompt needs at least two few-shot examples");

  std::string rag;
  if (guidance && !guidance->empty()) rag += "Statistical feedback: " + *guidance;
  if (household_context != nullptr) {
    auto ctx = render_context(*household_context);
    if (!ctx.empty()) {
      if (!rag.empty()) rag += "\n";
      rag += ctx;
      if (rag.back() == '\n') rag.pop_back();
    }
  }
  if (rag.empty()) rag = kNoFeedbackSentinel;

  PromptBundle bundle;
  bundle.sections = {
      {PromptSection::task, render_template(prompt_template("task"), {})},
      {PromptSection::statistics, verbalize_stats(stats, profile)},
      {PromptSection::guidelines, render_template(prompt_template("guidelines"), {})},
      {PromptSection::few_shot, few_shot_text(few_shot)},
      {PromptSection::rag_feedback, rag},
  };
  for (auto& [label, text] : bundle.sections) {
    while (!text.empty() && text.back() == '\n') text.pop_back();
  }
  bundle.system_text = render_template(prompt_template("system"),
                                       {{"task", bundle.sections[0].second},
                                        {"statistics", bundle.sections[1].second},
                                        {"guidelines", bundle.sections[2].second},
                                        {"few_shot", bundle.sections[3].second},
                                        {"rag_feedback", bundle.sections[4].second},
                                        {"activity_codes", activity_codes()}});
  bundle.user_text = render_template(prompt_template("user"), {{"profile", render_profile(profile)},
                                                               {"household_members", household_members_line(household_context)},
                                                               {"alignment", alignment_instructions(household_context)}});
  return bundle;
}

PromptBundle with_retry_note(PromptBundle bundle, std::string_view reason_code, std::string_view reason) {
  bundle.user_text += "\n" + render_template(prompt_template("retry"), {{"reason_code", std::string(reason_code)},
                                                                         {"reason", std::string(reason)}});
  return bundle;
}

std::vector<ActivityChain> select_few_shot(std::span<const ActivityChain> pool, const AgentDirectory& agents,
                                           const SocioProfile& profile, std::size_t k) {
  const auto want = group_mask(group_tags(profile));
  auto groups_of = [&](const ActivityChain& c) -> std::optional<std::uint8_t> {
    auto it = agents.find(c.owner);
    if (it == agents.end()) return std::nullopt;
    return it->second.groups;
  };
  std::vector<const ActivityChain*> picked;
  for (const auto& c : pool) {
    if (picked.size() == k) break;
    if (groups_of(c) == want) picked.push_back(&c);
  }
  for (const auto& c : pool) {
    if (picked.size() == k) break;
    if (std::find(picked.begin(), picked.end(), &c) == picked.end()) picked.push_back(&c);
  }

  std::vector<ActivityChain> out;
  for (const auto* c : picked) {
    auto copy = *c;
    for (auto& a : copy.activities) {
      for (auto& p : a.participants) {
        auto it = agents.find(p);
        p = it == agents.end() ? std::string("other") : std::string(relationship_name(it->second.relationship));
      }
      std::sort(a.participants.begin(), a.participants.end());
    }
    out.push_back(std::move(copy));
  }
  return out;
}

std::size_t proxy_token_count(std::string_view text) {
  std::size_t count = 0;
  bool in_word = false;
  for (char ch : text) {
    const bool space = ch == ' ' || ch == '\n' || ch == '\t' || ch == '\r';
    if (!space && !in_word) ++count;
    in_word = !space;
  }
  return count;
}

}  // namespace actchain
