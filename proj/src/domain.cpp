#include "actchain/domain.hpp"

#include <algorithm>
#include <charconv>
#include <cstdio>
#include <set>

namespace actchain {
namespace {

constexpr std::array<std::string_view, kActivityTypeCount> kLabels = {
    "Home",         "Work",           "School",        "Caregiving",   "Buy goods",
    "Buy services", "Buy meals",      "General errands", "Recreational", "Exercise",
    "Visit friends", "Health care",   "Religious",     "Something else", "Drop off/Pick up",
};

constexpr std::array<std::string_view, kActivityTypeCount> kSlugs = {
    "home",         "work",          "school",          "caregiving",   "buy_goods",
    "buy_services", "buy_meals",     "general_errands", "recreational", "exercise",
    "visit_friends", "health_care",  "religious",       "something_else", "drop_off_pick_up",
};

std::string activity_ref(int index) { return "activity " + std::to_string(index + 1); }

const nlohmann::json& require(const nlohmann::json& j, const char* key) {
  auto it = j.find(key);
  if (it == j.end()) throw SchemaError("missing_field", std::string("missing field \"") + key + "\"");
  return *it;
}

}  // namespace

std::string_view activity_label(ActivityType t) { return kLabels.at(activity_index(t)); }

std::string activity_slug(ActivityType t) { return std::string(kSlugs.at(activity_index(t))); }

ActivityType activity_type_from_code(int code) {
  if (!is_valid_activity_code(code)) {
    throw std::invalid_argument("activity code " + std::to_string(code) + " out of range 1..15");
  }
  return static_cast<ActivityType>(code);
}

MinuteOfDay::MinuteOfDay(int value) : value_(value) {
  if (value < 0 || value > kMax) {
    throw std::out_of_range("minute of day " + std::to_string(value) + " outside 0..1440");
  }
}

std::string format_hhmm(MinuteOfDay t) {
  char buf[16];
  std::snprintf(buf, sizeof(buf), "%02d:%02d", t.value() / 60, t.value() % 60);
  return buf;
}

MinuteOfDay parse_hhmm(std::string_view text) {
  auto bad = [&] { return std::invalid_argument("bad time \"" + std::string(text) + "\", expected HH:MM"); };
  auto colon = text.find(':');
  if (colon == std::string_view::npos || colon == 0 || colon > 2 || text.size() != colon + 3) throw bad();
  int hours = 0;
  int minutes = 0;
  auto h = std::from_chars(text.data(), text.data() + colon, hours);
  auto m = std::from_chars(text.data() + colon + 1, text.data() + text.size(), minutes);
  if (h.ec != std::errc{} || h.ptr != text.data() + colon) throw bad();
  if (m.ec != std::errc{} || m.ptr != text.data() + text.size()) throw bad();
  if (minutes < 0 || minutes > 59 || hours < 0 || hours > 24) throw bad();
  if (hours == 24 && minutes != 0) throw bad();
  return MinuteOfDay(hours * 60 + minutes);
}

std::string_view relationship_name(Relationship r) {
  switch (r) {
    case Relationship::head: return "head";
    case Relationship::spouse: return "spouse";
    case Relationship::child: return "child";
    case Relationship::other: return "other";
  }
  return "other";
}

Relationship parse_relationship(std::string_view text) {
  if (text == "head") return Relationship::head;
  if (text == "spouse") return Relationship::spouse;
  if (text == "child") return Relationship::child;
  if (text == "other") return Relationship::other;
  throw std::invalid_argument("unknown household relationship \"" + std::string(text) + "\"");
}

std::vector<std::string> group_tags(const SocioProfile& profile) {
  std::vector<std::string> tags;
  if (profile.is_student()) tags.emplace_back("student");
  if (profile.is_worker()) tags.emplace_back("worker");
  return tags;
}

const SocioProfile* Household::find(std::string_view agent_id) const {
  for (const auto& m : members) {
    if (m.agent_id == agent_id) return &m;
  }
  return nullptr;
}

void check_household(const Household& household) {
  if (household.members.empty()) {
    throw std::invalid_argument("household " + household.household_id + " has no members");
  }
  std::set<std::string_view> ids;
  int heads = 0;
  for (const auto& m : household.members) {
    if (!ids.insert(m.agent_id).second) {
      throw std::invalid_argument("household " + household.household_id + " lists agent " + m.agent_id + " twice");
    }
    if (m.household_relationship == Relationship::head) ++heads;
  }
  if (heads != 1) {
    throw std::invalid_argument("household " + household.household_id + " has " + std::to_string(heads) +
                                " heads, expected exactly one");
  }
}

std::vector<const SocioProfile*> coordination_order(const Household& household) {
  std::vector<const SocioProfile*> order;
  order.reserve(household.members.size());
  for (const auto& m : household.members) order.push_back(&m);
  auto rank = [](Relationship r) {
    switch (r) {
      case Relationship::head: return 0;
      case Relationship::spouse: return 1;
      case Relationship::child: return 2;
      case Relationship::other: return 3;
    }
    return 3;
  };
  std::stable_sort(order.begin(), order.end(), [&](const SocioProfile* a, const SocioProfile* b) {
    int ra = rank(a->household_relationship);
    int rb = rank(b->household_relationship);
    if (ra != rb) return ra < rb;
    if (ra == 2) return a->age > b->age;
    return false;
  });
  return order;
}

bool Activity::names(std::string_view agent_id) const {
  return std::find(participants.begin(), participants.end(), agent_id) != participants.end();
}

std::size_t chain_length(const ActivityChain& chain) { return chain.activities.size(); }

std::string_view violation_kind_name(ViolationKind kind) {
  switch (kind) {
    case ViolationKind::empty_chain: return "empty_chain";
    case ViolationKind::reversed_times: return "reversed_times";
    case ViolationKind::out_of_day: return "out_of_day";
    case ViolationKind::bad_type_code: return "bad_type_code";
    case ViolationKind::overlap: return "overlap";
    case ViolationKind::out_of_order: return "out_of_order";
    case ViolationKind::foreign_participant: return "foreign_participant";
    case ViolationKind::self_participant: return "self_participant";
    case ViolationKind::unknown_owner: return "unknown_owner";
  }
  return "unknown";
}

std::string ValidationResult::summary() const {
  std::string out;
  for (const auto& v : violations) {
    if (!out.empty()) out += "; ";
    out += std::string(violation_kind_name(v.kind)) + ": " + v.message;
  }
  return out;
}

ValidationResult validate_chain(const ActivityChain& chain, const Household& household) {
  ValidationResult result;
  auto add = [&](ViolationKind kind, int index, std::string message) {
    result.violations.push_back(Violation{kind, index, std::move(message)});
  };

  if (!household.contains(chain.owner)) {
    add(ViolationKind::unknown_owner, -1, "owner " + chain.owner + " is not a member of household " +
                                              household.household_id);
  }
  if (chain.activities.empty()) {
    add(ViolationKind::empty_chain, -1, "chain has no activities");
    return result;
  }

  const auto& acts = chain.activities;
  for (std::size_t i = 0; i < acts.size(); ++i) {
    const int idx = static_cast<int>(i);
    const auto& a = acts[i];
    if (!is_valid_activity_code(activity_code(a.activity_type))) {
      add(ViolationKind::bad_type_code, idx,
          activity_ref(idx) + " has code " + std::to_string(activity_code(a.activity_type)) + " outside 1..15");
    }
    // MinuteOfDay is range-checked on construction; guard the start-at-1440 case.
    if (a.start.value() >= MinuteOfDay::kMax) {
      add(ViolationKind::out_of_day, idx, activity_ref(idx) + " starts at 24:00");
    }
    if (a.start >= a.end) {
      add(ViolationKind::reversed_times, idx,
          activity_ref(idx) + " ends (" + format_hhmm(a.end) + ") at or before its start (" + format_hhmm(a.start) + ")");
    }
    for (const auto& p : a.participants) {
      if (p == chain.owner) {
        add(ViolationKind::self_participant, idx, activity_ref(idx) + " lists its owner as a participant");
      } else if (!household.contains(p)) {
        add(ViolationKind::foreign_participant, idx,
            activity_ref(idx) + " names " + p + " who is not in household " + household.household_id);
      }
    }
    if (i + 1 < acts.size()) {
      const auto& b = acts[i + 1];
      if (b.start < a.end) {
        const bool intersects = a.start < b.end && b.start < a.end;
        if (intersects) {
          add(ViolationKind::overlap, idx,
              "overlap between activities " + std::to_string(idx + 1) + " and " + std::to_string(idx + 2));
        } else {
          add(ViolationKind::out_of_order, idx,
              "activities " + std::to_string(idx + 1) + " and " + std::to_string(idx + 2) + " are out of order");
        }
      }
    }
  }
  return result;
}

nlohmann::ordered_json encode_activity(const Activity& activity) {
  nlohmann::ordered_json j;
  j["type"] = activity_code(activity.activity_type);
  j["start"] = format_hhmm(activity.start);
  j["end"] = format_hhmm(activity.end);
  j["participants"] = activity.participants;
  return j;
}

nlohmann::ordered_json encode_chain(const ActivityChain& chain) {
  nlohmann::ordered_json j;
  j["owner"] = chain.owner;
  j["household_id"] = chain.household_id;
  auto acts = nlohmann::ordered_json::array();
  for (const auto& a : chain.activities) acts.push_back(encode_activity(a));
  j["activities"] = std::move(acts);
  return j;
}

std::string encode_chain_line(const ActivityChain& chain) { return encode_chain(chain).dump(); }

std::string encode_wire(const std::vector<Activity>& activities) {
  auto arr = nlohmann::ordered_json::array();
  for (const auto& a : activities) arr.push_back(encode_activity(a));
  return arr.dump();
}

Activity decode_activity(const nlohmann::json& j) {
  if (!j.is_object()) throw SchemaError("bad_field_type", "activity entry is not an object");
  const auto& type = require(j, "type");
  if (!type.is_number_integer()) throw SchemaError("bad_field_type", "field \"type\" is not an integer");
  const int code = type.get<int>();
  if (!is_valid_activity_code(code)) {
    throw SchemaError("code_out_of_range", "activity code " + std::to_string(code) + " out of range 1..15");
  }
  Activity a;
  a.activity_type = static_cast<ActivityType>(code);
  for (const char* key : {"start", "end"}) {
    const auto& field = require(j, key);
    if (!field.is_string()) throw SchemaError("bad_field_type", std::string("field \"") + key + "\" is not a string");
    try {
      (key[0] == 's' ? a.start : a.end) = parse_hhmm(field.get<std::string>());
    } catch (const std::exception& e) {
      throw SchemaError("bad_time_format", e.what());
    }
  }
  auto it = j.find("participants");
  if (it != j.end() && !it->is_null()) {
    if (!it->is_array()) throw SchemaError("bad_field_type", "field \"participants\" is not an array");
    for (const auto& p : *it) {
      if (!p.is_string()) throw SchemaError("bad_field_type", "participant id is not a string");
      a.participants.push_back(p.get<std::string>());
    }
  }
  std::sort(a.participants.begin(), a.participants.end());
  a.participants.erase(std::unique(a.participants.begin(), a.participants.end()), a.participants.end());
  return a;
}

ActivityChain decode_chain(const nlohmann::json& j) {
  if (!j.is_object()) throw SchemaError("bad_field_type", "chain record is not an object");
  ActivityChain chain;
  const auto& owner = require(j, "owner");
  if (!owner.is_string()) throw SchemaError("bad_field_type", "field \"owner\" is not a string");
  chain.owner = owner.get<std::string>();
  if (auto it = j.find("household_id"); it != j.end() && it->is_string()) chain.household_id = it->get<std::string>();
  const auto& acts = require(j, "activities");
  if (!acts.is_array()) throw SchemaError("bad_field_type", "field \"activities\" is not an array");
  for (const auto& a : acts) chain.activities.push_back(decode_activity(a));
  return chain;
}

ActivityChain decode_chain_line(std::string_view line) {
  auto j = nlohmann::json::parse(line, nullptr, false);
  if (j.is_discarded()) throw SchemaError("invalid_json", "chain record is not valid JSON");
  return decode_chain(j);
}

}  // namespace actchain
