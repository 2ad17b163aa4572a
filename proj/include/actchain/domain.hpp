#pragma once

#include <array>
#include <compare>
#include <cstdint>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

namespace actchain {

using AgentId = std::string;
using HouseholdId = std::string;

// Activity taxonomy. Codes are the wire values (1..15).
enum class ActivityType : std::uint8_t {
  home = 1,
  work = 2,
  school = 3,
  caregiving = 4,
  buy_goods = 5,
  buy_services = 6,
  buy_meals = 7,
  general_errands = 8,
  recreational = 9,
  exercise = 10,
  visit_friends = 11,
  health_care = 12,
  religious = 13,
  something_else = 14,
  drop_off_pick_up = 15,
};

inline constexpr int kActivityTypeCount = 15;

constexpr int activity_code(ActivityType t) { return static_cast<int>(t); }
constexpr bool is_valid_activity_code(int code) { return code >= 1 && code <= kActivityTypeCount; }
// 0-based index for per-type tables.
constexpr int activity_index(ActivityType t) { return static_cast<int>(t) - 1; }

std::string_view activity_label(ActivityType t);
// Throws std::invalid_argument for codes outside 1..15.
ActivityType activity_type_from_code(int code);
// Snake-case slug ("buy_meals"), used in file names.
std::string activity_slug(ActivityType t);

class MinuteOfDay {
 public:
  static constexpr int kMax = 1440;

  constexpr MinuteOfDay() = default;
  // Throws std::out_of_range outside [0, 1440].
  explicit MinuteOfDay(int value);

  constexpr int value() const { return value_; }
  auto operator<=>(const MinuteOfDay&) const = default;

 private:
  int value_ = 0;
};

// "HH:MM", zero padded. 1440 formats as "24:00".
std::string format_hhmm(MinuteOfDay t);
// Accepts "H:MM" or "HH:MM"; "24:00" maps to 1440. Throws std::invalid_argument.
MinuteOfDay parse_hhmm(std::string_view text);

enum class Relationship : std::uint8_t { head, spouse, child, other };

std::string_view relationship_name(Relationship r);
Relationship parse_relationship(std::string_view text);

struct SocioProfile {
  AgentId agent_id;
  std::string gender;
  int age = 0;
  std::string education;
  std::string student_status;     // "student" | "non-student"
  std::string employment_status;  // "employed" | "unemployed" | "retired" | ...
  Relationship household_relationship = Relationship::other;
  std::string income_level;
  bool has_driver_license = false;
  std::string location_descriptor;

  bool is_student() const { return student_status == "student"; }
  bool is_worker() const { return employment_status == "employed"; }
};

// Group tags used for evaluation slices ("student", "worker").
std::vector<std::string> group_tags(const SocioProfile& profile);

struct Household {
  HouseholdId household_id;
  std::vector<SocioProfile> members;

  const SocioProfile* find(std::string_view agent_id) const;
  bool contains(std::string_view agent_id) const { return find(agent_id) != nullptr; }
};

// Throws std::invalid_argument unless the household is non-empty, member ids
// are distinct and exactly one member is the head.
void check_household(const Household& household);

// Members in generation order: head, spouse, children by age descending, others.
std::vector<const SocioProfile*> coordination_order(const Household& household);

struct Activity {
  ActivityType activity_type = ActivityType::home;
  MinuteOfDay start;
  MinuteOfDay end;
  // Co-participants from the owner's household, sorted, owner excluded.
  std::vector<AgentId> participants;

  int duration() const { return end.value() - start.value(); }
  bool is_joint() const { return !participants.empty(); }
  bool names(std::string_view agent_id) const;
  bool operator==(const Activity&) const = default;
};

struct ActivityChain {
  AgentId owner;
  HouseholdId household_id;
  std::vector<Activity> activities;

  bool operator==(const ActivityChain&) const = default;
};

std::size_t chain_length(const ActivityChain& chain);

enum class ViolationKind {
  empty_chain,
  reversed_times,
  out_of_day,
  bad_type_code,
  overlap,
  out_of_order,
  foreign_participant,
  self_participant,
  unknown_owner,
};

std::string_view violation_kind_name(ViolationKind kind);

struct Violation {
  ViolationKind kind;
  // 0-based index of the offending activity; -1 for chain-level violations.
  int activity_index = -1;
  std::string message;
};

struct ValidationResult {
  std::vector<Violation> violations;

  bool ok() const { return violations.empty(); }
  explicit operator bool() const { return ok(); }
  std::string summary() const;
};

// Total: reports every violation found, never throws.
ValidationResult validate_chain(const ActivityChain& chain, const Household& household);

// Canonical chain record:
// {"owner":..,"household_id":..,"activities":[{"type":..,"start":"HH:MM","end":"HH:MM","participants":[..]}]}
nlohmann::ordered_json encode_activity(const Activity& activity);
nlohmann::ordered_json encode_chain(const ActivityChain& chain);
std::string encode_chain_line(const ActivityChain& chain);
// Wire form exchanged with models: the bare activity array.
std::string encode_wire(const std::vector<Activity>& activities);

struct SchemaError : std::runtime_error {
  std::string code;
  SchemaError(std::string code_, const std::string& message)
      : std::runtime_error(message), code(std::move(code_)) {}
};

// Throws SchemaError on missing fields, bad codes or bad times.
Activity decode_activity(const nlohmann::json& j);
ActivityChain decode_chain(const nlohmann::json& j);
ActivityChain decode_chain_line(std::string_view line);

}  // namespace actchain
