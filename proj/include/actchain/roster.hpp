#pragma once

#include <filesystem>
#include <iosfwd>
#include <span>
#include <string_view>
#include <vector>

#include "actchain/domain.hpp"
#include "actchain/stats.hpp"

namespace actchain {

inline constexpr std::string_view kRosterHeader =
    "household_id,agent_id,gender,age,education,student_status,employment_status,relationship,income_level,"
    "has_driver_license,location";

// Households in first-appearance order, members in file order. Throws
// std::runtime_error naming the line on any malformed row, and
// std::invalid_argument for a household failing check_household.
std::vector<Household> read_roster(std::istream& in);
std::vector<Household> read_roster_file(const std::filesystem::path& path);

void write_roster(std::ostream& out, std::span<const Household> households);

ProfileMap profiles_of(std::span<const Household> households);
std::size_t member_count(std::span<const Household> households);

}  // namespace actchain
