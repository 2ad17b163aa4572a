#include "actchain/roster.hpp"

#include <charconv>
#include <fstream>
#include <istream>
#include <ostream>
#include <unordered_map>

#include "actchain/csv.hpp"

namespace actchain {
namespace {

bool parse_bool(std::string_view s, bool& out) {
  if (s == "1" || s == "true" || s == "yes") {
    out = true;
    return true;
  }
  if (s == "0" || s == "false" || s == "no") {
    out = false;
    return true;
  }
  return false;
}

}  // namespace

std::vector<Household> read_roster(std::istream& in) {
  std::string line;
  if (!std::getline(in, line)) throw std::runtime_error("roster is empty");
  if (!line.empty() && line.back() == '\r') line.pop_back();
  if (line != kRosterHeader) throw std::runtime_error("roster header must be: " + std::string(kRosterHeader));

  std::vector<Household> households;
  std::unordered_map<HouseholdId, std::size_t> index;
  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    auto fail = [&](const std::string& why) {
      return std::runtime_error("roster line " + std::to_string(line_no) + ": " + why);
    };
    std::vector<std::string> f;
    try {
      f = split_csv_line(line);
    } catch (const std::exception& e) {
      throw fail(e.what());
    }
    if (f.size() != 11) throw fail("expected 11 fields, got " + std::to_string(f.size()));

    SocioProfile p;
    p.agent_id = f[1];
    p.gender = f[2];
    auto [ptr, ec] = std::from_chars(f[3].data(), f[3].data() + f[3].size(), p.age);
    if (ec != std::errc{} || ptr != f[3].data() + f[3].size() || p.age < 0) throw fail("bad age \"" + f[3] + "\"");
    p.education = f[4];
    p.student_status = f[5];
    p.employment_status = f[6];
    try {
      p.household_relationship = parse_relationship(f[7]);
    } catch (const std::exception& e) {
      throw fail(e.what());
    }
    p.income_level = f[8];
    if (!parse_bool(f[9], p.has_driver_license)) throw fail("bad has_driver_license \"" + f[9] + "\"");
    p.location_descriptor = f[10];
    if (f[0].empty() || p.agent_id.empty()) throw fail("household_id and agent_id are required");

    auto [it, fresh] = index.try_emplace(f[0], households.size());
    if (fresh) households.push_back(Household{f[0], {}});
    households[it->second].members.push_back(std::move(p));
  }
  for (const auto& h : households) check_household(h);
  return households;
}

std::vector<Household> read_roster_file(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open roster " + path.string());
  return read_roster(in);
}

void write_roster(std::ostream& out, std::span<const Household> households) {
  out << kRosterHeader << '\n';
  for (const auto& h : households) {
    for (const auto& p : h.members) {
      out << csv_field(h.household_id) << ',' << csv_field(p.agent_id) << ',' << csv_field(p.gender) << ',' << p.age
          << ',' << csv_field(p.education) << ',' << csv_field(p.student_status) << ','
          << csv_field(p.employment_status) << ',' << relationship_name(p.household_relationship) << ','
          << csv_field(p.income_level) << ',' << (p.has_driver_license ? "true" : "false") << ','
          << csv_field(p.location_descriptor) << '\n';
    }
  }
}

ProfileMap profiles_of(std::span<const Household> households) {
  ProfileMap out;
  for (const auto& h : households) {
    for (const auto& p : h.members) out.emplace(p.agent_id, p);
  }
  return out;
}

std::size_t member_count(std::span<const Household> households) {
  std::size_t n = 0;
  for (const auto& h : households) n += h.members.size();
  return n;
}

}  // namespace actchain
