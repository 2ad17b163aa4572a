#include "actchain/stats.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <istream>
#include <ostream>
#include <sstream>

#include "actchain/csv.hpp"

namespace actchain {
namespace {

constexpr double kNormTolerance = 1e-9;
constexpr const char* kStatsSchema = "actchain.reference_stats/1";

std::vector<std::string> split_list(std::string_view text, char sep) {
  std::vector<std::string> out;
  std::size_t pos = 0;
  while (pos <= text.size()) {
    auto next = text.find(sep, pos);
    if (next == std::string_view::npos) next = text.size();
    auto item = text.substr(pos, next - pos);
    while (!item.empty() && item.front() == ' ') item.remove_prefix(1);
    while (!item.empty() && item.back() == ' ') item.remove_suffix(1);
    if (!item.empty()) out.emplace_back(item);
    pos = next + 1;
  }
  return out;
}

std::string join(const std::vector<std::string>& items, char sep) {
  std::string out;
  for (const auto& s : items) {
    if (!out.empty()) out += sep;
    out += s;
  }
  return out;
}

template <typename Array>
nlohmann::json array_json(const Array& a) {
  return nlohmann::json(std::vector<typename Array::value_type>(a.begin(), a.end()));
}

template <typename T, std::size_t N>
void read_array(const nlohmann::json& j, const char* key, std::array<T, N>& out) {
  auto it = j.find(key);
  if (it == j.end() || !it->is_array() || it->size() != N) {
    throw SchemaError("schema", std::string("stats field \"") + key + "\" must be an array of " + std::to_string(N));
  }
  for (std::size_t i = 0; i < N; ++i) out[i] = (*it)[i].get<T>();
}

template <typename T, std::size_t R, std::size_t C>
void read_matrix(const nlohmann::json& j, const char* key, std::array<std::array<T, C>, R>& out) {
  auto it = j.find(key);
  if (it == j.end() || !it->is_array() || it->size() != R) {
    throw SchemaError("schema", std::string("stats field \"") + key + "\" must have " + std::to_string(R) + " rows");
  }
  for (std::size_t r = 0; r < R; ++r) {
    const auto& row = (*it)[r];
    if (!row.is_array() || row.size() != C) {
      throw SchemaError("schema", std::string("stats field \"") + key + "\" rows must have " + std::to_string(C) +
                                      " entries");
    }
    for (std::size_t c = 0; c < C; ++c) out[r][c] = row[c].get<T>();
  }
}

template <typename T, std::size_t R, std::size_t C>
nlohmann::json matrix_json(const std::array<std::array<T, C>, R>& m) {
  auto out = nlohmann::json::array();
  for (const auto& row : m) out.push_back(array_json(row));
  return out;
}

nlohmann::json histogram_json(const Histogram& h) {
  return {{"bin_edges", h.bin_edges}, {"counts", h.counts}};
}

Histogram histogram_from_json(const nlohmann::json& j, const char* key, const Histogram& shape) {
  auto it = j.find(key);
  if (it == j.end() || !it->is_object()) throw SchemaError("schema", std::string("missing histogram \"") + key + "\"");
  Histogram h;
  h.bin_edges = it->at("bin_edges").get<std::vector<double>>();
  h.counts = it->at("counts").get<std::vector<std::uint64_t>>();
  if (h.bin_edges != shape.bin_edges || h.counts.size() != shape.counts.size()) {
    throw SchemaError("schema", std::string("histogram \"") + key + "\" does not use the fixed binning");
  }
  return h;
}

nlohmann::json bundle_json(const StatsBundle& b) {
  nlohmann::json j;
  j["chain_count"] = b.chain_count;
  j["activity_count"] = b.activity_count;
  j["type_counts"] = array_json(b.type_counts);
  j["type_dist"] = b.type_dist.probabilities();
  j["start_hist"] = histogram_json(b.start_hist);
  j["end_hist"] = histogram_json(b.end_hist);
  j["duration_hist"] = histogram_json(b.duration_hist);
  j["length_counts"] = array_json(b.length_counts);
  j["length_dist"] = b.length_dist.probabilities();
  j["type_start_counts"] = matrix_json(b.type_start_counts);
  j["type_end_counts"] = matrix_json(b.type_end_counts);
  nlohmann::json joint;
  for (auto pair : kRelationPairs) {
    const int r = static_cast<int>(pair);
    joint[std::string(relation_pair_name(pair))] = {{"joint", array_json(b.joint_counts[r])},
                                                    {"total", array_json(b.joint_totals[r])},
                                                    {"rates", array_json(b.joint_rates[r])}};
  }
  j["joint"] = std::move(joint);
  return j;
}

StatsBundle bundle_from_json(const nlohmann::json& j) {
  kernels::BinCounts c;
  c.chains = j.at("chain_count").get<std::uint64_t>();
  c.activities = j.at("activity_count").get<std::uint64_t>();
  read_array(j, "type_counts", c.type);
  read_array(j, "length_counts", c.length);
  read_matrix(j, "type_start_counts", c.type_start);
  read_matrix(j, "type_end_counts", c.type_end);
  auto copy_counts = [](const Histogram& h, auto& dst) { std::copy(h.counts.begin(), h.counts.end(), dst.begin()); };
  copy_counts(histogram_from_json(j, "start_hist", Histogram::time_of_day()), c.start);
  copy_counts(histogram_from_json(j, "end_hist", Histogram::time_of_day()), c.end);
  copy_counts(histogram_from_json(j, "duration_hist", Histogram::duration()), c.duration);
  const auto& joint = j.at("joint");
  for (auto pair : kRelationPairs) {
    const int r = static_cast<int>(pair);
    const auto& entry = joint.at(std::string(relation_pair_name(pair)));
    read_array(entry, "joint", c.joint[r]);
    read_array(entry, "total", c.joint_total[r]);
  }
  auto bundle = StatsBundle::from_counts(c);

  // Stored distributions must agree with the counts they were derived from.
  auto check = [&](const char* key, const Distribution& d) {
    auto it = j.find(key);
    if (it == j.end()) return;
    auto stored = it->get<std::vector<double>>();
    if (stored.size() != d.size()) throw SchemaError("schema", std::string("\"") + key + "\" has the wrong arity");
    for (std::size_t i = 0; i < stored.size(); ++i) {
      if (std::abs(stored[i] - d[i]) > kNormTolerance) {
        throw SchemaError("schema", std::string("\"") + key + "\" disagrees with its counts");
      }
    }
  };
  check("type_dist", bundle.type_dist);
  check("length_dist", bundle.length_dist);
  return bundle;
}

}  // namespace

std::uint64_t Histogram::total() const {
  std::uint64_t t = 0;
  for (auto c : counts) t += c;
  return t;
}

Histogram Histogram::time_of_day() {
  Histogram h;
  for (int i = 0; i <= kTimeBins; ++i) h.bin_edges.push_back(60.0 * i);
  h.counts.assign(kTimeBins, 0);
  return h;
}

Histogram Histogram::duration() {
  Histogram h;
  for (int i = 0; i < kDurationBins; ++i) h.bin_edges.push_back(30.0 * i);
  h.bin_edges.push_back(1441.0);
  h.counts.assign(kDurationBins, 0);
  return h;
}

Distribution::Distribution(std::vector<double> probabilities) : p_(std::move(probabilities)) {
  for (double v : p_) {
    if (!(v >= 0.0)) throw std::invalid_argument("distribution has a negative or NaN probability");
  }
  if (!is_normalized()) throw std::invalid_argument("distribution does not sum to 1");
}

Distribution Distribution::from_count_vector(std::span<const std::uint64_t> counts) {
  Distribution d;
  std::uint64_t total = 0;
  for (auto c : counts) total += c;
  d.p_.resize(counts.size(), 0.0);
  if (total == 0) return d;
  for (std::size_t i = 0; i < counts.size(); ++i) {
    d.p_[i] = static_cast<double>(counts[i]) / static_cast<double>(total);
  }
  return d;
}

bool Distribution::is_normalized() const {
  if (p_.empty()) return false;
  double s = 0.0;
  for (double v : p_) s += v;
  return std::abs(s - 1.0) <= kNormTolerance;
}

double jsd(std::span<const double> p, std::span<const double> q) {
  if (p.size() != q.size()) {
    throw std::invalid_argument("jsd: arity mismatch (" + std::to_string(p.size()) + " vs " +
                                std::to_string(q.size()) + ")");
  }
  auto check = [](std::span<const double> d, const char* name) {
    double s = 0.0;
    for (double v : d) {
      if (!(v >= 0.0)) throw std::invalid_argument(std::string("jsd: ") + name + " has a negative probability");
      s += v;
    }
    if (d.empty() || std::abs(s - 1.0) > kNormTolerance) {
      throw std::invalid_argument(std::string("jsd: ") + name + " is not normalized");
    }
  };
  check(p, "p");
  check(q, "q");
  return kernels::jsd_unchecked(p, q);
}

double jsd(const Distribution& p, const Distribution& q) { return jsd(p.probabilities(), q.probabilities()); }

std::string_view relation_pair_name(RelationPair pair) {
  switch (pair) {
    case RelationPair::head_spouse: return "head-spouse";
    case RelationPair::head_child: return "head-child";
    case RelationPair::any: return "any";
  }
  return "any";
}

StatsBundle StatsBundle::from_counts(const kernels::BinCounts& c) {
  StatsBundle b;
  b.chain_count = c.chains;
  b.activity_count = c.activities;
  b.type_counts = c.type;
  b.type_dist = Distribution::from_counts(c.type);
  std::copy(c.start.begin(), c.start.end(), b.start_hist.counts.begin());
  std::copy(c.end.begin(), c.end.end(), b.end_hist.counts.begin());
  std::copy(c.duration.begin(), c.duration.end(), b.duration_hist.counts.begin());
  b.length_counts = c.length;
  b.length_dist = Distribution::from_counts(c.length);
  b.type_start_counts = c.type_start;
  b.type_end_counts = c.type_end;
  b.joint_counts = c.joint;
  b.joint_totals = c.joint_total;
  for (int r = 0; r < 3; ++r) {
    for (int t = 0; t < kActivityTypeCount; ++t) {
      b.joint_rates[r][t] = c.joint_total[r][t] == 0
                                ? 0.0
                                : static_cast<double>(c.joint[r][t]) / static_cast<double>(c.joint_total[r][t]);
    }
  }
  return b;
}

std::uint8_t group_mask(const std::vector<std::string>& tags) {
  std::uint8_t mask = 0;
  for (const auto& t : tags) {
    if (t == "student") mask |= kernels::kGroupStudent;
    if (t == "worker") mask |= kernels::kGroupWorker;
  }
  return mask;
}

AgentDirectory directory_from_profiles(const ProfileMap& profiles) {
  AgentDirectory dir;
  dir.reserve(profiles.size());
  for (const auto& [id, p] : profiles) dir[id] = AgentInfo{p.household_relationship, group_mask(group_tags(p))};
  return dir;
}

kernels::FlatChains flatten(std::span<const ActivityChain> chains, const AgentDirectory& agents) {
  kernels::FlatChains flat;
  flat.chain_lengths.reserve(chains.size());
  flat.chain_groups.reserve(chains.size());
  auto lookup = [&](const AgentId& id) -> const AgentInfo& {
    auto it = agents.find(id);
    if (it == agents.end()) throw std::invalid_argument("no profile for agent " + id);
    return it->second;
  };
  for (const auto& chain : chains) {
    if (chain.activities.empty()) throw std::invalid_argument("chain of " + chain.owner + " is empty");
    const auto& owner = lookup(chain.owner);
    flat.chain_lengths.push_back(static_cast<std::uint32_t>(chain.activities.size()));
    flat.chain_groups.push_back(owner.groups);
    for (const auto& a : chain.activities) {
      kernels::FlatActivity fa;
      fa.type_index = static_cast<std::uint8_t>(activity_index(a.activity_type));
      fa.start = static_cast<std::uint16_t>(a.start.value());
      fa.end = static_cast<std::uint16_t>(a.end.value());
      fa.owner_relation = static_cast<std::uint8_t>(owner.relationship);
      fa.groups = owner.groups;
      for (const auto& p : a.participants) fa.partner_relations |= kernels::relation_bit(lookup(p).relationship);
      flat.activities.push_back(fa);
    }
  }
  return flat;
}

ReferenceStats stats_from_flat(const kernels::FlatChains& flat) {
  ReferenceStats stats;
  static_cast<StatsBundle&>(stats) = StatsBundle::from_counts(kernels::count_bins_omp(flat));
  const std::pair<const char*, std::uint8_t> groups[] = {{"student", kernels::kGroupStudent},
                                                         {"worker", kernels::kGroupWorker}};
  for (const auto& [name, mask] : groups) {
    auto counts = kernels::count_bins_omp(flat, mask);
    if (counts.chains > 0) stats.per_group.emplace(name, StatsBundle::from_counts(counts));
  }
  return stats;
}

ReferenceStats chains_to_stats(std::span<const ActivityChain> chains, const AgentDirectory& agents) {
  if (chains.empty()) throw std::invalid_argument("no chains to summarize");
  return stats_from_flat(flatten(chains, agents));
}

ReferenceStats chains_to_stats(std::span<const ActivityChain> chains, const ProfileMap& profiles) {
  return chains_to_stats(chains, directory_from_profiles(profiles));
}

DiaryIngest ingest_diary(std::istream& in) {
  DiaryIngest out;
  std::string line;
  if (!std::getline(in, line)) throw std::runtime_error("no usable records");
  if (!line.empty() && line.back() == '\r') line.pop_back();
  if (line.size() >= 3 && static_cast<unsigned char>(line[0]) == 0xEF) line.erase(0, 3);
  if (line != kDiaryHeader) {
    throw SchemaError("schema", "diary header must be \"" + std::string(kDiaryHeader) + "\", got \"" + line + "\"");
  }

  struct Row {
    HouseholdId household_id;
    Activity activity;
    std::size_t line_no;
  };
  struct AgentRows {
    HouseholdId household_id;
    std::vector<Row> rows;
  };
  std::vector<AgentId> agent_order;
  std::unordered_map<AgentId, AgentRows> by_agent;
  std::unordered_map<HouseholdId, Household> households;

  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    ++out.rows_read;
    auto skip = [&](const std::string& why) {
      ++out.rows_skipped;
      out.diagnostics.push_back("line " + std::to_string(line_no) + ": " + why);
    };
    std::vector<std::string> f;
    try {
      f = split_csv_line(line);
    } catch (const std::exception& e) {
      skip(std::string("unparseable CSV: ") + e.what());
      continue;
    }
    if (f.size() != 8) {
      skip("expected 8 fields, got " + std::to_string(f.size()));
      continue;
    }
    Row row{f[0], {}, line_no};
    AgentInfo info;
    try {
      if (f[0].empty() || f[1].empty()) throw std::invalid_argument("empty household or agent id");
      info.relationship = parse_relationship(f[2]);
      info.groups = group_mask(split_list(f[3], ';'));
      std::size_t used = 0;
      const int code = std::stoi(f[4], &used);
      if (used != f[4].size()) throw std::invalid_argument("activity code \"" + f[4] + "\" is not an integer");
      row.activity.activity_type = activity_type_from_code(code);
      row.activity.start = parse_hhmm(f[5]);
      row.activity.end = parse_hhmm(f[6]);
      row.activity.participants = split_list(f[7], ';');
      std::sort(row.activity.participants.begin(), row.activity.participants.end());
    } catch (const std::exception& e) {
      skip(e.what());
      continue;
    }
    auto [it, inserted] = by_agent.try_emplace(f[1], AgentRows{f[0], {}});
    if (inserted) {
      agent_order.push_back(f[1]);
      out.agents[f[1]] = info;
      out.tags[f[1]] = split_list(f[3], ';');
      auto& hh = households[f[0]];
      hh.household_id = f[0];
      SocioProfile member;
      member.agent_id = f[1];
      member.household_relationship = info.relationship;
      hh.members.push_back(std::move(member));
    } else if (it->second.household_id != f[0]) {
      skip("agent " + f[1] + " appears in two households");
      continue;
    }
    it->second.rows.push_back(std::move(row));
  }

  for (const auto& id : agent_order) {
    auto& agent = by_agent[id];
    std::stable_sort(agent.rows.begin(), agent.rows.end(),
                     [](const Row& a, const Row& b) { return a.activity.start < b.activity.start; });
    ActivityChain chain;
    chain.owner = id;
    chain.household_id = agent.household_id;
    for (auto& r : agent.rows) chain.activities.push_back(r.activity);
    auto result = validate_chain(chain, households[agent.household_id]);
    if (!result.ok()) {
      out.rows_skipped += agent.rows.size();
      out.diagnostics.push_back("agent " + id + " (line " + std::to_string(agent.rows.front().line_no) +
                                "): " + result.summary());
      continue;
    }
    out.chains.push_back(std::move(chain));
  }
  if (out.chains.empty()) throw std::runtime_error("no usable records");
  out.stats = chains_to_stats(out.chains, out.agents);
  return out;
}

DiaryIngest ingest_diary_file(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open diary file " + path.string());
  return ingest_diary(in);
}

void write_diary_csv(std::ostream& out, std::span<const ActivityChain> chains, const ProfileMap& profiles) {
  out << kDiaryHeader << '\n';
  for (const auto& chain : chains) {
    auto it = profiles.find(chain.owner);
    if (it == profiles.end()) throw std::invalid_argument("no profile for agent " + chain.owner);
    const auto& p = it->second;
    const auto tags = join(group_tags(p), ';');
    for (const auto& a : chain.activities) {
      out << chain.household_id << ',' << chain.owner << ',' << relationship_name(p.household_relationship) << ','
          << tags << ',' << activity_code(a.activity_type) << ',' << format_hhmm(a.start) << ','
          << format_hhmm(a.end) << ',' << join(a.participants, ';') << '\n';
    }
  }
}

nlohmann::json stats_to_json(const ReferenceStats& stats) {
  auto j = bundle_json(stats);
  j["schema"] = kStatsSchema;
  j["max_chain_length"] = kMaxChainLength;
  auto groups = nlohmann::json::object();
  for (const auto& [name, bundle] : stats.per_group) groups[name] = bundle_json(bundle);
  j["per_group"] = std::move(groups);
  return j;
}

ReferenceStats stats_from_json(const nlohmann::json& j) {
  if (!j.is_object()) throw SchemaError("schema", "stats document is not a JSON object");
  if (j.value("schema", "") != kStatsSchema) {
    throw SchemaError("schema", std::string("stats document schema must be \"") + kStatsSchema + "\"");
  }
  if (j.value("max_chain_length", 0) != kMaxChainLength) {
    throw SchemaError("schema", "stats document uses a different maximum chain length");
  }
  try {
    ReferenceStats stats;
    static_cast<StatsBundle&>(stats) = bundle_from_json(j);
    if (stats.chain_count == 0) throw SchemaError("schema", "stats document has no chains");
    if (auto it = j.find("per_group"); it != j.end()) {
      for (const auto& [name, value] : it->items()) stats.per_group.emplace(name, bundle_from_json(value));
    }
    return stats;
  } catch (const nlohmann::json::exception& e) {
    throw SchemaError("schema", std::string("malformed stats document: ") + e.what());
  }
}

void save_stats(const ReferenceStats& stats, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << stats_to_json(stats).dump(1) << '\n';
  if (!out) throw std::runtime_error("failed writing " + path.string());
}

ReferenceStats load_stats(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open stats file " + path.string());
  auto j = nlohmann::json::parse(in, nullptr, false);
  if (j.is_discarded()) throw SchemaError("schema", "stats file " + path.string() + " is not valid JSON");
  return stats_from_json(j);
}

}  // namespace actchain
