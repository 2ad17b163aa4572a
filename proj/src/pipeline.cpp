#include "actchain/pipeline.hpp"

#include <algorithm>
#include <charconv>
#include <exception>
#include <fstream>
#include <numeric>
#include <random>
#include <set>
#include <sstream>
#include <thread>
#include <unordered_map>

#include <boost/property_tree/ini_parser.hpp>
#include <boost/property_tree/ptree.hpp>

#include "actchain/prompt.hpp"
#include "actchain/roster.hpp"

namespace actchain {
namespace {

namespace fs = std::filesystem;
using boost::property_tree::ptree;

constexpr const char* kManifestSchema = "actchain.run_manifest/1";
// Mock attempt ids: parse retries count up from 0, regenerations use multiples of this.
constexpr int kRegenerationStride = 16;

const std::map<std::string, std::set<std::string>, std::less<>> kConfigKeys = {
    {"run",
     {"seed", "sample_size", "feedback", "reconcile", "tolerance", "max_parse_retries", "concurrency", "few_shot",
      "roster", "stats", "examples", "out"}},
    {"backend",
     {"kind", "endpoint_url", "model", "temperature", "max_retries", "timeout_s", "api_key_env",
      "requests_per_second"}},
    {"mock", {"seed", "hallucination_rate", "guidance_compliance", "length_bias"}},
};

std::string trim(std::string_view s) {
  while (!s.empty() && std::isspace(static_cast<unsigned char>(s.front()))) s.remove_prefix(1);
  while (!s.empty() && std::isspace(static_cast<unsigned char>(s.back()))) s.remove_suffix(1);
  if (s.size() >= 2 && (s.front() == '"' || s.front() == '\'') && s.back() == s.front()) {
    s = s.substr(1, s.size() - 2);
  }
  return std::string(s);
}

template <typename T>
T parse_number(const std::string& key, const std::string& value) {
  T out{};
  auto [ptr, ec] = std::from_chars(value.data(), value.data() + value.size(), out);
  if (ec != std::errc{} || ptr != value.data() + value.size()) {
    throw ConfigError("config key " + key + " expects a number, got \"" + value + "\"");
  }
  return out;
}

bool parse_flag(const std::string& key, const std::string& value) {
  if (value == "true" || value == "1" || value == "yes" || value == "on") return true;
  if (value == "false" || value == "0" || value == "no" || value == "off") return false;
  throw ConfigError("config key " + key + " expects true or false, got \"" + value + "\"");
}

void apply_key(ExperimentConfig& cfg, const fs::path& base_dir, const std::string& section, const std::string& key,
               const std::string& value) {
  auto sec = kConfigKeys.find(section);
  if (sec == kConfigKeys.end()) throw ConfigError("unknown config section [" + section + "]");
  if (!sec->second.count(key)) throw ConfigError("unknown config key " + section + "." + key);
  const auto name = section + "." + key;
  auto path = [&] {
    fs::path p(value);
    return p.is_relative() ? base_dir / p : p;
  };
  auto& run = cfg.run;
  if (section == "run") {
    if (key == "seed") run.seed = parse_number<std::uint64_t>(name, value);
    else if (key == "sample_size") run.sample_size = parse_number<std::size_t>(name, value);
    else if (key == "feedback") run.feedback_enabled = parse_flag(name, value);
    else if (key == "reconcile") run.reconcile_enabled = parse_flag(name, value);
    else if (key == "tolerance") run.tolerance = parse_number<int>(name, value);
    else if (key == "max_parse_retries") run.max_parse_retries = parse_number<int>(name, value);
    else if (key == "concurrency") run.concurrency = parse_number<int>(name, value);
    else if (key == "few_shot") run.few_shot = parse_number<std::size_t>(name, value);
    else if (key == "roster") cfg.paths.roster = path();
    else if (key == "stats") cfg.paths.stats = path();
    else if (key == "examples") cfg.paths.examples = path();
    else if (key == "out") cfg.paths.out = path();
  } else if (section == "backend") {
    if (key == "kind") {
      if (value == "mock") run.backend = BackendKind::mock;
      else if (value == "http") run.backend = BackendKind::http;
      else throw ConfigError("backend.kind must be mock or http, got \"" + value + "\"");
    } else if (key == "endpoint_url") run.http.endpoint_url = value;
    else if (key == "model") run.http.model_name = value;
    else if (key == "temperature") run.http.temperature = parse_number<double>(name, value);
    else if (key == "max_retries") run.http.max_retries = parse_number<int>(name, value);
    else if (key == "timeout_s") {
      run.http.timeout = std::chrono::milliseconds(static_cast<long long>(parse_number<double>(name, value) * 1000.0));
    } else if (key == "api_key_env") run.http.api_key_env = value;
    else if (key == "requests_per_second") run.http.requests_per_second = parse_number<double>(name, value);
  } else if (section == "mock") {
    if (key == "seed") run.mock.seed = parse_number<std::uint64_t>(name, value);
    else if (key == "hallucination_rate") run.mock.hallucination_rate = parse_number<double>(name, value);
    else if (key == "guidance_compliance") run.mock.guidance_compliance = parse_number<double>(name, value);
    else if (key == "length_bias") {
      if (value.empty() || value == "none") {
        run.mock.length_bias.reset();
      } else {
        try {
          run.mock.length_bias = parse_length_bias(value);
        } catch (const std::invalid_argument& e) {
          throw ConfigError(std::string("mock.length_bias: ") + e.what());
        }
      }
    }
  }
}

std::uint64_t mix(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ull;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ull;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebull;
  return x ^ (x >> 31);
}

void write_atomic(const fs::path& path, const std::string& text) {
  auto tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::trunc | std::ios::binary);
    if (!out) throw std::runtime_error("cannot write " + tmp.string());
    out << text;
    if (!out.flush()) throw std::runtime_error("failed writing " + tmp.string());
  }
  fs::rename(tmp, path);
}

struct HouseholdOutcome {
  std::vector<ActivityChain> chains;  // commit order
  RunCounts counts;
  std::vector<SkippedAgent> skipped;
  std::map<AgentId, int> parse_retries;
  std::vector<double> latencies_ms;
  std::exception_ptr error;
};

struct Worker {
  const RunConfig& config;
  const ReferenceStats& stats;
  const FewShotPool& pool;
  const Sample& sample;
  ChainBackend& backend;
  const std::function<void(const SocioProfile&, const HouseholdContext&)>& on_context;

  // One backend reply parsed into a chain, with corrective retries. Attempt ids
  // start at `attempt_base`.
  std::optional<ActivityChain> generate_parsed(const Household& household, const SocioProfile& profile,
                                               const PromptBundle& bundle, const std::optional<Guidance>& guidance,
                                               const HouseholdContext& context, int attempt_base,
                                               HouseholdOutcome& out, std::string& last_reason) const {
    PromptBundle current = bundle;
    for (int r = 0; r <= config.max_parse_retries; ++r) {
      GenerationRequest request{current, profile, guidance, &context, attempt_base + r};
      auto raw = backend.generate(request);
      ++out.counts.backend_calls;
      out.latencies_ms.push_back(static_cast<double>(raw.latency.count()));
      try {
        return parse_completion(raw, household, profile.agent_id);
      } catch (const ParseFailure& e) {
        ++out.counts.parse_failures;
        if (r < config.max_parse_retries) ++out.parse_retries[profile.agent_id];
        last_reason = e.code;
        current = with_retry_note(bundle, e.code, e.what());
      }
    }
    return std::nullopt;
  }

  HouseholdOutcome run(const Household& household, FeedbackState feedback) const {
    HouseholdOutcome out;
    try {
      ChainStore local;
      ReconcilePolicy policy;
      policy.enabled = config.reconcile_enabled;
      policy.tolerance = config.tolerance;

      for (const auto* member : coordination_order(household)) {
        const auto& profile = *member;
        const auto context = build_context(local, household, profile.agent_id);
        if (on_context) on_context(profile, context);

        const auto guidance = next_guidance(feedback);
        const auto few_shot = select_few_shot(pool.chains, pool.agents, profile, config.few_shot);
        const auto bundle = build_prompt(profile, stats,
                                         guidance ? std::optional<std::string>(guidance->text) : std::nullopt,
                                         &context, few_shot);

        std::string reason;
        auto chain = generate_parsed(household, profile, bundle, guidance, context, 0, out, reason);
        if (!chain) {
          out.skipped.push_back({profile.agent_id, household.household_id, reason});
          continue;
        }

        Regenerator regenerate = [&](int k) -> std::optional<ActivityChain> {
          const auto fresh_context = build_context(local, household, profile.agent_id);
          auto note = with_retry_note(bundle, "unmatched_joint_activity",
                                      "a joint activity does not match the household's agreed schedule; reproduce "
                                      "every agreed joint activity exactly");
          std::string ignored;
          return generate_parsed(household, profile, note, guidance, fresh_context, k * kRegenerationStride, out,
                                 ignored);
        };
        auto repaired = reconcile(std::move(*chain), local, household, policy, regenerate);
        for (const auto& entry : repaired.log) {
          switch (entry.kind) {
            case RepairKind::snap: ++out.counts.snaps; break;
            case RepairKind::regenerate: ++out.counts.regenerations; break;
            case RepairKind::demote: ++out.counts.demotions; break;
          }
        }
        feedback.record(chain_length(repaired.chain));
        local.commit(std::move(repaired.chain));
      }
      out.chains = local.chains();
      for (const auto& c : out.chains) {
        ++out.counts.generated;
        if (sample.sampled.count(c.owner)) ++out.counts.sampled_generated;
      }
    } catch (...) {
      out.error = std::current_exception();
    }
    return out;
  }
};

}  // namespace

std::string_view backend_kind_name(BackendKind kind) { return kind == BackendKind::http ? "http" : "mock"; }

void RunConfig::validate() const {
  if (sample_size < 1) throw ConfigError("sample_size must be at least 1");
  if (max_parse_retries < 0) throw ConfigError("max_parse_retries must be >= 0");
  if (max_parse_retries >= kRegenerationStride) {
    throw ConfigError("max_parse_retries must be below " + std::to_string(kRegenerationStride));
  }
  if (concurrency < 1) throw ConfigError("concurrency must be at least 1");
  if (tolerance < 0) throw ConfigError("tolerance must be >= 0");
  if (few_shot < 2) throw ConfigError("few_shot must be at least 2");
  try {
    if (backend == BackendKind::http) http.validate();
    mock.validate();
  } catch (const std::exception& e) {
    throw ConfigError(e.what());
  }
}

nlohmann::json RunConfig::to_json() const {
  nlohmann::json backend_json = {{"kind", backend_kind_name(backend)}};
  if (backend == BackendKind::http) {
    backend_json["endpoint_url"] = http.endpoint_url;
    backend_json["model"] = http.model_name;
    backend_json["temperature"] = http.temperature;
    backend_json["max_retries"] = http.max_retries;
    backend_json["timeout_ms"] = http.timeout.count();
    backend_json["api_key_env"] = http.api_key_env;
    backend_json["requests_per_second"] = http.requests_per_second;
  } else {
    backend_json["seed"] = mock.seed;
    backend_json["hallucination_rate"] = mock.hallucination_rate;
    backend_json["guidance_compliance"] = mock.guidance_compliance;
    backend_json["length_bias"] =
        mock.length_bias ? nlohmann::json(mock.length_bias->probabilities()) : nlohmann::json(nullptr);
  }
  return {{"backend", backend_json},
          {"feedback", feedback_enabled},
          {"reconcile", reconcile_enabled},
          {"sample_size", sample_size},
          {"seed", seed},
          {"tolerance", tolerance},
          {"max_parse_retries", max_parse_retries},
          {"concurrency", concurrency},
          {"few_shot", few_shot},
          {"prompt_templates", kPromptTemplateVersion}};
}

Distribution parse_length_bias(std::string_view text) {
  std::vector<double> p(kLengthBins, 0.0);
  std::string s(text);
  std::stringstream ss(s);
  std::string item;
  double total = 0.0;
  while (std::getline(ss, item, ',')) {
    item = trim(item);
    if (item.empty()) continue;
    auto colon = item.find(':');
    const auto len_text = trim(item.substr(0, colon));
    int length = 0;
    auto [ptr, ec] = std::from_chars(len_text.data(), len_text.data() + len_text.size(), length);
    if (ec != std::errc{} || ptr != len_text.data() + len_text.size() || length < 1) {
      throw std::invalid_argument("bad length \"" + len_text + "\"");
    }
    double weight = 1.0;
    if (colon != std::string::npos) {
      const auto w_text = trim(item.substr(colon + 1));
      auto [wp, wec] = std::from_chars(w_text.data(), w_text.data() + w_text.size(), weight);
      if (wec != std::errc{} || wp != w_text.data() + w_text.size() || weight < 0.0) {
        throw std::invalid_argument("bad weight \"" + w_text + "\"");
      }
    }
    p[bin_length(static_cast<std::size_t>(length))] += weight;
    total += weight;
  }
  if (total <= 0.0) throw std::invalid_argument("length bias has no positive weight");
  for (auto& x : p) x /= total;
  return Distribution(std::move(p));
}

ExperimentConfig parse_experiment_config(std::istream& in, const fs::path& base_dir,
                                         const std::vector<std::string>& overrides) {
  ptree tree;
  try {
    boost::property_tree::ini_parser::read_ini(in, tree);
  } catch (const boost::property_tree::ini_parser_error& e) {
    throw ConfigError(std::string("config: ") + e.what());
  }
  ExperimentConfig cfg;
  for (const auto& [section, body] : tree) {
    if (body.empty() && !body.data().empty()) throw ConfigError("config key " + section + " is outside any section");
    if (!kConfigKeys.count(section)) throw ConfigError("unknown config section [" + section + "]");
    for (const auto& [key, value] : body) apply_key(cfg, base_dir, section, key, trim(value.data()));
  }
  for (const auto& o : overrides) {
    auto eq = o.find('=');
    auto dot = o.find('.');
    if (eq == std::string::npos || dot == std::string::npos || dot > eq) {
      throw ConfigError("override \"" + o + "\" must look like section.key=value");
    }
    apply_key(cfg, fs::current_path(), trim(o.substr(0, dot)), trim(o.substr(dot + 1, eq - dot - 1)),
              trim(o.substr(eq + 1)));
  }
  cfg.run.validate();
  return cfg;
}

ExperimentConfig load_experiment_config(const fs::path& path, const std::vector<std::string>& overrides) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config " + path.string());
  return parse_experiment_config(in, fs::absolute(path).parent_path(), overrides);
}

Sample sample_agents(std::span<const Household> roster, std::size_t n, std::uint64_t seed) {
  std::vector<std::pair<std::size_t, const SocioProfile*>> agents;
  for (std::size_t h = 0; h < roster.size(); ++h) {
    for (const auto& m : roster[h].members) agents.emplace_back(h, &m);
  }
  if (n == 0) throw std::invalid_argument("sample size must be at least 1");
  if (n > agents.size()) {
    throw std::invalid_argument("sample size " + std::to_string(n) + " exceeds the population of " +
                                std::to_string(agents.size()) + " agents");
  }
  // Partial Fisher-Yates with hand-rolled draws so selections match across standard libraries.
  std::mt19937_64 rng(mix(seed));
  for (std::size_t i = 0; i < n; ++i) {
    const auto span = agents.size() - i;
    const auto j = i + static_cast<std::size_t>(static_cast<double>(rng() >> 11) * 0x1.0p-53 *
                                                static_cast<double>(span));
    std::swap(agents[i], agents[j]);
  }
  Sample out;
  std::vector<bool> keep(roster.size(), false);
  for (std::size_t i = 0; i < n; ++i) {
    keep[agents[i].first] = true;
    out.sampled.insert(agents[i].second->agent_id);
  }
  for (std::size_t h = 0; h < roster.size(); ++h) {
    if (keep[h]) out.households.push_back(roster[h]);
  }
  return out;
}

void RunCounts::merge(const RunCounts& o) {
  generated += o.generated;
  sampled_generated += o.sampled_generated;
  backend_calls += o.backend_calls;
  parse_failures += o.parse_failures;
  snaps += o.snaps;
  regenerations += o.regenerations;
  demotions += o.demotions;
}

nlohmann::json RunManifest::to_json() const {
  auto skipped_json = nlohmann::json::array();
  for (const auto& s : skipped) {
    skipped_json.push_back({{"agent_id", s.agent_id}, {"household_id", s.household_id}, {"reason", s.reason}});
  }
  return {{"schema", kManifestSchema},
          {"status", status},
          {"config", config},
          {"households_total", households_total},
          {"households_completed", households_completed},
          {"sampled_agents", sampled_agents},
          {"store_bytes", store_bytes},
          {"store_lines", store_lines},
          {"counts",
           {{"generated", counts.generated},
            {"sampled_generated", counts.sampled_generated},
            {"backend_calls", counts.backend_calls},
            {"parse_failures", counts.parse_failures},
            {"skipped", skipped.size()},
            {"repairs", {{"snap", counts.snaps}, {"regenerate", counts.regenerations}, {"demote", counts.demotions}}}}},
          {"skipped", skipped_json},
          {"parse_retries", parse_retries},
          {"feedback", feedback.to_json()},
          {"timing",
           {{"wall_clock_s", wall_clock_s},
            {"calls", latency_calls},
            {"latency_total_ms", latency_total_ms},
            {"latency_mean_ms", latency_calls ? latency_total_ms / static_cast<double>(latency_calls) : 0.0},
            {"latency_max_ms", latency_max_ms}}}};
}

RunManifest RunManifest::from_json(const nlohmann::json& j) {
  if (j.value("schema", "") != kManifestSchema) throw std::runtime_error("not a run manifest");
  RunManifest m;
  m.status = j.at("status").get<std::string>();
  m.config = j.at("config");
  m.households_total = j.at("households_total").get<std::size_t>();
  m.households_completed = j.at("households_completed").get<std::size_t>();
  m.sampled_agents = j.at("sampled_agents").get<std::size_t>();
  m.store_bytes = j.at("store_bytes").get<std::uintmax_t>();
  m.store_lines = j.at("store_lines").get<std::uint64_t>();
  const auto& c = j.at("counts");
  m.counts.generated = c.at("generated").get<std::uint64_t>();
  m.counts.sampled_generated = c.at("sampled_generated").get<std::uint64_t>();
  m.counts.backend_calls = c.at("backend_calls").get<std::uint64_t>();
  m.counts.parse_failures = c.at("parse_failures").get<std::uint64_t>();
  m.counts.snaps = c.at("repairs").at("snap").get<std::uint64_t>();
  m.counts.regenerations = c.at("repairs").at("regenerate").get<std::uint64_t>();
  m.counts.demotions = c.at("repairs").at("demote").get<std::uint64_t>();
  for (const auto& s : j.at("skipped")) {
    m.skipped.push_back({s.at("agent_id").get<std::string>(), s.at("household_id").get<std::string>(),
                         s.at("reason").get<std::string>()});
  }
  m.parse_retries = j.at("parse_retries").get<std::map<AgentId, int>>();
  m.feedback = FeedbackState::from_json(j.at("feedback"));
  const auto& t = j.at("timing");
  m.wall_clock_s = t.at("wall_clock_s").get<double>();
  m.latency_calls = t.at("calls").get<std::uint64_t>();
  m.latency_total_ms = t.at("latency_total_ms").get<double>();
  m.latency_max_ms = t.at("latency_max_ms").get<double>();
  return m;
}

void save_manifest(const RunManifest& manifest, const fs::path& path) {
  write_atomic(path, manifest.to_json().dump(2) + "\n");
}

RunManifest load_manifest(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open manifest " + path.string());
  auto j = nlohmann::json::parse(in, nullptr, false);
  if (j.is_discarded()) throw std::runtime_error("manifest " + path.string() + " is not valid JSON");
  return RunManifest::from_json(j);
}

std::unique_ptr<ChainBackend> make_backend(const RunConfig& config, const ReferenceStats& stats) {
  if (config.backend == BackendKind::http) {
    RateLimiter::process_wide().set_rate(config.http.requests_per_second);
    return std::make_unique<HttpBackend>(config.http);
  }
  return std::make_unique<MockBackend>(config.mock, stats);
}

RunResult run_generation(const RunConfig& config, std::span<const Household> roster, const ReferenceStats& stats,
                         const FewShotPool& pool, const RunOptions& options) {
  config.validate();
  if (roster.empty()) throw std::invalid_argument("roster is empty");
  if (pool.chains.size() < 2) throw std::invalid_argument("few-shot pool needs at least two chains");
  const auto started = std::chrono::steady_clock::now();

  const auto sample = sample_agents(roster, config.sample_size, config.seed);
  fs::create_directories(options.out_dir);
  const auto store_path = options.out_dir / kChainStoreFile;
  const auto manifest_path = options.out_dir / kManifestFile;

  RunManifest manifest;
  manifest.config = config.to_json();
  manifest.households_total = sample.households.size();
  manifest.sampled_agents = sample.sampled.size();
  manifest.feedback = FeedbackState(stats.length_dist, config.feedback_enabled);

  std::optional<std::uintmax_t> truncate_to;
  if (options.resume && fs::exists(manifest_path)) {
    auto previous = load_manifest(manifest_path);
    if (previous.config != manifest.config) {
      throw std::runtime_error("cannot resume: " + manifest_path.string() + " was written with a different config");
    }
    if (previous.households_total != manifest.households_total) {
      throw std::runtime_error("cannot resume: roster sample differs from the interrupted run");
    }
    truncate_to = previous.store_bytes;
    manifest = std::move(previous);
    manifest.status = manifest.households_completed == manifest.households_total ? "complete" : "running";
  }

  {
    std::ofstream roster_out(options.out_dir / kRosterFile, std::ios::trunc);
    if (!roster_out) throw std::runtime_error("cannot write " + (options.out_dir / kRosterFile).string());
    write_roster(roster_out, sample.households);
  }

  std::unique_ptr<ChainBackend> owned;
  ChainBackend* backend = options.backend;
  if (backend == nullptr) {
    owned = make_backend(config, stats);
    backend = owned.get();
  }

  ChainStoreWriter writer(store_path, truncate_to);
  const Worker worker{config, stats, pool, sample, *backend, options.on_context};
  const double wall_before = manifest.wall_clock_s;

  auto checkpoint = [&] {
    manifest.store_bytes = writer.bytes();
    manifest.store_lines = writer.lines();
    manifest.wall_clock_s =
        wall_before + std::chrono::duration<double>(std::chrono::steady_clock::now() - started).count();
    writer.write_index();
    save_manifest(manifest, manifest_path);
  };
  checkpoint();

  const std::size_t total = sample.households.size();
  const std::size_t wave_size = static_cast<std::size_t>(config.concurrency);
  while (manifest.households_completed < total) {
    if (options.stop_after_households && manifest.households_completed >= *options.stop_after_households) break;
    std::size_t wave_end = std::min(total, manifest.households_completed + wave_size);
    if (options.stop_after_households) wave_end = std::min(wave_end, *options.stop_after_households);

    const auto first = manifest.households_completed;
    std::vector<HouseholdOutcome> outcomes(wave_end - first);
    const FeedbackState snapshot = manifest.feedback;
    if (outcomes.size() == 1) {
      outcomes[0] = worker.run(sample.households[first], snapshot);
    } else {
      std::vector<std::jthread> threads;
      threads.reserve(outcomes.size());
      for (std::size_t i = 0; i < outcomes.size(); ++i) {
        threads.emplace_back([&, i] { outcomes[i] = worker.run(sample.households[first + i], snapshot); });
      }
    }

    for (auto& o : outcomes) {
      if (o.error) std::rethrow_exception(o.error);
    }
    for (auto& o : outcomes) {
      writer.append(o.chains);
      for (const auto& c : o.chains) manifest.feedback.record(chain_length(c));
      manifest.counts.merge(o.counts);
      manifest.skipped.insert(manifest.skipped.end(), o.skipped.begin(), o.skipped.end());
      for (const auto& [agent, n] : o.parse_retries) manifest.parse_retries[agent] += n;
      for (double ms : o.latencies_ms) {
        ++manifest.latency_calls;
        manifest.latency_total_ms += ms;
        manifest.latency_max_ms = std::max(manifest.latency_max_ms, ms);
      }
      ++manifest.households_completed;
    }
    if (manifest.households_completed == total) manifest.status = "complete";
    checkpoint();
  }

  RunResult result;
  result.store = ChainStore::load_jsonl(store_path);
  result.manifest = std::move(manifest);
  return result;
}

}  // namespace actchain
