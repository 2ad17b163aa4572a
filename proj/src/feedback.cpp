#include "actchain/feedback.hpp"

#include <cmath>
#include <regex>

namespace actchain {
namespace {

std::string percent(double p) { return std::to_string(static_cast<int>(std::lround(p * 100.0))) + "%"; }

int bin_length_value(int bin) { return bin + 1; }

}  // namespace

std::string length_bin_label(int bin) {
  return bin == kLengthBins - 1 ? std::to_string(kMaxChainLength + 1) + "+" : std::to_string(bin_length_value(bin));
}

std::optional<Guidance> parse_guidance(std::string_view text) {
  if (text.empty()) return std::nullopt;
  Guidance g{std::string(text), std::nullopt};
  static const std::regex about(R"(about (\d+)\+? activit)");
  std::match_results<std::string_view::const_iterator> m;
  if (std::regex_search(text.begin(), text.end(), m, about)) g.target_length = std::stoi(m[1].str());
  return g;
}

FeedbackState::FeedbackState(Distribution target_length_dist, bool enabled, std::uint64_t warmup, double epsilon)
    : target_(std::move(target_length_dist)), enabled_(enabled), warmup_(warmup), epsilon_(epsilon) {
  if (target_.size() != static_cast<std::size_t>(kLengthBins)) {
    throw std::invalid_argument("feedback target must cover lengths 1.." + std::to_string(kMaxChainLength) +
                                " plus overflow");
  }
}

void FeedbackState::record(std::size_t length) {
  ++counts_[bin_length(length)];
  ++chains_seen_;
}

nlohmann::json FeedbackState::to_json() const {
  return {{"enabled", enabled_},
          {"warmup", warmup_},
          {"epsilon", epsilon_},
          {"chains_seen", chains_seen_},
          {"target_length_dist", target_.probabilities()},
          {"generated_length_counts", std::vector<std::uint64_t>(counts_.begin(), counts_.end())}};
}

FeedbackState FeedbackState::from_json(const nlohmann::json& j) {
  FeedbackState s(Distribution(j.at("target_length_dist").get<std::vector<double>>()), j.at("enabled").get<bool>(),
                  j.at("warmup").get<std::uint64_t>(), j.at("epsilon").get<double>());
  auto counts = j.at("generated_length_counts").get<std::vector<std::uint64_t>>();
  if (counts.size() != s.counts_.size()) throw std::invalid_argument("feedback checkpoint has the wrong arity");
  std::uint64_t total = 0;
  for (std::size_t i = 0; i < counts.size(); ++i) {
    s.counts_[i] = counts[i];
    total += counts[i];
  }
  s.chains_seen_ = j.at("chains_seen").get<std::uint64_t>();
  if (total != s.chains_seen_) throw std::invalid_argument("feedback checkpoint counts do not sum to chains_seen");
  return s;
}

FeedbackState record_chain(FeedbackState state, const ActivityChain& chain) {
  state.record(chain_length(chain));
  return state;
}

std::optional<Guidance> next_guidance(const FeedbackState& state) {
  if (!state.enabled() || state.chains_seen() < state.warmup()) return std::nullopt;

  const double seen = static_cast<double>(state.chains_seen());
  int best = -1;
  double best_deficit = 0.0;
  for (int bin = 0; bin < kLengthBins; ++bin) {
    const double deficit = state.target()[bin] - static_cast<double>(state.counts()[bin]) / seen;
    if (deficit > best_deficit) {
      best = bin;
      best_deficit = deficit;
    }
  }

  if (best < 0 || best_deficit <= state.epsilon()) {
    std::string text = "Recent chains already follow the typical mix of chain lengths (";
    bool first = true;
    for (int bin = 0; bin < kLengthBins; ++bin) {
      if (state.target()[bin] < 0.005) continue;
      if (!first) text += ", ";
      text += length_bin_label(bin) + ": " + percent(state.target()[bin]);
      first = false;
    }
    text += "); keep choosing a length that fits this person.";
    return Guidance{std::move(text), std::nullopt};
  }

  const int length = bin_length_value(best);
  std::string label = length_bin_label(best);
  std::string text = "Recent chains have had too few days with " + label + " activities; aim for a chain of about " +
                     label + " activities today if it fits this person.";
  return Guidance{std::move(text), length};
}

}  // namespace actchain
