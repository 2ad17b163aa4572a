#pragma once

#include <map>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "actchain/domain.hpp"
#include "actchain/household.hpp"
#include "actchain/stats.hpp"

namespace actchain {

// Version tag of the compiled-in templates (templates/<version>/*.txt).
extern const std::string_view kPromptTemplateVersion;
// Raw template text by file stem ("system", "user", ...). Throws std::out_of_range.
const std::string& prompt_template(std::string_view name);

// Replaces every {{name}} with its value. Throws std::invalid_argument on a
// placeholder without a value or an unterminated marker.
std::string render_template(std::string_view tpl, const std::map<std::string, std::string, std::less<>>& values);

enum class PromptSection { task, statistics, guidelines, few_shot, rag_feedback };
std::string_view prompt_section_name(PromptSection s);

inline constexpr std::string_view kNoFeedbackSentinel = "no feedback available";
inline constexpr std::size_t kPromptTokenBudget = 1200;

struct PromptBundle {
  std::string system_text;
  std::string user_text;
  // The five system-prompt sections, in order, with their rendered bodies.
  std::vector<std::pair<PromptSection, std::string>> sections;

  const std::string& section(PromptSection s) const;
  bool operator==(const PromptBundle&) const = default;
};

// One paragraph naming all nine attributes; deterministic.
std::string render_profile(const SocioProfile& profile);

// Throws std::invalid_argument if fewer than two few-shot examples are given.
PromptBundle build_prompt(const SocioProfile& profile, const ReferenceStats& stats,
                          const std::optional<std::string>& guidance, const HouseholdContext* household_context,
                          std::span<const ActivityChain> few_shot);

// Appends the corrective retry message for a rejected reply to the user text.
PromptBundle with_retry_note(PromptBundle bundle, std::string_view reason_code, std::string_view reason);

// First k chains from the pool whose owners share the profile's student/worker
// group, topped up in pool order when fewer match. Participant ids are
// replaced with relationship names so examples never leak foreign ids.
std::vector<ActivityChain> select_few_shot(std::span<const ActivityChain> pool, const AgentDirectory& agents,
                                           const SocioProfile& profile, std::size_t k = 3);

// Whitespace-split token count, a rough proxy for model tokens.
std::size_t proxy_token_count(std::string_view text);

}  // namespace actchain
