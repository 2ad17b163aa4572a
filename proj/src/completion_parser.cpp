#include "actchain/gateway.hpp"

#include <algorithm>
#include <cctype>

namespace actchain {
namespace {

// Curly quotes become plain ones; everything else passes through unchanged.
std::string straighten_quotes(std::string_view text) {
  std::string out;
  out.reserve(text.size());
  for (std::size_t i = 0; i < text.size(); ++i) {
    if (i + 2 < text.size() && static_cast<unsigned char>(text[i]) == 0xE2 &&
        static_cast<unsigned char>(text[i + 1]) == 0x80) {
      const auto c = static_cast<unsigned char>(text[i + 2]);
      if (c == 0x9C || c == 0x9D) {
        out += '"';
        i += 2;
        continue;
      }
      if (c == 0x98 || c == 0x99) {
        out += '\'';
        i += 2;
        continue;
      }
    }
    out += text[i];
  }
  return out;
}

// Drops commas that directly precede a closing bracket or brace.
std::string strip_trailing_commas(std::string_view text) {
  std::string out;
  out.reserve(text.size());
  bool in_string = false;
  bool escaped = false;
  for (std::size_t i = 0; i < text.size(); ++i) {
    const char c = text[i];
    if (in_string) {
      out += c;
      if (escaped) {
        escaped = false;
      } else if (c == '\\') {
        escaped = true;
      } else if (c == '"') {
        in_string = false;
      }
      continue;
    }
    if (c == '"') in_string = true;
    if (c == ',') {
      std::size_t j = i + 1;
      while (j < text.size() && std::isspace(static_cast<unsigned char>(text[j]))) ++j;
      if (j < text.size() && (text[j] == ']' || text[j] == '}')) continue;
    }
    out += c;
  }
  return out;
}

// End (exclusive) of the bracketed span opening at `open`, or npos if unbalanced.
std::size_t balanced_end(std::string_view text, std::size_t open) {
  int depth = 0;
  bool in_string = false;
  bool escaped = false;
  for (std::size_t i = open; i < text.size(); ++i) {
    const char c = text[i];
    if (in_string) {
      if (escaped) {
        escaped = false;
      } else if (c == '\\') {
        escaped = true;
      } else if (c == '"') {
        in_string = false;
      }
      continue;
    }
    if (c == '"') {
      in_string = true;
    } else if (c == '[' || c == '{') {
      ++depth;
    } else if (c == ']' || c == '}') {
      if (--depth == 0) return i + 1;
    }
  }
  return std::string_view::npos;
}

bool is_object_array(const nlohmann::json& j) {
  return j.is_array() && !j.empty() && std::all_of(j.begin(), j.end(), [](const auto& e) { return e.is_object(); });
}

std::string lower(std::string_view s) {
  std::string out(s);
  for (auto& c : out) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
  return out;
}

// Household member named by `ref`: exact id, id ignoring case, or a relationship
// name held by exactly one other member.
std::optional<AgentId> resolve_participant(std::string_view ref, const Household& household, std::string_view owner) {
  if (household.contains(ref)) return AgentId(ref);
  const auto wanted = lower(ref);
  for (const auto& m : household.members) {
    if (lower(m.agent_id) == wanted) return m.agent_id;
  }
  std::optional<AgentId> by_relation;
  int hits = 0;
  for (const auto& m : household.members) {
    if (m.agent_id == owner) continue;
    if (relationship_name(m.household_relationship) == wanted) {
      by_relation = m.agent_id;
      ++hits;
    }
  }
  if (hits == 1) return by_relation;
  return std::nullopt;
}

}  // namespace

nlohmann::json extract_chain_array(std::string_view text) {
  const auto cleaned = straighten_quotes(text);
  if (std::all_of(cleaned.begin(), cleaned.end(), [](unsigned char c) { return std::isspace(c); })) {
    throw ParseFailure("empty_reply", "reply is empty");
  }

  bool saw_bracket = false;
  bool saw_empty_array = false;
  std::string first_error;
  bool inside_unbalanced = false;
  std::size_t next = 0;
  for (std::size_t pos = cleaned.find('['); pos != std::string::npos; pos = cleaned.find('[', next)) {
    saw_bracket = true;
    next = pos + 1;
    const auto end = balanced_end(cleaned, pos);
    if (end == std::string_view::npos) {
      if (first_error.empty()) first_error = "unbalanced brackets in reply";
      inside_unbalanced = true;
      continue;
    }
    auto candidate = nlohmann::json::parse(strip_trailing_commas(std::string_view(cleaned).substr(pos, end - pos)),
                                           nullptr, false);
    if (candidate.is_discarded()) {
      if (first_error.empty()) first_error = "bracketed text is not valid JSON";
      next = end;
      continue;
    }
    if (candidate.is_array() && candidate.empty()) {
      saw_empty_array = saw_empty_array || !inside_unbalanced;
      continue;
    }
    if (is_object_array(candidate)) return candidate;
  }
  if (saw_empty_array) throw ParseFailure("empty_chain", "reply contains an empty activity array");
  if (!saw_bracket) throw ParseFailure("no_json_array", "reply contains no JSON array");
  if (!first_error.empty()) throw ParseFailure("invalid_json", first_error);
  throw ParseFailure("no_json_array", "reply contains no JSON array of activity objects");
}

ActivityChain parse_completion(const RawCompletion& raw, const Household& household, std::string_view owner) {
  const auto array = extract_chain_array(raw.text);

  ActivityChain chain;
  chain.owner = AgentId(owner);
  chain.household_id = household.household_id;
  for (const auto& entry : array) {
    Activity a;
    try {
      a = decode_activity(entry);
    } catch (const SchemaError& e) {
      throw ParseFailure(e.code, e.what());
    }
    std::vector<AgentId> resolved;
    for (const auto& ref : a.participants) {
      auto id = resolve_participant(ref, household, owner);
      if (!id) throw ParseFailure("unknown_participant", "participant \"" + ref + "\" is not a household member");
      if (*id != owner) resolved.push_back(std::move(*id));
    }
    std::sort(resolved.begin(), resolved.end());
    resolved.erase(std::unique(resolved.begin(), resolved.end()), resolved.end());
    a.participants = std::move(resolved);
    chain.activities.push_back(std::move(a));
  }

  const auto result = validate_chain(chain, household);
  if (!result.ok()) {
    throw ParseFailure("semantic_violation:" + std::string(violation_kind_name(result.violations.front().kind)),
                       result.summary());
  }
  return chain;
}

}  // namespace actchain
