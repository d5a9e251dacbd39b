#pragma once

// Reference parameter profiles: group-level posterior means reported for
// three LLMs and a human sample, under both learning rules.

#include <array>
#include <string>
#include <string_view>

#include "revlearn/error.hpp"
#include "revlearn/params.hpp"

namespace revlearn {

struct Profile {
  std::string_view name;  // agent-schedule, e.g. "gemini-fixed"; humans have no schedule
  Rule rule;
  AgentParams params;
};

inline constexpr std::array<Profile, 14> kProfiles{{
    {"deepseek-fixed", Rule::Dual, {0.421, 0.026, 3.342, 0.0}},
    {"deepseek-random", Rule::Dual, {0.143, 0.030, 7.519, 0.0}},
    {"gemini-fixed", Rule::Dual, {0.250, 0.260, 7.421, 0.0}},
    {"gemini-random", Rule::Dual, {0.252, 0.259, 8.456, 0.0}},
    {"gpt-fixed", Rule::Dual, {0.202, 0.117, 5.876, 0.0}},
    {"gpt-random", Rule::Dual, {0.182, 0.112, 7.017, 0.0}},
    {"human", Rule::Dual, {0.935, 0.755, 1.326, 0.0}},
    {"deepseek-fixed", Rule::Kdu, {0.469, 0.017, 2.458, 0.545}},
    {"deepseek-random", Rule::Kdu, {0.521, 0.020, 2.502, 0.400}},
    {"gemini-fixed", Rule::Kdu, {0.369, 0.139, 4.711, 0.848}},
    {"gemini-random", Rule::Kdu, {0.381, 0.154, 5.556, 0.714}},
    {"gpt-fixed", Rule::Kdu, {0.262, 0.083, 3.349, 0.884}},
    {"gpt-random", Rule::Kdu, {0.257, 0.088, 3.752, 0.817}},
    {"human", Rule::Kdu, {0.975, 0.498, 1.296, 0.404}},
}};

inline const Profile& find_profile(std::string_view name, Rule rule) {
  for (const auto& p : kProfiles)
    if (p.name == name && p.rule == rule) return p;
  std::string known;
  for (const auto& p : kProfiles)
    if (p.rule == rule) known += (known.empty() ? "" : "|") + std::string(p.name);
  throw ConfigError("unknown profile '" + std::string(name) + "' (expected " + known + ")");
}

}  // namespace revlearn
