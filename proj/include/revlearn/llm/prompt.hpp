#pragma once

// Fixed-format chat prompt for one trial and strict parsing of the reply.

#include <cctype>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "revlearn/error.hpp"
#include "revlearn/records.hpp"
#include "revlearn/task_env.hpp"

namespace revlearn::llm {

struct ChatMessage {
  std::string role;  // system | user | assistant
  std::string content;
  friend bool operator==(const ChatMessage&, const ChatMessage&) = default;
};

// Labels are bound to abstract actions; `swap_order` only changes the order
// in which the two options are named in the instructions.
struct PromptVariant {
  char label_a0 = 'E';
  char label_a1 = 'V';
  bool swap_order = false;

  void validate() const {
    auto upper = [](char c) { return c >= 'A' && c <= 'Z'; };
    if (!upper(label_a0) || !upper(label_a1))
      throw ConfigError("labels must be single uppercase characters");
    if (label_a0 == label_a1) throw ConfigError("labels must be distinct");
  }

  char label(Action a) const noexcept { return a == Action::A0 ? label_a0 : label_a1; }
  char first() const noexcept { return swap_order ? label_a1 : label_a0; }
  char second() const noexcept { return swap_order ? label_a0 : label_a1; }

  std::string name() const {
    std::string s{first(), second()};
    for (auto& c : s) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
    return s;
  }
};

// "ev" (default), "ve" (order swap), "xy", "wl".
inline PromptVariant variant_from_string(std::string_view s) {
  if (s == "ev") return {'E', 'V', false};
  if (s == "ve") return {'E', 'V', true};
  if (s == "xy") return {'X', 'Y', false};
  if (s == "wl") return {'W', 'L', false};
  throw ConfigError("unknown prompt variant '" + std::string(s) + "' (expected ev, ve, xy or wl)");
}

namespace detail {

inline std::string signed_coins(int coins) {
  return (coins > 0 ? "+" : "-") + std::to_string(coins > 0 ? coins : -coins);
}

}  // namespace detail

inline std::string system_prompt(const PromptVariant& v, const EnvConfig& cfg) {
  const std::string a(1, v.first()), b(1, v.second());
  const std::string m = std::to_string(cfg.reward_magnitude);
  std::string s;
  s += "You are a space explorer choosing between two planets, " + a + " and " + b + ".\n";
  s += "On every trial, the planet you choose results in either a gain of " + m + " gold coins (+" + m +
       ") or a loss of " + m + " gold coins (-" + m + ").\n";
  s += "Throughout the mission, it may change multiple times which planet is more likely to yield +" + m +
       " and which is more likely to yield -" + m + ".\n";
  s += "Feedback is probabilistic: even if you choose the planet that is more likely to yield +" + m +
       ", you may still receive -" + m + ".\n";
  s += "Your goal is to maximise your total number of gold coins over exactly " +
       std::to_string(cfg.n_trials) + " trials.\n";
  s += "Do not output any other words, punctuation, or explanations.\n";
  s += "You must respond with exactly one uppercase character: " + a + " or " + b + ".";
  return s;
}

// The full history is included on every trial.
inline std::string user_prompt(const std::vector<TrialRecord>& history, int trial_index,
                               const PromptVariant& v, const EnvConfig& cfg) {
  if (trial_index != static_cast<int>(history.size()) + 1)
    throw StateError("trial index " + std::to_string(trial_index) + " does not follow a history of " +
                     std::to_string(history.size()) + " trials");
  std::string s = "You have completed " + std::to_string(history.size()) + " of " +
                  std::to_string(cfg.n_trials) + " trials.\nHistory:\n";
  for (const auto& tr : history) {
    s += "  - Trial " + std::to_string(tr.t) + ": choice=";
    s += v.label(tr.action);
    s += ", outcome=" + detail::signed_coins(tr.coins) + "\n";
  }
  s += "Choose for Trial " + std::to_string(trial_index) + ".\nAnswer:";
  return s;
}

inline std::vector<ChatMessage> render_prompt(const std::vector<TrialRecord>& history, int trial_index,
                                              const PromptVariant& v, const EnvConfig& cfg) {
  return {{"system", system_prompt(v, cfg)}, {"user", user_prompt(history, trial_index, v, cfg)}};
}

inline std::string corrective_message(const PromptVariant& v) {
  return std::string("Invalid response. Respond with exactly one uppercase character: ") + v.first() +
         " or " + v.second() + ".";
}

inline std::string_view trim(std::string_view s) {
  const auto ws = " \t\r\n\f\v";
  const auto b = s.find_first_not_of(ws);
  if (b == std::string_view::npos) return {};
  return s.substr(b, s.find_last_not_of(ws) - b + 1);
}

// Exact, case-sensitive match after trimming; nullopt means invalid.
inline std::optional<Action> parse_response(std::string_view raw, const PromptVariant& v) {
  const auto t = trim(raw);
  if (t.size() != 1) return std::nullopt;
  if (t[0] == v.label_a0) return Action::A0;
  if (t[0] == v.label_a1) return Action::A1;
  return std::nullopt;
}

}  // namespace revlearn::llm
