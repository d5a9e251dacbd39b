#pragma once

// Two-option, three-state probabilistic reversal task.
//
// The environment is a plain value (`EnvState`) advanced by `step`. A segment
// is a maximal block of trials spent in one latent state; it ends when the
// performance criterion is met (enough target choices in the rolling window)
// or when the timeout is reached. The new state governs the next trial.

#include <algorithm>
#include <array>
#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "revlearn/error.hpp"
#include "revlearn/random.hpp"

namespace revlearn {

enum class Action : std::uint8_t { A0 = 0, A1 = 1 };

constexpr Action complement(Action a) noexcept {
  return a == Action::A0 ? Action::A1 : Action::A0;
}
constexpr int index(Action a) noexcept { return static_cast<int>(a); }

enum class StateId : std::uint8_t { S0 = 0, S1 = 1, S2 = 2 };

constexpr int index(StateId s) noexcept { return static_cast<int>(s); }

inline StateId state_from_index(int i) {
  if (i < 0 || i > 2) throw DataError("latent state index out of range: " + std::to_string(i));
  return static_cast<StateId>(i);
}

// Win probabilities in integer percent so that probability gaps (and the
// regret sums built from them) are exact.
constexpr std::array<std::array<int, 2>, 3> kWinPercent{{{80, 20}, {50, 50}, {20, 80}}};

constexpr int win_percent(StateId s, Action a) noexcept {
  return kWinPercent[index(s)][index(a)];
}
constexpr double win_prob(StateId s, Action a) noexcept {
  return win_percent(s, a) / 100.0;
}
constexpr bool is_tie(StateId s) noexcept { return s == StateId::S1; }

// Unique optimal action of a non-tie state.
inline Action optimal_action(StateId s) {
  if (is_tie(s)) throw StateError("tie state has no unique optimal action");
  return s == StateId::S0 ? Action::A0 : Action::A1;
}

enum class ScheduleKind : std::uint8_t { FixedCycle, RandomUniform, External };

inline std::string_view to_string(ScheduleKind k) {
  switch (k) {
    case ScheduleKind::FixedCycle: return "fixed";
    case ScheduleKind::RandomUniform: return "random";
    case ScheduleKind::External: return "external";
  }
  return "?";
}

inline ScheduleKind schedule_from_string(std::string_view s) {
  if (s == "fixed") return ScheduleKind::FixedCycle;
  if (s == "random") return ScheduleKind::RandomUniform;
  if (s == "external") return ScheduleKind::External;
  throw ConfigError("unknown schedule '" + std::string(s) + "' (expected fixed|random)");
}

struct EnvConfig {
  int n_trials = 250;
  int window_len = 10;
  int criterion_matches = 7;
  int timeout_trials = 16;
  ScheduleKind schedule = ScheduleKind::FixedCycle;
  int reward_magnitude = 100;
  std::uint64_t seed = 0;

  void validate() const {
    if (n_trials < 1) throw ConfigError("n_trials must be >= 1");
    if (window_len < 1) throw ConfigError("window_len must be >= 1");
    if (criterion_matches < 1 || criterion_matches > window_len)
      throw ConfigError("criterion_matches must lie in [1, window_len]");
    if (timeout_trials < 1) throw ConfigError("timeout_trials must be >= 1");
    if (reward_magnitude < 1) throw ConfigError("reward_magnitude must be >= 1");
    if (schedule == ScheduleKind::External)
      throw ConfigError("external schedule cannot drive a simulated environment");
  }
};

enum class SwitchReason : std::uint8_t { Criterion, Timeout };

inline std::string_view to_string(SwitchReason r) {
  return r == SwitchReason::Criterion ? "criterion" : "timeout";
}

inline SwitchReason switch_reason_from_string(std::string_view s) {
  if (s == "criterion") return SwitchReason::Criterion;
  if (s == "timeout") return SwitchReason::Timeout;
  throw DataError("unknown switch reason '" + std::string(s) + "'");
}

struct SwitchEvent {
  int trial = 0;  // last trial of the old segment
  SwitchReason reason = SwitchReason::Criterion;
  StateId old_state = StateId::S0;
  StateId new_state = StateId::S0;

  friend bool operator==(const SwitchEvent&, const SwitchEvent&) = default;
};

struct EnvState {
  int trial_index = 1;  // 1-based index of the next trial to be played
  StateId current_state = StateId::S0;
  int segment_index = 0;
  int trials_in_segment = 0;
  std::vector<Action> segment_choice_history;
  StateId prev_non_tie_state = StateId::S0;
  Rng rng;
};

// Criterion target of the current segment. In the tie state the target is the
// option that paid less in the most recent non-tie state.
inline Action target_option(StateId state, StateId prev_non_tie) {
  if (is_tie(prev_non_tie))
    throw StateError("previous non-tie state cannot be the tie state");
  if (!is_tie(state)) return optimal_action(state);
  return complement(optimal_action(prev_non_tie));
}

// Criterion is evaluated over the last min(window_len, trials_in_segment)
// choices and takes precedence over the timeout.
inline std::optional<SwitchReason> check_switch(const std::vector<Action>& history, Action target,
                                                int trials_in_segment, const EnvConfig& cfg) {
  const int n = static_cast<int>(history.size());
  const int window = std::min(cfg.window_len, n);
  const int matches = static_cast<int>(
      std::count(history.end() - window, history.end(), target));
  if (matches >= cfg.criterion_matches) return SwitchReason::Criterion;
  if (trials_in_segment >= cfg.timeout_trials) return SwitchReason::Timeout;
  return std::nullopt;
}

inline StateId next_state(StateId current, ScheduleKind schedule, Rng& rng) {
  switch (schedule) {
    case ScheduleKind::FixedCycle:
      return static_cast<StateId>((index(current) + 1) % 3);
    case ScheduleKind::RandomUniform: {
      const int offset = uniform01(rng) < 0.5 ? 1 : 2;
      return static_cast<StateId>((index(current) + offset) % 3);
    }
    case ScheduleKind::External:
      break;
  }
  throw ConfigError("external schedule has no transition rule");
}

inline EnvState new_env(const EnvConfig& cfg) {
  cfg.validate();
  EnvState env;
  env.rng.seed(cfg.seed);
  env.segment_choice_history.reserve(static_cast<std::size_t>(cfg.timeout_trials));
  return env;
}

struct StepResult {
  int trial = 0;
  bool win = false;
  int coins = 0;
  StateId state = StateId::S0;  // state in force when the outcome was sampled
  int segment = 0;
  std::optional<SwitchEvent> switch_event;
};

// Advance one trial with an externally supplied uniform draw for the outcome.
// `step` is this with the draw taken from the run's generator.
inline StepResult step_with_draw(EnvState& env, Action action, const EnvConfig& cfg,
                                 double outcome_draw) {
  if (env.trial_index > cfg.n_trials)
    throw StateError("step called past the end of the run (trial " +
                     std::to_string(env.trial_index) + " of " + std::to_string(cfg.n_trials) + ")");

  StepResult out;
  out.trial = env.trial_index;
  out.state = env.current_state;
  out.segment = env.segment_index;
  out.win = outcome_draw < win_prob(env.current_state, action);
  out.coins = out.win ? cfg.reward_magnitude : -cfg.reward_magnitude;

  env.segment_choice_history.push_back(action);
  ++env.trials_in_segment;

  const Action target = target_option(env.current_state, env.prev_non_tie_state);
  if (auto reason = check_switch(env.segment_choice_history, target, env.trials_in_segment, cfg)) {
    const StateId old_state = env.current_state;
    const StateId new_state = next_state(old_state, cfg.schedule, env.rng);
    out.switch_event = SwitchEvent{env.trial_index, *reason, old_state, new_state};
    if (!is_tie(old_state)) env.prev_non_tie_state = old_state;
    env.current_state = new_state;
    env.segment_choice_history.clear();
    env.trials_in_segment = 0;
    ++env.segment_index;
  }
  ++env.trial_index;
  return out;
}

inline StepResult step(EnvState& env, Action action, const EnvConfig& cfg) {
  if (env.trial_index > cfg.n_trials)
    throw StateError("step called past the end of the run");
  const double u = uniform01(env.rng);
  return step_with_draw(env, action, cfg, u);
}

}  // namespace revlearn
