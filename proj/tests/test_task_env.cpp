#include <gtest/gtest.h>

#include <map>

#include "revlearn/agents.hpp"
#include "revlearn/task_env.hpp"

using namespace revlearn;

TEST(TaskEnv, TargetOption) {
  EXPECT_EQ(target_option(StateId::S0, StateId::S0), Action::A0);
  EXPECT_EQ(target_option(StateId::S2, StateId::S0), Action::A1);
  EXPECT_EQ(target_option(StateId::S1, StateId::S0), Action::A1);
  EXPECT_EQ(target_option(StateId::S1, StateId::S2), Action::A0);
  EXPECT_THROW(target_option(StateId::S0, StateId::S1), StateError);
}

TEST(TaskEnv, CheckSwitchCriterionOverFullWindow) {
  EnvConfig cfg;
  std::vector<Action> h(7, Action::A0);
  h.insert(h.end(), 3, Action::A1);
  EXPECT_EQ(check_switch(h, Action::A0, 10, cfg), SwitchReason::Criterion);
}

TEST(TaskEnv, CheckSwitchTimeout) {
  EnvConfig cfg;
  std::vector<Action> h;
  for (int i = 0; i < 16; ++i) h.push_back(i % 2 ? Action::A0 : Action::A1);
  EXPECT_EQ(check_switch(h, Action::A0, 16, cfg), SwitchReason::Timeout);
}

TEST(TaskEnv, CheckSwitchBelowThresholds) {
  EnvConfig cfg;
  std::vector<Action> h(6, Action::A0);
  EXPECT_FALSE(check_switch(h, Action::A0, 6, cfg).has_value());
}

TEST(TaskEnv, CheckSwitchShortWindow) {
  EnvConfig cfg;
  std::vector<Action> h(7, Action::A0);
  EXPECT_EQ(check_switch(h, Action::A0, 7, cfg), SwitchReason::Criterion);
}

TEST(TaskEnv, CriterionWinsOverTimeout) {
  EnvConfig cfg;
  std::vector<Action> h(9, Action::A1);
  h.insert(h.end(), 7, Action::A0);
  EXPECT_EQ(check_switch(h, Action::A0, 16, cfg), SwitchReason::Criterion);
}

TEST(TaskEnv, OnlyLastTenChoicesCount) {
  EnvConfig cfg;
  std::vector<Action> h(8, Action::A0);
  h.insert(h.end(), 5, Action::A1);
  EXPECT_FALSE(check_switch(h, Action::A0, 13, cfg).has_value());
}

TEST(TaskEnv, FixedCycleTransitions) {
  Rng rng(1);
  EXPECT_EQ(next_state(StateId::S2, ScheduleKind::FixedCycle, rng), StateId::S0);
  EXPECT_EQ(next_state(StateId::S1, ScheduleKind::FixedCycle, rng), StateId::S2);
  EXPECT_EQ(next_state(StateId::S0, ScheduleKind::FixedCycle, rng), StateId::S1);
}

TEST(TaskEnv, RandomTransitionsAreUniformOverOthers) {
  Rng rng(7);
  std::map<StateId, int> counts;
  const int n = 20000;
  for (int i = 0; i < n; ++i) ++counts[next_state(StateId::S0, ScheduleKind::RandomUniform, rng)];
  EXPECT_EQ(counts.count(StateId::S0), 0u);
  EXPECT_NEAR(counts[StateId::S1] / double(n), 0.5, 0.015);
  EXPECT_NEAR(counts[StateId::S2] / double(n), 0.5, 0.015);
}

TEST(TaskEnv, ExternalScheduleRejected) {
  EnvConfig cfg;
  cfg.schedule = ScheduleKind::External;
  EXPECT_THROW(new_env(cfg), ConfigError);
  Rng rng(0);
  EXPECT_THROW(next_state(StateId::S0, ScheduleKind::External, rng), ConfigError);
}

TEST(TaskEnv, ConfigValidation) {
  EnvConfig cfg;
  cfg.n_trials = 0;
  EXPECT_THROW(cfg.validate(), ConfigError);
  cfg = {};
  cfg.criterion_matches = 11;
  EXPECT_THROW(cfg.validate(), ConfigError);
  EXPECT_THROW(schedule_from_string("weekly"), ConfigError);
}

TEST(TaskEnv, ForcedDrawOutcome) {
  EnvConfig cfg;
  EnvState env = new_env(cfg);
  const auto r = step_with_draw(env, Action::A0, cfg, 0.0);
  EXPECT_TRUE(r.win);
  EXPECT_EQ(r.coins, 100);
  EXPECT_EQ(r.trial, 1);
  EXPECT_EQ(r.state, StateId::S0);
  // Boundary: a draw equal to the win probability loses.
  const auto l = step_with_draw(env, Action::A0, cfg, 0.8);
  EXPECT_FALSE(l.win);
  EXPECT_EQ(l.coins, -100);
}

TEST(TaskEnv, EmpiricalWinRate) {
  EnvConfig cfg;
  cfg.n_trials = 100000;
  cfg.window_len = 10;
  cfg.timeout_trials = 1000000;
  cfg.criterion_matches = 10;
  cfg.seed = 3;
  EnvState env = new_env(cfg);
  // Always A1 in S0 never meets the A0 criterion, so the state stays put.
  int wins = 0;
  for (int i = 0; i < cfg.n_trials; ++i) wins += step(env, Action::A1, cfg).win;
  EXPECT_EQ(env.current_state, StateId::S0);
  EXPECT_NEAR(wins / double(cfg.n_trials), 0.20, 0.005);
}

TEST(TaskEnv, SeventhTargetChoiceSwitches) {
  EnvConfig cfg;
  EnvState env = new_env(cfg);
  for (int i = 1; i <= 6; ++i) EXPECT_FALSE(step(env, Action::A0, cfg).switch_event.has_value());
  const auto r = step(env, Action::A0, cfg);
  ASSERT_TRUE(r.switch_event.has_value());
  EXPECT_EQ(r.switch_event->reason, SwitchReason::Criterion);
  EXPECT_EQ(r.switch_event->trial, 7);
  EXPECT_EQ(r.switch_event->new_state, StateId::S1);
  EXPECT_EQ(r.state, StateId::S0);  // the switch applies from the next trial
  EXPECT_EQ(env.trials_in_segment, 0);
  EXPECT_TRUE(env.segment_choice_history.empty());
  EXPECT_EQ(env.current_state, StateId::S1);
  EXPECT_EQ(step(env, Action::A0, cfg).segment, 1);
}

TEST(TaskEnv, TieStateTargetsPreviouslyWorseOption) {
  EnvConfig cfg;
  EnvState env = new_env(cfg);
  for (int i = 0; i < 7; ++i) step(env, Action::A0, cfg);
  ASSERT_EQ(env.current_state, StateId::S1);
  // Target in S1 after S0 is A1: choosing A0 only times out.
  int t = 0;
  std::optional<SwitchEvent> ev;
  while (!ev) {
    ev = step(env, Action::A0, cfg).switch_event;
    ++t;
  }
  EXPECT_EQ(t, 16);
  EXPECT_EQ(ev->reason, SwitchReason::Timeout);
}

TEST(TaskEnv, DefaultStartsInS0) {
  EXPECT_EQ(new_env(EnvConfig{}).current_state, StateId::S0);
}

TEST(TaskEnv, StepPastEndThrows) {
  EnvConfig cfg;
  cfg.n_trials = 2;
  EnvState env = new_env(cfg);
  step(env, Action::A0, cfg);
  step(env, Action::A0, cfg);
  EXPECT_THROW(step(env, Action::A0, cfg), StateError);
}

TEST(TaskEnv, SameSeedSameTrajectory) {
  EnvConfig cfg;
  cfg.schedule = ScheduleKind::RandomUniform;
  cfg.seed = 42;
  Rng a(5), b(5), c(5);
  const RunRecord first = simulate_policy(uniform_random(), cfg, a);
  EXPECT_EQ(first, simulate_policy(uniform_random(), cfg, b));
  cfg.seed = 43;
  EXPECT_NE(first.trials, simulate_policy(uniform_random(), cfg, c).trials);
}

// Properties over many simulated runs: segment lengths lie in [1, 16], the
// recorded switch reason matches the rule, and every switch changes state.
TEST(TaskEnvProperty, SegmentsRespectSwitchRule) {
  for (std::uint64_t seed = 0; seed < 200; ++seed) {
    EnvConfig cfg;
    cfg.seed = seed;
    cfg.schedule = seed % 2 ? ScheduleKind::RandomUniform : ScheduleKind::FixedCycle;
    Rng rng(seed + 1000);
    const RunRecord run = simulate_policy(wsls(0.9, 0.6), cfg, rng);
    int len = 0;
    for (std::size_t i = 0; i < run.trials.size(); ++i) {
      const auto& tr = run.trials[i];
      ++len;
      ASSERT_LE(len, 16);
      if (tr.switch_after) {
        EXPECT_NE(tr.switch_after->old_state, tr.switch_after->new_state);
        if (tr.switch_after->reason == SwitchReason::Timeout) {
          EXPECT_EQ(len, 16);
        }
        if (cfg.schedule == ScheduleKind::FixedCycle) {
          EXPECT_EQ(index(tr.switch_after->new_state), (index(tr.switch_after->old_state) + 1) % 3);
        }
        if (i + 1 < run.trials.size()) {
          EXPECT_EQ(*run.trials[i + 1].state, tr.switch_after->new_state);
          EXPECT_EQ(*run.trials[i + 1].segment, *tr.segment + 1);
        }
        len = 0;
      } else if (i + 1 < run.trials.size()) {
        EXPECT_EQ(run.trials[i + 1].state, tr.state);
      }
    }
    EXPECT_NO_THROW(validate_run(run));
  }
}
