#pragma once

// Forward-simulating agents: the two delta-rule learners (Dual, KDU) and
// scripted baselines used to calibrate the behavioural metrics.

#include <array>
#include <cmath>
#include <concepts>
#include <string>

#include "revlearn/params.hpp"
#include "revlearn/random.hpp"
#include "revlearn/records.hpp"
#include "revlearn/task_env.hpp"

namespace revlearn {

// Logistic function, evaluated on the branch that cannot overflow.
inline double sigmoid(double x) noexcept {
  if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

// log(sigmoid(x)) without cancellation or overflow.
inline double log_sigmoid(double x) noexcept {
  if (x >= 0.0) return -std::log1p(std::exp(-x));
  return x - std::log1p(std::exp(x));
}

struct QValues {
  std::array<double, 2> q{0.0, 0.0};

  double operator[](Action a) const noexcept { return q[index(a)]; }
  double& operator[](Action a) noexcept { return q[index(a)]; }

  friend bool operator==(const QValues&, const QValues&) = default;
};

// P(choose A0) under the logistic choice rule.
inline double choice_prob(const QValues& q, double beta) noexcept {
  return sigmoid(beta * (q[Action::A0] - q[Action::A1]));
}

inline double valence_rate(const AgentParams& p, int reward) noexcept {
  return reward > 0 ? p.eta_pos : p.eta_neg;
}

inline QValues update_dual(QValues q, Action chosen, int reward, const AgentParams& p) noexcept {
  const double delta = reward - q[chosen];
  q[chosen] += valence_rate(p, reward) * delta;
  return q;
}

// The unchosen option moves toward the counterfactual outcome -r with rate
// kappa * eta, where eta is selected by the sign of the obtained reward.
inline QValues update_kdu(QValues q, Action chosen, int reward, const AgentParams& p) noexcept {
  const double eta = valence_rate(p, reward);
  const Action other = complement(chosen);
  const double delta = reward - q[chosen];
  const double delta_unchosen = -reward - q[other];
  q[chosen] += eta * delta;
  if (p.kappa != 0.0) q[other] += p.kappa * eta * delta_unchosen;
  return q;
}

inline QValues update(Rule rule, const QValues& q, Action chosen, int reward,
                      const AgentParams& p) noexcept {
  return rule == Rule::Dual ? update_dual(q, chosen, reward, p) : update_kdu(q, chosen, reward, p);
}

// What a policy may look at before choosing. `state` is the true latent state
// and is only consulted by the oracle-style baselines.
struct PolicyContext {
  int trial = 1;
  StateId state = StateId::S0;
};

template <typename P>
concept Policy = requires(P p, const PolicyContext& ctx, Rng& rng, Action a, bool win) {
  { p.choose(ctx, rng) } -> std::same_as<Action>;
  p.observe(a, win);
  { p.descriptor() } -> std::same_as<AgentDescriptor>;
};

class RlAgent {
 public:
  RlAgent(const AgentParams& params, Rule rule) : params_(params), rule_(rule) {
    params_.validate();
    if (rule_ == Rule::Dual) params_.kappa = 0.0;
  }

  Action choose(const PolicyContext&, Rng& rng) const {
    return bernoulli(rng, choice_prob(q_, params_.beta)) ? Action::A0 : Action::A1;
  }
  void observe(Action a, bool win) { q_ = update(rule_, q_, a, win ? 1 : -1, params_); }

  AgentDescriptor descriptor() const {
    return AgentDescriptor{std::string(to_string(rule_)), params_, std::nullopt, std::nullopt};
  }
  const QValues& values() const noexcept { return q_; }

 private:
  AgentParams params_;
  Rule rule_;
  QValues q_;
};

inline void check_probability(double p, const char* name) {
  if (!(p >= 0.0 && p <= 1.0))
    throw ConfigError(std::string(name) + " must lie in [0,1]: " + std::to_string(p));
}

// Win-stay/lose-shift with given probabilities; uniform on the first trial.
class WslsAgent {
 public:
  WslsAgent(double p_stay_win, double p_shift_loss) : stay_(p_stay_win), shift_(p_shift_loss) {
    check_probability(stay_, "p_stay_win");
    check_probability(shift_, "p_shift_loss");
  }

  Action choose(const PolicyContext&, Rng& rng) const {
    if (!has_last_) return bernoulli(rng, 0.5) ? Action::A0 : Action::A1;
    const bool repeat = last_win_ ? bernoulli(rng, stay_) : !bernoulli(rng, shift_);
    return repeat ? last_ : complement(last_);
  }
  void observe(Action a, bool win) {
    last_ = a;
    last_win_ = win;
    has_last_ = true;
  }
  AgentDescriptor descriptor() const { return {"wsls", std::nullopt, std::nullopt, std::nullopt}; }

 private:
  double stay_, shift_;
  Action last_ = Action::A0;
  bool last_win_ = false;
  bool has_last_ = false;
};

class AlwaysAgent {
 public:
  explicit AlwaysAgent(Action a) : action_(a) {}
  Action choose(const PolicyContext&, Rng&) const { return action_; }
  void observe(Action, bool) {}
  AgentDescriptor descriptor() const {
    return {action_ == Action::A0 ? "always-a0" : "always-a1", std::nullopt, std::nullopt,
            std::nullopt};
  }

 private:
  Action action_;
};

class UniformRandomAgent {
 public:
  Action choose(const PolicyContext&, Rng& rng) const {
    return bernoulli(rng, 0.5) ? Action::A0 : Action::A1;
  }
  void observe(Action, bool) {}
  AgentDescriptor descriptor() const { return {"random", std::nullopt, std::nullopt, std::nullopt}; }
};

// Picks the optimal action of the true state (A0 in the tie state), or with
// `wrong` set, the worse one.
class OracleAgent {
 public:
  explicit OracleAgent(bool wrong = false) : wrong_(wrong) {}
  Action choose(const PolicyContext& ctx, Rng&) const {
    const Action best = is_tie(ctx.state) ? Action::A0 : optimal_action(ctx.state);
    return wrong_ ? complement(best) : best;
  }
  void observe(Action, bool) {}
  AgentDescriptor descriptor() const {
    return {wrong_ ? "always-wrong" : "oracle", std::nullopt, std::nullopt, std::nullopt};
  }

 private:
  bool wrong_;
};

inline WslsAgent wsls(double p_stay_win, double p_shift_loss) { return {p_stay_win, p_shift_loss}; }
inline AlwaysAgent always(Action a) { return AlwaysAgent(a); }
inline UniformRandomAgent uniform_random() { return {}; }

// Runs a policy through a fresh environment. The environment draws from its
// own generator (seeded by cfg.seed); choices draw from `rng`.
template <Policy P>
RunRecord simulate_policy(P policy, const EnvConfig& cfg, Rng& rng) {
  EnvState env = new_env(cfg);
  RunRecord run;
  run.run_id = "sim-" + std::to_string(cfg.seed);
  run.agent = policy.descriptor();
  run.schedule = cfg.schedule;
  run.seed = cfg.seed;
  run.n_trials = cfg.n_trials;
  run.trials.reserve(static_cast<std::size_t>(cfg.n_trials));
  for (int t = 1; t <= cfg.n_trials; ++t) {
    const Action a = policy.choose(PolicyContext{t, env.current_state}, rng);
    const StepResult s = step(env, a, cfg);
    policy.observe(a, s.win);
    run.trials.push_back(make_trial_record(s, a, a == Action::A0 ? 'E' : 'V'));
  }
  run.status = RunStatus::Complete;
  return run;
}

inline RunRecord simulate_run(const AgentParams& p, Rule rule, const EnvConfig& cfg, Rng& rng) {
  return simulate_policy(RlAgent(p, rule), cfg, rng);
}

}  // namespace revlearn
