#pragma once

// Shared fixtures for the unit and acceptance suites: a deliberately naive
// likelihood oracle and builders for hand-constructed runs.

#include <cmath>
#include <utility>
#include <vector>

#include "revlearn/agents.hpp"
#include "revlearn/records.hpp"

namespace revlearn::testing {

// Replays the whole prefix for every trial (quadratic) and spells the update
// equations out directly, sharing no code with the library's learners.
inline double brute_force_loglik(bool counterfactual, double eta_pos, double eta_neg, double beta,
                                 double kappa, const std::vector<int>& choices,
                                 const std::vector<int>& rewards) {
  double total = 0.0;
  for (std::size_t t = 0; t < choices.size(); ++t) {
    double q[2] = {0.0, 0.0};
    for (std::size_t s = 0; s < t; ++s) {
      const int c = choices[s];
      const int r = rewards[s];
      const double lr = r == 1 ? eta_pos : eta_neg;
      const double q_chosen_before = q[c];
      const double q_other_before = q[1 - c];
      q[c] = q_chosen_before + lr * (r - q_chosen_before);
      if (counterfactual) q[1 - c] = q_other_before + kappa * lr * (-r - q_other_before);
    }
    // log P(choice) = -log(1 + exp(-x)), x the signed scaled value gap.
    const double x = beta * (choices[t] == 0 ? q[0] - q[1] : q[1] - q[0]);
    total -= std::log1p(std::exp(-x));
  }
  return total;
}

// A segment of a constructed run: the latent state and the (action, win)
// sequence played in it.
struct SegmentSpec {
  StateId state;
  std::vector<std::pair<Action, bool>> trials;
};

// Builds a complete run with consistent coins, segment ids and switch
// events. Reasons are set to Criterion; metrics never read them.
inline RunRecord build_run(const std::vector<SegmentSpec>& segments, int magnitude = 100) {
  RunRecord run;
  run.run_id = "constructed";
  run.agent.kind = "scripted";
  int t = 0;
  for (std::size_t m = 0; m < segments.size(); ++m) {
    const auto& seg = segments[m];
    for (std::size_t i = 0; i < seg.trials.size(); ++i) {
      TrialRecord tr;
      tr.t = ++t;
      tr.action = seg.trials[i].first;
      tr.label_shown = tr.action == Action::A0 ? 'E' : 'V';
      tr.win = seg.trials[i].second;
      tr.coins = tr.win ? magnitude : -magnitude;
      tr.state = seg.state;
      tr.segment = static_cast<int>(m);
      if (i + 1 == seg.trials.size() && m + 1 < segments.size())
        tr.switch_after = SwitchEvent{tr.t, SwitchReason::Criterion, seg.state, segments[m + 1].state};
      run.trials.push_back(tr);
    }
  }
  run.n_trials = t;
  run.status = RunStatus::Complete;
  return run;
}

inline std::vector<std::pair<Action, bool>> repeat(Action a, bool win, int n) {
  return std::vector<std::pair<Action, bool>>(static_cast<std::size_t>(n), {a, win});
}

}  // namespace revlearn::testing
