#pragma once

// Posterior predictive checks: replicate the observed cohort with run-level
// parameters drawn from the posterior and compare cell-level behavioural
// summaries.

#include <optional>
#include <span>
#include <string>
#include <vector>

#include "revlearn/agents.hpp"
#include "revlearn/inference/diagnostics.hpp"
#include "revlearn/inference/hierarchical.hpp"
#include "revlearn/metrics.hpp"

namespace revlearn::inference {

struct PpcMetric {
  std::string name;
  std::optional<double> observed;
  double sim_q05 = 0.0;
  double sim_median = 0.0;
  double sim_q95 = 0.0;
  std::optional<double> p_value;  // P(sim > obs) + 0.5 P(sim == obs)
  int n_sim = 0;
};

struct PpcReport {
  Rule rule = Rule::Dual;
  std::vector<PpcMetric> metrics;  // win_stay, lose_shift, perseveration, total_wins

  bool all_within(double lo = 0.05, double hi = 0.95) const {
    for (const auto& m : metrics)
      if (m.p_value && (*m.p_value <= lo || *m.p_value >= hi)) return false;
    return true;
  }
};

namespace detail {
inline std::array<std::optional<double>, 4> cell_statistics(std::span<const RunRecord> runs) {
  std::vector<RunMetrics> m;
  m.reserve(runs.size());
  for (const auto& r : runs) m.push_back(run_metrics(r));
  const CellSummary c = aggregate(m);
  return {c.win_stay.mean, c.lose_shift.mean, c.perseveration.mean, c.total_wins.mean};
}
}  // namespace detail

// `cfg` fixes the task (length, schedule); its seed is ignored in favour of
// streams derived from `seed`.
inline PpcReport posterior_predictive(Rule rule, const PosteriorSummary& post,
                                      std::span<const RunRecord> observed, const EnvConfig& cfg,
                                      int n_sim, std::uint64_t seed) {
  if (n_sim < 1) throw ConfigError("n_sim must be >= 1");
  if (post.rule != rule) throw ConfigError("posterior was fitted with a different rule");
  if (static_cast<int>(observed.size()) != post.n_runs)
    throw ConfigError("posterior and data disagree on the number of runs");
  cfg.validate();

  const auto obs = detail::cell_statistics(observed);
  static constexpr std::array<const char*, 4> kNames{"win_stay", "lose_shift", "perseveration",
                                                     "total_wins"};
  std::array<std::vector<double>, 4> sims;
  Rng pick(derive_seed(seed, 0, 0x99c));
  const int chains = static_cast<int>(post.chains.size());
  const int draws = post.draws_per_chain();
  std::vector<RunRecord> replica(observed.size());
  for (int s = 0; s < n_sim; ++s) {
    const int c = static_cast<int>(uniform01(pick) * chains);
    const int d = static_cast<int>(uniform01(pick) * draws);
    for (int i = 0; i < post.n_runs; ++i) {
      EnvConfig run_cfg = cfg;
      run_cfg.seed = derive_seed(seed, static_cast<std::uint64_t>(s) * 100003u + static_cast<std::uint64_t>(i), 0xe4);
      Rng agent_rng(derive_seed(seed, static_cast<std::uint64_t>(s) * 100003u + static_cast<std::uint64_t>(i), 0xa6));
      AgentParams p = to_natural(post.run_z(c, d, i), rule);
      replica[static_cast<std::size_t>(i)] = simulate_run(p, rule, run_cfg, agent_rng);
    }
    const auto stats = detail::cell_statistics(replica);
    for (std::size_t k = 0; k < 4; ++k)
      if (stats[k]) sims[k].push_back(*stats[k]);
  }

  PpcReport rep;
  rep.rule = rule;
  for (std::size_t k = 0; k < 4; ++k) {
    PpcMetric m;
    m.name = kNames[k];
    m.observed = obs[k];
    m.n_sim = static_cast<int>(sims[k].size());
    if (!sims[k].empty()) {
      m.sim_q05 = quantile(sims[k], 0.05);
      m.sim_median = quantile(sims[k], 0.5);
      m.sim_q95 = quantile(sims[k], 0.95);
      if (obs[k]) {
        double above = 0.0;
        for (double v : sims[k]) above += v > *obs[k] ? 1.0 : (v == *obs[k] ? 0.5 : 0.0);
        m.p_value = above / static_cast<double>(sims[k].size());
      }
    }
    rep.metrics.push_back(m);
  }
  return rep;
}

}  // namespace revlearn::inference
