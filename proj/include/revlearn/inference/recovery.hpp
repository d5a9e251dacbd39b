#pragma once

// Parameter recovery: simulate a cohort from a known population, fit it, and
// compare the group-level posterior against the truth.

#include <cmath>
#include <span>
#include <string>
#include <vector>

#include "revlearn/agents.hpp"
#include "revlearn/inference/hierarchical.hpp"

namespace revlearn::inference {

// Generating population on the transformed scale. The natural-scale group
// value of parameter p is to_natural(p, mu[p]).
struct PopulationSpec {
  Rule rule = Rule::Dual;
  ZVector mu{};
  ZVector sigma{};

  static PopulationSpec around(const AgentParams& group, Rule rule, double sd) {
    PopulationSpec s;
    s.rule = rule;
    s.mu = to_transformed(group, rule);
    for (int p = 0; p < n_params(rule); ++p) s.sigma[p] = sd;
    return s;
  }

  AgentParams group_params() const { return to_natural(mu, rule); }
};

inline std::vector<RunRecord> simulate_cohort(const PopulationSpec& pop, int n_runs,
                                              const EnvConfig& cfg, std::uint64_t seed) {
  std::vector<RunRecord> runs;
  runs.reserve(static_cast<std::size_t>(n_runs));
  Rng draw(derive_seed(seed, 0, 0x0b5));
  for (int i = 0; i < n_runs; ++i) {
    ZVector z = pop.mu;
    for (int p = 0; p < n_params(pop.rule); ++p) z[p] += pop.sigma[p] * standard_normal(draw);
    EnvConfig run_cfg = cfg;
    run_cfg.seed = derive_seed(seed, static_cast<std::uint64_t>(i), 0xe5);
    Rng agent_rng(derive_seed(seed, static_cast<std::uint64_t>(i), 0xa7));
    RunRecord r = simulate_run(to_natural(z, pop.rule), pop.rule, run_cfg, agent_rng);
    r.run_id = "sim-" + std::to_string(i);
    runs.push_back(std::move(r));
  }
  return runs;
}

struct RecoveryEntry {
  std::string name;
  double truth = 0.0;
  double mean = 0.0;
  double sd = 0.0;
  double q025 = 0.0;
  double q975 = 0.0;
  bool covered = false;
  double abs_error = 0.0;
  double rel_error = 0.0;
};

struct RecoveryReport {
  Rule rule = Rule::Dual;
  int n_runs = 0;
  std::vector<RecoveryEntry> entries;
  bool converged = false;
  double max_rhat = 0.0;
  PosteriorSummary posterior;

  int covered_count() const {
    int k = 0;
    for (const auto& e : entries) k += e.covered ? 1 : 0;
    return k;
  }
};

inline RecoveryReport compare_to_truth(const PopulationSpec& truth, PosteriorSummary post) {
  RecoveryReport rep;
  rep.rule = post.rule;
  rep.n_runs = post.n_runs;
  rep.converged = post.converged;
  rep.max_rhat = post.max_rhat;
  for (int p = 0; p < post.n_params; ++p) {
    const auto& g = post.group[static_cast<std::size_t>(p)];
    RecoveryEntry e;
    e.name = g.name;
    e.truth = to_natural(p, truth.mu[p]);
    e.mean = g.mean;
    e.sd = g.sd;
    e.q025 = g.q025;
    e.q975 = g.q975;
    e.covered = e.truth >= g.q025 && e.truth <= g.q975;
    e.abs_error = std::abs(g.mean - e.truth);
    e.rel_error = e.abs_error / std::abs(e.truth);
    rep.entries.push_back(e);
  }
  rep.posterior = std::move(post);
  return rep;
}

inline RecoveryReport recovery_study(const PopulationSpec& truth, int n_runs, const EnvConfig& cfg,
                                     const McmcConfig& mcmc,
                                     const HierarchicalModelSpec& spec_in = {}) {
  HierarchicalModelSpec spec = spec_in;
  spec.rule = truth.rule;
  const auto runs = simulate_cohort(truth, n_runs, cfg, derive_seed(mcmc.seed, 0, 0x2ec));
  return compare_to_truth(truth, fit_hierarchical(truth.rule, runs, spec, mcmc));
}

}  // namespace revlearn::inference
