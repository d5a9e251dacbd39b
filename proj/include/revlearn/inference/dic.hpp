#pragma once

#include <span>
#include <string>

#include "revlearn/inference/hierarchical.hpp"

namespace revlearn::inference {

struct DicReport {
  Rule rule = Rule::Dual;
  double mean_deviance = 0.0;       // D-bar over saved draws
  double deviance_at_mean = 0.0;    // D(theta-bar), theta-bar on the transformed scale
  double p_d = 0.0;
  double dic = 0.0;
};

// Deviance of all runs at the given transformed run-level parameters.
inline double deviance(Rule rule, std::span<const CompactRun> runs, const std::vector<ZVector>& z) {
  double ll = 0.0;
  for (std::size_t i = 0; i < runs.size(); ++i) ll += loglik(rule, to_natural(z[i], rule), runs[i]);
  return -2.0 * ll;
}

inline DicReport dic(Rule rule, std::span<const RunRecord> runs, const PosteriorSummary& post,
                     bool allow_nonconverged = false) {
  if (post.rule != rule) throw ConfigError("posterior was fitted with a different rule");
  if (static_cast<int>(runs.size()) != post.n_runs)
    throw ConfigError("posterior and data disagree on the number of runs");
  if (!post.converged && !allow_nonconverged)
    throw StateError("posterior did not converge (max R-hat " + std::to_string(post.max_rhat) +
                     "); refusing to compute DIC");
  DicReport r;
  r.rule = rule;
  r.mean_deviance = post.mean_deviance;
  r.deviance_at_mean = deviance(rule, compact(runs), post.posterior_mean_z());
  r.p_d = r.mean_deviance - r.deviance_at_mean;
  r.dic = r.mean_deviance + r.p_d;
  return r;
}

}  // namespace revlearn::inference
