#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "revlearn/agents.hpp"
#include "revlearn/records.hpp"

namespace revlearn::inference {

// Choices and unit rewards of a run, stripped of everything else.
struct CompactRun {
  std::vector<std::uint8_t> actions;
  std::vector<std::int8_t> rewards;

  std::size_t size() const noexcept { return actions.size(); }
};

// Incomplete runs contribute the trials recorded up to termination; nothing is
// imputed.
inline CompactRun compact(const RunRecord& run) {
  CompactRun c;
  c.actions.reserve(run.trials.size());
  c.rewards.reserve(run.trials.size());
  for (const auto& tr : run.trials) {
    c.actions.push_back(static_cast<std::uint8_t>(index(tr.action)));
    c.rewards.push_back(static_cast<std::int8_t>(tr.reward()));
  }
  return c;
}

inline std::vector<CompactRun> compact(std::span<const RunRecord> runs) {
  std::vector<CompactRun> out;
  out.reserve(runs.size());
  for (const auto& r : runs) out.push_back(compact(r));
  return out;
}

// Sum over trials of log P(a_t | Q_t), with Q propagated by `rule`.
inline double loglik(Rule rule, const AgentParams& p, const CompactRun& run) noexcept {
  double q0 = 0.0, q1 = 0.0, total = 0.0;
  const double kappa = rule == Rule::Kdu ? p.kappa : 0.0;
  const std::size_t n = run.size();
  for (std::size_t t = 0; t < n; ++t) {
    const double x = p.beta * (q0 - q1);
    const bool chose_a0 = run.actions[t] == 0;
    total += log_sigmoid(chose_a0 ? x : -x);
    const double r = run.rewards[t];
    const double eta = r > 0 ? p.eta_pos : p.eta_neg;
    double& qc = chose_a0 ? q0 : q1;
    double& qu = chose_a0 ? q1 : q0;
    const double delta_unchosen = -r - qu;
    qc += eta * (r - qc);
    if (kappa != 0.0) qu += kappa * eta * delta_unchosen;
  }
  return total;
}

struct LoglikResult {
  double value = 0.0;
  bool empty_run = false;  // warning: nothing to evaluate
};

inline LoglikResult loglik(Rule rule, const AgentParams& p, const RunRecord& run) {
  return LoglikResult{loglik(rule, p, compact(run)), run.trials.empty()};
}

}  // namespace revlearn::inference
