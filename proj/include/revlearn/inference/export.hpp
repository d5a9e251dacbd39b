#pragma once

// File outputs of the inference module: long-format draws CSV and JSON
// summaries of posteriors, DIC comparisons, predictive checks and recovery.

#include <ostream>
#include <string>

#include <json.hpp>

#include "revlearn/inference/dic.hpp"
#include "revlearn/inference/hierarchical.hpp"
#include "revlearn/inference/ppc.hpp"
#include "revlearn/inference/recovery.hpp"
#include "revlearn/metrics.hpp"

namespace revlearn::inference {

using ordered_json = nlohmann::ordered_json;

// Columns chain,draw,parameter,value. Group parameters are mu_<name> and
// sigma_<name> on the transformed scale plus <name> on the natural scale;
// `deviance` per draw; run-level parameters as z[<run_id>]_<name> when asked.
inline void write_draws_csv(std::ostream& os, const PosteriorSummary& post, bool run_level = false) {
  os << "chain,draw,parameter,value\n";
  for (int c = 0; c < static_cast<int>(post.chains.size()); ++c) {
    for (int d = 0; d < post.draws_per_chain(); ++d) {
      auto row = [&](const std::string& name, double v) {
        os << c << ',' << d << ',' << name << ',' << format_number(v) << '\n';
      };
      for (int p = 0; p < post.n_params; ++p) {
        const std::string name(kParamNames[p]);
        const double mu = post.group_mu(c, d, p);
        row("mu_" + name, mu);
        row("sigma_" + name, post.group_sigma(c, d, p));
        row(name, to_natural(p, mu));
      }
      row("deviance", post.chains[static_cast<std::size_t>(c)].deviance[static_cast<std::size_t>(d)]);
      if (run_level)
        for (int i = 0; i < post.n_runs; ++i) {
          const ZVector z = post.run_z(c, d, i);
          for (int p = 0; p < post.n_params; ++p)
            row("z[" + post.run_ids[static_cast<std::size_t>(i)] + "]_" + std::string(kParamNames[p]), z[p]);
        }
    }
  }
}

inline ordered_json summary_to_json(const PosteriorSummary& post) {
  ordered_json j;
  j["rule"] = std::string(to_string(post.rule));
  j["n_runs"] = post.n_runs;
  j["chains"] = post.chains.size();
  j["draws_per_chain"] = post.draws_per_chain();
  j["converged"] = post.converged;
  j["max_rhat"] = post.max_rhat;
  j["mean_deviance"] = post.mean_deviance;
  ordered_json group = ordered_json::object();
  for (const auto& g : post.group) {
    ordered_json e;
    e["mean"] = g.mean;
    e["sd"] = g.sd;
    e["q025"] = g.q025;
    e["q975"] = g.q975;
    e["rhat"] = g.mu_rhat;
    e["ess"] = g.mu_ess;
    e["sigma_mean"] = g.sigma_mean;
    e["sigma_rhat"] = g.sigma_rhat;
    e["sigma_ess"] = g.sigma_ess;
    group[g.name] = e;
  }
  j["group"] = group;
  double worst_run = 0.0;
  for (double r : post.run_rhat) worst_run = std::max(worst_run, r);
  j["max_run_rhat"] = worst_run;
  ordered_json acc = ordered_json::array();
  for (const auto& c : post.chains) acc.push_back({{"run", c.run_acceptance}, {"sigma", c.sigma_acceptance}});
  j["acceptance"] = acc;
  return j;
}

inline ordered_json dic_to_json(const DicReport& r) {
  ordered_json j;
  j["rule"] = std::string(to_string(r.rule));
  j["mean_deviance"] = r.mean_deviance;
  j["deviance_at_mean"] = r.deviance_at_mean;
  j["p_d"] = r.p_d;
  j["dic"] = r.dic;
  return j;
}

inline ordered_json comparison_to_json(const std::vector<DicReport>& reports) {
  ordered_json j;
  ordered_json models = ordered_json::array();
  const DicReport* best = nullptr;
  for (const auto& r : reports) {
    models.push_back(dic_to_json(r));
    if (!best || r.dic < best->dic) best = &r;
  }
  j["models"] = models;
  if (best) {
    j["preferred"] = std::string(to_string(best->rule));
    ordered_json delta = ordered_json::object();
    for (const auto& r : reports) delta[std::string(to_string(r.rule))] = r.dic - best->dic;
    j["delta_dic"] = delta;
  }
  return j;
}

inline ordered_json ppc_to_json(const PpcReport& r) {
  ordered_json j;
  j["rule"] = std::string(to_string(r.rule));
  ordered_json ms = ordered_json::array();
  for (const auto& m : r.metrics) {
    ordered_json e;
    e["metric"] = m.name;
    e["observed"] = m.observed ? ordered_json(*m.observed) : ordered_json(nullptr);
    e["sim_q05"] = m.sim_q05;
    e["sim_median"] = m.sim_median;
    e["sim_q95"] = m.sim_q95;
    e["p_value"] = m.p_value ? ordered_json(*m.p_value) : ordered_json(nullptr);
    e["n_sim"] = m.n_sim;
    ms.push_back(e);
  }
  j["metrics"] = ms;
  return j;
}

inline ordered_json recovery_to_json(const RecoveryReport& r) {
  ordered_json j;
  j["rule"] = std::string(to_string(r.rule));
  j["n_runs"] = r.n_runs;
  j["converged"] = r.converged;
  j["max_rhat"] = r.max_rhat;
  ordered_json es = ordered_json::array();
  for (const auto& e : r.entries) {
    ordered_json x;
    x["parameter"] = e.name;
    x["truth"] = e.truth;
    x["mean"] = e.mean;
    x["sd"] = e.sd;
    x["q025"] = e.q025;
    x["q975"] = e.q975;
    x["covered"] = e.covered;
    x["abs_error"] = e.abs_error;
    x["rel_error"] = e.rel_error;
    es.push_back(x);
  }
  j["parameters"] = es;
  return j;
}

}  // namespace revlearn::inference
