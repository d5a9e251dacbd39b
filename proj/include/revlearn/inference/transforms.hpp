#pragma once

// Unconstrained parameterisation used by the optimiser and the sampler:
// learning rates and kappa on the logit scale, beta on the log scale.

#include <array>
#include <cmath>
#include <string_view>

#include "revlearn/agents.hpp"
#include "revlearn/params.hpp"

namespace revlearn::inference {

inline constexpr int kMaxParams = 4;
using ZVector = std::array<double, kMaxParams>;

constexpr int n_params(Rule rule) noexcept { return rule == Rule::Dual ? 3 : 4; }

inline constexpr std::array<std::string_view, kMaxParams> kParamNames{"eta_pos", "eta_neg", "beta",
                                                                      "kappa"};

inline double logit(double p) noexcept { return std::log(p) - std::log1p(-p); }

inline bool is_log_scale(int param) noexcept { return param == 2; }

// Natural-scale value of one coordinate.
inline double to_natural(int param, double z) noexcept {
  return is_log_scale(param) ? std::exp(z) : sigmoid(z);
}

inline double to_transformed(int param, double v) noexcept {
  return is_log_scale(param) ? std::log(v) : logit(v);
}

inline AgentParams to_natural(const ZVector& z, Rule rule) noexcept {
  AgentParams p;
  p.eta_pos = sigmoid(z[0]);
  p.eta_neg = sigmoid(z[1]);
  p.beta = std::exp(z[2]);
  p.kappa = rule == Rule::Kdu ? sigmoid(z[3]) : 0.0;
  return p;
}

inline ZVector to_transformed(const AgentParams& p, Rule rule) noexcept {
  ZVector z{logit(p.eta_pos), logit(p.eta_neg), std::log(p.beta), 0.0};
  if (rule == Rule::Kdu) z[3] = logit(p.kappa);
  return z;
}

}  // namespace revlearn::inference
