#pragma once

#include <string>
#include <string_view>

#include "revlearn/error.hpp"

namespace revlearn {

// Value-learning rule. `Kdu` adds counterfactual updating of the unchosen
// option, scaled by kappa.
enum class Rule { Dual, Kdu };

inline std::string_view to_string(Rule r) { return r == Rule::Dual ? "dual" : "kdu"; }

inline Rule rule_from_string(std::string_view s) {
  if (s == "dual") return Rule::Dual;
  if (s == "kdu") return Rule::Kdu;
  throw ConfigError("unknown rule '" + std::string(s) + "' (expected dual|kdu)");
}

struct AgentParams {
  double eta_pos = 0.5;
  double eta_neg = 0.5;
  double beta = 1.0;
  double kappa = 0.0;

  friend bool operator==(const AgentParams&, const AgentParams&) = default;

  // Learning rates in (0,1), beta > 0, kappa in [0,1). Simulation also
  // accepts the closed endpoints 0 for the learning rates (frozen values).
  void validate(bool allow_zero_rates = true) const {
    auto rate_ok = [&](double v) {
      return (allow_zero_rates ? v >= 0.0 : v > 0.0) && v < 1.0;
    };
    if (!rate_ok(eta_pos)) throw ConfigError("eta_pos out of range: " + std::to_string(eta_pos));
    if (!rate_ok(eta_neg)) throw ConfigError("eta_neg out of range: " + std::to_string(eta_neg));
    if (!(beta > 0.0)) throw ConfigError("beta must be > 0: " + std::to_string(beta));
    if (!(kappa >= 0.0 && kappa < 1.0))
      throw ConfigError("kappa out of range: " + std::to_string(kappa));
  }
};

}  // namespace revlearn
