#pragma once

// Per-run maximum a posteriori (or maximum likelihood, with a flat prior)
// fit by multi-start Nelder-Mead in the unconstrained parameterisation.

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <optional>
#include <string>
#include <vector>

#include "revlearn/error.hpp"
#include "revlearn/inference/likelihood.hpp"
#include "revlearn/inference/transforms.hpp"
#include "revlearn/random.hpp"

namespace revlearn::inference {

struct FitError : Error {
  explicit FitError(const std::string& what) : Error("fit", what) {}
};

// Box of the optimiser in transformed space. beta is confined to
// [exp(-5), exp(5)], learning rates and kappa to logistic(+-10).
inline constexpr std::array<double, kMaxParams> kZLower{-10.0, -10.0, -5.0, -10.0};
inline constexpr std::array<double, kMaxParams> kZUpper{10.0, 10.0, 5.0, 10.0};

// Independent normal prior per transformed coordinate; an empty prior is flat.
struct ZPrior {
  std::vector<double> mean;
  std::vector<double> sd;

  bool flat() const noexcept { return mean.empty(); }

  double log_density(const ZVector& z, int n) const noexcept {
    if (flat()) return 0.0;
    double s = 0.0;
    for (int p = 0; p < n; ++p) {
      const double u = (z[p] - mean[p]) / sd[p];
      s += -0.5 * u * u - std::log(sd[p]);
    }
    return s;
  }
};

struct MapOptions {
  int starts = 5;
  int max_evaluations = 4000;  // per start
  double tolerance = 1e-6;     // spread of objective values across the simplex
  std::uint64_t seed = 0;
};

struct MapResult {
  AgentParams params;
  ZVector z{};
  double objective = 0.0;  // log-likelihood plus log-prior at the optimum
  double loglik = 0.0;
  bool converged = false;
  bool degenerate = false;       // optimum sits on the optimiser box
  bool low_information = false;  // fewer than 10 trials
  int evaluations = 0;
};

namespace detail {

inline ZVector clamp_box(ZVector z, int n) {
  for (int p = 0; p < n; ++p) z[p] = std::clamp(z[p], kZLower[p], kZUpper[p]);
  return z;
}

struct NelderMeadOutcome {
  ZVector best{};
  double value = -std::numeric_limits<double>::infinity();
  bool converged = false;
  int evaluations = 0;
};

// Maximises `f` from `start`, projecting every trial point onto the box.
template <typename F>
NelderMeadOutcome nelder_mead(F&& f, const ZVector& start, int n, double step, double tol,
                              int max_eval) {
  struct Vertex {
    ZVector z;
    double v;
  };
  NelderMeadOutcome out;
  auto eval = [&](const ZVector& z) {
    ++out.evaluations;
    const double v = f(z);
    return std::isfinite(v) ? v : -std::numeric_limits<double>::infinity();
  };
  std::vector<Vertex> simplex;
  const ZVector s0 = clamp_box(start, n);
  simplex.push_back({s0, eval(s0)});
  for (int i = 0; i < n; ++i) {
    ZVector z = s0;
    z[i] += (z[i] + step <= kZUpper[i]) ? step : -step;
    z = clamp_box(z, n);
    simplex.push_back({z, eval(z)});
  }
  auto by_value = [](const Vertex& a, const Vertex& b) { return a.v > b.v; };

  while (out.evaluations < max_eval) {
    std::sort(simplex.begin(), simplex.end(), by_value);
    const Vertex& best = simplex.front();
    const Vertex& worst = simplex.back();
    double size = 0.0;
    for (const auto& v : simplex)
      for (int i = 0; i < n; ++i) size = std::max(size, std::abs(v.z[i] - best.z[i]));
    if (std::isfinite(worst.v) && best.v - worst.v < tol && size < 1e-4) {
      out.converged = true;
      break;
    }
    ZVector centroid{};
    for (int k = 0; k < n; ++k)
      for (int i = 0; i < n; ++i) centroid[i] += simplex[static_cast<std::size_t>(k)].z[i] / n;
    auto along = [&](double coef) {
      ZVector z{};
      for (int i = 0; i < n; ++i) z[i] = centroid[i] + coef * (worst.z[i] - centroid[i]);
      return clamp_box(z, n);
    };
    const ZVector zr = along(-1.0);
    const double vr = eval(zr);
    const double second_worst = simplex[static_cast<std::size_t>(n - 1)].v;
    if (vr > best.v) {
      const ZVector ze = along(-2.0);
      const double ve = eval(ze);
      simplex.back() = ve > vr ? Vertex{ze, ve} : Vertex{zr, vr};
    } else if (vr > second_worst) {
      simplex.back() = {zr, vr};
    } else {
      const bool outside = vr > worst.v;
      const ZVector zc = along(outside ? -0.5 : 0.5);
      const double vc = eval(zc);
      if (vc > (outside ? vr : worst.v)) {
        simplex.back() = {zc, vc};
      } else {
        for (std::size_t k = 1; k < simplex.size(); ++k) {
          for (int i = 0; i < n; ++i)
            simplex[k].z[i] = simplex[0].z[i] + 0.5 * (simplex[k].z[i] - simplex[0].z[i]);
          simplex[k].v = eval(simplex[k].z);
        }
      }
    }
  }
  std::sort(simplex.begin(), simplex.end(), by_value);
  out.best = simplex.front().z;
  out.value = simplex.front().v;
  return out;
}

}  // namespace detail

inline MapResult map_fit(Rule rule, const CompactRun& run, const ZPrior& prior = {},
                         const MapOptions& opts = {}) {
  const int n = n_params(rule);
  if (!prior.flat() && (static_cast<int>(prior.mean.size()) < n || static_cast<int>(prior.sd.size()) < n))
    throw ConfigError("prior dimension does not match the rule");
  auto objective = [&](const ZVector& z) {
    return loglik(rule, to_natural(z, rule), run) + prior.log_density(z, n);
  };

  // Scattered starts: the neutral point, a fixed spread of corners, then
  // random points inside the central part of the box.
  std::vector<ZVector> starts{{0.0, 0.0, 1.0, 0.0},
                              {1.5, 1.5, 0.0, -1.0},
                              {-1.5, -1.5, 2.0, 1.0},
                              {1.5, -1.5, 1.5, 0.0},
                              {-1.5, 1.5, 0.5, -2.0}};
  Rng rng(derive_seed(opts.seed, 0, 0x3a9));
  while (static_cast<int>(starts.size()) < opts.starts) {
    ZVector z{};
    for (int p = 0; p < n; ++p) z[p] = (is_log_scale(p) ? 1.0 : 0.0) + 2.0 * (2.0 * uniform01(rng) - 1.0);
    starts.push_back(z);
  }
  starts.resize(static_cast<std::size_t>(std::max(opts.starts, 1)));

  MapResult res;
  res.objective = -std::numeric_limits<double>::infinity();
  bool any_finite = false;
  for (const auto& s : starts) {
    auto o = detail::nelder_mead(objective, s, n, 1.0, opts.tolerance, opts.max_evaluations);
    res.evaluations += o.evaluations;
    if (!std::isfinite(o.value)) continue;
    // Restart once from the optimum to escape premature collapse.
    auto o2 = detail::nelder_mead(objective, o.best, n, 0.25, opts.tolerance, opts.max_evaluations);
    res.evaluations += o2.evaluations;
    if (o2.value >= o.value) o = o2;
    any_finite = true;
    if (o.value > res.objective) {
      res.objective = o.value;
      res.z = o.best;
      res.converged = o.converged;
    }
  }
  if (!any_finite)
    throw FitError("objective non-finite at every start (" + std::to_string(starts.size()) +
                   " starts, " + std::to_string(run.size()) + " trials)");
  // A likelihood that keeps rising toward a box edge (separable data) levels
  // off before the simplex gets there; move such coordinates onto the edge.
  for (int p = 0; p < n; ++p) {
    for (double bound : {kZLower[p], kZUpper[p]}) {
      ZVector z = res.z;
      z[p] = bound;
      const double v = objective(z);
      ++res.evaluations;
      if (std::isfinite(v) && v >= res.objective) {
        res.objective = v;
        res.z = z;
      }
    }
  }
  res.params = to_natural(res.z, rule);
  res.loglik = loglik(rule, res.params, run);
  for (int p = 0; p < n; ++p)
    if (res.z[p] - kZLower[p] < 1e-3 || kZUpper[p] - res.z[p] < 1e-3) res.degenerate = true;
  res.low_information = run.size() < 10;
  return res;
}

}  // namespace revlearn::inference
