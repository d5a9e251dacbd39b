#pragma once

// Convergence diagnostics over several chains of equal length: split-Rhat
// and a multi-chain effective sample size with Geyer's initial monotone
// sequence truncation.

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <vector>

namespace revlearn::inference {

using Chains = std::vector<std::vector<double>>;

namespace detail {

inline double mean_of(const std::vector<double>& v, std::size_t b, std::size_t e) {
  double s = 0.0;
  for (std::size_t i = b; i < e; ++i) s += v[i];
  return s / static_cast<double>(e - b);
}

inline double var_of(const std::vector<double>& v, std::size_t b, std::size_t e, double m) {
  double s = 0.0;
  for (std::size_t i = b; i < e; ++i) s += (v[i] - m) * (v[i] - m);
  return s / static_cast<double>(e - b - 1);
}

}  // namespace detail

// Each chain is split in half; returns 1 for constant input and NaN when
// fewer than four draws per chain are available.
inline double split_rhat(const Chains& chains) {
  if (chains.empty()) return std::nan("");
  const std::size_t n = chains.front().size();
  if (n < 4) return std::nan("");
  const std::size_t half = n / 2;
  std::vector<double> means, vars;
  for (const auto& c : chains) {
    for (std::size_t part = 0; part < 2; ++part) {
      const std::size_t b = part == 0 ? 0 : n - half;
      const std::size_t e = b + half;
      const double m = detail::mean_of(c, b, e);
      means.push_back(m);
      vars.push_back(detail::var_of(c, b, e, m));
    }
  }
  const double m = static_cast<double>(means.size());
  const double w = std::accumulate(vars.begin(), vars.end(), 0.0) / m;
  const double grand = std::accumulate(means.begin(), means.end(), 0.0) / m;
  double b = 0.0;
  for (double x : means) b += (x - grand) * (x - grand);
  b *= static_cast<double>(half) / (m - 1.0);
  if (w <= 0.0) return b <= 0.0 ? 1.0 : std::numeric_limits<double>::infinity();
  const double var_plus = (static_cast<double>(half) - 1.0) / static_cast<double>(half) * w +
                          b / static_cast<double>(half);
  return std::sqrt(var_plus / w);
}

inline double effective_sample_size(const Chains& chains) {
  const std::size_t m = chains.size();
  if (m == 0) return 0.0;
  const std::size_t n = chains.front().size();
  if (n < 4) return static_cast<double>(m * n);

  std::vector<double> means(m), vars(m);
  for (std::size_t c = 0; c < m; ++c) {
    means[c] = detail::mean_of(chains[c], 0, n);
    vars[c] = detail::var_of(chains[c], 0, n, means[c]);
  }
  const double w = std::accumulate(vars.begin(), vars.end(), 0.0) / static_cast<double>(m);
  const double grand = std::accumulate(means.begin(), means.end(), 0.0) / static_cast<double>(m);
  double b_over_n = 0.0;
  if (m > 1) {
    for (double x : means) b_over_n += (x - grand) * (x - grand);
    b_over_n /= static_cast<double>(m - 1);
  }
  const double var_plus = (static_cast<double>(n) - 1.0) / static_cast<double>(n) * w + b_over_n;
  if (!(var_plus > 0.0)) return static_cast<double>(m * n);

  // Per-lag autocovariance averaged over chains (biased estimator).
  auto autocov = [&](std::size_t lag) {
    double acc = 0.0;
    for (std::size_t c = 0; c < m; ++c) {
      double s = 0.0;
      for (std::size_t i = 0; i + lag < n; ++i)
        s += (chains[c][i] - means[c]) * (chains[c][i + lag] - means[c]);
      acc += s / static_cast<double>(n);
    }
    return acc / static_cast<double>(m);
  };
  auto rho = [&](std::size_t lag) { return 1.0 - (w - autocov(lag)) / var_plus; };

  double sum = 0.0;
  double prev_pair = std::numeric_limits<double>::infinity();
  for (std::size_t t = 0; t + 1 < n; t += 2) {
    double pair = rho(t) + rho(t + 1);
    if (pair <= 0.0) break;
    pair = std::min(pair, prev_pair);
    prev_pair = pair;
    sum += pair;
  }
  const double tau = std::max(-1.0 + 2.0 * sum, 1.0 / std::log10(static_cast<double>(m * n)));
  return static_cast<double>(m * n) / tau;
}

// Linear-interpolated sample quantile, q in [0,1].
inline double quantile(std::vector<double> v, double q) {
  if (v.empty()) return std::nan("");
  std::sort(v.begin(), v.end());
  const double pos = q * static_cast<double>(v.size() - 1);
  const auto lo = static_cast<std::size_t>(std::floor(pos));
  const auto hi = std::min(lo + 1, v.size() - 1);
  return v[lo] + (pos - static_cast<double>(lo)) * (v[hi] - v[lo]);
}

}  // namespace revlearn::inference
