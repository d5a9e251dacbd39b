#pragma once

// Hierarchical Bayesian fit of the Dual / KDU learners.
//
// Model, on the transformed scale (see transforms.hpp):
//   z[i][p]   ~ Normal(mu[p], sigma[p]^2)           run i, parameter p
//   mu[p]     ~ Normal(m0[p], s0[p]^2)
//   sigma[p]  ~ HalfNormal(c[p])
// Sampler: Metropolis-within-Gibbs. Each run's parameter vector is one
// random-walk block whose proposal covariance and scale are tuned during
// warmup only; mu is drawn from its exact normal conditional; log(sigma) gets
// random-walk updates. Optional interweaving adds non-centred moves that
// translate or rescale a parameter's whole population at once.

#include <array>
#include <cmath>
#include <cstdint>
#include <future>
#include <numeric>
#include <sstream>
#include <string>
#include <vector>

#include "revlearn/error.hpp"
#include "revlearn/inference/diagnostics.hpp"
#include "revlearn/inference/likelihood.hpp"
#include "revlearn/inference/map_fit.hpp"
#include "revlearn/inference/transforms.hpp"
#include "revlearn/random.hpp"

namespace revlearn::inference {

struct McmcError : Error {
  explicit McmcError(const std::string& what) : Error("mcmc", what) {}
};

struct HierarchicalModelSpec {
  Rule rule = Rule::Dual;
  std::array<double, kMaxParams> mu_prior_mean{0.0, 0.0, 1.0, 0.0};
  std::array<double, kMaxParams> mu_prior_sd{1.5, 1.5, 1.0, 1.5};
  std::array<double, kMaxParams> sigma_prior_scale{1.0, 1.0, 1.0, 1.0};

  static HierarchicalModelSpec defaults(Rule rule) {
    HierarchicalModelSpec s;
    s.rule = rule;
    return s;
  }

  void validate() const {
    for (int p = 0; p < n_params(rule); ++p)
      if (!(mu_prior_sd[p] > 0.0) || !(sigma_prior_scale[p] > 0.0))
        throw ConfigError("prior scales must be positive");
  }
};

struct McmcConfig {
  int chains = 4;
  int warmup = 1000;
  int samples = 1000;
  int thin = 1;
  std::uint64_t seed = 1;
  int jobs = 1;  // chains run concurrently up to this many threads
  double rhat_threshold = 1.1;
  // Adds non-centred shift/scale moves of (mu, sigma) with the standardised
  // run effects held fixed. Costs 2 * n_params extra cohort likelihood
  // sweeps per iteration; removes the mu/sigma coupling of the centred chain.
  bool interweave = true;
  int run_updates = 1;  // run-level block proposals per iteration

  void validate() const {
    if (chains < 2) throw ConfigError("need at least 2 chains");
    if (warmup < 8) throw ConfigError("warmup must be >= 8");
    if (samples < 4) throw ConfigError("samples must be >= 4");
    if (run_updates < 1) throw ConfigError("run_updates must be >= 1");
    if (thin < 1) throw ConfigError("thin must be >= 1");
  }
};

// Saved draws of one chain. Row-major: mu/sigma are [draw][param], z is
// [draw][run][param] with a stride of kMaxParams per run.
struct ChainTrace {
  int draws = 0;
  std::vector<double> mu;
  std::vector<double> sigma;
  std::vector<double> z;
  std::vector<double> deviance;
  double run_acceptance = 0.0;
  double sigma_acceptance = 0.0;
};

struct GroupParamSummary {
  std::string name;
  double mean = 0.0;  // natural scale, of inverse-transformed mu draws
  double sd = 0.0;
  double q025 = 0.0;
  double q975 = 0.0;
  double mu_rhat = 0.0;
  double mu_ess = 0.0;
  double sigma_mean = 0.0;  // population SD on the transformed scale
  double sigma_rhat = 0.0;
  double sigma_ess = 0.0;
};

struct PosteriorSummary {
  Rule rule = Rule::Dual;
  int n_runs = 0;
  int n_params = 0;
  std::vector<std::string> run_ids;
  std::vector<ChainTrace> chains;
  std::vector<GroupParamSummary> group;
  std::vector<double> run_rhat;  // [run][param], n_params stride
  double max_rhat = 0.0;
  bool converged = false;
  double mean_deviance = 0.0;

  int draws_per_chain() const { return chains.empty() ? 0 : chains.front().draws; }

  ZVector run_z(int chain, int draw, int run) const {
    ZVector z{};
    const auto& c = chains[static_cast<std::size_t>(chain)];
    const std::size_t base =
        (static_cast<std::size_t>(draw) * static_cast<std::size_t>(n_runs) + static_cast<std::size_t>(run)) *
        kMaxParams;
    for (int p = 0; p < kMaxParams; ++p) z[p] = c.z[base + static_cast<std::size_t>(p)];
    return z;
  }

  double group_mu(int chain, int draw, int param) const {
    return chains[static_cast<std::size_t>(chain)]
        .mu[static_cast<std::size_t>(draw) * kMaxParams + static_cast<std::size_t>(param)];
  }

  double group_sigma(int chain, int draw, int param) const {
    return chains[static_cast<std::size_t>(chain)]
        .sigma[static_cast<std::size_t>(draw) * kMaxParams + static_cast<std::size_t>(param)];
  }

  // Posterior mean of each run's parameters on the transformed scale.
  std::vector<ZVector> posterior_mean_z() const {
    std::vector<ZVector> out(static_cast<std::size_t>(n_runs), ZVector{});
    double count = 0.0;
    for (int c = 0; c < static_cast<int>(chains.size()); ++c)
      for (int d = 0; d < chains[static_cast<std::size_t>(c)].draws; ++d) {
        count += 1.0;
        for (int i = 0; i < n_runs; ++i) {
          const ZVector z = run_z(c, d, i);
          for (int p = 0; p < n_params; ++p) out[static_cast<std::size_t>(i)][p] += z[p];
        }
      }
    for (auto& z : out)
      for (int p = 0; p < n_params; ++p) z[p] /= count;
    return out;
  }
};

namespace detail {

using Mat = std::array<std::array<double, kMaxParams>, kMaxParams>;

inline Mat identity() {
  Mat m{};
  for (int i = 0; i < kMaxParams; ++i) m[i][i] = 1.0;
  return m;
}

// Lower Cholesky factor of a small SPD matrix; false if not positive definite.
inline bool cholesky(const Mat& a, int n, Mat& l) {
  l = Mat{};
  for (int i = 0; i < n; ++i) {
    for (int j = 0; j <= i; ++j) {
      double s = a[i][j];
      for (int k = 0; k < j; ++k) s -= l[i][k] * l[j][k];
      if (i == j) {
        if (s <= 0.0) return false;
        l[i][i] = std::sqrt(s);
      } else {
        l[i][j] = s / l[j][j];
      }
    }
  }
  return true;
}

struct Welford {
  int n = 0;
  ZVector mean{};
  Mat m2{};

  void add(const ZVector& x, int dim) {
    ++n;
    ZVector d{};
    for (int i = 0; i < dim; ++i) {
      d[i] = x[i] - mean[i];
      mean[i] += d[i] / n;
    }
    for (int i = 0; i < dim; ++i)
      for (int j = 0; j < dim; ++j) m2[i][j] += d[i] * (x[j] - mean[j]);
  }
  Mat covariance(int dim) const {
    Mat c{};
    for (int i = 0; i < dim; ++i)
      for (int j = 0; j < dim; ++j) c[i][j] = m2[i][j] / (n - 1);
    return c;
  }
};

struct RunBlock {
  ZVector z{};
  double ll = 0.0;
  double log_scale = std::log(0.3);
  Mat chol = identity();
  Welford window;
};

inline double log_normal_kernel(const ZVector& z, const ZVector& mu, const ZVector& sigma, int n) {
  double s = 0.0;
  for (int p = 0; p < n; ++p) {
    const double u = (z[p] - mu[p]) / sigma[p];
    s -= 0.5 * u * u;
  }
  return s;
}

struct ChainInput {
  Rule rule;
  const std::vector<CompactRun>* runs;
  const std::vector<ZVector>* init_z;
  HierarchicalModelSpec spec;
  McmcConfig mcmc;
  int chain_index;
};

inline std::string state_dump(int chain, int iter, int run, const ZVector& z, const ZVector& mu,
                              const ZVector& sigma, int n) {
  std::ostringstream os;
  os << "non-finite log-likelihood in chain " << chain << " at iteration " << iter << ", run "
     << run << "; z=[";
  for (int p = 0; p < n; ++p) os << (p ? "," : "") << z[p];
  os << "] mu=[";
  for (int p = 0; p < n; ++p) os << (p ? "," : "") << mu[p];
  os << "] sigma=[";
  for (int p = 0; p < n; ++p) os << (p ? "," : "") << sigma[p];
  os << "]";
  return os.str();
}

inline ChainTrace run_chain(const ChainInput& in) {
  const int n = n_params(in.rule);
  const auto& runs = *in.runs;
  const int n_runs = static_cast<int>(runs.size());
  const McmcConfig& cfg = in.mcmc;
  Rng rng(derive_seed(cfg.seed, static_cast<std::uint64_t>(in.chain_index), 0xc4a1));

  // Overdispersed start around the per-run MAP estimates.
  std::vector<RunBlock> blocks(static_cast<std::size_t>(n_runs));
  ZVector mu{}, sigma{};
  for (int p = 0; p < n; ++p) {
    double s = 0.0, ss = 0.0;
    for (int i = 0; i < n_runs; ++i) {
      auto& b = blocks[static_cast<std::size_t>(i)];
      b.z[p] = std::clamp((*in.init_z)[static_cast<std::size_t>(i)][p] + 0.5 * standard_normal(rng),
                          -8.0, 8.0);
      s += b.z[p];
      ss += b.z[p] * b.z[p];
    }
    const double m = s / n_runs;
    const double var = n_runs > 1 ? (ss - n_runs * m * m) / (n_runs - 1) : 1.0;
    mu[p] = m + 0.3 * standard_normal(rng);
    sigma[p] = std::max(std::sqrt(std::max(var, 0.0)), 0.2) * std::exp(0.3 * standard_normal(rng));
  }
  for (int i = 0; i < n_runs; ++i) {
    auto& b = blocks[static_cast<std::size_t>(i)];
    b.ll = loglik(in.rule, to_natural(b.z, in.rule), runs[static_cast<std::size_t>(i)]);
    if (std::isnan(b.ll))
      throw McmcError(state_dump(in.chain_index, 0, i, b.z, mu, sigma, n));
  }

  std::vector<double> scratch(static_cast<std::size_t>(n_runs));
  RunBlock shift;  // proposal state of the joint group-mean translation
  shift.log_scale = std::log(0.05);
  std::array<double, kMaxParams> scale_step{};
  scale_step.fill(0.1);
  std::array<double, kMaxParams> sigma_log_step{};
  sigma_log_step.fill(0.3);
  constexpr double kRunTarget = 0.3;
  constexpr double kSigmaTarget = 0.44;
  const double cov_scale = std::log(2.38 / std::sqrt(static_cast<double>(n)));
  const int w = cfg.warmup;
  const int window1_begin = w / 4, window1_end = w / 2;
  const int window2_begin = w / 2 + w / 8, window2_end = w - w / 8;

  // Robbins-Monro scale tuning plus two covariance windows during warmup.
  auto adapt_block = [&](RunBlock& b, const ZVector& x, bool accept, int iter, double gain) {
    b.log_scale += gain * ((accept ? 1.0 : 0.0) - kRunTarget);
    if ((iter >= window1_begin && iter < window1_end) || (iter >= window2_begin && iter < window2_end))
      b.window.add(x, n);
    if (iter == window1_end - 1 || iter == window2_end - 1) {
      Mat l;
      Mat cov = b.window.covariance(n);
      for (int p = 0; p < n; ++p) cov[p][p] += 1e-6;
      if (b.window.n >= 2 * n + 2 && cholesky(cov, n, l)) {
        b.chol = l;
        b.log_scale = cov_scale;
      }
      b.window = Welford{};
    }
  };

  ChainTrace trace;
  const int total = cfg.warmup + cfg.samples * cfg.thin;
  long run_accepts = 0, run_tries = 0, sigma_accepts = 0, sigma_tries = 0;

  for (int iter = 0; iter < total; ++iter) {
    const bool warm = iter < cfg.warmup;
    const double gain = 1.0 / std::pow(1.0 + iter / 10.0, 0.6);

    // Run-level blocks. Adaptation only sees the first proposal of each
    // iteration so the covariance windows keep their nominal length.
    for (int rep = 0; rep < cfg.run_updates; ++rep)
    for (int i = 0; i < n_runs; ++i) {
      auto& b = blocks[static_cast<std::size_t>(i)];
      ZVector eps{}, prop = b.z;
      for (int p = 0; p < n; ++p) eps[p] = standard_normal(rng);
      const double scale = std::exp(b.log_scale);
      for (int r = 0; r < n; ++r) {
        double d = 0.0;
        for (int c = 0; c <= r; ++c) d += b.chol[r][c] * eps[c];
        prop[r] += scale * d;
      }
      const double ll = loglik(in.rule, to_natural(prop, in.rule), runs[static_cast<std::size_t>(i)]);
      if (std::isnan(ll)) throw McmcError(state_dump(in.chain_index, iter, i, prop, mu, sigma, n));
      const double log_ratio = ll + log_normal_kernel(prop, mu, sigma, n) - b.ll -
                               log_normal_kernel(b.z, mu, sigma, n);
      const bool accept = std::log(uniform01(rng) + 1e-300) < log_ratio;
      if (accept) {
        b.z = prop;
        b.ll = ll;
      }
      if (warm) {
        if (rep == 0) adapt_block(b, b.z, accept, iter, gain);
      } else {
        ++run_tries;
        run_accepts += accept ? 1 : 0;
      }
    }

    // Group means: exact normal conditional.
    for (int p = 0; p < n; ++p) {
      double sum = 0.0;
      for (const auto& b : blocks) sum += b.z[p];
      const double prior_prec = 1.0 / (in.spec.mu_prior_sd[p] * in.spec.mu_prior_sd[p]);
      const double data_prec = n_runs / (sigma[p] * sigma[p]);
      const double post_var = 1.0 / (prior_prec + data_prec);
      const double post_mean =
          post_var * (in.spec.mu_prior_mean[p] * prior_prec + sum / (sigma[p] * sigma[p]));
      mu[p] = post_mean + std::sqrt(post_var) * standard_normal(rng);
    }

    // Group SDs: random walk on log(sigma).
    for (int p = 0; p < n; ++p) {
      double ss = 0.0;
      for (const auto& b : blocks) ss += (b.z[p] - mu[p]) * (b.z[p] - mu[p]);
      const double c = in.spec.sigma_prior_scale[p];
      auto log_target = [&](double log_s) {
        const double s = std::exp(log_s);
        return -(n_runs - 1) * log_s - ss / (2.0 * s * s) - s * s / (2.0 * c * c);
      };
      for (int rep = 0; rep < 2; ++rep) {
        const double cur = std::log(sigma[p]);
        const double prop = cur + sigma_log_step[p] * standard_normal(rng);
        const bool accept = std::log(uniform01(rng) + 1e-300) < log_target(prop) - log_target(cur);
        if (accept) sigma[p] = std::exp(prop);
        if (warm) {
          sigma_log_step[p] *= std::exp(gain * ((accept ? 1.0 : 0.0) - kSigmaTarget));
        } else {
          ++sigma_tries;
          sigma_accepts += accept ? 1 : 0;
        }
      }
    }

    if (cfg.interweave) {
      // Proposes z' = move(z) for every run; returns the summed log-likelihood
      // and leaves per-run values in `scratch`.
      auto cohort_loglik = [&](auto&& move) {
        double total_ll = 0.0;
        for (int i = 0; i < n_runs; ++i) {
          const ZVector z = move(blocks[static_cast<std::size_t>(i)].z);
          const double ll = loglik(in.rule, to_natural(z, in.rule), runs[static_cast<std::size_t>(i)]);
          if (std::isnan(ll)) throw McmcError(state_dump(in.chain_index, iter, i, z, mu, sigma, n));
          scratch[static_cast<std::size_t>(i)] = ll;
          total_ll += ll;
        }
        return total_ll;
      };
      auto commit = [&](auto&& move) {
        for (int i = 0; i < n_runs; ++i) {
          auto& b = blocks[static_cast<std::size_t>(i)];
          b.z = move(b.z);
          b.ll = scratch[static_cast<std::size_t>(i)];
        }
      };
      double current_ll = 0.0;
      for (const auto& b : blocks) current_ll += b.ll;

      // Joint translation of all group means with the run effects.
      {
        ZVector eps{}, delta{};
        for (int p = 0; p < n; ++p) eps[p] = standard_normal(rng);
        const double scale = std::exp(shift.log_scale);
        for (int r = 0; r < n; ++r)
          for (int c = 0; c <= r; ++c) delta[r] += scale * shift.chol[r][c] * eps[c];
        auto move = [&](ZVector z) {
          for (int p = 0; p < n; ++p) z[p] += delta[p];
          return z;
        };
        const double ll_new = cohort_loglik(move);
        double log_ratio = ll_new - current_ll;
        for (int p = 0; p < n; ++p) {
          const double m0 = in.spec.mu_prior_mean[p], s0 = in.spec.mu_prior_sd[p];
          const double a = (mu[p] + delta[p] - m0) / s0, b0 = (mu[p] - m0) / s0;
          log_ratio += -0.5 * a * a + 0.5 * b0 * b0;
        }
        const bool accept = std::log(uniform01(rng) + 1e-300) < log_ratio;
        if (accept) {
          commit(move);
          for (int p = 0; p < n; ++p) mu[p] += delta[p];
          current_ll = ll_new;
        }
        if (warm) adapt_block(shift, mu, accept, iter, gain);
      }

      // Per-parameter rescaling of the run effects around the group mean.
      for (int p = 0; p < n; ++p) {
        const double delta = scale_step[p] * standard_normal(rng);
        const double lambda = std::exp(delta);
        auto move = [&](ZVector z) {
          z[p] = mu[p] + lambda * (z[p] - mu[p]);
          return z;
        };
        const double ll_new = cohort_loglik(move);
        const double c = in.spec.sigma_prior_scale[p];
        const double s_new = sigma[p] * lambda;
        const double log_ratio =
            ll_new - current_ll - (s_new * s_new - sigma[p] * sigma[p]) / (2.0 * c * c) + delta;
        const bool accept = std::log(uniform01(rng) + 1e-300) < log_ratio;
        if (accept) {
          commit(move);
          sigma[p] = s_new;
          current_ll = ll_new;
        }
        if (warm) scale_step[p] *= std::exp(gain * ((accept ? 1.0 : 0.0) - kSigmaTarget));
      }
    }

    if (!warm && (iter - cfg.warmup) % cfg.thin == cfg.thin - 1) {
      ++trace.draws;
      double dev = 0.0;
      for (int p = 0; p < kMaxParams; ++p) {
        trace.mu.push_back(mu[p]);
        trace.sigma.push_back(sigma[p]);
      }
      for (const auto& b : blocks) {
        for (int p = 0; p < kMaxParams; ++p) trace.z.push_back(b.z[p]);
        dev += b.ll;
      }
      trace.deviance.push_back(-2.0 * dev);
    }
  }
  trace.run_acceptance = run_tries ? static_cast<double>(run_accepts) / run_tries : 0.0;
  trace.sigma_acceptance = sigma_tries ? static_cast<double>(sigma_accepts) / sigma_tries : 0.0;
  return trace;
}

}  // namespace detail

// Fills group summaries and convergence diagnostics from the chain traces.
inline void summarize(PosteriorSummary& post, double rhat_threshold = 1.1) {
  const int n = post.n_params;
  const int chains = static_cast<int>(post.chains.size());
  const int draws = post.draws_per_chain();
  post.group.clear();
  post.max_rhat = 0.0;
  auto track = [&](double r) {
    if (std::isnan(r) || r > post.max_rhat) post.max_rhat = std::isnan(r) ? INFINITY : r;
  };
  for (int p = 0; p < n; ++p) {
    GroupParamSummary g;
    g.name = std::string(kParamNames[p]);
    Chains mu_chains(static_cast<std::size_t>(chains)), sigma_chains(static_cast<std::size_t>(chains));
    std::vector<double> natural;
    for (int c = 0; c < chains; ++c)
      for (int d = 0; d < draws; ++d) {
        const double m = post.group_mu(c, d, p);
        mu_chains[static_cast<std::size_t>(c)].push_back(m);
        sigma_chains[static_cast<std::size_t>(c)].push_back(post.group_sigma(c, d, p));
        natural.push_back(to_natural(p, m));
      }
    const double mean = std::accumulate(natural.begin(), natural.end(), 0.0) / natural.size();
    double ss = 0.0;
    for (double v : natural) ss += (v - mean) * (v - mean);
    g.mean = mean;
    g.sd = std::sqrt(ss / (natural.size() - 1));
    g.q025 = quantile(natural, 0.025);
    g.q975 = quantile(natural, 0.975);
    g.mu_rhat = split_rhat(mu_chains);
    g.mu_ess = effective_sample_size(mu_chains);
    double sigma_sum = 0.0;
    for (const auto& c : sigma_chains) sigma_sum = std::accumulate(c.begin(), c.end(), sigma_sum);
    g.sigma_mean = sigma_sum / (static_cast<double>(chains) * draws);
    g.sigma_rhat = split_rhat(sigma_chains);
    g.sigma_ess = effective_sample_size(sigma_chains);
    track(g.mu_rhat);
    track(g.sigma_rhat);
    post.group.push_back(g);
  }
  post.run_rhat.assign(static_cast<std::size_t>(post.n_runs * n), 0.0);
  Chains zc(static_cast<std::size_t>(chains), std::vector<double>(static_cast<std::size_t>(draws)));
  for (int i = 0; i < post.n_runs; ++i)
    for (int p = 0; p < n; ++p) {
      for (int c = 0; c < chains; ++c)
        for (int d = 0; d < draws; ++d)
          zc[static_cast<std::size_t>(c)][static_cast<std::size_t>(d)] = post.run_z(c, d, i)[p];
      const double r = split_rhat(zc);
      post.run_rhat[static_cast<std::size_t>(i * n + p)] = r;
      track(r);
    }
  double dev = 0.0;
  for (const auto& c : post.chains) dev = std::accumulate(c.deviance.begin(), c.deviance.end(), dev);
  post.mean_deviance = dev / (static_cast<double>(chains) * draws);
  post.converged = post.max_rhat <= rhat_threshold;
}

inline PosteriorSummary fit_hierarchical(Rule rule, std::span<const RunRecord> runs,
                                         HierarchicalModelSpec spec, const McmcConfig& mcmc) {
  if (runs.size() < 2) throw ConfigError("hierarchical fit needs at least 2 runs");
  spec.rule = rule;
  spec.validate();
  mcmc.validate();
  const int n = n_params(rule);

  const std::vector<CompactRun> data = compact(runs);
  ZPrior init_prior;
  for (int p = 0; p < n; ++p) {
    init_prior.mean.push_back(spec.mu_prior_mean[p]);
    init_prior.sd.push_back(std::sqrt(spec.mu_prior_sd[p] * spec.mu_prior_sd[p] + 1.0));
  }
  std::vector<ZVector> init(data.size());
  for (std::size_t i = 0; i < data.size(); ++i) {
    MapOptions opts;
    opts.seed = derive_seed(mcmc.seed, i, 0x1417);
    try {
      init[i] = map_fit(rule, data[i], init_prior, opts).z;
    } catch (const FitError&) {
      for (int p = 0; p < n; ++p) init[i][p] = spec.mu_prior_mean[p];
    }
  }

  PosteriorSummary post;
  post.rule = rule;
  post.n_runs = static_cast<int>(runs.size());
  post.n_params = n;
  for (const auto& r : runs) post.run_ids.push_back(r.run_id);
  post.chains.resize(static_cast<std::size_t>(mcmc.chains));

  auto input = [&](int c) { return detail::ChainInput{rule, &data, &init, spec, mcmc, c}; };
  const int jobs = std::max(1, mcmc.jobs);
  for (int first = 0; first < mcmc.chains; first += jobs) {
    const int last = std::min(mcmc.chains, first + jobs);
    if (last - first == 1) {
      post.chains[static_cast<std::size_t>(first)] = detail::run_chain(input(first));
      continue;
    }
    std::vector<std::future<ChainTrace>> futs;
    for (int c = first; c < last; ++c)
      futs.push_back(std::async(std::launch::async, [&, c] { return detail::run_chain(input(c)); }));
    for (int c = first; c < last; ++c) post.chains[static_cast<std::size_t>(c)] = futs[static_cast<std::size_t>(c - first)].get();
  }
  summarize(post, mcmc.rhat_threshold);
  return post;
}

}  // namespace revlearn::inference
