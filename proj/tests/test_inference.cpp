#include <gtest/gtest.h>

#include <cmath>
#include <sstream>

#include "revlearn/agents.hpp"
#include "revlearn/inference.hpp"
#include "support.hpp"

using namespace revlearn;
using namespace revlearn::inference;

namespace {

RunRecord sim(const AgentParams& p, Rule rule, std::uint64_t seed, int n = 250,
              ScheduleKind schedule = ScheduleKind::RandomUniform) {
  EnvConfig cfg;
  cfg.n_trials = n;
  cfg.seed = seed;
  cfg.schedule = schedule;
  Rng rng(derive_seed(seed, 1, 1));
  return simulate_run(p, rule, cfg, rng);
}

double oracle(Rule rule, const AgentParams& p, const RunRecord& run) {
  std::vector<int> c, r;
  for (const auto& t : run.trials) {
    c.push_back(index(t.action));
    r.push_back(t.reward());
  }
  return revlearn::testing::brute_force_loglik(rule == Rule::Kdu, p.eta_pos, p.eta_neg, p.beta,
                                               rule == Rule::Kdu ? p.kappa : 0.0, c, r);
}

}  // namespace

TEST(Transforms, RoundTrip) {
  const AgentParams p{0.935, 0.026, 7.421, 0.8};
  const AgentParams back = to_natural(to_transformed(p, Rule::Kdu), Rule::Kdu);
  EXPECT_NEAR(back.eta_pos, p.eta_pos, 1e-14);
  EXPECT_NEAR(back.eta_neg, p.eta_neg, 1e-14);
  EXPECT_NEAR(back.beta, p.beta, 1e-13);
  EXPECT_NEAR(back.kappa, p.kappa, 1e-14);
  EXPECT_EQ(to_natural(to_transformed(p, Rule::Dual), Rule::Dual).kappa, 0.0);
  EXPECT_EQ(n_params(Rule::Dual), 3);
  EXPECT_EQ(n_params(Rule::Kdu), 4);
}

TEST(Likelihood, FrozenValues) {
  const RunRecord run = sim({0.3, 0.3, 2.0, 0.0}, Rule::Dual, 1);
  EXPECT_NEAR(loglik(Rule::Dual, {0.0, 0.0, 4.0, 0.0}, run).value, 250 * std::log(0.5), 1e-10);
}

TEST(Likelihood, OneTrial) {
  const RunRecord run = sim({0.3, 0.3, 2.0, 0.4}, Rule::Kdu, 2, 1);
  for (Rule r : {Rule::Dual, Rule::Kdu}) EXPECT_EQ(loglik(r, {0.9, 0.1, 9.0, 0.7}, run).value, std::log(0.5));
}

TEST(Likelihood, EmptyRunFlagged) {
  RunRecord run;
  const auto r = loglik(Rule::Dual, {0.5, 0.5, 1.0, 0.0}, run);
  EXPECT_EQ(r.value, 0.0);
  EXPECT_TRUE(r.empty_run);
}

TEST(LikelihoodProperty, MatchesBruteForce) {
  Rng rng(99);
  for (int i = 0; i < 200; ++i) {
    const AgentParams p{0.01 + 0.98 * uniform01(rng), 0.01 + 0.98 * uniform01(rng), 0.1 + 9.9 * uniform01(rng),
                        0.98 * uniform01(rng)};
    const Rule rule = i % 2 ? Rule::Kdu : Rule::Dual;
    const RunRecord run = sim(p, rule, static_cast<std::uint64_t>(i), 20 + i % 40);
    for (Rule fit : {Rule::Dual, Rule::Kdu})
      EXPECT_NEAR(loglik(fit, p, run).value, oracle(fit, p, run), 1e-10);
  }
}

TEST(LikelihoodProperty, KappaZeroNests) {
  Rng rng(5);
  for (int i = 0; i < 100; ++i) {
    const AgentParams p{uniform01(rng) * 0.99, uniform01(rng) * 0.99, 0.1 + 9 * uniform01(rng), 0.0};
    const RunRecord run = sim(p, Rule::Dual, 1000 + static_cast<std::uint64_t>(i));
    EXPECT_NEAR(loglik(Rule::Kdu, p, run).value, loglik(Rule::Dual, p, run).value, 1e-12);
  }
}

TEST(MapFit, RecoversSingleRun) {
  // A single 250-trial run is noisy: the optimiser must beat the truth on
  // likelihood every time, and the typical error must sit inside the band.
  std::vector<double> err_pos, err_neg, err_beta;
  const AgentParams truth{0.5, 0.5, 5.0, 0.0};
  for (std::uint64_t seed = 0; seed < 15; ++seed) {
    const RunRecord run = sim(truth, Rule::Dual, 500 + seed);
    const MapResult r = map_fit(Rule::Dual, compact(run));
    EXPECT_TRUE(r.converged);
    EXPECT_GE(r.loglik, loglik(Rule::Dual, truth, compact(run)) - 1e-9);
    err_pos.push_back(std::abs(r.params.eta_pos - truth.eta_pos));
    err_neg.push_back(std::abs(r.params.eta_neg - truth.eta_neg));
    err_beta.push_back(std::abs(r.params.beta - truth.beta) / truth.beta);
  }
  EXPECT_LE(quantile(err_pos, 0.5), 0.2);
  EXPECT_LE(quantile(err_neg, 0.5), 0.2);
  EXPECT_LE(quantile(err_beta, 0.5), 0.5);
}

TEST(MapFit, ConstantChoiceIsDegenerate) {
  CompactRun run;
  for (int t = 0; t < 100; ++t) {
    run.actions.push_back(0);
    run.rewards.push_back(t % 3 == 2 ? -1 : 1);
  }
  const MapResult r = map_fit(Rule::Dual, run);
  EXPECT_TRUE(r.degenerate);
  EXPECT_GT(r.z[2], kZUpper[2] - 1e-3);
}

TEST(MapFit, DeterministicAndLowInformationFlag) {
  const RunRecord run = sim({0.4, 0.3, 3.0, 0.0}, Rule::Dual, 8, 8);
  MapOptions o;
  o.seed = 17;
  o.starts = 7;
  const MapResult a = map_fit(Rule::Dual, compact(run), {}, o);
  const MapResult b = map_fit(Rule::Dual, compact(run), {}, o);
  EXPECT_EQ(a.z, b.z);
  EXPECT_TRUE(a.low_information);
}

TEST(MapFit, PriorDimensionChecked) {
  const RunRecord run = sim({0.4, 0.3, 3.0, 0.0}, Rule::Dual, 8, 20);
  ZPrior prior{{0.0, 0.0}, {1.0, 1.0}};
  EXPECT_THROW(map_fit(Rule::Dual, compact(run), prior), ConfigError);
}

TEST(Diagnostics, IidChains) {
  Rng rng(1);
  Chains c(4, std::vector<double>(1000));
  for (auto& ch : c)
    for (auto& x : ch) x = standard_normal(rng);
  EXPECT_LT(split_rhat(c), 1.01);
  EXPECT_GT(effective_sample_size(c), 3000.0);
  for (auto& x : c[0]) x += 3.0;
  EXPECT_GT(split_rhat(c), 1.1);
}

TEST(Diagnostics, AutocorrelatedChains) {
  Rng rng(2);
  Chains c(4, std::vector<double>(2000));
  const double phi = 0.9;
  for (auto& ch : c) {
    double x = 0.0;
    for (auto& v : ch) v = x = phi * x + standard_normal(rng);
  }
  // AR(1) integrated autocorrelation time (1+phi)/(1-phi) = 19.
  const double ess = effective_sample_size(c);
  EXPECT_GT(ess, 8000.0 / 19 * 0.6);
  EXPECT_LT(ess, 8000.0 / 19 * 1.6);
}

TEST(Diagnostics, Quantile) {
  EXPECT_DOUBLE_EQ(quantile({1, 2, 3, 4, 5}, 0.5), 3.0);
  EXPECT_DOUBLE_EQ(quantile({1, 2}, 0.25), 1.25);
}

class SmallFit : public ::testing::Test {
 protected:
  static void SetUpTestSuite() {
    for (std::uint64_t i = 0; i < 12; ++i) runs_.push_back(sim({0.45, 0.3, 3.0, 0.0}, Rule::Dual, 40 + i, 150));
    McmcConfig m;
    m.chains = 2;
    m.warmup = 600;
    m.samples = 600;
    m.seed = 3;
    post_ = fit_hierarchical(Rule::Dual, runs_, {}, m);
  }
  static std::vector<RunRecord> runs_;
  static PosteriorSummary post_;
};
std::vector<RunRecord> SmallFit::runs_;
PosteriorSummary SmallFit::post_;

TEST_F(SmallFit, SummaryShape) {
  EXPECT_EQ(post_.n_runs, 12);
  EXPECT_EQ(post_.n_params, 3);
  EXPECT_EQ(post_.draws_per_chain(), 600);
  ASSERT_EQ(post_.group.size(), 3u);
  EXPECT_EQ(post_.group[2].name, "beta");
  for (const auto& g : post_.group) {
    EXPECT_LE(g.q025, g.mean);
    EXPECT_GE(g.q975, g.mean);
    EXPECT_TRUE(std::isfinite(g.mu_rhat));
  }
  EXPECT_GT(post_.group[0].mean, 0.0);
  EXPECT_LT(post_.group[0].mean, 1.0);
}

TEST_F(SmallFit, Reproducible) {
  McmcConfig m;
  m.chains = 2;
  m.warmup = 600;
  m.samples = 600;
  m.seed = 3;
  m.jobs = 2;
  const auto again = fit_hierarchical(Rule::Dual, runs_, {}, m);
  EXPECT_EQ(again.chains[0].mu, post_.chains[0].mu);
  EXPECT_EQ(again.chains[1].deviance, post_.chains[1].deviance);
}

TEST_F(SmallFit, DicIdentity) {
  const DicReport r = dic(Rule::Dual, runs_, post_, true);
  EXPECT_NEAR(r.dic, 2 * r.mean_deviance - r.deviance_at_mean, 1e-9);
  EXPECT_NEAR(r.p_d, r.mean_deviance - r.deviance_at_mean, 1e-9);
  EXPECT_GT(r.p_d, 0.0);
}

TEST_F(SmallFit, DicRefusesNonConverged) {
  PosteriorSummary bad = post_;
  bad.converged = false;
  EXPECT_THROW(dic(Rule::Dual, runs_, bad), StateError);
  EXPECT_NO_THROW(dic(Rule::Dual, runs_, bad, true));
  EXPECT_THROW(dic(Rule::Kdu, runs_, post_, true), ConfigError);
}

TEST_F(SmallFit, PosteriorPredictive) {
  EnvConfig cfg;
  cfg.n_trials = 150;
  cfg.schedule = ScheduleKind::RandomUniform;
  EXPECT_THROW(posterior_predictive(Rule::Dual, post_, runs_, cfg, 0, 1), ConfigError);
  const PpcReport rep = posterior_predictive(Rule::Dual, post_, runs_, cfg, 40, 1);
  ASSERT_EQ(rep.metrics.size(), 4u);
  for (const auto& m : rep.metrics) {
    ASSERT_TRUE(m.p_value.has_value()) << m.name;
    EXPECT_GE(*m.p_value, 0.0);
    EXPECT_LE(*m.p_value, 1.0);
    EXPECT_LE(m.sim_q05, m.sim_q95);
  }
}

TEST_F(SmallFit, Exports) {
  std::ostringstream os;
  write_draws_csv(os, post_);
  const std::string csv = os.str();
  EXPECT_EQ(csv.rfind("chain,draw,parameter,value\n", 0), 0u);
  const auto lines = std::count(csv.begin(), csv.end(), '\n');
  EXPECT_EQ(lines, 1 + 2 * 600 * (3 * 3 + 1));
  const auto j = summary_to_json(post_);
  EXPECT_EQ(j["rule"], "dual");
  EXPECT_TRUE(j["group"].contains("eta_neg"));
  const auto cmp = comparison_to_json({dic(Rule::Dual, runs_, post_, true)});
  EXPECT_EQ(cmp["preferred"], "dual");
}

TEST(Hierarchical, ConfigValidation) {
  std::vector<RunRecord> one{sim({0.4, 0.3, 3.0, 0.0}, Rule::Dual, 1, 20)};
  EXPECT_THROW(fit_hierarchical(Rule::Dual, one, {}, {}), ConfigError);
  McmcConfig m;
  m.chains = 0;
  EXPECT_THROW(m.validate(), ConfigError);
}

TEST(Recovery, CohortSimulation) {
  const auto pop = PopulationSpec::around({0.5, 0.4, 2.0, 0.0}, Rule::Dual, 0.3);
  EnvConfig cfg;
  const auto a = simulate_cohort(pop, 4, cfg, 9);
  const auto b = simulate_cohort(pop, 4, cfg, 9);
  EXPECT_EQ(a, b);
  ASSERT_EQ(a.size(), 4u);
  EXPECT_EQ(a[3].run_id, "sim-3");
  EXPECT_NE(a[0].agent.params, a[1].agent.params);
  EXPECT_NEAR(pop.group_params().beta, 2.0, 1e-12);
}
