// revlearn: command-line front end.
//
// Every subcommand writes its artifacts to files named by --out. Errors are
// reported on stderr as a single line "error: <code>: <message>" with exit
// status 1 (2 for command-line usage errors).

#include <atomic>
#include <csignal>
#include <cstdio>
#include <fstream>
#include <future>
#include <iostream>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include <CLI11.hpp>
#include <httplib.h>
#include <json.hpp>

#include "revlearn/agents.hpp"
#include "revlearn/inference.hpp"
#include "revlearn/llm.hpp"
#include "revlearn/llm/http_endpoint.hpp"
#include "revlearn/metrics.hpp"
#include "revlearn/profiles.hpp"
#include "revlearn/session_service.hpp"
#include "revlearn/storage.hpp"

using namespace revlearn;
using ordered_json = nlohmann::ordered_json;

namespace {

struct Globals {
  std::uint64_t seed = 1;
  int jobs = static_cast<int>(std::max(1u, std::thread::hardware_concurrency()));
};

std::ofstream open_out(const std::string& path) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw DataError("cannot open '" + path + "' for writing");
  return os;
}

void write_json(const std::string& path, const ordered_json& j) {
  auto os = open_out(path);
  os << j.dump(2) << '\n';
}

// Runs fn(i) for i in [0, n) on up to `jobs` threads.
template <typename F>
void parallel_for(int n, int jobs, F&& fn) {
  std::atomic<int> next{0};
  auto worker = [&] {
    for (int i = next++; i < n; i = next++) fn(i);
  };
  const int threads = std::clamp(jobs, 1, std::max(n, 1));
  if (threads == 1) return worker();
  std::vector<std::future<void>> fs;
  for (int k = 0; k < threads; ++k) fs.push_back(std::async(std::launch::async, worker));
  for (auto& f : fs) f.get();
}

// ---- shared option groups ---------------------------------------------------

struct TaskOptions {
  int trials = 250;
  std::string schedule = "fixed";

  void add(CLI::App* app) {
    app->add_option("--trials", trials, "Trials per run")->capture_default_str();
    app->add_option("--schedule", schedule, "Next-state schedule: fixed|random")->capture_default_str();
  }
  EnvConfig env() const {
    EnvConfig cfg;
    cfg.n_trials = trials;
    cfg.schedule = schedule_from_string(schedule);
    cfg.validate();
    return cfg;
  }
};

struct AgentOptions {
  std::string rule = "dual";
  std::string profile;
  double eta_pos = 0.5, eta_neg = 0.5, beta = 1.0, kappa = 0.0;

  void add(CLI::App* app) {
    app->add_option("--rule", rule, "Learning rule: dual|kdu")->capture_default_str();
    app->add_option("--profile", profile, "Named reference profile; explicit parameter flags override it");
    app->add_option("--eta-pos", eta_pos, "Learning rate after wins")->capture_default_str();
    app->add_option("--eta-neg", eta_neg, "Learning rate after losses")->capture_default_str();
    app->add_option("--beta", beta, "Inverse temperature")->capture_default_str();
    app->add_option("--kappa", kappa, "Counterfactual scale (kdu only)")->capture_default_str();
  }
  Rule parsed_rule() const { return rule_from_string(rule); }
  AgentParams params(const CLI::App* app) const {
    AgentParams p{eta_pos, eta_neg, beta, kappa};
    if (!profile.empty()) {
      const AgentParams base = find_profile(profile, parsed_rule()).params;
      if (app->count("--eta-pos") == 0) p.eta_pos = base.eta_pos;
      if (app->count("--eta-neg") == 0) p.eta_neg = base.eta_neg;
      if (app->count("--beta") == 0) p.beta = base.beta;
      if (app->count("--kappa") == 0) p.kappa = base.kappa;
    }
    if (parsed_rule() == Rule::Dual) p.kappa = 0.0;
    p.validate();
    return p;
  }
};

struct McmcOptions {
  int chains = 4, warmup = 1000, samples = 1000, thin = 1;

  void add(CLI::App* app) {
    app->add_option("--chains", chains, "MCMC chains")->capture_default_str();
    app->add_option("--warmup", warmup, "Warmup iterations per chain")->capture_default_str();
    app->add_option("--samples", samples, "Saved iterations per chain")->capture_default_str();
    app->add_option("--thin", thin, "Keep every n-th saved iteration")->capture_default_str();
  }
  inference::McmcConfig config(const Globals& g) const {
    inference::McmcConfig m;
    m.chains = chains;
    m.warmup = warmup;
    m.samples = samples;
    m.thin = thin;
    m.seed = g.seed;
    m.jobs = g.jobs;
    m.validate();
    return m;
  }
};

std::vector<RunRecord> load_runs(const std::string& path) {
  auto runs = read_runs(path);
  if (runs.empty()) throw DataError("'" + path + "' contains no runs");
  return runs;
}

// ---- subcommands --------------------------------------------------------------

struct Simulate {
  TaskOptions task;
  AgentOptions agent;
  std::string policy = "rl";
  int runs = 200;
  double group_sd = 0.0;
  double p_stay_win = 1.0, p_shift_loss = 1.0;
  std::string out;
  CLI::App* app = nullptr;

  void add(CLI::App& root) {
    app = root.add_subcommand("simulate", "Simulate a synthetic cohort");
    task.add(app);
    agent.add(app);
    app->add_option("--policy", policy, "Agent: rl|wsls|random|oracle|always-a0|always-a1")->capture_default_str();
    app->add_option("--runs", runs, "Number of runs")->capture_default_str();
    app->add_option("--group-sd", group_sd,
                    "Between-run SD of parameters on the transformed scale (0 = identical runs)")
        ->capture_default_str();
    app->add_option("--p-stay-win", p_stay_win, "wsls: stay probability after a win")->capture_default_str();
    app->add_option("--p-shift-loss", p_shift_loss, "wsls: shift probability after a loss")->capture_default_str();
    app->add_option("--out", out, "Output runs file (JSON lines)")->required();
  }

  void run(const Globals& g) const {
    if (runs < 1) throw ConfigError("--runs must be >= 1");
    if (group_sd < 0.0) throw ConfigError("--group-sd must be >= 0");
    const EnvConfig base = task.env();
    const Rule rule = agent.parsed_rule();
    std::vector<AgentParams> params(static_cast<std::size_t>(runs));
    if (policy == "rl") {
      const AgentParams group = agent.params(app);
      const auto pop = inference::PopulationSpec::around(group, rule, group_sd);
      Rng draw(derive_seed(g.seed, 0, 0x0b5));
      for (auto& p : params) {
        inference::ZVector z = pop.mu;
        for (int k = 0; k < inference::n_params(rule); ++k) z[k] += group_sd * standard_normal(draw);
        p = group_sd > 0.0 ? inference::to_natural(z, rule) : group;
      }
    } else if (policy == "wsls") {
      (void)wsls(p_stay_win, p_shift_loss);  // validates
    } else if (policy != "random" && policy != "oracle" && policy != "always-a0" && policy != "always-a1") {
      throw ConfigError("unknown policy '" + policy + "'");
    }

    std::vector<RunRecord> out_runs(static_cast<std::size_t>(runs));
    parallel_for(runs, g.jobs, [&](int i) {
      EnvConfig cfg = base;
      cfg.seed = derive_seed(g.seed, static_cast<std::uint64_t>(i), 0xe5);
      Rng rng(derive_seed(g.seed, static_cast<std::uint64_t>(i), 0xa7));
      RunRecord r;
      if (policy == "rl")
        r = simulate_run(params[static_cast<std::size_t>(i)], rule, cfg, rng);
      else if (policy == "wsls")
        r = simulate_policy(wsls(p_stay_win, p_shift_loss), cfg, rng);
      else if (policy == "random")
        r = simulate_policy(uniform_random(), cfg, rng);
      else if (policy == "oracle")
        r = simulate_policy(OracleAgent(), cfg, rng);
      else
        r = simulate_policy(always(policy == "always-a0" ? Action::A0 : Action::A1), cfg, rng);
      r.run_id = "sim-" + std::to_string(i);
      out_runs[static_cast<std::size_t>(i)] = std::move(r);
    });
    write_runs(out, out_runs);
    std::cerr << "simulate: wrote " << runs << " runs to " << out << '\n';
  }
};

struct RunLlm {
  TaskOptions task;
  llm::LlmEndpointConfig endpoint;
  std::string variant = "ev";
  int runs = 200;
  std::string mock_profile = "human";
  std::string mock_rule = "dual";
  std::string out, log, summary;
  CLI::App* app = nullptr;

  void add(CLI::App& root) {
    app = root.add_subcommand("run-llm", "Run a chat model through the task");
    task.add(app);
    app->add_option("--provider", endpoint.provider, "openai (any compatible endpoint) | mock")
        ->capture_default_str();
    app->add_option("--model", endpoint.model, "Model id")->capture_default_str();
    app->add_option("--base-url", endpoint.base_url, "API base url")->capture_default_str();
    app->add_option("--api-key-env", endpoint.api_key_env, "Environment variable holding the API key")
        ->capture_default_str();
    app->add_option("--temperature", endpoint.temperature, "Sampling temperature")->capture_default_str();
    app->add_option("--top-p", endpoint.top_p, "Nucleus sampling mass")->capture_default_str();
    app->add_option("--timeout", endpoint.timeout_s, "Request timeout in seconds")->capture_default_str();
    app->add_option("--max-retries", endpoint.max_retries, "Retries per trial after the first request")
        ->capture_default_str();
    app->add_option("--rate-limit", endpoint.rate_limit, "Requests per second across all runs (0 = off)")
        ->capture_default_str();
    app->add_option("--variant", variant, "Label/order variant: ev|ve|xy|wl")->capture_default_str();
    app->add_option("--runs", runs, "Number of runs")->capture_default_str();
    app->add_option("--mock-profile", mock_profile, "mock: reference profile answering the prompts")
        ->capture_default_str();
    app->add_option("--mock-rule", mock_rule, "mock: learning rule of the answering agent")->capture_default_str();
    app->add_option("--out", out, "Output runs file (JSON lines)")->required();
    app->add_option("--log", log, "Per-trial attempt log (JSON lines)");
    app->add_option("--summary", summary, "Experiment summary (JSON)");
  }

  void run(const Globals& g) const {
    EnvConfig cfg = task.env();
    cfg.seed = g.seed;
    const llm::PromptVariant v = llm::variant_from_string(variant);
    endpoint.validate();
    llm::EndpointFactory factory;
    if (endpoint.provider == "mock") {
      const Rule rule = rule_from_string(mock_rule);
      const AgentParams p = find_profile(mock_profile, rule).params;
      factory = [p, rule, v, seed = g.seed, model = "mock-" + mock_profile](int i)
          -> std::unique_ptr<llm::ChatEndpoint> {
        return std::make_unique<llm::PolicyMockEndpoint<RlAgent>>(
            RlAgent(p, rule), v, derive_seed(seed, static_cast<std::uint64_t>(i), 0x3c), model);
      };
    } else if (endpoint.provider == "openai") {
      const llm::LlmEndpointConfig ec = endpoint;
      factory = [ec](int) -> std::unique_ptr<llm::ChatEndpoint> {
        return std::make_unique<llm::HttpChatEndpoint>(ec);
      };
    } else {
      throw ConfigError("unknown provider '" + endpoint.provider + "' (expected openai|mock)");
    }

    std::ofstream log_os;
    llm::TrialLogSink sink;
    if (!log.empty()) {
      log_os = open_out(log);
      sink = [&log_os](const std::string& run_id, int trial, const llm::LlmTrialLog& l) {
        ordered_json j;
        j["run_id"] = run_id;
        j["trial"] = trial;
        ordered_json attempts = ordered_json::array();
        for (const auto& a : l.attempts)
          attempts.push_back({{"outcome", std::string(llm::to_string(a.outcome))},
                              {"raw", a.raw},
                              {"latency_ms", a.latency_ms}});
        j["attempts"] = attempts;
        log_os << j.dump() << '\n';
      };
    }
    llm::ExperimentOptions opts;
    opts.n_runs = runs;
    opts.jobs = g.jobs;
    opts.max_retries = endpoint.max_retries;
    opts.rate_limit = endpoint.rate_limit;
    const auto res = llm::run_llm_experiment(factory, cfg, v, opts, sink);
    write_runs(out, res.runs);

    const auto& s = res.summary;
    ordered_json j;
    j["provider"] = endpoint.provider;
    j["model"] = endpoint.provider == "mock" ? "mock-" + mock_profile : endpoint.model;
    j["variant"] = v.name();
    j["runs"] = s.runs;
    j["complete"] = s.complete;
    j["incomplete"] = s.incomplete;
    j["attempts"] = s.attempts;
    j["invalid_attempts"] = s.invalid_attempts;
    j["transport_failures"] = s.transport_failures;
    j["invalid_rate"] = s.invalid_rate();
    j["failures"] = s.failures;
    if (!summary.empty()) write_json(summary, j);
    std::cerr << "run-llm: " << s.complete << "/" << s.runs << " runs complete, invalid rate "
              << format_number(s.invalid_rate()) << '\n';
    for (const auto& f : s.failures) std::cerr << "run-llm: " << f << '\n';
  }
};

struct Metrics {
  std::string in, out, per_run;
  int regret_window = 20;

  void add(CLI::App& root) {
    auto* app = root.add_subcommand("metrics", "Behavioural metrics per run and per cell");
    app->add_option("--in", in, "Runs file")->required();
    app->add_option("--out", out, "Cell summary CSV")->required();
    app->add_option("--per-run", per_run, "Per-run metrics CSV");
    app->add_option("--regret-window", regret_window, "Trials counted after each switch")->capture_default_str();
  }

  void run(const Globals&) const {
    if (regret_window < 1) throw ConfigError("--regret-window must be >= 1");
    const auto runs = load_runs(in);
    std::vector<RunMetrics> m;
    for (const auto& r : runs) m.push_back(run_metrics(r, regret_window));
    auto os = open_out(out);
    write_cell_summary_csv(os, aggregate(m));
    if (!per_run.empty()) {
      auto pr = open_out(per_run);
      write_run_metrics_csv(pr, runs, m);
    }
  }
};

struct Fit {
  std::string in, rule = "dual", out, draws;
  bool run_level = false;
  int ppc = 0;
  McmcOptions mcmc;

  void add(CLI::App& root) {
    auto* app = root.add_subcommand("fit", "Hierarchical Bayesian fit of one learning rule");
    app->add_option("--in", in, "Runs file")->required();
    app->add_option("--rule", rule, "Learning rule: dual|kdu")->capture_default_str();
    mcmc.add(app);
    app->add_option("--out", out, "Posterior summary (JSON)")->required();
    app->add_option("--draws", draws, "Posterior draws (long CSV)");
    app->add_flag("--run-level", run_level, "Include run-level parameters in --draws");
    app->add_option("--ppc", ppc, "Posterior predictive replicates (0 = skip)")->capture_default_str();
  }

  void run(const Globals& g) const {
    const auto runs = load_runs(in);
    const Rule r = rule_from_string(rule);
    const auto post = inference::fit_hierarchical(r, runs, inference::HierarchicalModelSpec::defaults(r), mcmc.config(g));
    ordered_json j = inference::summary_to_json(post);
    if (ppc > 0) {
      if (runs.front().schedule == ScheduleKind::External)
        throw ConfigError("posterior predictive checks need simulated runs with a known schedule");
      EnvConfig cfg;
      cfg.schedule = runs.front().schedule;
      cfg.n_trials = runs.front().n_trials;
      j["ppc"] = inference::ppc_to_json(inference::posterior_predictive(r, post, runs, cfg, ppc, g.seed));
    }
    write_json(out, j);
    if (!draws.empty()) {
      auto os = open_out(draws);
      inference::write_draws_csv(os, post, run_level);
    }
    if (!post.converged)
      std::cerr << "fit: warning: not converged (max R-hat " << format_number(post.max_rhat) << ")\n";
  }
};

struct Compare {
  std::string in, models = "dual,kdu", out;
  bool allow_nonconverged = false;
  McmcOptions mcmc;

  void add(CLI::App& root) {
    auto* app = root.add_subcommand("compare", "Compare learning rules by DIC");
    app->add_option("--in", in, "Runs file")->required();
    app->add_option("--models", models, "Comma-separated rules")->capture_default_str();
    mcmc.add(app);
    app->add_flag("--allow-nonconverged", allow_nonconverged, "Report DIC even if a fit did not converge");
    app->add_option("--out", out, "DIC report (JSON)")->required();
  }

  void run(const Globals& g) const {
    const auto runs = load_runs(in);
    std::vector<Rule> rules;
    std::stringstream ss(models);
    for (std::string m; std::getline(ss, m, ',');) rules.push_back(rule_from_string(m));
    if (rules.empty()) throw ConfigError("--models is empty");
    std::vector<inference::DicReport> reports;
    ordered_json fits = ordered_json::array();
    for (Rule r : rules) {
      const auto post = inference::fit_hierarchical(r, runs, inference::HierarchicalModelSpec::defaults(r), mcmc.config(g));
      reports.push_back(inference::dic(r, runs, post, allow_nonconverged));
      fits.push_back({{"rule", std::string(to_string(r))}, {"converged", post.converged}, {"max_rhat", post.max_rhat}});
    }
    ordered_json j = inference::comparison_to_json(reports);
    j["fits"] = fits;
    write_json(out, j);
    std::cerr << "compare: preferred " << j["preferred"].get<std::string>() << '\n';
  }
};

struct Recover {
  TaskOptions task;
  AgentOptions agent;
  int runs = 100;
  double group_sd = 0.3;
  McmcOptions mcmc;
  std::string out;
  CLI::App* app = nullptr;

  void add(CLI::App& root) {
    app = root.add_subcommand("recover", "Parameter recovery study");
    task.add(app);
    agent.add(app);
    app->add_option("--runs", runs, "Simulated runs")->capture_default_str();
    app->add_option("--group-sd", group_sd, "Between-run SD on the transformed scale")->capture_default_str();
    mcmc.add(app);
    app->add_option("--out", out, "Recovery report (JSON)")->required();
  }

  void run(const Globals& g) const {
    if (runs < 2) throw ConfigError("--runs must be >= 2");
    const Rule rule = agent.parsed_rule();
    const auto truth = inference::PopulationSpec::around(agent.params(app), rule, group_sd);
    const auto rep = inference::recovery_study(truth, runs, task.env(), mcmc.config(g));
    write_json(out, inference::recovery_to_json(rep));
    std::cerr << "recover: " << rep.covered_count() << "/" << rep.entries.size() << " parameters covered, "
              << (rep.converged ? "converged" : "not converged") << '\n';
  }
};

struct ExportCurves {
  std::string in, out;
  int k = 10;

  void add(CLI::App& root) {
    auto* app = root.add_subcommand("export-curves", "Choice curves aligned to reversals (CSV)");
    app->add_option("--in", in, "Runs file")->required();
    app->add_option("--k", k, "Trials on each side of the boundary")->capture_default_str();
    app->add_option("--out", out, "Curve CSV")->required();
  }

  void run(const Globals&) const {
    const auto runs = load_runs(in);
    auto os = open_out(out);
    write_curve_csv(os, aligned_curves(runs, k));
  }
};

httplib::Server* g_server = nullptr;

struct Serve {
  TaskOptions task;
  std::string host = "127.0.0.1", out_dir, variant = "ev";
  int port = 8080, max_trials = 1000;
  bool cors = false;

  void add(CLI::App& root) {
    auto* app = root.add_subcommand("serve", "HTTP service for live participant sessions");
    task.add(app);
    app->add_option("--host", host, "Bind address")->capture_default_str();
    app->add_option("--port", port, "Port")->capture_default_str();
    app->add_option("--variant", variant, "Default label variant: ev|ve|xy|wl")->capture_default_str();
    app->add_option("--max-trials", max_trials, "Largest n_trials a session may request")->capture_default_str();
    app->add_flag("--cors", cors, "Allow cross-origin requests from any origin");
    app->add_option("--out-dir", out_dir, "Directory receiving completed runs");
  }

  void run(const Globals&) const {
    session::ServiceConfig sc;
    sc.env = task.env();
    sc.variant = llm::variant_from_string(variant);
    sc.max_trials = max_trials;
    if (!out_dir.empty()) sc.out_dir = out_dir;
    session::SessionManager mgr(sc);
    httplib::Server server;
    session::install_routes(server, mgr, cors);
    g_server = &server;
    std::signal(SIGINT, [](int) { if (g_server) g_server->stop(); });
    std::signal(SIGTERM, [](int) { if (g_server) g_server->stop(); });
    if (!server.bind_to_port(host, port)) throw ConfigError("cannot bind " + host + ":" + std::to_string(port));
    std::cerr << "serve: listening on http://" << host << ":" << port << '\n';
    server.listen_after_bind();
    g_server = nullptr;
  }
};

struct ImportHuman {
  std::string in, out;
  char label_a0 = 'E', label_a1 = 'V';

  void add(CLI::App& root) {
    auto* app = root.add_subcommand("import-human", "Convert human choice data (CSV) to a runs file");
    app->add_option("--in", in, "CSV with participant,trial,choice,outcome[,condition]")->required();
    app->add_option("--label-a0", label_a0, "Choice symbol of the first option")->capture_default_str();
    app->add_option("--label-a1", label_a1, "Choice symbol of the second option")->capture_default_str();
    app->add_option("--out", out, "Output runs file (JSON lines)")->required();
  }

  void run(const Globals&) const {
    const auto runs = import_human(in, label_a0, label_a1);
    write_runs(out, runs);
    std::cerr << "import-human: " << runs.size() << " participants\n";
  }
};

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Reversal-learning evaluation toolkit"};
  app.require_subcommand(1);
  app.fallthrough();
  app.set_config("--config", "", "TOML file mirroring the command-line flags");
  Globals g;
  app.add_option("--seed", g.seed, "Base seed of every stochastic step")->capture_default_str();
  app.add_option("--jobs", g.jobs, "Worker threads (runs, chains)")->capture_default_str();

  Simulate simulate;
  RunLlm run_llm;
  Metrics metrics;
  Fit fit;
  Compare compare;
  Recover recover;
  ExportCurves curves;
  Serve serve;
  ImportHuman import;
  simulate.add(app);
  run_llm.add(app);
  metrics.add(app);
  fit.add(app);
  compare.add(app);
  recover.add(app);
  curves.add(app);
  serve.add(app);
  import.add(app);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    if (e.get_exit_code() == 0) return app.exit(e);
    std::cerr << "error: usage: " << e.what() << '\n';
    return 2;
  }

  try {
    if (g.jobs < 1) throw ConfigError("--jobs must be >= 1");
    const std::string cmd = app.get_subcommands().front()->get_name();
    if (cmd == "simulate") simulate.run(g);
    else if (cmd == "run-llm") run_llm.run(g);
    else if (cmd == "metrics") metrics.run(g);
    else if (cmd == "fit") fit.run(g);
    else if (cmd == "compare") compare.run(g);
    else if (cmd == "recover") recover.run(g);
    else if (cmd == "export-curves") curves.run(g);
    else if (cmd == "serve") serve.run(g);
    else if (cmd == "import-human") import.run(g);
  } catch (const Error& e) {
    std::cerr << "error: " << e.code() << ": " << e.what() << '\n';
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "error: internal: " << e.what() << '\n';
    return 1;
  }
  return 0;
}
