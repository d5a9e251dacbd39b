#pragma once

// Drives a chat-completion model through the task: one request per trial,
// strict validation with corrective retries, runs marked incomplete when
// the retry budget is exhausted.

#include <algorithm>
#include <atomic>
#include <chrono>
#include <functional>
#include <future>
#include <memory>
#include <mutex>
#include <optional>
#include <regex>
#include <string>
#include <thread>
#include <vector>

#include "revlearn/agents.hpp"
#include "revlearn/error.hpp"
#include "revlearn/llm/prompt.hpp"
#include "revlearn/random.hpp"
#include "revlearn/records.hpp"
#include "revlearn/task_env.hpp"

namespace revlearn::llm {

// Network or protocol failure talking to the endpoint.
struct TransportError : Error {
  explicit TransportError(const std::string& what) : Error("transport", what) {}
};

struct LlmEndpointConfig {
  std::string provider = "openai";  // openai (any compatible server) | mock
  std::string model = "gpt-4o-mini";
  std::string base_url = "https://api.openai.com/v1";
  double temperature = 1.0;
  double top_p = 1.0;
  double timeout_s = 60.0;
  int max_retries = 5;
  double rate_limit = 0.0;  // requests per second across all runs; 0 disables
  std::string api_key_env = "OPENAI_API_KEY";

  void validate() const {
    if (max_retries < 0) throw ConfigError("max_retries must be >= 0");
    if (!(temperature >= 0.0)) throw ConfigError("temperature must be >= 0");
    if (!(top_p >= 0.0)) throw ConfigError("top_p must be >= 0");
    if (!(timeout_s > 0.0)) throw ConfigError("timeout must be positive");
    if (!(rate_limit >= 0.0)) throw ConfigError("rate limit must be >= 0");
    if (model.empty()) throw ConfigError("model id must not be empty");
  }
};

class ChatEndpoint {
 public:
  virtual ~ChatEndpoint() = default;
  // Returns the assistant text; throws TransportError on failure.
  virtual std::string complete(const std::vector<ChatMessage>& messages) = 0;
  virtual std::string model_id() const = 0;
};

// Deterministic offline model. Either replays a script (the last entry is
// repeated once the script runs out) or calls a function with the
// conversation and the zero-based call count.
class MockEndpoint : public ChatEndpoint {
 public:
  using Fn = std::function<std::string(const std::vector<ChatMessage>&, int)>;

  explicit MockEndpoint(std::vector<std::string> script, std::string model = "mock")
      : model_(std::move(model)) {
    if (script.empty()) throw ConfigError("mock script must not be empty");
    fn_ = [s = std::move(script)](const std::vector<ChatMessage>&, int call) {
      return s[std::min<std::size_t>(static_cast<std::size_t>(call), s.size() - 1)];
    };
  }
  explicit MockEndpoint(Fn fn, std::string model = "mock") : fn_(std::move(fn)), model_(std::move(model)) {}

  std::string complete(const std::vector<ChatMessage>& messages) override {
    conversations_.push_back(messages);
    return fn_(messages, calls_++);
  }
  std::string model_id() const override { return model_; }

  int calls() const noexcept { return calls_; }
  const std::vector<std::vector<ChatMessage>>& conversations() const noexcept { return conversations_; }

 private:
  Fn fn_;
  std::string model_;
  int calls_ = 0;
  std::vector<std::vector<ChatMessage>> conversations_;
};

// Mock model that reads the history back out of the prompt and answers with
// a synthetic policy, so a full run exercises rendering and parsing.
template <Policy P>
class PolicyMockEndpoint : public ChatEndpoint {
 public:
  PolicyMockEndpoint(P policy, PromptVariant variant, std::uint64_t seed, std::string model = "mock-policy")
      : policy_(std::move(policy)), variant_(variant), rng_(seed), model_(std::move(model)) {}

  std::string complete(const std::vector<ChatMessage>& messages) override {
    const ChatMessage* user = nullptr;
    for (const auto& m : messages)
      if (m.role == "user") {
        user = &m;
        break;
      }
    if (!user) throw StateError("mock received no user message");
    static const std::regex line(R"(Trial (\d+): choice=([A-Z]), outcome=([+-]\d+))");
    int t = 0;
    for (auto it = std::sregex_iterator(user->content.begin(), user->content.end(), line);
         it != std::sregex_iterator(); ++it) {
      t = std::stoi((*it)[1]);
      if (t <= seen_) continue;
      const auto a = parse_response((*it)[2].str(), variant_);
      if (!a) throw StateError("mock cannot map label " + (*it)[2].str());
      policy_.observe(*a, std::stoi((*it)[3]) > 0);
      seen_ = t;
    }
    const Action a = policy_.choose(PolicyContext{seen_ + 1, StateId::S0}, rng_);
    return std::string(1, variant_.label(a));
  }
  std::string model_id() const override { return model_; }

 private:
  P policy_;
  PromptVariant variant_;
  Rng rng_;
  std::string model_;
  int seen_ = 0;
};

// Spaces requests at least 1/rate seconds apart; shared between threads.
class RateLimiter {
 public:
  explicit RateLimiter(double per_second) {
    if (per_second > 0.0)
      interval_ = std::chrono::duration_cast<Clock::duration>(std::chrono::duration<double>(1.0 / per_second));
  }

  void acquire() {
    if (interval_ == Clock::duration::zero()) return;
    Clock::time_point slot;
    {
      std::lock_guard lock(mu_);
      slot = std::max(next_, Clock::now());
      next_ = slot + interval_;
    }
    std::this_thread::sleep_until(slot);
  }

 private:
  using Clock = std::chrono::steady_clock;
  std::mutex mu_;
  Clock::time_point next_{};
  Clock::duration interval_ = Clock::duration::zero();
};

enum class AttemptOutcome : std::uint8_t { Valid, Invalid, Transport };

inline std::string_view to_string(AttemptOutcome o) {
  switch (o) {
    case AttemptOutcome::Valid: return "valid";
    case AttemptOutcome::Invalid: return "invalid";
    case AttemptOutcome::Transport: return "transport";
  }
  return "?";
}

struct AttemptLog {
  std::string raw;  // model text, or the error message for transport failures
  AttemptOutcome outcome = AttemptOutcome::Valid;
  double latency_ms = 0.0;
};

struct LlmTrialLog {
  std::vector<AttemptLog> attempts;
  bool valid = false;

  int attempt_count() const noexcept { return static_cast<int>(attempts.size()); }
  int count(AttemptOutcome o) const noexcept {
    return static_cast<int>(std::count_if(attempts.begin(), attempts.end(),
                                          [o](const AttemptLog& a) { return a.outcome == o; }));
  }
};

struct LlmTrialResult {
  std::optional<Action> action;  // empty: non-compliant after the full budget
  LlmTrialLog log;
};

// Up to max_retries + 1 requests. A format failure appends the model's reply
// and a corrective user message to the conversation; a transport failure
// resends the same conversation. Both consume the budget.
inline LlmTrialResult run_llm_trial(ChatEndpoint& endpoint, std::vector<ChatMessage> messages,
                                    const PromptVariant& variant, int max_retries = 5,
                                    RateLimiter* limiter = nullptr) {
  LlmTrialResult res;
  for (int attempt = 0; attempt <= max_retries; ++attempt) {
    if (limiter) limiter->acquire();
    AttemptLog log;
    const auto t0 = std::chrono::steady_clock::now();
    try {
      log.raw = endpoint.complete(messages);
      const auto a = parse_response(log.raw, variant);
      log.outcome = a ? AttemptOutcome::Valid : AttemptOutcome::Invalid;
      if (a) res.action = a;
    } catch (const TransportError& e) {
      log.raw = e.what();
      log.outcome = AttemptOutcome::Transport;
    }
    log.latency_ms = std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0).count();
    const auto outcome = log.outcome;
    res.log.attempts.push_back(log);
    if (res.action) {
      res.log.valid = true;
      return res;
    }
    if (outcome == AttemptOutcome::Invalid) {
      messages.push_back({"assistant", res.log.attempts.back().raw});
      messages.push_back({"user", corrective_message(variant)});
    }
  }
  return res;
}

struct ExperimentOptions {
  int n_runs = 200;
  int jobs = 1;
  int max_retries = 5;
  double rate_limit = 0.0;
  std::string run_prefix = "llm";
};

struct ExperimentSummary {
  int runs = 0;
  int complete = 0;
  int incomplete = 0;
  long long attempts = 0;
  long long invalid_attempts = 0;
  long long transport_failures = 0;
  std::vector<std::string> failures;  // run-level errors other than non-compliance

  // Format failures over all requests issued.
  double invalid_rate() const noexcept {
    return attempts == 0 ? 0.0 : static_cast<double>(invalid_attempts) / static_cast<double>(attempts);
  }
};

struct ExperimentResult {
  std::vector<RunRecord> runs;
  ExperimentSummary summary;
};

using EndpointFactory = std::function<std::unique_ptr<ChatEndpoint>(int run_index)>;
using TrialLogSink = std::function<void(const std::string& run_id, int trial, const LlmTrialLog&)>;

struct RunOutcome {
  RunRecord run;
  long long attempts = 0;
  long long transport_failures = 0;
  std::optional<std::string> failure;
};

// One run against its own environment. Non-compliance or any library error
// stops the run; trials up to that point are kept.
inline RunOutcome run_llm_run(ChatEndpoint& endpoint, const EnvConfig& cfg, const PromptVariant& variant,
                              const std::string& run_id, int max_retries, RateLimiter* limiter = nullptr,
                              const TrialLogSink& sink = {}) {
  RunOutcome out;
  RunRecord& run = out.run;
  run.run_id = run_id;
  run.agent.kind = "llm";
  run.agent.model = endpoint.model_id();
  run.agent.variant = variant.name();
  run.schedule = cfg.schedule;
  run.seed = cfg.seed;
  run.n_trials = cfg.n_trials;
  run.status = RunStatus::Incomplete;
  EnvState env = new_env(cfg);
  try {
    for (int t = 1; t <= cfg.n_trials; ++t) {
      auto res = run_llm_trial(endpoint, render_prompt(run.trials, t, variant, cfg), variant, max_retries, limiter);
      out.attempts += res.log.attempt_count();
      out.transport_failures += res.log.count(AttemptOutcome::Transport);
      run.invalid_attempt_count += res.log.count(AttemptOutcome::Invalid);
      if (sink) sink(run_id, t, res.log);
      if (!res.action) return out;
      TrialRecord tr = make_trial_record(step(env, *res.action, cfg), *res.action, variant.label(*res.action));
      tr.retries = res.log.attempt_count() - 1;
      run.trials.push_back(std::move(tr));
    }
    run.status = RunStatus::Complete;
  } catch (const Error& e) {
    out.failure = run_id + ": " + e.code() + ": " + e.what();
  }
  return out;
}

// Independent runs, each with a derived environment seed. Runs are spread
// over `jobs` threads; within a run trials are sequential.
inline ExperimentResult run_llm_experiment(const EndpointFactory& make_endpoint, const EnvConfig& cfg,
                                           const PromptVariant& variant, const ExperimentOptions& opts,
                                           const TrialLogSink& sink = {}) {
  cfg.validate();
  variant.validate();
  if (opts.n_runs < 0) throw ConfigError("n_runs must be >= 0");
  if (opts.max_retries < 0) throw ConfigError("max_retries must be >= 0");
  RateLimiter limiter(opts.rate_limit);
  std::vector<RunOutcome> outcomes(static_cast<std::size_t>(opts.n_runs));
  std::mutex sink_mu;
  TrialLogSink locked_sink;
  if (sink)
    locked_sink = [&](const std::string& id, int t, const LlmTrialLog& log) {
      std::lock_guard lock(sink_mu);
      sink(id, t, log);
    };

  std::atomic<int> next{0};
  auto worker = [&] {
    for (int i = next++; i < opts.n_runs; i = next++) {
      EnvConfig run_cfg = cfg;
      run_cfg.seed = derive_seed(cfg.seed, static_cast<std::uint64_t>(i), 0x11a);
      const std::string id = opts.run_prefix + "-" + std::to_string(i);
      try {
        auto endpoint = make_endpoint(i);
        outcomes[static_cast<std::size_t>(i)] =
            run_llm_run(*endpoint, run_cfg, variant, id, opts.max_retries, &limiter, locked_sink);
      } catch (const Error& e) {
        RunOutcome& o = outcomes[static_cast<std::size_t>(i)];
        o.run.run_id = id;
        o.run.agent.kind = "llm";
        o.run.schedule = run_cfg.schedule;
        o.run.seed = run_cfg.seed;
        o.run.n_trials = run_cfg.n_trials;
        o.run.status = RunStatus::Incomplete;
        o.failure = id + ": " + e.code() + ": " + e.what();
      }
    }
  };
  const int threads = std::clamp(opts.jobs, 1, std::max(opts.n_runs, 1));
  if (threads == 1) {
    worker();
  } else {
    std::vector<std::future<void>> fs;
    for (int k = 0; k < threads; ++k) fs.push_back(std::async(std::launch::async, worker));
    for (auto& f : fs) f.get();
  }

  ExperimentResult res;
  res.summary.runs = opts.n_runs;
  for (auto& o : outcomes) {
    res.summary.attempts += o.attempts;
    res.summary.transport_failures += o.transport_failures;
    res.summary.invalid_attempts += o.run.invalid_attempt_count;
    if (o.run.status == RunStatus::Complete)
      ++res.summary.complete;
    else
      ++res.summary.incomplete;
    if (o.failure) res.summary.failures.push_back(*o.failure);
    res.runs.push_back(std::move(o.run));
  }
  return res;
}

}  // namespace revlearn::llm
