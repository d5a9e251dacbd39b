#pragma once

// Live task sessions over HTTP+JSON for human participants. Latent task
// structure stays server-side: live payloads carry only labels, outcomes and
// counts. A finished session can be exported with full metadata.

#include <chrono>
#include <filesystem>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <random>
#include <string>

#include <httplib.h>
#include <json.hpp>

#include "revlearn/error.hpp"
#include "revlearn/llm/prompt.hpp"
#include "revlearn/records.hpp"
#include "revlearn/storage.hpp"
#include "revlearn/task_env.hpp"

namespace revlearn::session {

using ordered_json = nlohmann::ordered_json;

// Carries the HTTP status the error maps to.
struct SessionError : Error {
  SessionError(int status, const std::string& what) : Error("session", what), status(status) {}
  int status;
};

struct ServiceConfig {
  EnvConfig env;  // seed is ignored; each session draws its own
  llm::PromptVariant variant;
  std::optional<std::filesystem::path> out_dir;  // completed runs are written here
  int max_trials = 1000;                         // upper bound for n_trials overrides
};

enum class SessionStatus : std::uint8_t { Active, Finished };

struct Session {
  std::string id;
  EnvConfig cfg;
  llm::PromptVariant variant;
  EnvState env;
  RunRecord run;
  SessionStatus status = SessionStatus::Active;
  int total = 0;
  std::mutex mu;  // serialises choices within a session
};

namespace detail {

inline std::string random_hex(std::random_device& rd, int bytes) {
  static const char* digits = "0123456789abcdef";
  std::string s;
  for (int i = 0; i < bytes; ++i) {
    const auto b = static_cast<unsigned>(rd()) & 0xffu;
    s += digits[b >> 4];
    s += digits[b & 0xf];
  }
  return s;
}

inline ordered_json labels_json(const llm::PromptVariant& v) {
  return ordered_json::array({std::string(1, v.first()), std::string(1, v.second())});
}

}  // namespace detail

class SessionManager {
 public:
  explicit SessionManager(ServiceConfig cfg) : cfg_(std::move(cfg)) {
    cfg_.env.validate();
    cfg_.variant.validate();
  }

  // Accepted overrides: n_trials, schedule ("fixed" | "random"), variant.
  ordered_json create(const ordered_json& overrides = ordered_json::object()) {
    if (!overrides.is_object()) throw SessionError(400, "body must be a JSON object");
    auto s = std::make_shared<Session>();
    s->cfg = cfg_.env;
    s->variant = cfg_.variant;
    for (const auto& [key, value] : overrides.items()) {
      if (key == "n_trials") {
        if (!value.is_number_integer()) throw SessionError(400, "n_trials must be an integer");
        s->cfg.n_trials = value.get<int>();
        if (s->cfg.n_trials > cfg_.max_trials)
          throw SessionError(400, "n_trials exceeds the service limit of " + std::to_string(cfg_.max_trials));
      } else if (key == "schedule" || key == "variant") {
        if (!value.is_string()) throw SessionError(400, key + " must be a string");
        try {
          if (key == "schedule")
            s->cfg.schedule = schedule_from_string(value.get<std::string>());
          else
            s->variant = llm::variant_from_string(value.get<std::string>());
        } catch (const ConfigError& e) {
          throw SessionError(400, e.what());
        }
      } else {
        throw SessionError(400, "unknown override '" + key + "'");
      }
    }
    try {
      s->cfg.validate();
    } catch (const ConfigError& e) {
      throw SessionError(400, e.what());
    }

    {
      std::lock_guard lock(mu_);
      s->cfg.seed = (static_cast<std::uint64_t>(rd_()) << 32) ^ rd_();
      do s->id = detail::random_hex(rd_, 16);
      while (sessions_.count(s->id));
      sessions_[s->id] = s;
    }
    s->env = new_env(s->cfg);
    s->run.run_id = "session-" + s->id;
    s->run.agent.kind = "human";
    s->run.agent.variant = s->variant.name();
    s->run.schedule = s->cfg.schedule;
    s->run.seed = s->cfg.seed;
    s->run.n_trials = s->cfg.n_trials;
    s->run.status = RunStatus::Incomplete;

    ordered_json j;
    j["session_id"] = s->id;
    j["n_trials"] = s->cfg.n_trials;
    j["labels"] = detail::labels_json(s->variant);
    j["reward_magnitude"] = s->cfg.reward_magnitude;
    j["next_trial"] = 1;
    return j;
  }

  // `trial`, when given, must name the pending trial; a repeat of an already
  // answered trial is a conflict rather than a second choice.
  ordered_json submit(const std::string& id, const ordered_json& body) {
    auto s = find(id);
    if (!body.is_object()) throw SessionError(400, "body must be a JSON object");
    std::lock_guard lock(s->mu);
    if (s->status == SessionStatus::Finished) throw SessionError(409, "session already finished");
    const int pending = static_cast<int>(s->run.trials.size()) + 1;
    if (body.contains("trial")) {
      if (!body["trial"].is_number_integer()) throw SessionError(422, "trial must be an integer");
      const int t = body["trial"].get<int>();
      if (t != pending)
        throw SessionError(409, "trial " + std::to_string(t) + " is not pending (expected " +
                                    std::to_string(pending) + ")");
    }
    if (!body.contains("label") || !body["label"].is_string())
      throw SessionError(422, "label must be a string");
    const auto action = llm::parse_response(body["label"].get<std::string>(), s->variant);
    if (!action) throw SessionError(422, "label must be one of the session's labels");

    TrialRecord tr = make_trial_record(step(s->env, *action, s->cfg), *action, s->variant.label(*action));
    tr.timestamp_ms = std::chrono::duration_cast<std::chrono::milliseconds>(
                          std::chrono::system_clock::now().time_since_epoch())
                          .count();
    s->total += tr.coins;
    s->run.trials.push_back(tr);
    const bool done = static_cast<int>(s->run.trials.size()) == s->cfg.n_trials;
    if (done) {
      s->run.status = RunStatus::Complete;
      s->status = SessionStatus::Finished;
      persist(*s);
    }
    ordered_json j;
    j["trial"] = tr.t;
    j["label"] = std::string(1, tr.label_shown);
    j["win"] = tr.win;
    j["coins"] = tr.coins;
    j["total"] = s->total;
    j["done"] = done;
    return j;
  }

  ordered_json state(const std::string& id) {
    auto s = find(id);
    std::lock_guard lock(s->mu);
    ordered_json history = ordered_json::array();
    for (const auto& tr : s->run.trials)
      history.push_back({{"trial", tr.t}, {"label", std::string(1, tr.label_shown)}, {"coins", tr.coins}});
    ordered_json j;
    j["session_id"] = s->id;
    j["status"] = s->status == SessionStatus::Active ? "active" : "finished";
    j["n_trials"] = s->cfg.n_trials;
    j["labels"] = detail::labels_json(s->variant);
    j["completed"] = s->run.trials.size();
    j["history"] = history;
    j["total"] = s->total;
    return j;
  }

  // Finished sessions only; includes latent metadata.
  ordered_json export_run(const std::string& id) {
    auto s = find(id);
    std::lock_guard lock(s->mu);
    if (s->status != SessionStatus::Finished) throw SessionError(409, "session is still active");
    return run_to_json(s->run);
  }

  RunRecord run(const std::string& id) {
    auto s = find(id);
    std::lock_guard lock(s->mu);
    return s->run;
  }

  std::optional<std::filesystem::path> persisted_path(const std::string& id) const {
    if (!cfg_.out_dir) return std::nullopt;
    return *cfg_.out_dir / ("session-" + id + ".jsonl");
  }

 private:
  std::shared_ptr<Session> find(const std::string& id) {
    std::lock_guard lock(mu_);
    const auto it = sessions_.find(id);
    if (it == sessions_.end()) throw SessionError(404, "unknown session");
    return it->second;
  }

  void persist(const Session& s) {
    if (!cfg_.out_dir) return;
    std::lock_guard lock(write_mu_);
    std::filesystem::create_directories(*cfg_.out_dir);
    write_runs(persisted_path(s.id)->string(), {s.run});
  }

  ServiceConfig cfg_;
  std::mutex mu_;
  std::mutex write_mu_;
  std::random_device rd_;
  std::map<std::string, std::shared_ptr<Session>> sessions_;
};

// Installs the routes on `server`. With `cors`, every response allows any
// origin and preflight requests are answered.
inline void install_routes(httplib::Server& server, SessionManager& mgr, bool cors = false) {
  auto send = [](httplib::Response& res, int status, const ordered_json& j) {
    res.status = status;
    res.set_content(j.dump(), "application/json");
  };
  auto guarded = [send](auto&& fn) {
    return [send, fn](const httplib::Request& req, httplib::Response& res) {
      try {
        fn(req, res);
      } catch (const SessionError& e) {
        send(res, e.status, {{"error", e.what()}});
      } catch (const nlohmann::json::parse_error&) {
        send(res, 400, {{"error", "malformed JSON body"}});
      } catch (const std::exception& e) {
        send(res, 500, {{"error", e.what()}});
      }
    };
  };
  auto body_json = [](const httplib::Request& req) {
    return req.body.empty() ? ordered_json::object() : ordered_json::parse(req.body);
  };

  server.Post("/sessions", guarded([&mgr, send, body_json](const httplib::Request& req, httplib::Response& res) {
                send(res, 201, mgr.create(body_json(req)));
              }));
  server.Get(R"(/sessions/([^/]+))", guarded([&mgr, send](const httplib::Request& req, httplib::Response& res) {
               send(res, 200, mgr.state(req.matches[1]));
             }));
  server.Post(R"(/sessions/([^/]+)/choice)",
              guarded([&mgr, send, body_json](const httplib::Request& req, httplib::Response& res) {
                send(res, 200, mgr.submit(req.matches[1], body_json(req)));
              }));
  server.Get(R"(/sessions/([^/]+)/export)",
             guarded([&mgr, send](const httplib::Request& req, httplib::Response& res) {
               send(res, 200, mgr.export_run(req.matches[1]));
             }));

  if (cors) {
    server.set_post_routing_handler([](const httplib::Request&, httplib::Response& res) {
      res.set_header("Access-Control-Allow-Origin", "*");
    });
    server.Options(R"(/sessions.*)", [](const httplib::Request&, httplib::Response& res) {
      res.set_header("Access-Control-Allow-Methods", "GET, POST, OPTIONS");
      res.set_header("Access-Control-Allow-Headers", "Content-Type");
      res.status = 204;
    });
  }
}

}  // namespace revlearn::session
