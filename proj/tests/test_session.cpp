#include <gtest/gtest.h>

#include <filesystem>
#include <regex>
#include <thread>

#include "revlearn/session_service.hpp"
#include "revlearn/storage.hpp"

using namespace revlearn;
using namespace revlearn::session;
using json = nlohmann::ordered_json;

namespace {

// Keys that would leak latent structure while a session is live.
bool leaks(const json& j) {
  static const std::regex bad("state|prob|segment|switch|reason|optimal|seed", std::regex::icase);
  if (j.is_object()) {
    for (const auto& [k, v] : j.items())
      if (std::regex_search(k, bad) || leaks(v)) return true;
  } else if (j.is_array()) {
    for (const auto& v : j)
      if (leaks(v)) return true;
  }
  return false;
}

class Service : public ::testing::Test {
 protected:
  void SetUp() override {
    dir_ = std::filesystem::temp_directory_path() /
           ("revlearn_sessions_" + std::to_string(::testing::UnitTest::GetInstance()->random_seed()) +
            ::testing::UnitTest::GetInstance()->current_test_info()->name());
    std::filesystem::remove_all(dir_);
    ServiceConfig cfg;
    cfg.out_dir = dir_;
    mgr_ = std::make_unique<SessionManager>(cfg);
    install_routes(server_, *mgr_, true);
    port_ = server_.bind_to_any_port("127.0.0.1");
    thread_ = std::thread([this] { server_.listen_after_bind(); });
    server_.wait_until_ready();
    client_ = std::make_unique<httplib::Client>("127.0.0.1", port_);
  }
  void TearDown() override {
    server_.stop();
    thread_.join();
    std::filesystem::remove_all(dir_);
  }

  std::pair<int, json> post(const std::string& path, const json& body) {
    auto res = client_->Post(path, body.dump(), "application/json");
    EXPECT_TRUE(res);
    return {res->status, json::parse(res->body)};
  }
  std::pair<int, json> get(const std::string& path) {
    auto res = client_->Get(path);
    EXPECT_TRUE(res);
    return {res->status, json::parse(res->body)};
  }
  std::string create(const json& body = json::object()) {
    auto [status, j] = post("/sessions", body);
    EXPECT_EQ(status, 201);
    return j["session_id"];
  }

  std::filesystem::path dir_;
  std::unique_ptr<SessionManager> mgr_;
  httplib::Server server_;
  std::thread thread_;
  int port_ = 0;
  std::unique_ptr<httplib::Client> client_;
};

}  // namespace

TEST_F(Service, CreateDefaults) {
  auto [status, j] = post("/sessions", json::object());
  EXPECT_EQ(status, 201);
  EXPECT_EQ(j["n_trials"], 250);
  EXPECT_EQ(j["labels"], json::array({"E", "V"}));
  EXPECT_EQ(j["session_id"].get<std::string>().size(), 32u);
  EXPECT_FALSE(leaks(j));
}

TEST_F(Service, CreateOverrides) {
  auto [status, j] = post("/sessions", {{"n_trials", 10}, {"variant", "xy"}, {"schedule", "random"}});
  EXPECT_EQ(status, 201);
  EXPECT_EQ(j["n_trials"], 10);
  EXPECT_EQ(j["labels"], json::array({"X", "Y"}));
  EXPECT_EQ(post("/sessions", {{"n_trials", 0}}).first, 400);
  EXPECT_EQ(post("/sessions", {{"n_trials", "ten"}}).first, 400);
  EXPECT_EQ(post("/sessions", {{"seed", 4}}).first, 400);
  EXPECT_EQ(post("/sessions", {{"schedule", "external"}}).first, 400);
}

TEST_F(Service, SessionIdsDiffer) {
  EXPECT_NE(create(), create());
}

TEST_F(Service, ChoiceFeedback) {
  const std::string id = create();
  auto [status, j] = post("/sessions/" + id + "/choice", {{"label", "E"}, {"trial", 1}});
  EXPECT_EQ(status, 200);
  EXPECT_EQ(j["trial"], 1);
  EXPECT_EQ(j["done"], false);
  EXPECT_EQ(j["total"], j["coins"]);
  EXPECT_FALSE(leaks(j));
}

TEST_F(Service, Errors) {
  EXPECT_EQ(get("/sessions/deadbeef").first, 404);
  EXPECT_EQ(post("/sessions/deadbeef/choice", {{"label", "E"}}).first, 404);
  const std::string id = create();
  EXPECT_EQ(post("/sessions/" + id + "/choice", {{"label", "e"}}).first, 422);
  EXPECT_EQ(post("/sessions/" + id + "/choice", {{"label", "X"}}).first, 422);
  EXPECT_EQ(post("/sessions/" + id + "/choice", json::object()).first, 422);
  EXPECT_EQ(post("/sessions/" + id + "/choice", {{"label", "V"}, {"trial", 1}}).first, 200);
  // Second submission for trial 1 is a conflict and does not consume a trial.
  EXPECT_EQ(post("/sessions/" + id + "/choice", {{"label", "V"}, {"trial", 1}}).first, 409);
  EXPECT_EQ(get("/sessions/" + id).second["completed"], 1);
  EXPECT_EQ(get("/sessions/" + id + "/export").first, 409);
  auto res = client_->Post("/sessions/" + id + "/choice", "{not json", "application/json");
  EXPECT_EQ(res->status, 400);
}

TEST_F(Service, StateAfterThreeTrials) {
  const std::string id = create();
  for (const char* l : {"E", "V", "E"}) post("/sessions/" + id + "/choice", {{"label", l}});
  auto [status, j] = get("/sessions/" + id);
  EXPECT_EQ(status, 200);
  EXPECT_EQ(j["history"].size(), 3u);
  EXPECT_EQ(j["history"][1]["label"], "V");
  EXPECT_EQ(j["status"], "active");
  EXPECT_FALSE(leaks(j));
}

TEST_F(Service, FullSessionPersistsAndExports) {
  const std::string id = create();
  json last;
  for (int t = 1; t <= 250; ++t) {
    auto [status, j] = post("/sessions/" + id + "/choice", {{"label", t % 3 ? "E" : "V"}, {"trial", t}});
    ASSERT_EQ(status, 200);
    ASSERT_FALSE(leaks(j));
    last = j;
  }
  EXPECT_EQ(last["done"], true);
  EXPECT_EQ(post("/sessions/" + id + "/choice", {{"label", "E"}}).first, 409);

  auto [status, exported] = get("/sessions/" + id + "/export");
  EXPECT_EQ(status, 200);
  const RunRecord from_export = run_from_json(exported);
  EXPECT_EQ(from_export.status, RunStatus::Complete);
  EXPECT_EQ(from_export.trials.size(), 250u);
  EXPECT_TRUE(from_export.has_latent_states());
  const auto persisted = read_runs(mgr_->persisted_path(id)->string());
  ASSERT_EQ(persisted.size(), 1u);
  EXPECT_EQ(persisted[0], from_export);

  int total = 0;
  for (const auto& tr : from_export.trials) total += tr.coins;
  EXPECT_EQ(last["total"], total);
  EXPECT_EQ(get("/sessions/" + id).second["status"], "finished");
}

TEST_F(Service, ConcurrentDoubleSubmitsYieldOneTrialEach) {
  const std::string id = create({{"n_trials", 20}});
  for (int t = 1; t <= 20; ++t) {
    std::vector<std::thread> ts;
    std::atomic<int> ok{0}, conflict{0};
    for (int k = 0; k < 4; ++k)
      ts.emplace_back([&, t] {
        httplib::Client c("127.0.0.1", port_);
        json body{{"label", "E"}, {"trial", t}};
        auto res = c.Post("/sessions/" + id + "/choice", body.dump(), "application/json");
        if (res && res->status == 200) ++ok;
        if (res && res->status == 409) ++conflict;
      });
    for (auto& th : ts) th.join();
    ASSERT_EQ(ok, 1);
    ASSERT_EQ(conflict, 3);
  }
  EXPECT_EQ(mgr_->run(id).trials.size(), 20u);
}

TEST_F(Service, CorsHeaders) {
  auto res = client_->Post("/sessions", "{}", "application/json");
  EXPECT_EQ(res->get_header_value("Access-Control-Allow-Origin"), "*");
  auto pre = client_->Options("/sessions");
  EXPECT_EQ(pre->status, 204);
}

TEST(ServiceFuzz, NoLatentFieldsWhileActive) {
  ServiceConfig cfg;
  cfg.env.n_trials = 40;
  cfg.env.schedule = ScheduleKind::RandomUniform;
  SessionManager mgr(cfg);
  Rng rng(3);
  for (int s = 0; s < 30; ++s) {
    const json created = mgr.create();
    ASSERT_FALSE(leaks(created));
    const std::string id = created["session_id"];
    for (int t = 1; t <= 39; ++t) {
      const json fb = mgr.submit(id, {{"label", bernoulli(rng, 0.5) ? "E" : "V"}});
      ASSERT_FALSE(leaks(fb));
      ASSERT_FALSE(leaks(mgr.state(id)));
    }
    EXPECT_THROW(mgr.export_run(id), SessionError);
  }
}
