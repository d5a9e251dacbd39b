#include <gtest/gtest.h>

#include <filesystem>
#include <sstream>

#include "revlearn/agents.hpp"
#include "revlearn/metrics.hpp"
#include "revlearn/storage.hpp"

using namespace revlearn;

namespace {

RunRecord sample_run(std::uint64_t seed, Rule rule = Rule::Kdu) {
  EnvConfig cfg;
  cfg.seed = seed;
  cfg.schedule = ScheduleKind::RandomUniform;
  Rng rng(seed + 1);
  return simulate_run({0.4, 0.2, 3.0, 0.3}, rule, cfg, rng);
}

}  // namespace

TEST(Storage, RoundTrip) {
  std::vector<RunRecord> runs{sample_run(1), sample_run(2, Rule::Dual)};
  runs[1].trials[3].retries = 2;
  runs[1].trials[3].timestamp_ms = 1700000000123;
  runs[1].agent.model = "m";
  runs[1].agent.variant = "ve";
  runs[1].invalid_attempt_count = 2;
  std::stringstream ss;
  write_runs(ss, runs);
  EXPECT_EQ(read_runs(ss), runs);
}

TEST(Storage, SerializationIsByteStable) {
  const RunRecord r = sample_run(3);
  EXPECT_EQ(serialize_run(r), serialize_run(run_from_json(nlohmann::ordered_json::parse(serialize_run(r)))));
}

TEST(Storage, DoublesSurviveExactly) {
  RunRecord r = sample_run(4);
  r.agent.params = AgentParams{0.1 + 0.2, 1.0 / 3.0, 2.718281828459045, 0.0};
  std::stringstream ss;
  write_runs(ss, {r});
  EXPECT_EQ(read_runs(ss).at(0).agent.params, r.agent.params);
}

TEST(Storage, TruncatedFileNamesLine) {
  std::stringstream ss;
  write_runs(ss, {sample_run(1), sample_run(2)});
  std::string text = ss.str();
  text.resize(text.size() - 40);
  std::istringstream in(text);
  try {
    read_runs(in, "runs.jsonl");
    FAIL() << "expected DataError";
  } catch (const DataError& e) {
    EXPECT_NE(std::string(e.what()).find("runs.jsonl:3:"), std::string::npos) << e.what();
  }
}

TEST(Storage, HeaderChecks) {
  std::istringstream empty("");
  EXPECT_THROW(read_runs(empty), DataError);
  std::istringstream wrong(R"({"schema":"other","version":1})" "\n");
  EXPECT_THROW(read_runs(wrong), DataError);
  std::istringstream version(R"({"schema":"revlearn.runs","version":9})" "\n");
  EXPECT_THROW(read_runs(version), DataError);
}

TEST(Storage, InvalidRecordsRejected) {
  RunRecord r = sample_run(5);
  auto j = run_to_json(r);
  j["trials"][2]["coins"] = 100 * (r.trials[2].win ? -1 : 1);
  std::stringstream ss;
  ss << runs_header_line() << '\n' << j.dump() << '\n';
  EXPECT_THROW(read_runs(ss), DataError);

  j = run_to_json(r);
  j["status"] = "incomplete";
  std::stringstream ss2;
  ss2 << runs_header_line() << '\n' << j.dump() << '\n';
  EXPECT_THROW(read_runs(ss2), DataError);
}

TEST(Storage, StreamsLargeFiles) {
  std::stringstream ss;
  {
    RunWriter w(ss);
    for (std::uint64_t i = 0; i < 200; ++i) w.write(sample_run(i));
  }
  RunReader reader(ss);
  int n = 0;
  while (auto r = reader.next()) {
    EXPECT_EQ(r->trials.size(), 250u);
    ++n;
  }
  EXPECT_EQ(n, 200);
}

TEST(Storage, FileRoundTrip) {
  const auto path = std::filesystem::temp_directory_path() / "revlearn_storage_test.jsonl";
  const std::vector<RunRecord> runs{sample_run(6)};
  write_runs(path.string(), runs);
  EXPECT_EQ(read_runs(path.string()), runs);
  std::filesystem::remove(path);
  EXPECT_THROW(read_runs(path.string()), DataError);
}

TEST(ImportHuman, MinimalCsv) {
  std::istringstream in("participant,trial,choice,outcome\np1,1,E,+100\np1,2,V,-100\n");
  const auto runs = import_human(in);
  ASSERT_EQ(runs.size(), 1u);
  EXPECT_EQ(runs[0].run_id, "human-p1");
  ASSERT_EQ(runs[0].trials.size(), 2u);
  EXPECT_EQ(runs[0].trials[1].action, Action::A1);
  EXPECT_FALSE(runs[0].trials[1].win);
  EXPECT_EQ(runs[0].schedule, ScheduleKind::External);
  EXPECT_FALSE(runs[0].has_latent_states());
}

TEST(ImportHuman, UnknownLabelNamesRow) {
  std::istringstream in("participant,trial,choice,outcome\np1,1,E,1\np1,2,Z,0\n");
  try {
    import_human(in, 'E', 'V', "h.csv");
    FAIL() << "expected DataError";
  } catch (const DataError& e) {
    EXPECT_NE(std::string(e.what()).find("h.csv:3:"), std::string::npos) << e.what();
  }
}

TEST(ImportHuman, ConditionsAndOrdering) {
  std::istringstream in(
      "participant,trial,choice,outcome,condition\n"
      "a,1,E,1,fixed\nb,1,V,0,random\na,2,E,0,fixed\nb,2,V,1,random\n");
  const auto runs = import_human(in);
  ASSERT_EQ(runs.size(), 2u);
  EXPECT_EQ(runs[1].agent.variant, "random");
  std::istringstream bad("participant,trial,choice,outcome\na,2,E,1\n");
  EXPECT_THROW(import_human(bad), DataError);
}

TEST(ImportHuman, PerseveranceMissingNotZero) {
  std::istringstream in("participant,trial,choice,outcome\np,1,E,1\np,2,E,0\np,3,V,1\n");
  const auto runs = import_human(in);
  const RunMetrics m = run_metrics(runs[0]);
  EXPECT_FALSE(m.mean_perseveration.has_value());
  EXPECT_EQ(*m.lose_shift, 1.0);
}
