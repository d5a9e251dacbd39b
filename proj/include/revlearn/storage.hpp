#pragma once

// Run logs as JSON Lines: a schema header line followed by one run per line.
// Keys are emitted in a fixed order so identical runs serialize to identical
// bytes. Every record invariant is checked on read.

#include <fstream>
#include <istream>
#include <map>
#include <optional>
#include <ostream>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "revlearn/records.hpp"

namespace revlearn {

using ordered_json = nlohmann::ordered_json;

inline constexpr const char* kRunsSchema = "revlearn.runs";
inline constexpr int kRunsSchemaVersion = 1;

// ---- encoding -------------------------------------------------------------

inline ordered_json params_to_json(const AgentParams& p) {
  ordered_json j;
  j["eta_pos"] = p.eta_pos;
  j["eta_neg"] = p.eta_neg;
  j["beta"] = p.beta;
  j["kappa"] = p.kappa;
  return j;
}

inline ordered_json switch_to_json(const SwitchEvent& e) {
  ordered_json j;
  j["trial"] = e.trial;
  j["reason"] = std::string(to_string(e.reason));
  j["old_state"] = index(e.old_state);
  j["new_state"] = index(e.new_state);
  return j;
}

inline ordered_json trial_to_json(const TrialRecord& tr) {
  ordered_json j;
  j["t"] = tr.t;
  j["action"] = index(tr.action);
  j["label"] = std::string(1, tr.label_shown);
  j["win"] = tr.win ? 1 : 0;
  j["coins"] = tr.coins;
  if (tr.state) j["state"] = index(*tr.state);
  if (tr.segment) j["segment"] = *tr.segment;
  if (tr.switch_after) j["switch_after"] = switch_to_json(*tr.switch_after);
  j["retries"] = tr.retries;
  if (tr.timestamp_ms) j["timestamp_ms"] = *tr.timestamp_ms;
  return j;
}

inline ordered_json run_to_json(const RunRecord& run) {
  ordered_json j;
  j["run_id"] = run.run_id;
  ordered_json agent;
  agent["kind"] = run.agent.kind;
  if (run.agent.params) agent["params"] = params_to_json(*run.agent.params);
  if (run.agent.model) agent["model"] = *run.agent.model;
  if (run.agent.variant) agent["variant"] = *run.agent.variant;
  j["agent"] = std::move(agent);
  j["schedule"] = std::string(to_string(run.schedule));
  j["seed"] = run.seed;
  j["status"] = std::string(to_string(run.status));
  j["n_trials"] = run.n_trials;
  j["invalid_attempt_count"] = run.invalid_attempt_count;
  ordered_json trials = ordered_json::array();
  for (const auto& tr : run.trials) trials.push_back(trial_to_json(tr));
  j["trials"] = std::move(trials);
  return j;
}

inline std::string serialize_run(const RunRecord& run) { return run_to_json(run).dump(); }

// ---- decoding -------------------------------------------------------------

inline AgentParams params_from_json(const ordered_json& j) {
  AgentParams p;
  p.eta_pos = j.at("eta_pos").get<double>();
  p.eta_neg = j.at("eta_neg").get<double>();
  p.beta = j.at("beta").get<double>();
  p.kappa = j.at("kappa").get<double>();
  return p;
}

inline Action action_from_json(const ordered_json& j) {
  const int a = j.get<int>();
  if (a != 0 && a != 1) throw DataError("action must be 0 or 1");
  return static_cast<Action>(a);
}

inline TrialRecord trial_from_json(const ordered_json& j) {
  TrialRecord tr;
  tr.t = j.at("t").get<int>();
  tr.action = action_from_json(j.at("action"));
  const auto label = j.at("label").get<std::string>();
  if (label.size() != 1) throw DataError("label must be a single character");
  tr.label_shown = label[0];
  const int w = j.at("win").get<int>();
  if (w != 0 && w != 1) throw DataError("win must be 0 or 1");
  tr.win = w == 1;
  tr.coins = j.at("coins").get<int>();
  if (j.contains("state")) tr.state = state_from_index(j["state"].get<int>());
  if (j.contains("segment")) tr.segment = j["segment"].get<int>();
  if (tr.state.has_value() != tr.segment.has_value())
    throw DataError("state and segment must be present together");
  if (j.contains("switch_after")) {
    const auto& s = j["switch_after"];
    tr.switch_after = SwitchEvent{s.at("trial").get<int>(),
                                  switch_reason_from_string(s.at("reason").get<std::string>()),
                                  state_from_index(s.at("old_state").get<int>()),
                                  state_from_index(s.at("new_state").get<int>())};
  }
  tr.retries = j.at("retries").get<int>();
  if (j.contains("timestamp_ms")) tr.timestamp_ms = j["timestamp_ms"].get<std::int64_t>();
  return tr;
}

inline RunRecord run_from_json(const ordered_json& j) {
  RunRecord run;
  run.run_id = j.at("run_id").get<std::string>();
  const auto& agent = j.at("agent");
  run.agent.kind = agent.at("kind").get<std::string>();
  if (agent.contains("params")) run.agent.params = params_from_json(agent["params"]);
  if (agent.contains("model")) run.agent.model = agent["model"].get<std::string>();
  if (agent.contains("variant")) run.agent.variant = agent["variant"].get<std::string>();
  run.schedule = schedule_from_string(j.at("schedule").get<std::string>());
  run.seed = j.at("seed").get<std::uint64_t>();
  const auto status = j.at("status").get<std::string>();
  if (status == "complete")
    run.status = RunStatus::Complete;
  else if (status == "incomplete")
    run.status = RunStatus::Incomplete;
  else
    throw DataError("unknown status '" + status + "'");
  run.n_trials = j.at("n_trials").get<int>();
  run.invalid_attempt_count = j.at("invalid_attempt_count").get<int>();
  for (const auto& t : j.at("trials")) run.trials.push_back(trial_from_json(t));
  validate_run(run);
  return run;
}

// ---- streams --------------------------------------------------------------

inline std::string runs_header_line() {
  ordered_json h;
  h["schema"] = kRunsSchema;
  h["version"] = kRunsSchemaVersion;
  return h.dump();
}

class RunWriter {
 public:
  explicit RunWriter(std::ostream& os) : os_(os) { os_ << runs_header_line() << '\n'; }
  void write(const RunRecord& run) { os_ << serialize_run(run) << '\n'; }

 private:
  std::ostream& os_;
};

// Reads runs one line at a time; only the current run is held in memory.
class RunReader {
 public:
  explicit RunReader(std::istream& is, std::string source = "<stream>")
      : is_(is), source_(std::move(source)) {
    std::string line;
    if (!std::getline(is_, line)) throw DataError(source_ + ": empty file, missing schema header");
    line_no_ = 1;
    ordered_json h;
    try {
      h = ordered_json::parse(line);
    } catch (const std::exception& e) {
      throw DataError(source_ + ":1: malformed schema header: " + e.what());
    }
    if (!h.is_object() || h.value("schema", "") != kRunsSchema)
      throw DataError(source_ + ":1: not a " + std::string(kRunsSchema) + " file");
    const int version = h.value("version", -1);
    if (version != kRunsSchemaVersion)
      throw DataError(source_ + ":1: schema version mismatch (file " + std::to_string(version) +
                      ", expected " + std::to_string(kRunsSchemaVersion) + ")");
  }

  std::optional<RunRecord> next() {
    std::string line;
    while (std::getline(is_, line)) {
      ++line_no_;
      if (line.empty()) continue;
      try {
        return run_from_json(ordered_json::parse(line));
      } catch (const std::exception& e) {
        throw DataError(source_ + ":" + std::to_string(line_no_) + ": " + e.what());
      }
    }
    return std::nullopt;
  }

  int line_number() const noexcept { return line_no_; }

 private:
  std::istream& is_;
  std::string source_;
  int line_no_ = 0;
};

inline void write_runs(std::ostream& os, const std::vector<RunRecord>& runs) {
  RunWriter w(os);
  for (const auto& r : runs) w.write(r);
}

inline void write_runs(const std::string& path, const std::vector<RunRecord>& runs) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw DataError("cannot open '" + path + "' for writing");
  write_runs(os, runs);
  if (!os) throw DataError("write to '" + path + "' failed");
}

inline std::vector<RunRecord> read_runs(std::istream& is, const std::string& source = "<stream>") {
  RunReader reader(is, source);
  std::vector<RunRecord> out;
  while (auto r = reader.next()) out.push_back(std::move(*r));
  return out;
}

inline std::vector<RunRecord> read_runs(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw DataError("cannot open '" + path + "' for reading");
  return read_runs(is, path);
}

// ---- human data import ----------------------------------------------------

// CSV with header `participant,trial,choice,outcome[,condition]`. Choices are
// the two presentation labels (`label_a0` maps to A0); outcomes are +100/100/1
// for a win and -100/0 for a loss. Rows of a participant must have trial
// indices 1, 2, 3, ... in file order.
inline std::vector<RunRecord> import_human(std::istream& is, char label_a0 = 'E',
                                           char label_a1 = 'V',
                                           const std::string& source = "<csv>") {
  auto split = [](const std::string& line) {
    std::vector<std::string> cells;
    std::stringstream ss(line);
    std::string cell;
    while (std::getline(ss, cell, ',')) {
      const auto b = cell.find_first_not_of(" \t\r");
      const auto e = cell.find_last_not_of(" \t\r");
      cells.push_back(b == std::string::npos ? "" : cell.substr(b, e - b + 1));
    }
    if (!line.empty() && line.back() == ',') cells.emplace_back();
    return cells;
  };

  std::string line;
  if (!std::getline(is, line)) throw DataError(source + ": empty file");
  const auto header = split(line);
  const bool has_condition = header.size() == 5 && header[4] == "condition";
  if (header.size() < 4 || header[0] != "participant" || header[1] != "trial" ||
      header[2] != "choice" || header[3] != "outcome" || (header.size() == 5 && !has_condition) ||
      header.size() > 5)
    throw DataError(source + ":1: expected header participant,trial,choice,outcome[,condition]");

  std::vector<RunRecord> runs;
  std::map<std::string, std::size_t> by_participant;
  int row = 1;
  while (std::getline(is, line)) {
    ++row;
    if (line.empty() || line == "\r") continue;
    const auto cells = split(line);
    const std::string where = source + ":" + std::to_string(row) + ": ";
    if (cells.size() != header.size()) throw DataError(where + "wrong number of columns");
    const std::string& pid = cells[0];
    if (pid.empty()) throw DataError(where + "empty participant id");

    TrialRecord tr;
    try {
      std::size_t used = 0;
      tr.t = std::stoi(cells[1], &used);
      if (used != cells[1].size()) throw std::invalid_argument("trailing characters");
    } catch (const std::exception&) {
      throw DataError(where + "bad trial index '" + cells[1] + "'");
    }
    if (cells[2].size() == 1 && cells[2][0] == label_a0)
      tr.action = Action::A0;
    else if (cells[2].size() == 1 && cells[2][0] == label_a1)
      tr.action = Action::A1;
    else
      throw DataError(where + "unmapped choice symbol '" + cells[2] + "'");
    tr.label_shown = cells[2][0];
    const std::string& o = cells[3];
    if (o == "+100" || o == "100" || o == "1")
      tr.win = true;
    else if (o == "-100" || o == "0")
      tr.win = false;
    else
      throw DataError(where + "unmapped outcome '" + o + "'");
    tr.coins = tr.win ? 100 : -100;

    auto [it, inserted] = by_participant.try_emplace(pid, runs.size());
    if (inserted) {
      RunRecord run;
      run.run_id = "human-" + pid;
      run.agent.kind = "human";
      if (has_condition && !cells[4].empty()) run.agent.variant = cells[4];
      run.schedule = ScheduleKind::External;
      runs.push_back(std::move(run));
    }
    RunRecord& run = runs[it->second];
    const int expected = static_cast<int>(run.trials.size()) + 1;
    if (tr.t != expected)
      throw DataError(where + "participant '" + pid + "' trial " + std::to_string(tr.t) +
                      " out of sequence (expected " + std::to_string(expected) + ")");
    run.trials.push_back(tr);
  }
  for (auto& run : runs) {
    run.n_trials = static_cast<int>(run.trials.size());
    run.status = RunStatus::Complete;
    validate_run(run);
  }
  return runs;
}

inline std::vector<RunRecord> import_human(const std::string& path, char label_a0 = 'E',
                                           char label_a1 = 'V') {
  std::ifstream is(path);
  if (!is) throw DataError("cannot open '" + path + "' for reading");
  return import_human(is, label_a0, label_a1, path);
}

}  // namespace revlearn
