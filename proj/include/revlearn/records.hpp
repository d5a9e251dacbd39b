#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "revlearn/params.hpp"
#include "revlearn/task_env.hpp"

namespace revlearn {

struct TrialRecord {
  int t = 0;
  Action action = Action::A0;
  char label_shown = 'E';
  bool win = false;
  int coins = 0;
  std::optional<StateId> state;  // absent for imported data
  std::optional<int> segment;
  std::optional<SwitchEvent> switch_after;
  int retries = 0;
  std::optional<std::int64_t> timestamp_ms;

  // Unit reward r = 2w - 1.
  int reward() const noexcept { return win ? 1 : -1; }

  friend bool operator==(const TrialRecord&, const TrialRecord&) = default;
};

enum class RunStatus : std::uint8_t { Complete, Incomplete };

inline std::string_view to_string(RunStatus s) {
  return s == RunStatus::Complete ? "complete" : "incomplete";
}

struct AgentDescriptor {
  std::string kind;                  // dual | kdu | wsls | always | random | llm | human
  std::optional<AgentParams> params;  // generating parameters for synthetic agents
  std::optional<std::string> model;   // endpoint model id for llm agents
  std::optional<std::string> variant;

  friend bool operator==(const AgentDescriptor&, const AgentDescriptor&) = default;
};

struct RunRecord {
  std::string run_id;
  AgentDescriptor agent;
  ScheduleKind schedule = ScheduleKind::FixedCycle;
  std::uint64_t seed = 0;
  RunStatus status = RunStatus::Complete;
  int n_trials = 0;  // planned length
  std::vector<TrialRecord> trials;
  int invalid_attempt_count = 0;

  bool has_latent_states() const {
    if (trials.empty()) return false;
    for (const auto& tr : trials)
      if (!tr.state || !tr.segment) return false;
    return true;
  }

  friend bool operator==(const RunRecord&, const RunRecord&) = default;
};

// Turns one environment step into a record.
inline TrialRecord make_trial_record(const StepResult& s, Action action, char label) {
  TrialRecord tr;
  tr.t = s.trial;
  tr.action = action;
  tr.label_shown = label;
  tr.win = s.win;
  tr.coins = s.coins;
  tr.state = s.state;
  tr.segment = s.segment;
  tr.switch_after = s.switch_event;
  return tr;
}

// Checks the TrialRecord/RunRecord invariants; throws DataError on the first
// violation.
inline void validate_run(const RunRecord& run) {
  const std::string where = "run '" + run.run_id + "': ";
  int prev_t = 0;
  std::optional<int> prev_segment;
  for (const auto& tr : run.trials) {
    if (tr.t <= prev_t)
      throw DataError(where + "trial indices must strictly increase (t=" + std::to_string(tr.t) + ")");
    prev_t = tr.t;
    if ((tr.coins > 0) != tr.win || tr.coins == 0)
      throw DataError(where + "coins/win mismatch at t=" + std::to_string(tr.t));
    if (tr.retries < 0) throw DataError(where + "negative retries at t=" + std::to_string(tr.t));
    if (tr.segment) {
      if (prev_segment && (*tr.segment < *prev_segment || *tr.segment > *prev_segment + 1))
        throw DataError(where + "segment index must be non-decreasing in steps of at most 1 (t=" +
                        std::to_string(tr.t) + ")");
      prev_segment = tr.segment;
    }
  }
  const bool full = static_cast<int>(run.trials.size()) == run.n_trials;
  if ((run.status == RunStatus::Complete) != full)
    throw DataError(where + "status " + std::string(to_string(run.status)) + " inconsistent with " +
                    std::to_string(run.trials.size()) + " of " + std::to_string(run.n_trials) +
                    " trials");
  if (run.invalid_attempt_count < 0) throw DataError(where + "negative invalid_attempt_count");
}

}  // namespace revlearn
