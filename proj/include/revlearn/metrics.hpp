#pragma once

// Behavioural measures computed per run and aggregated per experiment cell.
//
// Sequential statistics (win-stay, lose-shift) only use adjacent trial pairs
// inside one segment. Reversal-sensitive measures (perseveration, regret,
// switch latency, aligned curves) are defined on eligible segments, i.e.
// segments in a non-tie state, and need recorded latent states. Undefined
// quantities are std::nullopt and never coerced to zero.

#include <cmath>
#include <cstdio>
#include <optional>
#include <ostream>
#include <span>
#include <string>
#include <vector>

#include "revlearn/records.hpp"

namespace revlearn {

struct SegmentView {
  int segment = 0;
  StateId state = StateId::S0;
  int start_trial = 0;  // t_r
  int end_trial = 0;    // t_end
  std::size_t first = 0;  // positions in RunRecord::trials, inclusive
  std::size_t last = 0;
  bool eligible = false;
  std::optional<Action> optimal;
  std::optional<Action> prev_optimal;  // optimal action of the latest preceding eligible segment

  std::size_t length() const noexcept { return last - first + 1; }
  // Eligible, preceded by an eligible segment, and the optimal action changed.
  bool is_reversal() const noexcept {
    return eligible && prev_optimal.has_value() && *prev_optimal != *optimal;
  }
};

inline std::vector<SegmentView> segment_views(const RunRecord& run) {
  if (run.trials.empty()) throw DataError("run '" + run.run_id + "' has no trials");
  if (!run.has_latent_states())
    throw DataError("run '" + run.run_id + "' carries no latent-state metadata");

  std::vector<SegmentView> out;
  std::optional<Action> last_optimal;
  for (std::size_t i = 0; i < run.trials.size(); ++i) {
    const TrialRecord& tr = run.trials[i];
    if (out.empty() || *tr.segment != out.back().segment) {
      if (!out.empty()) {
        if (*tr.segment != out.back().segment + 1)
          throw DataError("run '" + run.run_id + "': non-monotone segment ids at t=" +
                          std::to_string(tr.t));
        if (*tr.state == out.back().state)
          throw DataError("run '" + run.run_id + "': segment boundary without a state change at t=" +
                          std::to_string(tr.t));
      }
      SegmentView v;
      v.segment = *tr.segment;
      v.state = *tr.state;
      v.start_trial = v.end_trial = tr.t;
      v.first = v.last = i;
      v.eligible = !is_tie(v.state);
      if (v.eligible) {
        v.optimal = optimal_action(v.state);
        v.prev_optimal = last_optimal;
        last_optimal = v.optimal;
      }
      out.push_back(v);
    } else {
      if (*tr.state != out.back().state)
        throw DataError("run '" + run.run_id + "': state changes inside segment at t=" +
                        std::to_string(tr.t));
      out.back().end_trial = tr.t;
      out.back().last = i;
    }
  }
  return out;
}

struct WslsCounts {
  int wins = 0;
  int stays_after_win = 0;
  int losses = 0;
  int shifts_after_loss = 0;
  std::optional<double> win_stay;
  std::optional<double> lose_shift;
};

// Pairs (t-1, t) count only when both trials share a segment. Runs without
// segment metadata are treated as one segment.
inline WslsCounts win_stay_lose_shift(const RunRecord& run) {
  WslsCounts c;
  for (std::size_t i = 1; i < run.trials.size(); ++i) {
    const TrialRecord& prev = run.trials[i - 1];
    const TrialRecord& cur = run.trials[i];
    if (prev.segment != cur.segment) continue;
    const bool stay = prev.action == cur.action;
    if (prev.win) {
      ++c.wins;
      c.stays_after_win += stay ? 1 : 0;
    } else {
      ++c.losses;
      c.shifts_after_loss += stay ? 0 : 1;
    }
  }
  if (c.wins > 0) c.win_stay = static_cast<double>(c.stays_after_win) / c.wins;
  if (c.losses > 0) c.lose_shift = static_cast<double>(c.shifts_after_loss) / c.losses;
  return c;
}

struct SegmentValue {
  int segment = 0;
  double value = 0.0;
};

struct SegmentMeasure {
  std::vector<SegmentValue> per_segment;
  std::optional<double> mean;
  int excluded_degenerate = 0;  // eligible, but the optimal action did not change
  int excluded_undefined = 0;   // per-segment value undefined (latency never reached)
};

namespace detail {
inline void finish_mean(SegmentMeasure& m) {
  if (m.per_segment.empty()) return;
  double s = 0.0;
  for (const auto& v : m.per_segment) s += v.value;
  m.mean = s / static_cast<double>(m.per_segment.size());
}
}  // namespace detail

// Consecutive trials from t_r that keep choosing the previous optimal action,
// stopping at the first deviation or at the segment end.
inline SegmentMeasure perseveration(const RunRecord& run, std::span<const SegmentView> segments) {
  SegmentMeasure m;
  for (const auto& seg : segments) {
    if (!seg.eligible || !seg.prev_optimal) continue;
    if (!seg.is_reversal()) {
      ++m.excluded_degenerate;
      continue;
    }
    int len = 0;
    for (std::size_t i = seg.first; i <= seg.last && run.trials[i].action == *seg.prev_optimal; ++i)
      ++len;
    m.per_segment.push_back({seg.segment, static_cast<double>(len)});
  }
  detail::finish_mean(m);
  return m;
}

// Summed per-trial regret over the first `window` trials of each eligible
// post-switch segment, in expected coins.
inline SegmentMeasure post_reversal_regret(const RunRecord& run,
                                           std::span<const SegmentView> segments, int window = 20) {
  SegmentMeasure m;
  for (const auto& seg : segments) {
    if (!seg.eligible || !seg.prev_optimal) continue;
    int gap_percent_coins = 0;  // sum of (best - chosen) percent times magnitude
    const std::size_t stop = std::min(seg.last, seg.first + static_cast<std::size_t>(window) - 1);
    for (std::size_t i = seg.first; i <= stop; ++i) {
      const TrialRecord& tr = run.trials[i];
      const int best = std::max(win_percent(seg.state, Action::A0), win_percent(seg.state, Action::A1));
      gap_percent_coins += (best - win_percent(seg.state, tr.action)) * std::abs(tr.coins);
    }
    m.per_segment.push_back({seg.segment, gap_percent_coins / 100.0});
  }
  detail::finish_mean(m);
  return m;
}

// 1-based trial (relative to t_r) of the first choice of the new optimal action.
inline SegmentMeasure switch_latency(const RunRecord& run, std::span<const SegmentView> segments) {
  SegmentMeasure m;
  for (const auto& seg : segments) {
    if (!seg.eligible || !seg.prev_optimal) continue;
    if (!seg.is_reversal()) {
      ++m.excluded_degenerate;
      continue;
    }
    std::optional<int> latency;
    for (std::size_t i = seg.first; i <= seg.last; ++i) {
      if (run.trials[i].action == *seg.optimal) {
        latency = static_cast<int>(i - seg.first) + 1;
        break;
      }
    }
    if (latency)
      m.per_segment.push_back({seg.segment, static_cast<double>(*latency)});
    else
      ++m.excluded_undefined;
  }
  detail::finish_mean(m);
  return m;
}

inline int total_wins(const RunRecord& run) {
  int n = 0;
  for (const auto& tr : run.trials) n += tr.win ? 1 : 0;
  return n;
}

struct RunMetrics {
  std::optional<double> win_stay;
  std::optional<double> lose_shift;
  std::optional<double> mean_perseveration;
  std::optional<double> mean_post_reversal_regret;
  std::optional<double> mean_switch_latency;
  int total_wins = 0;
  int n_trials = 0;
  int n_eligible_segments = 0;
  int n_degenerate_segments = 0;

  friend bool operator==(const RunMetrics&, const RunMetrics&) = default;
};

inline RunMetrics run_metrics(const RunRecord& run, int regret_window = 20) {
  RunMetrics m;
  const WslsCounts w = win_stay_lose_shift(run);
  m.win_stay = w.win_stay;
  m.lose_shift = w.lose_shift;
  m.total_wins = total_wins(run);
  m.n_trials = static_cast<int>(run.trials.size());
  if (run.has_latent_states()) {
    const auto segs = segment_views(run);
    for (const auto& s : segs) m.n_eligible_segments += s.eligible ? 1 : 0;
    const auto pers = perseveration(run, segs);
    m.mean_perseveration = pers.mean;
    m.n_degenerate_segments = pers.excluded_degenerate;
    m.mean_post_reversal_regret = post_reversal_regret(run, segs, regret_window).mean;
    m.mean_switch_latency = switch_latency(run, segs).mean;
  }
  return m;
}

struct AlignedCurve {
  std::vector<int> offsets;  // -k..-1 before the boundary, +1..+k from t_r on
  std::vector<double> mean;  // P(choose the new segment's optimal action)
  std::vector<int> n;
  int n_reversals = 0;
};

// Choice of the upcoming segment's optimal action around every eligible
// switch. Pre-boundary offsets stay inside the preceding segment and
// post-boundary offsets inside the new one.
inline AlignedCurve aligned_curves(std::span<const RunRecord> runs, int k) {
  if (k < 1) throw ConfigError("aligned curve half-width must be >= 1");
  AlignedCurve c;
  std::vector<long> hits(static_cast<std::size_t>(2 * k), 0), counts(static_cast<std::size_t>(2 * k), 0);
  for (const auto& run : runs) {
    if (!run.has_latent_states()) continue;
    const auto segs = segment_views(run);
    for (std::size_t s = 1; s < segs.size(); ++s) {
      const SegmentView& seg = segs[s];
      if (!seg.eligible) continue;
      const SegmentView& before = segs[s - 1];
      ++c.n_reversals;
      for (int j = 1; j <= k; ++j) {
        if (seg.first + static_cast<std::size_t>(j - 1) <= seg.last) {
          const auto slot = static_cast<std::size_t>(k + j - 1);
          ++counts[slot];
          hits[slot] += run.trials[seg.first + static_cast<std::size_t>(j - 1)].action == *seg.optimal;
        }
        if (seg.first >= static_cast<std::size_t>(j) &&
            seg.first - static_cast<std::size_t>(j) >= before.first) {
          const auto slot = static_cast<std::size_t>(k - j);
          ++counts[slot];
          hits[slot] += run.trials[seg.first - static_cast<std::size_t>(j)].action == *seg.optimal;
        }
      }
    }
  }
  for (int i = 0; i < 2 * k; ++i) {
    const auto slot = static_cast<std::size_t>(i);
    c.offsets.push_back(i < k ? i - k : i - k + 1);
    c.n.push_back(static_cast<int>(counts[slot]));
    c.mean.push_back(counts[slot] > 0 ? static_cast<double>(hits[slot]) / counts[slot] : std::nan(""));
  }
  return c;
}

struct MetricSummary {
  std::optional<double> mean;
  std::optional<double> sd;  // n - 1 denominator; missing below two values
  int n = 0;
  int missing = 0;
};

struct CellSummary {
  int n_runs = 0;
  MetricSummary win_stay, lose_shift, perseveration, post_reversal_regret, switch_latency,
      total_wins;
};

inline MetricSummary summarize(const std::vector<std::optional<double>>& values) {
  MetricSummary s;
  double sum = 0.0;
  for (const auto& v : values) {
    if (v) {
      sum += *v;
      ++s.n;
    } else {
      ++s.missing;
    }
  }
  if (s.n == 0) return s;
  s.mean = sum / s.n;
  if (s.n >= 2) {
    double ss = 0.0;
    for (const auto& v : values)
      if (v) ss += (*v - *s.mean) * (*v - *s.mean);
    s.sd = std::sqrt(ss / (s.n - 1));
  }
  return s;
}

inline CellSummary aggregate(std::span<const RunMetrics> cell) {
  if (cell.empty()) throw DataError("cannot aggregate an empty cell");
  CellSummary out;
  out.n_runs = static_cast<int>(cell.size());
  auto collect = [&](auto field) {
    std::vector<std::optional<double>> v;
    v.reserve(cell.size());
    for (const auto& m : cell) v.push_back(field(m));
    return summarize(v);
  };
  out.win_stay = collect([](const RunMetrics& m) { return m.win_stay; });
  out.lose_shift = collect([](const RunMetrics& m) { return m.lose_shift; });
  out.perseveration = collect([](const RunMetrics& m) { return m.mean_perseveration; });
  out.post_reversal_regret = collect([](const RunMetrics& m) { return m.mean_post_reversal_regret; });
  out.switch_latency = collect([](const RunMetrics& m) { return m.mean_switch_latency; });
  out.total_wins = collect([](const RunMetrics& m) {
    return std::optional<double>(static_cast<double>(m.total_wins));
  });
  return out;
}

// ---- CSV export -----------------------------------------------------------

inline std::string format_number(double v) {
  if (std::isnan(v)) return "NA";
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.10g", v);
  return buf;
}

inline std::string format_number(const std::optional<double>& v) {
  return v ? format_number(*v) : std::string("NA");
}

inline void write_run_metrics_csv(std::ostream& os, std::span<const RunRecord> runs,
                                  std::span<const RunMetrics> metrics) {
  os << "run_id,agent,schedule,status,n_trials,win_stay,lose_shift,mean_perseveration,"
        "mean_post_reversal_regret,mean_switch_latency,total_wins,n_eligible_segments,"
        "n_degenerate_segments\n";
  for (std::size_t i = 0; i < runs.size(); ++i) {
    const RunRecord& r = runs[i];
    const RunMetrics& m = metrics[i];
    os << r.run_id << ',' << r.agent.kind << ',' << to_string(r.schedule) << ','
       << to_string(r.status) << ',' << m.n_trials << ',' << format_number(m.win_stay) << ','
       << format_number(m.lose_shift) << ',' << format_number(m.mean_perseveration) << ','
       << format_number(m.mean_post_reversal_regret) << ',' << format_number(m.mean_switch_latency)
       << ',' << m.total_wins << ',' << m.n_eligible_segments << ',' << m.n_degenerate_segments
       << '\n';
  }
}

inline void write_cell_summary_csv(std::ostream& os, const CellSummary& c) {
  os << "metric,mean,sd,n,missing\n";
  auto row = [&](const char* name, const MetricSummary& s) {
    os << name << ',' << format_number(s.mean) << ',' << format_number(s.sd) << ',' << s.n << ','
       << s.missing << '\n';
  };
  row("win_stay", c.win_stay);
  row("lose_shift", c.lose_shift);
  row("perseveration", c.perseveration);
  row("post_reversal_regret", c.post_reversal_regret);
  row("switch_latency", c.switch_latency);
  row("total_wins", c.total_wins);
}

inline void write_curve_csv(std::ostream& os, const AlignedCurve& c) {
  os << "offset,mean,n\n";
  for (std::size_t i = 0; i < c.offsets.size(); ++i)
    os << c.offsets[i] << ',' << format_number(c.mean[i]) << ',' << c.n[i] << '\n';
}

}  // namespace revlearn
