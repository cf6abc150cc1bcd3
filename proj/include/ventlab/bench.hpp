#pragma once

#include <algorithm>
#include <string>
#include <vector>

#include "ventlab/control.hpp"
#include "ventlab/lung.hpp"

namespace ventlab {

// L1 tracking benchmark: per-breath mean absolute error against the target
// over the inspiratory steps, averaged over breaths, then over waveforms.
struct Score {
  std::vector<double> per_waveform;
  double overall = 0.0;
  int n_breaths = 0;
};

struct BenchOpts {
  int n_breaths = 10;
  uint64_t seed = 0;

  void validate() const {
    if (n_breaths < 1) throw ConfigError("BenchOpts: n_breaths must be >= 1");
  }
};

inline double phase_mae(const Episode& ep, const TargetWaveform& w) {
  const int T = w.grid.insp_steps;
  if (static_cast<int>(ep.pressures.size()) < T)
    throw ConfigError("phase_mae: episode shorter than the inspiratory phase");
  double acc = 0.0;
  for (int t = 0; t < T; ++t) acc += std::abs(ep.pressures[t] - w.at(t));
  return acc / T;
}

// One scored waveform with its full closed-loop traces kept for reporting.
struct WaveformRun {
  Rollout rollout;
  std::vector<double> breath_mae;
  double mae = 0.0;
};

struct BenchRun {
  std::vector<WaveformRun> runs;
  Score score;
};

// Runs the policy against the plant over the whole suite. Each waveform slot
// gets its own derived noise stream, so under one seed every candidate policy
// faces the identical disturbance sequence (paired comparison).
inline BenchRun bench_run(const Policy& policy, const LungParams& params,
                          const std::vector<TargetWaveform>& suite, const TimeGrid& grid,
                          const BenchOpts& opts) {
  policy.validate();
  grid.validate();
  opts.validate();
  if (suite.empty()) throw ConfigError("bench_run: empty waveform suite");

  BenchRun out;
  out.score.n_breaths = opts.n_breaths;
  for (size_t wi = 0; wi < suite.size(); ++wi) {
    suite[wi].validate();
    Lung lung(params);
    Rng rng = derive_rng(opts.seed, "score-" + std::to_string(wi));
    auto controller = make_breath_controller(policy, suite[wi]);
    WaveformRun run;
    run.rollout = rollout(lung, controller, grid, opts.n_breaths, rng);
    auto episodes = split_breath(run.rollout.pressures, run.rollout.controls, grid);
    double acc = 0.0;
    for (const Episode& ep : episodes) {
      run.breath_mae.push_back(phase_mae(ep, suite[wi]));
      acc += run.breath_mae.back();
    }
    run.mae = acc / episodes.size();
    out.score.per_waveform.push_back(run.mae);
    out.runs.push_back(std::move(run));
  }
  double acc = 0.0;
  for (double v : out.score.per_waveform) acc += v;
  out.score.overall = acc / out.score.per_waveform.size();
  return out;
}

inline Score score(const Policy& policy, const LungParams& params,
                   const std::vector<TargetWaveform>& suite, const TimeGrid& grid,
                   const BenchOpts& opts) {
  return bench_run(policy, params, suite, grid, opts).score;
}

// Exhaustive PID baseline search over a coefficient grid.
struct GridSpec {
  std::vector<double> p = {0.0, 0.5, 1.0, 2.0, 4.0, 8.0};
  std::vector<double> i = {0.0, 0.25, 0.5, 1.0, 2.0};
  std::vector<double> d = {0.0, 0.1, 0.5, 1.0};
  int window = 40;

  void validate() const {
    if (p.empty() || i.empty() || d.empty()) throw ConfigError("GridSpec: empty axis");
    for (double v : p) require_finite(v, "grid p");
    for (double v : i) require_finite(v, "grid i");
    for (double v : d) require_finite(v, "grid d");
    if (window < 1) throw ConfigError("GridSpec: window must be >= 1");
  }
};

struct GridEntry {
  PidCoeffs pid;
  double overall = 0.0;
  std::vector<double> per_waveform;
};

struct GridResult {
  std::vector<GridEntry> leaderboard;  // sorted by score, ties keep scan order
  PidCoeffs best;
  Score best_score;
};

// Scans the grid in lexicographic (p, i, d) order with a strict less-than
// winner, so equal scores resolve to the first triple in scan order no
// matter how the axes were given. Axes are sorted and deduplicated first.
inline GridResult grid_search_pid(const GridSpec& spec, const LungParams& params,
                                  const std::vector<TargetWaveform>& suite,
                                  const TimeGrid& grid, const BenchOpts& opts) {
  spec.validate();
  auto normalized = [](std::vector<double> v) {
    std::sort(v.begin(), v.end());
    v.erase(std::unique(v.begin(), v.end()), v.end());
    return v;
  };
  const auto ps = normalized(spec.p);
  const auto is = normalized(spec.i);
  const auto ds = normalized(spec.d);

  GridResult out;
  out.leaderboard.reserve(ps.size() * is.size() * ds.size());
  size_t best = 0;
  for (double p : ps)
    for (double i : is)
      for (double d : ds) {
        Policy pol;
        pol.pid = PidCoeffs{p, i, d, spec.window};
        const Score s = score(pol, params, suite, grid, opts);
        out.leaderboard.push_back(GridEntry{pol.pid, s.overall, s.per_waveform});
        if (s.overall < out.leaderboard[best].overall) best = out.leaderboard.size() - 1;
      }
  out.best = out.leaderboard[best].pid;
  out.best_score.per_waveform = out.leaderboard[best].per_waveform;
  out.best_score.overall = out.leaderboard[best].overall;
  out.best_score.n_breaths = opts.n_breaths;
  std::stable_sort(out.leaderboard.begin(), out.leaderboard.end(),
                   [](const GridEntry& a, const GridEntry& b) { return a.overall < b.overall; });
  return out;
}

}  // namespace ventlab
