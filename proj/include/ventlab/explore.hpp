#pragma once

#include <vector>

#include "ventlab/control.hpp"
#include "ventlab/lung.hpp"

namespace ventlab {

// Safe exploration around a known-good PID: each breath adds one of two
// perturbation shapes to the closed-loop command. Policy (a) kicks hardest
// at the start of the breath and decays; policy (b) is a triangle bump at a
// random interior interval, aimed at exciting the valve lag mid-breath.
struct ExploreConfig {
  PidCoeffs base_pid{2.0, 0.5, 0.0, 40};
  double c_a_min = 0.0, c_a_max = 40.0;  // boundary amplitude range
  double t_a_min = 5.0, t_a_max = 20.0;  // boundary decay duration, steps
  double c_b_min = 0.0, c_b_max = 30.0;  // triangle peak range
  double t_b_min = 5.0, t_b_max = 35.0;  // triangle interval bounds, steps
  double p_a = 0.5;                      // probability of the boundary policy

  void validate(const TimeGrid& grid) const {
    base_pid.validate();
    if (c_a_min < 0.0 || c_a_max < c_a_min) throw ConfigError("ExploreConfig: bad c_a range");
    if (c_b_min < 0.0 || c_b_max < c_b_min) throw ConfigError("ExploreConfig: bad c_b range");
    if (t_a_min < 0.0 || t_a_max < t_a_min) throw ConfigError("ExploreConfig: bad t_a range");
    if (t_b_min < 0.0 || t_b_max < t_b_min) throw ConfigError("ExploreConfig: bad t_b range");
    if (p_a < 0.0 || p_a > 1.0) throw ConfigError("ExploreConfig: p_a must be in [0, 1]");
    if (t_a_max > grid.insp_steps || t_b_max > grid.insp_steps)
      throw ConfigError("ExploreConfig: perturbation windows exceed the inspiratory phase");
  }
};

// amplitude c decaying linearly to zero over d steps: c * max(0, 1 - t/d)
inline std::vector<double> boundary_kernel(double c, double d, int insp_steps) {
  std::vector<double> k(insp_steps, 0.0);
  if (d <= 0.0) return k;
  for (int t = 0; t < insp_steps; ++t)
    k[t] = c * std::max(0.0, 1.0 - static_cast<double>(t) / d);
  return k;
}

// triangle rising 0 -> c over [s, m] and falling back to 0 at e, m = (s+e)/2
inline std::vector<double> triangle_kernel(double c, double s, double e, int insp_steps) {
  std::vector<double> k(insp_steps, 0.0);
  const double m = 0.5 * (s + e);
  if (!(e > s)) return k;
  for (int t = 0; t < insp_steps; ++t) {
    const double x = static_cast<double>(t);
    if (x <= s || x >= e) continue;
    k[t] = (x <= m) ? c * (x - s) / (m - s) : c * (e - x) / (e - m);
  }
  return k;
}

inline std::vector<double> boundary_perturbation(const ExploreConfig& cfg,
                                                 const TimeGrid& grid, Rng& rng) {
  const double c = rng.uniform(cfg.c_a_min, cfg.c_a_max);
  const double d = rng.uniform(cfg.t_a_min, cfg.t_a_max);
  return boundary_kernel(c, d, grid.insp_steps);
}

inline std::vector<double> triangular_perturbation(const ExploreConfig& cfg,
                                                   const TimeGrid& grid, Rng& rng) {
  const double c = rng.uniform(cfg.c_b_min, cfg.c_b_max);
  const double t1 = rng.uniform(cfg.t_b_min, cfg.t_b_max);
  const double t2 = rng.uniform(cfg.t_b_min, cfg.t_b_max);
  return triangle_kernel(c, std::min(t1, t2), std::max(t1, t2), grid.insp_steps);
}

struct CollectResult {
  Rollout traces;
  std::vector<int> waveform_index;  // per breath, into the suite
  int n_boundary = 0;
  int n_triangular = 0;
};

// Runs base_pid closed-loop on the plant, one suite waveform per breath in
// rotation, with a freshly sampled perturbation added to the command each
// breath. Draw order per breath: policy choice, kernel parameters, then the
// plant's noise stream.
inline CollectResult collect(const Lung& lung, const ExploreConfig& cfg,
                             const std::vector<TargetWaveform>& suite, int n_breaths,
                             const TimeGrid& grid, Rng& rng) {
  grid.validate();
  cfg.validate(grid);
  if (n_breaths < 1) throw ConfigError("collect: n_breaths must be >= 1");
  if (suite.empty()) throw ConfigError("collect: waveform suite is empty");
  for (const auto& w : suite) w.validate();

  CollectResult out;
  out.traces.pressures.grid = grid;
  out.traces.controls.grid = grid;
  const size_t total = static_cast<size_t>(n_breaths) * grid.steps_per_breath;
  out.traces.pressures.values.reserve(total);
  out.traces.controls.values.reserve(total);
  out.waveform_index.reserve(n_breaths);

  LungState state = lung.reset();
  double p_obs = lung.observe(state, rng);
  PidState pid;
  for (int b = 0; b < n_breaths; ++b) {
    const TargetWaveform& w = suite[b % suite.size()];
    const bool use_boundary = rng.bernoulli(cfg.p_a);
    const std::vector<double> pert = use_boundary ? boundary_perturbation(cfg, grid, rng)
                                                  : triangular_perturbation(cfg, grid, rng);
    if (use_boundary) ++out.n_boundary;
    else ++out.n_triangular;
    out.waveform_index.push_back(static_cast<int>(b % suite.size()));

    pid.reset();
    for (int t = 0; t < grid.steps_per_breath; ++t) {
      double u = 0.0;
      if (t < grid.insp_steps) {
        u = pid_control(pid, cfg.base_pid, w.at(t), p_obs);
        u = std::clamp(u + pert[t], 0.0, kUMax);
      }
      out.traces.pressures.values.push_back(p_obs);
      out.traces.controls.values.push_back(u);
      p_obs = (t < grid.insp_steps) ? lung.step(state, u, grid.dt, rng)
                                    : lung.step_expiratory(state, grid.dt, rng);
    }
  }
  return out;
}

}  // namespace ventlab
