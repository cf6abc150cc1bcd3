#pragma once

#include <algorithm>
#include <cmath>
#include <utility>

#include "ventlab/core.hpp"

namespace ventlab {

// Single-compartment test lung driven through a proportional inflow valve
// with first-order lag. Serves as ground truth: it generates training data
// and is the final judge of every controller.
struct LungParams {
  double r = 5.0;           // airway resistance, cmH2O/(L/s)
  double c = 50.0;          // compliance, mL/cmH2O
  double peep = 5.0;        // cmH2O
  double p_supply = 60.0;   // supply pressure, cmH2O
  double q_max = 2.0;       // inflow at full valve opening, L/s
  double tau_valve = 0.08;  // valve time constant, s
  double k_leak = 0.005;    // inspiratory leak, L/(s*cmH2O)
  double k_dump = 0.5;      // expiratory dump valve, L/(s*cmH2O)
  double noise_sigma = 0.1; // pressure sensor noise std, cmH2O

  void validate() const {
    if (!(r > 0.0)) throw ConfigError("LungParams: r must be > 0");
    if (!(c > 0.0)) throw ConfigError("LungParams: c must be > 0");
    if (!(q_max > 0.0)) throw ConfigError("LungParams: q_max must be > 0");
    if (!(tau_valve > 0.0)) throw ConfigError("LungParams: tau_valve must be > 0");
    if (!(peep >= 0.0)) throw ConfigError("LungParams: peep must be >= 0");
    if (!(p_supply > peep)) throw ConfigError("LungParams: p_supply must exceed peep");
    if (k_leak < 0.0 || k_dump < 0.0) throw ConfigError("LungParams: leak coefficients must be >= 0");
    if (noise_sigma < 0.0) throw ConfigError("LungParams: noise_sigma must be >= 0");
  }
};

struct LungState {
  double volume = 0.0;     // mL above functional residual volume
  double valve_pos = 0.0;  // actual opening in [0, 1]
  double last_flow = 0.0;  // net flow, L/s
};

class Lung {
 public:
  explicit Lung(LungParams params) : p_(params) { p_.validate(); }

  const LungParams& params() const { return p_; }

  LungState reset() const { return LungState{}; }

  double alveolar_pressure(const LungState& s) const {
    return s.volume / p_.c + p_.peep;
  }

  // Sensor reading without advancing the plant (used at reset).
  double observe(const LungState& s, Rng& rng) const {
    double p = alveolar_pressure(s);
    if (p_.noise_sigma > 0.0) p += rng.normal(0.0, p_.noise_sigma);
    return p;
  }

  // One inspiratory step. Advances the state in place and returns the
  // measured airway pressure (alveolar plus resistive drop plus noise).
  double step(LungState& s, double u, double dt, Rng& rng) const {
    if (!(u >= 0.0 && u <= kUMax)) throw ConfigError("Lung::step: control outside [0, u_max]");
    if (!(dt > 0.0)) throw ConfigError("Lung::step: dt must be > 0");

    s.valve_pos = std::clamp(
        s.valve_pos + dt * ((u / kUMax) - s.valve_pos) / p_.tau_valve, 0.0, 1.0);

    const double p_alv = alveolar_pressure(s);
    const double q_in =
        s.valve_pos * p_.q_max * std::max(0.0, p_.p_supply - p_alv) / p_.p_supply;
    const double q_out = p_.k_leak * std::max(0.0, p_alv - p_.peep);

    s.volume = std::max(0.0, s.volume + dt * 1000.0 * (q_in - q_out));
    s.last_flow = q_in - q_out;

    double p = alveolar_pressure(s) + p_.r * (q_in - q_out);
    if (p_.noise_sigma > 0.0) p += rng.normal(0.0, p_.noise_sigma);
    if (!std::isfinite(p) || !std::isfinite(s.volume))
      throw NumericFault("Lung::step: state diverged, check plant parameters");
    return p;
  }

  // One expiratory step: inflow valve commanded shut, dump valve open.
  // The dump valve vents the circuit, so the sensor tracks the decaying
  // alveolar pressure back down to peep.
  double step_expiratory(LungState& s, double dt, Rng& rng) const {
    s.valve_pos = std::clamp(s.valve_pos - dt * s.valve_pos / p_.tau_valve, 0.0, 1.0);

    const double p_alv = alveolar_pressure(s);
    const double q_in =
        s.valve_pos * p_.q_max * std::max(0.0, p_.p_supply - p_alv) / p_.p_supply;
    const double q_out = p_.k_dump * std::max(0.0, p_alv - p_.peep);

    s.volume = std::max(0.0, s.volume + dt * 1000.0 * (q_in - q_out));
    s.last_flow = q_in - q_out;

    double p = alveolar_pressure(s);
    if (p_.noise_sigma > 0.0) p += rng.normal(0.0, p_.noise_sigma);
    if (!std::isfinite(p) || !std::isfinite(s.volume))
      throw NumericFault("Lung::step_expiratory: state diverged");
    return p;
  }

 private:
  LungParams p_;
};

struct Rollout {
  PressureTrace pressures;
  ControlTrace controls;
};

// Closed-loop run over whole breaths. The policy callback sees the step
// index within the breath and the pressure observed before acting; it is
// only consulted on inspiratory steps, expiration forces the valve shut.
// Index t of the traces records (observation, control) at step t; the
// response to controls[t] lands at index t+1.
template <class PolicyFn>
Rollout rollout(const Lung& lung, PolicyFn&& policy, const TimeGrid& grid,
                int n_breaths, Rng& rng) {
  grid.validate();
  if (n_breaths < 0) throw ConfigError("rollout: n_breaths must be >= 0");

  Rollout out;
  out.pressures.grid = grid;
  out.controls.grid = grid;
  const size_t total = static_cast<size_t>(n_breaths) * grid.steps_per_breath;
  out.pressures.values.reserve(total);
  out.controls.values.reserve(total);

  LungState state = lung.reset();
  double p_obs = lung.observe(state, rng);
  for (int b = 0; b < n_breaths; ++b) {
    for (int t = 0; t < grid.steps_per_breath; ++t) {
      double u = 0.0;
      if (t < grid.insp_steps) u = std::clamp(policy(t, p_obs), 0.0, kUMax);
      out.pressures.values.push_back(p_obs);
      out.controls.values.push_back(u);
      p_obs = (t < grid.insp_steps) ? lung.step(state, u, grid.dt, rng)
                                    : lung.step_expiratory(state, grid.dt, rng);
    }
  }
  return out;
}

// Replays a recorded control trace through the plant (same phase handling
// as the closed-loop version; expiratory controls are forced to zero).
inline Rollout rollout(const Lung& lung, const ControlTrace& controls, Rng& rng) {
  controls.validate();
  const TimeGrid& grid = controls.grid;
  if (controls.values.size() % static_cast<size_t>(grid.steps_per_breath) != 0)
    throw ConfigError("rollout: control trace is not a whole number of breaths");
  const int n_breaths =
      static_cast<int>(controls.values.size()) / grid.steps_per_breath;
  Rollout out;
  out.pressures.grid = grid;
  out.controls.grid = grid;
  out.pressures.values.reserve(controls.values.size());
  out.controls.values.reserve(controls.values.size());

  LungState state = lung.reset();
  double p_obs = lung.observe(state, rng);
  size_t i = 0;
  for (int b = 0; b < n_breaths; ++b) {
    for (int t = 0; t < grid.steps_per_breath; ++t, ++i) {
      const double u = (t < grid.insp_steps) ? controls.values[i] : 0.0;
      out.pressures.values.push_back(p_obs);
      out.controls.values.push_back(u);
      p_obs = (t < grid.insp_steps) ? lung.step(state, u, grid.dt, rng)
                                    : lung.step_expiratory(state, grid.dt, rng);
    }
  }
  return out;
}

}  // namespace ventlab
