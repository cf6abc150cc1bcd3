#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <memory>
#include <optional>
#include <vector>

#include "ventlab/nn.hpp"
#include "ventlab/waveform.hpp"

namespace ventlab {

// Discrete PID on the tracking error, clamped to the valve range. The
// integral term sums at most `window` recent errors; state is reset at the
// start of every breath, so within one inspiratory phase nothing is evicted
// at the default window.
struct PidCoeffs {
  double alpha = 2.0;  // proportional
  double beta = 0.5;   // integral (per-step sum)
  double gamma = 0.0;  // derivative (per-step difference)
  int window = 40;

  void validate() const {
    if (window < 1) throw ConfigError("PidCoeffs: window must be >= 1");
    require_finite(alpha, "alpha");
    require_finite(beta, "beta");
    require_finite(gamma, "gamma");
  }
};

struct PidState {
  std::vector<double> errors;  // newest last, at most `window` entries
  double prev_err = 0.0;
  bool has_prev = false;

  void reset() {
    errors.clear();
    prev_err = 0.0;
    has_prev = false;
  }
};

inline double pid_control(PidState& st, const PidCoeffs& c, double target, double p_obs) {
  const double err = target - p_obs;
  st.errors.push_back(err);
  if (static_cast<int>(st.errors.size()) > c.window) st.errors.erase(st.errors.begin());
  double sum = 0.0;
  for (double e : st.errors) sum += e;
  const double deriv = st.has_prev ? err - st.prev_err : 0.0;
  st.prev_err = err;
  st.has_prev = true;
  return std::clamp(c.alpha * err + c.beta * sum + c.gamma * deriv, 0.0, kUMax);
}

// Input layout for the correction net: the last h_f tracking errors and the
// last h_f pressures (oldest first), then the scaled target and the phase
// within the inspiration. Errors before the breath are 0 and pressures are
// the first observed value, matching how training rollouts are seeded.
struct FeatureSpec {
  int h_f = 5;
  double err_scale = 10.0;
  double p_scale = 30.0;
  double p_ref = 5.0;  // usually peep

  int feature_count() const { return 2 * h_f + 2; }

  void validate() const {
    if (h_f < 1) throw ConfigError("FeatureSpec: h_f must be >= 1");
    if (!(err_scale > 0.0) || !(p_scale > 0.0))
      throw ConfigError("FeatureSpec: scales must be > 0");
  }
};

struct FeatureState {
  std::vector<double> errors, pressures;  // newest last, at most h_f entries
  double boot = 0.0;
  bool booted = false;

  void reset() {
    errors.clear();
    pressures.clear();
    boot = 0.0;
    booted = false;
  }
};

inline std::vector<double> assemble_features(FeatureState& st, const FeatureSpec& spec,
                                             double target, double p_obs, int t,
                                             int insp_steps) {
  if (!st.booted) {
    st.boot = p_obs;
    st.booted = true;
  }
  st.errors.push_back(target - p_obs);
  st.pressures.push_back(p_obs);
  if (static_cast<int>(st.errors.size()) > spec.h_f) {
    st.errors.erase(st.errors.begin());
    st.pressures.erase(st.pressures.begin());
  }
  std::vector<double> f;
  f.reserve(spec.feature_count());
  const int have = static_cast<int>(st.errors.size());
  for (int i = 0; i < spec.h_f; ++i) {
    const int idx = have - spec.h_f + i;
    f.push_back((idx >= 0 ? st.errors[idx] : 0.0) / spec.err_scale);
  }
  for (int i = 0; i < spec.h_f; ++i) {
    const int idx = have - spec.h_f + i;
    f.push_back(((idx >= 0 ? st.pressures[idx] : st.boot) - spec.p_ref) / spec.p_scale);
  }
  f.push_back((target - spec.p_ref) / spec.p_scale);
  f.push_back(static_cast<double>(t) / insp_steps);
  return f;
}

// PID plus an optional learned correction. The correction is squashed by
// tanh and scaled by lambda * u_max / 2, so its authority over the PID
// command is hard-limited no matter what the net outputs.
struct Policy {
  PidCoeffs pid;
  double lambda = 0.2;
  FeatureSpec feat;
  std::optional<Mlp> correction;

  void validate() const {
    pid.validate();
    feat.validate();
    require_finite(lambda, "lambda");
    if (lambda < 0.0) throw ConfigError("Policy: lambda must be >= 0");
    if (correction) correction->validate();
    if (correction && correction->dims.front() != feat.feature_count())
      throw ConfigError("Policy: correction input dim must match feature count");
    if (correction && correction->dims.back() != 1)
      throw ConfigError("Policy: correction must have one output");
  }
};

struct PolicyState {
  PidState pid;
  FeatureState feat;

  void reset() {
    pid.reset();
    feat.reset();
  }
};

inline double residual_control(PolicyState& st, const Policy& policy, double target,
                               double p_obs, int t, int insp_steps) {
  const double u_pid = pid_control(st.pid, policy.pid, target, p_obs);
  if (!policy.correction) return u_pid;
  auto f = assemble_features(st.feat, policy.feat, target, p_obs, t, insp_steps);
  const double raw = policy.correction->forward(f)[0];
  const double cap = policy.lambda * (kUMax / 2.0);
  const double delta = policy.lambda * std::tanh(raw) * (kUMax / 2.0);
  double u = u_pid + delta;
  // |delta| <= cap holds exactly, but rounding the sum to nearest can leak
  // up to half an ulp past the authority cap when tanh saturates; step back
  // inside so the hard limit survives in floating point
  while (std::fabs(u - u_pid) > cap) u = std::nextafter(u, u_pid);
  return std::clamp(u, 0.0, kUMax);
}

// Per-breath controller closure for rollout(): resets its state whenever the
// breath wraps to step 0.
inline std::function<double(int, double)> make_breath_controller(
    const Policy& policy, const TargetWaveform& target) {
  auto state = std::make_shared<PolicyState>();
  const int insp_steps = target.grid.insp_steps;
  return [state, policy, target, insp_steps](int t, double p_obs) {
    if (t == 0) state->reset();
    return residual_control(*state, policy, target.at(t), p_obs, t, insp_steps);
  };
}

}  // namespace ventlab
