#pragma once

#include <functional>
#include <limits>
#include <utility>
#include <vector>

#include "ventlab/dataset.hpp"
#include "ventlab/explore.hpp"
#include "ventlab/nn.hpp"

namespace ventlab {

// Learned one-step model of inspiratory dynamics: the last H_c+1 controls
// and H_p+1 pressures predict the next pressure. Normalization constants are
// baked in from the training split; boot seeds histories when rolling the
// model from the start of a breath.
struct SimModel {
  Mlp net;
  int h_c = 10;
  int h_p = 10;
  Normalization norm;
  double boot = 5.0;

  void validate() const {
    net.validate();
    if (h_c < 1 || h_p < 1) throw ConfigError("SimModel: history lengths must be >= 1");
    if (net.dims.front() != h_c + h_p + 2)
      throw ConfigError("SimModel: net input does not match the history windows");
    if (net.dims.back() != 1) throw ConfigError("SimModel: net must have one output");
    if (norm.feat_mean.size() != static_cast<size_t>(net.dims.front()) ||
        norm.feat_scale.size() != norm.feat_mean.size())
      throw ConfigError("SimModel: normalization size does not match the net input");
    for (double s : norm.feat_scale)
      if (!(s > 0.0)) throw ConfigError("SimModel: feature scales must be > 0");
    if (!(norm.label_scale > 0.0)) throw ConfigError("SimModel: label scale must be > 0");
    require_finite(boot, "SimModel boot pressure");
  }

  double step(const std::vector<double>& u_hist, const std::vector<double>& p_hist) const {
    if (static_cast<int>(u_hist.size()) != h_c + 1 ||
        static_cast<int>(p_hist.size()) != h_p + 1)
      throw ConfigError("SimModel::step: history length mismatch");
    HistoryWindow w;
    w.controls = u_hist;
    w.pressures = p_hist;
    const double z = net.forward(norm.features(w))[0];
    return norm.to_pressure(z, p_hist.back());
  }
};

// Normalization constants addressed as tape nodes, so one unroll graph can
// serve several models by rewriting leaf values.
struct SimNormNodes {
  std::vector<Tape::Idx> feat_mean, feat_inv_scale;
  Tape::Idx label_mean = -1, label_scale = -1;
  bool delta = true;
};

// Tape version of SimModel::step over window nodes (oldest first). Pushes
// in-graph normalization, the net, and the label de-transform; returns the
// next-pressure node. Used by the policy unroll.
inline Tape::Idx sim_step_tape(Tape& tape, Tape::Idx sim_pstart, const std::vector<int>& dims,
                               const SimNormNodes& nn, const std::vector<Tape::Idx>& u_window,
                               const std::vector<Tape::Idx>& p_window) {
  std::vector<Tape::Idx> raw;
  raw.reserve(u_window.size() + p_window.size());
  raw.insert(raw.end(), u_window.begin(), u_window.end());
  raw.insert(raw.end(), p_window.begin(), p_window.end());
  if (raw.size() != nn.feat_mean.size() || raw.size() != nn.feat_inv_scale.size())
    throw ConfigError("sim_step_tape: window length mismatch");

  std::vector<Tape::Idx> scaled(raw.size());
  for (size_t i = 0; i < raw.size(); ++i)
    scaled[i] = tape.mul(tape.sub(raw[i], nn.feat_mean[i]), nn.feat_inv_scale[i]);
  Tape::Idx f0 = tape.size();
  for (size_t i = 0; i < raw.size(); ++i) tape.copy(scaled[i]);

  Tape::Idx z = Mlp::build(tape, sim_pstart, dims, f0);
  Tape::Idx shifted = tape.add(tape.mul(z, nn.label_scale), nn.label_mean);
  return nn.delta ? tape.add(p_window.back(), shifted) : shifted;
}

// Convenience overload with the model's own constants baked in.
inline Tape::Idx sim_step_tape(Tape& tape, Tape::Idx sim_pstart, const SimModel& sim,
                               const std::vector<Tape::Idx>& u_window,
                               const std::vector<Tape::Idx>& p_window) {
  if (static_cast<int>(u_window.size()) != sim.h_c + 1 ||
      static_cast<int>(p_window.size()) != sim.h_p + 1)
    throw ConfigError("sim_step_tape: window length mismatch");
  SimNormNodes nn;
  nn.delta = sim.norm.delta;
  for (size_t i = 0; i < sim.norm.feat_mean.size(); ++i) {
    nn.feat_mean.push_back(tape.constant(sim.norm.feat_mean[i]));
    nn.feat_inv_scale.push_back(tape.constant(1.0 / sim.norm.feat_scale[i]));
  }
  nn.label_mean = tape.constant(sim.norm.label_mean);
  nn.label_scale = tape.constant(sim.norm.label_scale);
  return sim_step_tape(tape, sim_pstart, sim.net.dims, nn, u_window, p_window);
}

struct SimTrainOpts {
  int epochs = 200;
  double lr = 1e-3;
  int batch = 256;
  std::vector<int> hidden = {64, 64};
  uint64_t seed = 0;
};

struct SimTrainResult {
  SimModel model;  // parameters from the best validation epoch
  std::vector<double> train_curve, val_curve;  // per-epoch MSE, normalized units
  int best_epoch = 0;
};

namespace detail {

inline double mean_sq_err(const Mlp& net, const RegressionSet& set) {
  double acc = 0.0;
  for (const auto& w : set.windows) {
    const double r = net.forward(set.norm.features(w))[0] - set.norm.target(w);
    acc += r * r;
  }
  return acc / static_cast<double>(set.windows.size());
}

}  // namespace detail

// Minibatch Adam on normalized squared error. One static tape serves every
// sample: leaves are refreshed, forward recomputes, backward accumulates
// into the parameter block. Checkpoint selection is by validation MSE.
inline SimTrainResult train_sim(const RegressionSet& train, const RegressionSet& val,
                                const SimTrainOpts& opts, double boot) {
  if (train.windows.empty() || val.windows.empty())
    throw ConfigError("train_sim: empty train or validation split");
  if (opts.epochs < 1 || opts.batch < 1 || !(opts.lr > 0.0))
    throw ConfigError("train_sim: bad epochs/batch/lr");
  const int n_in = (train.h_c + 1) + (train.h_p + 1);
  std::vector<int> dims;
  dims.push_back(n_in);
  for (int h : opts.hidden) dims.push_back(h);
  dims.push_back(1);

  Rng init_rng = derive_rng(opts.seed, "sim-init");
  Mlp net = Mlp::create(dims, init_rng);
  Rng shuffle_rng = derive_rng(opts.seed, "sim-shuffle");

  // precompute normalized features and targets once
  const size_t n = train.windows.size();
  std::vector<double> feats(n * n_in), targets(n);
  for (size_t i = 0; i < n; ++i) {
    auto f = train.norm.features(train.windows[i]);
    std::copy(f.begin(), f.end(), feats.begin() + i * n_in);
    targets[i] = train.norm.target(train.windows[i]);
  }

  Tape tape;
  Tape::Idx p0 = net.push_params(tape);
  Tape::Idx x0 = tape.leaf_block(n_in);
  Tape::Idx y = tape.leaf(0.0);
  Tape::Idx out = Mlp::build(tape, p0, dims, x0 /* inputs already contiguous */);
  Tape::Idx r = tape.sub(out, y);
  Tape::Idx loss = tape.mul(r, r);

  Adam adam(net.params.size(), opts.lr);
  std::vector<double> grad(net.params.size());
  std::vector<size_t> order(n);
  for (size_t i = 0; i < n; ++i) order[i] = i;

  SimTrainResult res;
  res.model.h_c = train.h_c;
  res.model.h_p = train.h_p;
  res.model.norm = train.norm;
  res.model.boot = boot;
  double best_val = std::numeric_limits<double>::infinity();

  for (int epoch = 0; epoch < opts.epochs; ++epoch) {
    for (size_t i = n - 1; i > 0; --i)
      std::swap(order[i], order[shuffle_rng.index(i + 1)]);
    double run_loss = 0.0;
    for (size_t start = 0; start < n; start += opts.batch) {
      const size_t stop = std::min(n, start + opts.batch);
      tape.zero_adjoints(0, x0);
      for (size_t k = start; k < stop; ++k) {
        const size_t s = order[k];
        for (int j = 0; j < n_in; ++j) tape.set_value(x0 + j, feats[s * n_in + j]);
        tape.set_value(y, targets[s]);
        tape.forward(x0 + n_in + 1);
        tape.backward(loss, x0);
        run_loss += tape.value(loss);
      }
      const double inv = 1.0 / static_cast<double>(stop - start);
      for (size_t j = 0; j < grad.size(); ++j)
        grad[j] = tape.adjoint(p0 + static_cast<Tape::Idx>(j)) * inv;
      adam.step(net.params, grad);
      net.write_params(tape, p0);
    }
    const double train_mse = run_loss / static_cast<double>(n);
    const double val_mse = detail::mean_sq_err(net, val);
    require_finite(train_mse, "train loss");
    require_finite(val_mse, "validation loss");
    res.train_curve.push_back(train_mse);
    res.val_curve.push_back(val_mse);
    if (val_mse < best_val) {
      best_val = val_mse;
      res.best_epoch = epoch;
      res.model.net = net;
    }
  }
  return res;
}

// Plant adapters sharing the shape reset() / step(u) -> next pressure, for
// the open-loop comparison below.

class LungPlant {
 public:
  LungPlant(LungParams params, const TimeGrid& grid, bool noise_free = true)
      : lung_(noise_free ? strip_noise(params) : params), dt_(grid.dt), rng_(0) {
    state_ = lung_.reset();
  }

  void reset(uint64_t noise_seed = 0) {
    state_ = lung_.reset();
    rng_ = Rng(noise_seed);
  }

  double step(double u) { return lung_.step(state_, u, dt_, rng_); }

 private:
  static LungParams strip_noise(LungParams p) {
    p.noise_sigma = 0.0;
    return p;
  }

  Lung lung_;
  LungState state_;
  double dt_;
  Rng rng_;
};

// Rolls the learned model forward keeping its own history windows, padded
// with the first value exactly as the training windows were.
class SimPlant {
 public:
  explicit SimPlant(const SimModel& model) : model_(&model) {}

  void reset() {
    us_.clear();
    ps_.assign(1, model_->boot);
  }

  double step(double u) {
    us_.push_back(u);
    std::vector<double> uw(model_->h_c + 1), pw(model_->h_p + 1);
    const int ku = static_cast<int>(us_.size()) - 1;  // index of current control
    for (int i = 0; i <= model_->h_c; ++i)
      uw[i] = us_[std::max(0, ku - model_->h_c + i)];
    const int kp = static_cast<int>(ps_.size()) - 1;
    for (int i = 0; i <= model_->h_p; ++i)
      pw[i] = ps_[std::max(0, kp - model_->h_p + i)];
    const double p = model_->step(uw, pw);
    require_finite(p, "simulated pressure");
    ps_.push_back(p);
    return p;
  }

 private:
  const SimModel* model_;
  std::vector<double> us_, ps_;
};

class ConstPlant {
 public:
  explicit ConstPlant(double c) : c_(c) {}
  void reset() {}
  double step(double) { return c_; }

 private:
  double c_;
};

// Expected summed pressure gap between two plants fed identical control
// sequences, each evolving its own state from reset. The distribution draws
// one control sequence per sample.
template <class P1, class P2, class D>
double open_loop_distance(P1& f1, P2& f2, D&& draw_controls, int n_samples, int T,
                          Rng& rng) {
  if (n_samples < 1 || T < 1) throw ConfigError("open_loop_distance: bad sample count/horizon");
  double acc = 0.0;
  for (int s = 0; s < n_samples; ++s) {
    const std::vector<double> us = draw_controls(s, rng);
    if (static_cast<int>(us.size()) < T)
      throw ConfigError("open_loop_distance: control sequence shorter than horizon");
    f1.reset();
    f2.reset();
    double d = 0.0;
    for (int t = 0; t < T; ++t) d += std::fabs(f1.step(us[t]) - f2.step(us[t]));
    acc += d;
  }
  return acc / static_cast<double>(n_samples);
}

// Held-out control distribution: the same perturbed-PID closed loop used
// for data collection, run on a private noisy oracle, with the recorded
// commands replayed open-loop into the plants under comparison.
inline std::function<std::vector<double>(int, Rng&)> perturbed_pid_distribution(
    const LungParams& params, const ExploreConfig& cfg,
    const std::vector<TargetWaveform>& suite, const TimeGrid& grid) {
  if (suite.empty()) throw ConfigError("perturbed_pid_distribution: empty suite");
  Lung lung(params);
  return [lung, cfg, suite, grid](int sample, Rng& rng) {
    const TargetWaveform& w = suite[sample % suite.size()];
    const bool use_boundary = rng.bernoulli(cfg.p_a);
    const std::vector<double> pert = use_boundary ? boundary_perturbation(cfg, grid, rng)
                                                  : triangular_perturbation(cfg, grid, rng);
    LungState state = lung.reset();
    double p_obs = lung.observe(state, rng);
    PidState pid;
    std::vector<double> us(grid.insp_steps);
    for (int t = 0; t < grid.insp_steps; ++t) {
      const double u =
          std::clamp(pid_control(pid, cfg.base_pid, w.at(t), p_obs) + pert[t], 0.0, kUMax);
      us[t] = u;
      p_obs = lung.step(state, u, grid.dt, rng);
    }
    return us;
  };
}

}  // namespace ventlab
