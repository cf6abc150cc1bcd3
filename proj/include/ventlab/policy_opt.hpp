#pragma once

#include <algorithm>
#include <cmath>
#include <vector>

#include "ventlab/control.hpp"
#include "ventlab/sim.hpp"

namespace ventlab {

// What the controller trains against: one or more learned simulators (same
// architecture, different fitted weights) and the waveforms whose
// inspiratory phases it must track.
struct TrainObjective {
  std::vector<SimModel> sims;
  std::vector<TargetWaveform> waveforms;

  void validate() const {
    if (sims.empty()) throw ConfigError("TrainObjective: need at least one simulator");
    if (waveforms.empty()) throw ConfigError("TrainObjective: need at least one waveform");
    const SimModel& first = sims.front();
    for (const SimModel& s : sims) {
      if (s.net.dims != first.net.dims || s.h_c != first.h_c || s.h_p != first.h_p ||
          s.norm.delta != first.norm.delta)
        throw ConfigError("TrainObjective: simulators must share one architecture");
    }
    const int T = waveforms.front().grid.insp_steps;
    for (const TargetWaveform& w : waveforms) {
      w.validate();
      if (w.grid.insp_steps != T)
        throw ConfigError("TrainObjective: waveforms must share insp_steps");
    }
  }
};

// Value-only unroll of a policy through one learned simulator, computed with
// the ordinary runtime pieces. Loss is the mean absolute tracking error over
// the inspiratory steps; the first pressure is the simulator's boot value,
// so T steps score against T-1 issued controls.
struct UnrollEval {
  double loss = 0.0;
  std::vector<double> pressures, controls;
};

inline UnrollEval unroll(const Policy& policy, const SimModel& sim, const TargetWaveform& w) {
  policy.validate();
  w.validate();
  const int T = w.grid.insp_steps;
  SimPlant plant(sim);
  plant.reset();
  PolicyState st;
  st.reset();
  UnrollEval r;
  r.pressures.reserve(T);
  r.controls.reserve(T - 1);
  double p = sim.boot;
  double acc = 0.0;
  for (int t = 0; t < T; ++t) {
    r.pressures.push_back(p);
    acc += std::abs(p - w.at(t));
    if (t + 1 < T) {
      const double u = residual_control(st, policy, w.at(t), p, t, T);
      r.controls.push_back(u);
      p = plant.step(u);
    }
  }
  r.loss = acc / T;
  return r;
}

// One reusable autodiff graph of the whole inspiratory unroll. PID, learned
// correction, and simulator all live on the tape, so the loss gradient flows
// through the simulator dynamics and through the PID's reaction to them.
// Correction weights, simulator weights, normalization, boot pressure, and
// the per-step targets are leaves; training rewrites them term by term and
// reads gradients only from the correction block.
class UnrollGraph {
 public:
  UnrollGraph(const std::vector<int>& policy_dims, const FeatureSpec& feat,
              const PidCoeffs& pid, double lambda, const SimModel& proto, int insp_steps)
      : policy_dims_(policy_dims),
        sim_dims_(proto.net.dims),
        h_c_(proto.h_c),
        h_p_(proto.h_p),
        delta_(proto.norm.delta),
        T_(insp_steps) {
    feat.validate();
    pid.validate();
    if (T_ < 2) throw ConfigError("UnrollGraph: need at least two inspiratory steps");
    if (pid.window < T_)
      throw ConfigError("UnrollGraph: pid window shorter than the inspiratory phase");
    if (policy_dims_.front() != feat.feature_count() || policy_dims_.back() != 1)
      throw ConfigError("UnrollGraph: correction dims do not match the feature layout");
    if (lambda < 0.0) throw ConfigError("UnrollGraph: lambda must be >= 0");

    n_pol_ = Mlp::param_count(policy_dims_);
    n_sim_ = Mlp::param_count(sim_dims_);
    tape_.reserve(n_pol_ + n_sim_ + 50000);
    pol0_ = tape_.leaf_block(static_cast<int>(n_pol_));
    sim0_ = tape_.leaf_block(static_cast<int>(n_sim_));
    const int n_feat = h_c_ + 1 + h_p_ + 1;
    norm_.delta = delta_;
    for (int i = 0; i < n_feat; ++i) norm_.feat_mean.push_back(tape_.leaf(0.0));
    for (int i = 0; i < n_feat; ++i) norm_.feat_inv_scale.push_back(tape_.leaf(1.0));
    norm_.label_mean = tape_.leaf(0.0);
    norm_.label_scale = tape_.leaf(1.0);
    for (int t = 0; t < T_; ++t) targets_.push_back(tape_.leaf(0.0));
    boot_ = tape_.leaf(0.0);
    seg_ = tape_.size();

    const Tape::Idx zero = tape_.constant(0.0);
    const Tape::Idx c_alpha = tape_.constant(pid.alpha);
    const Tape::Idx c_beta = tape_.constant(pid.beta);
    const Tape::Idx c_gamma = tape_.constant(pid.gamma);
    const Tape::Idx c_inv_err = tape_.constant(1.0 / feat.err_scale);
    const Tape::Idx c_inv_p = tape_.constant(1.0 / feat.p_scale);
    const Tape::Idx c_pref = tape_.constant(feat.p_ref);
    const Tape::Idx c_lambda = tape_.constant(lambda);
    const Tape::Idx c_half_u = tape_.constant(kUMax / 2.0);

    std::vector<Tape::Idx> p_nodes, u_nodes, err_nodes;
    p_nodes.push_back(boot_);
    Tape::Idx err_sum = -1;
    for (int t = 0; t + 1 < T_; ++t) {
      const Tape::Idx err = tape_.sub(targets_[t], p_nodes[t]);
      err_nodes.push_back(err);
      err_sum = (t == 0) ? err : tape_.add(err_sum, err);
      const Tape::Idx deriv = (t == 0) ? zero : tape_.sub(err, err_nodes[t - 1]);
      const Tape::Idx u_pid = tape_.clamp(
          tape_.add(tape_.add(tape_.mul(c_alpha, err), tape_.mul(c_beta, err_sum)),
                    tape_.mul(c_gamma, deriv)),
          0.0, kUMax);

      std::vector<Tape::Idx> fv;
      for (int i = 0; i < feat.h_f; ++i) {
        const int j = t - feat.h_f + 1 + i;
        fv.push_back(j >= 0 ? tape_.mul(err_nodes[j], c_inv_err) : zero);
      }
      for (int i = 0; i < feat.h_f; ++i) {
        const int j = std::max(0, t - feat.h_f + 1 + i);
        fv.push_back(tape_.mul(tape_.sub(p_nodes[j], c_pref), c_inv_p));
      }
      fv.push_back(tape_.mul(tape_.sub(targets_[t], c_pref), c_inv_p));
      fv.push_back(tape_.constant(static_cast<double>(t) / T_));
      const Tape::Idx f0 = tape_.size();
      for (Tape::Idx v : fv) tape_.copy(v);

      const Tape::Idx raw = Mlp::build(tape_, pol0_, policy_dims_, f0);
      const Tape::Idx delta = tape_.mul(tape_.mul(c_lambda, tape_.tanh(raw)), c_half_u);
      const Tape::Idx u = tape_.clamp(tape_.add(u_pid, delta), 0.0, kUMax);
      u_nodes.push_back(u);

      std::vector<Tape::Idx> uw(h_c_ + 1), pw(h_p_ + 1);
      for (int i = 0; i <= h_c_; ++i) uw[i] = u_nodes[std::max(0, t - h_c_ + i)];
      for (int i = 0; i <= h_p_; ++i) pw[i] = p_nodes[std::max(0, t - h_p_ + i)];
      p_nodes.push_back(sim_step_tape(tape_, sim0_, sim_dims_, norm_, uw, pw));
    }

    Tape::Idx acc = -1;
    for (int t = 0; t < T_; ++t) {
      const Tape::Idx d = tape_.abs(tape_.sub(p_nodes[t], targets_[t]));
      acc = (t == 0) ? d : tape_.add(acc, d);
    }
    loss_ = tape_.mul(acc, tape_.constant(1.0 / T_));
    pressure_nodes_ = p_nodes;
    control_nodes_ = u_nodes;
  }

  void set_policy(const std::vector<double>& params) {
    if (params.size() != n_pol_) throw ConfigError("UnrollGraph: policy param size mismatch");
    for (size_t i = 0; i < params.size(); ++i)
      tape_.set_value(pol0_ + static_cast<Tape::Idx>(i), params[i]);
  }

  void set_sim(const SimModel& m) {
    if (m.net.dims != sim_dims_ || m.h_c != h_c_ || m.h_p != h_p_ || m.norm.delta != delta_)
      throw ConfigError("UnrollGraph: simulator does not match the graph architecture");
    if (m.net.params.size() != n_sim_)
      throw ConfigError("UnrollGraph: simulator param size mismatch");
    for (size_t i = 0; i < n_sim_; ++i)
      tape_.set_value(sim0_ + static_cast<Tape::Idx>(i), m.net.params[i]);
    for (size_t i = 0; i < norm_.feat_mean.size(); ++i) {
      tape_.set_value(norm_.feat_mean[i], m.norm.feat_mean[i]);
      tape_.set_value(norm_.feat_inv_scale[i], 1.0 / m.norm.feat_scale[i]);
    }
    tape_.set_value(norm_.label_mean, m.norm.label_mean);
    tape_.set_value(norm_.label_scale, m.norm.label_scale);
    tape_.set_value(boot_, m.boot);
  }

  void set_targets(const std::vector<double>& tv) {
    if (static_cast<int>(tv.size()) != T_)
      throw ConfigError("UnrollGraph: target length mismatch");
    for (int t = 0; t < T_; ++t) tape_.set_value(targets_[t], tv[t]);
  }

  void set_targets(const TargetWaveform& w) {
    if (w.grid.insp_steps != T_) throw ConfigError("UnrollGraph: waveform grid mismatch");
    std::vector<double> tv(T_);
    for (int t = 0; t < T_; ++t) tv[t] = w.at(t);
    set_targets(tv);
  }

  double forward() {
    tape_.forward(seg_);
    const double l = tape_.value(loss_);
    require_finite(l, "unroll loss");
    return l;
  }

  // Accumulates into the leaf adjoints; zero_grad() clears them.
  void backward() { tape_.backward(loss_, seg_); }
  void zero_grad() { tape_.zero_adjoints(0, seg_); }

  void read_policy_grad(std::vector<double>& g) const {
    Mlp::read_gradient(tape_, pol0_, n_pol_, g);
  }

  double pressure(int t) const { return tape_.value(pressure_nodes_[t]); }
  double control(int t) const { return tape_.value(control_nodes_[t]); }
  size_t policy_param_count() const { return n_pol_; }
  Tape::Idx nodes() const { return tape_.size(); }

 private:
  std::vector<int> policy_dims_, sim_dims_;
  int h_c_, h_p_;
  bool delta_;
  int T_;
  size_t n_pol_ = 0, n_sim_ = 0;
  Tape tape_;
  Tape::Idx pol0_ = -1, sim0_ = -1, boot_ = -1, seg_ = -1, loss_ = -1;
  SimNormNodes norm_;
  std::vector<Tape::Idx> targets_, pressure_nodes_, control_nodes_;
};

struct PolicyTrainOpts {
  int epochs = 300;
  double lr = 1e-3;
  double lambda = 0.2;
  std::vector<int> hidden = {32, 32};
  FeatureSpec feat;
  double val_pip_jitter = 1.0;  // validation tracks pip +- this offset
  uint64_t seed = 0;

  void validate() const {
    if (epochs < 0) throw ConfigError("PolicyTrainOpts: epochs must be >= 0");
    if (!(lr > 0.0)) throw ConfigError("PolicyTrainOpts: lr must be > 0");
    if (lambda < 0.0) throw ConfigError("PolicyTrainOpts: lambda must be >= 0");
    if (!(val_pip_jitter >= 0.0))
      throw ConfigError("PolicyTrainOpts: val_pip_jitter must be >= 0");
    feat.validate();
    for (int h : hidden)
      if (h < 1) throw ConfigError("PolicyTrainOpts: hidden sizes must be >= 1");
  }
};

struct PolicyTrainResult {
  Policy policy;  // best validation checkpoint, the untrained net included
  std::vector<double> train_curve, val_curve;  // index 0 scores the init
  int best_epoch = 0;
  double best_val = 0.0;
};

// Full-batch Adam over every (simulator, waveform) pair. The correction net
// starts with a zeroed output layer, so epoch 0 behaves exactly like the
// frozen PID and the checkpoint can never be worse than it on validation.
// Train entries record each epoch's pre-step loss; validation scores the
// updated weights on pip-jittered copies of the training waveforms.
inline PolicyTrainResult train_policy(const TrainObjective& obj, const PidCoeffs& pid,
                                      const PolicyTrainOpts& opts) {
  obj.validate();
  pid.validate();
  opts.validate();
  const SimModel& proto = obj.sims.front();
  const int T = obj.waveforms.front().grid.insp_steps;

  std::vector<int> dims;
  dims.push_back(opts.feat.feature_count());
  dims.insert(dims.end(), opts.hidden.begin(), opts.hidden.end());
  dims.push_back(1);

  Rng rng = derive_rng(opts.seed, "policy-init");
  Mlp net = Mlp::create(dims, rng);
  net.zero_output_layer();

  UnrollGraph graph(dims, opts.feat, pid, opts.lambda, proto, T);

  auto sample = [T](const TargetWaveform& w) {
    std::vector<double> tv(T);
    for (int t = 0; t < T; ++t) tv[t] = w.at(t);
    return tv;
  };
  std::vector<std::vector<double>> train_targets, val_targets;
  for (const TargetWaveform& w : obj.waveforms) {
    train_targets.push_back(sample(w));
    if (opts.val_pip_jitter > 0.0) {
      for (double s : {opts.val_pip_jitter, -opts.val_pip_jitter}) {
        TargetWaveform jw = w;
        jw.pip += s;
        jw.validate();
        val_targets.push_back(sample(jw));
      }
    } else {
      val_targets.push_back(sample(w));
    }
  }

  auto eval_mean = [&](const std::vector<std::vector<double>>& target_sets) {
    double acc = 0.0;
    for (const SimModel& sim : obj.sims) {
      graph.set_sim(sim);
      for (const auto& tv : target_sets) {
        graph.set_targets(tv);
        acc += graph.forward();
      }
    }
    return acc / (static_cast<double>(obj.sims.size()) * target_sets.size());
  };

  PolicyTrainResult res;
  graph.set_policy(net.params);
  res.train_curve.push_back(eval_mean(train_targets));
  res.val_curve.push_back(eval_mean(val_targets));
  res.best_val = res.val_curve[0];
  res.best_epoch = 0;
  std::vector<double> best_params = net.params;

  const double n_terms = static_cast<double>(obj.sims.size()) * train_targets.size();
  Adam adam(net.params.size(), opts.lr);
  std::vector<double> grad;
  for (int e = 1; e <= opts.epochs; ++e) {
    graph.zero_grad();
    double train_acc = 0.0;
    for (const SimModel& sim : obj.sims) {
      graph.set_sim(sim);
      for (const auto& tv : train_targets) {
        graph.set_targets(tv);
        train_acc += graph.forward();
        graph.backward();
      }
    }
    graph.read_policy_grad(grad);
    for (double& g : grad) g /= n_terms;
    adam.step(net.params, grad);
    graph.set_policy(net.params);

    res.train_curve.push_back(train_acc / n_terms);
    const double v = eval_mean(val_targets);
    res.val_curve.push_back(v);
    if (v < res.best_val) {
      res.best_val = v;
      res.best_epoch = e;
      best_params = net.params;
    }
  }

  net.params = best_params;
  res.policy.pid = pid;
  res.policy.lambda = opts.lambda;
  res.policy.feat = opts.feat;
  res.policy.correction = std::move(net);
  res.policy.validate();
  return res;
}

}  // namespace ventlab
