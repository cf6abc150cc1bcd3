#pragma once

#include <cmath>
#include <cstddef>
#include <vector>

#include "ventlab/autodiff.hpp"
#include "ventlab/common.hpp"

namespace ventlab {

// Fully connected net with tanh hidden layers and a linear output. Parameters
// live in one flat vector laid out as [W0 row-major, b0, W1, b1, ...], which
// is also the layout of the tape leaf block used during training.
struct Mlp {
  std::vector<int> dims;  // {in, hidden..., out}
  std::vector<double> params;

  static size_t param_count(const std::vector<int>& dims) {
    size_t n = 0;
    for (size_t l = 0; l + 1 < dims.size(); ++l)
      n += static_cast<size_t>(dims[l + 1]) * dims[l] + dims[l + 1];
    return n;
  }

  void validate() const {
    if (dims.size() < 2) throw ConfigError("Mlp: need at least input and output dims");
    for (int d : dims)
      if (d <= 0) throw ConfigError("Mlp: layer dims must be positive");
    if (params.size() != param_count(dims))
      throw ConfigError("Mlp: parameter count does not match dims");
    for (double v : params) require_finite(v, "net parameter");
  }

  // Glorot uniform weights, zero biases.
  static Mlp create(const std::vector<int>& dims, Rng& rng) {
    if (dims.size() < 2) throw ConfigError("Mlp: need at least input and output dims");
    for (int d : dims)
      if (d <= 0) throw ConfigError("Mlp: layer dims must be positive");
    Mlp net;
    net.dims = dims;
    net.params.reserve(param_count(dims));
    for (size_t l = 0; l + 1 < dims.size(); ++l) {
      const int fan_in = dims[l], fan_out = dims[l + 1];
      const double bound = std::sqrt(6.0 / (fan_in + fan_out));
      for (int i = 0; i < fan_out * fan_in; ++i)
        net.params.push_back(rng.uniform(-bound, bound));
      for (int i = 0; i < fan_out; ++i) net.params.push_back(0.0);
    }
    return net;
  }

  // Zeroes the last layer so the net starts as the identity-free function 0.
  void zero_output_layer() {
    const size_t last = dims.size() - 2;
    size_t off = 0;
    for (size_t l = 0; l < last; ++l)
      off += static_cast<size_t>(dims[l + 1]) * dims[l] + dims[l + 1];
    for (size_t i = off; i < params.size(); ++i) params[i] = 0.0;
  }

  std::vector<double> forward(const std::vector<double>& x) const {
    if (static_cast<int>(x.size()) != dims.front())
      throw ConfigError("Mlp::forward: input size mismatch");
    std::vector<double> cur = x, next;
    size_t off = 0;
    for (size_t l = 0; l + 1 < dims.size(); ++l) {
      const int in_n = dims[l], out_n = dims[l + 1];
      next.assign(out_n, 0.0);
      const double* w = params.data() + off;
      const double* b = w + static_cast<size_t>(out_n) * in_n;
      for (int j = 0; j < out_n; ++j) {
        double z = b[j];
        const double* wj = w + static_cast<size_t>(j) * in_n;
        for (int i = 0; i < in_n; ++i) z += wj[i] * cur[i];
        next[j] = (l + 2 < dims.size()) ? std::tanh(z) : z;
      }
      cur.swap(next);
      off += static_cast<size_t>(out_n) * in_n + out_n;
    }
    return cur;
  }

  // Puts the parameters on the tape as one leaf block; returns its start.
  Tape::Idx push_params(Tape& tape) const {
    Tape::Idx start = tape.leaf_block(static_cast<int>(params.size()));
    for (size_t i = 0; i < params.size(); ++i)
      tape.set_value(start + static_cast<Tape::Idx>(i), params[i]);
    return start;
  }

  // Refreshes a previously pushed block after an optimiser step.
  void write_params(Tape& tape, Tape::Idx pstart) const {
    for (size_t i = 0; i < params.size(); ++i)
      tape.set_value(pstart + static_cast<Tape::Idx>(i), params[i]);
  }

  // Builds the net on the tape over a contiguous input block. Returns the
  // index of the first output; outputs are contiguous.
  static Tape::Idx build(Tape& tape, Tape::Idx pstart, const std::vector<int>& dims,
                         Tape::Idx xstart) {
    Tape::Idx in_start = xstart;
    Tape::Idx off = pstart;
    Tape::Idx out_start = xstart;
    for (size_t l = 0; l + 1 < dims.size(); ++l) {
      const int in_n = dims[l], out_n = dims[l + 1];
      const Tape::Idx w0 = off;
      const Tape::Idx b0 = off + out_n * in_n;
      std::vector<Tape::Idx> dots(out_n);
      for (int j = 0; j < out_n; ++j) dots[j] = tape.affine(w0 + j * in_n, in_start, in_n);
      Tape::Idx z0 = tape.size();
      for (int j = 0; j < out_n; ++j) tape.add(dots[j], b0 + j);
      if (l + 2 < dims.size()) {
        Tape::Idx y0 = tape.size();
        for (int j = 0; j < out_n; ++j) tape.tanh(z0 + j);
        in_start = y0;
        out_start = y0;
      } else {
        in_start = z0;
        out_start = z0;
      }
      off = b0 + out_n;
    }
    return out_start;
  }

  // Gradient of the pushed block after backward(): copied out in layout order.
  static void read_gradient(const Tape& tape, Tape::Idx pstart, size_t n,
                            std::vector<double>& grad) {
    grad.resize(n);
    for (size_t i = 0; i < n; ++i)
      grad[i] = tape.adjoint(pstart + static_cast<Tape::Idx>(i));
  }
};

// Adam with bias correction.
class Adam {
 public:
  Adam(size_t n, double lr) : lr_(lr), m_(n, 0.0), v_(n, 0.0) {}

  void step(std::vector<double>& params, const std::vector<double>& grad) {
    if (params.size() != m_.size() || grad.size() != m_.size())
      throw ConfigError("Adam: size mismatch");
    ++t_;
    const double bc1 = 1.0 - std::pow(0.9, static_cast<double>(t_));
    const double bc2 = 1.0 - std::pow(0.999, static_cast<double>(t_));
    for (size_t i = 0; i < params.size(); ++i) {
      m_[i] = 0.9 * m_[i] + 0.1 * grad[i];
      v_[i] = 0.999 * v_[i] + 0.001 * grad[i] * grad[i];
      params[i] -= lr_ * (m_[i] / bc1) / (std::sqrt(v_[i] / bc2) + 1e-8);
    }
  }

 private:
  double lr_;
  int64_t t_ = 0;
  std::vector<double> m_, v_;
};

}  // namespace ventlab
