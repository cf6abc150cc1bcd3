#pragma once

#include <cassert>
#include <cmath>
#include <cstdint>
#include <vector>

#include "ventlab/common.hpp"

namespace ventlab {

// Reverse-mode tape of scalar operations. Values live in one flat array and
// adjoints in another, so the fused dot-product node (Affine) runs over
// contiguous doubles and the hot loops vectorise.
//
// Graphs here are built once and reused: set_value on leaves, forward() to
// refresh, backward() to accumulate gradients. backward(out, seg) treats
// every node below seg as terminal, so parameter leaves placed at the front
// of the tape collect gradients across many calls (minibatch accumulation)
// until zero_adjoints clears them.
class Tape {
 public:
  using Idx = int32_t;

  enum class Op : uint8_t { Leaf, Const, Add, Sub, Mul, Tanh, Abs, Copy, Clamp, Affine };

  Idx leaf(double v = 0.0) { return push(Op::Leaf, -1, -1, 0, 0.0, 0.0, v); }

  Idx constant(double v) { return push(Op::Const, -1, -1, 0, 0.0, 0.0, v); }

  // n zero-initialised leaves at consecutive indices; returns the first.
  Idx leaf_block(int n) {
    Idx start = size();
    for (int i = 0; i < n; ++i) leaf(0.0);
    return start;
  }

  Idx add(Idx a, Idx b) { return push(Op::Add, a, b, 0, 0.0, 0.0, vals_[a] + vals_[b]); }
  Idx sub(Idx a, Idx b) { return push(Op::Sub, a, b, 0, 0.0, 0.0, vals_[a] - vals_[b]); }
  Idx mul(Idx a, Idx b) { return push(Op::Mul, a, b, 0, 0.0, 0.0, vals_[a] * vals_[b]); }
  Idx tanh(Idx a) { return push(Op::Tanh, a, -1, 0, 0.0, 0.0, std::tanh(vals_[a])); }
  Idx abs(Idx a) { return push(Op::Abs, a, -1, 0, 0.0, 0.0, std::fabs(vals_[a])); }
  Idx copy(Idx a) { return push(Op::Copy, a, -1, 0, 0.0, 0.0, vals_[a]); }

  Idx clamp(Idx a, double lo, double hi) {
    return push(Op::Clamp, a, -1, 0, lo, hi, std::clamp(vals_[a], lo, hi));
  }

  // Dot product of two contiguous runs: sum_i vals[ws+i] * vals[xs+i].
  Idx affine(Idx ws, Idx xs, int n) {
    double acc = 0.0;
    for (int i = 0; i < n; ++i) acc += vals_[ws + i] * vals_[xs + i];
    return push(Op::Affine, ws, xs, n, 0.0, 0.0, acc);
  }

  double value(Idx i) const { return vals_[i]; }
  double adjoint(Idx i) const { return adjs_[i]; }

  void set_value(Idx i, double v) {
    assert(nodes_[i].op == Op::Leaf || nodes_[i].op == Op::Const);
    vals_[i] = v;
  }

  Idx size() const { return static_cast<Idx>(nodes_.size()); }

  void rewind(Idx mark) {
    nodes_.resize(mark);
    vals_.resize(mark);
    adjs_.resize(mark);
  }

  void reserve(size_t n) {
    nodes_.reserve(n);
    vals_.reserve(n);
    adjs_.reserve(n);
  }

  // Recompute values of nodes in [from, size) after leaves changed.
  void forward(Idx from = 0) {
    const Idx end = size();
    for (Idx i = from; i < end; ++i) {
      const Node& nd = nodes_[i];
      switch (nd.op) {
        case Op::Leaf:
        case Op::Const: break;
        case Op::Add: vals_[i] = vals_[nd.a] + vals_[nd.b]; break;
        case Op::Sub: vals_[i] = vals_[nd.a] - vals_[nd.b]; break;
        case Op::Mul: vals_[i] = vals_[nd.a] * vals_[nd.b]; break;
        case Op::Tanh: vals_[i] = std::tanh(vals_[nd.a]); break;
        case Op::Abs: vals_[i] = std::fabs(vals_[nd.a]); break;
        case Op::Copy: vals_[i] = vals_[nd.a]; break;
        case Op::Clamp: vals_[i] = std::clamp(vals_[nd.a], nd.c0, nd.c1); break;
        case Op::Affine: {
          double acc = 0.0;
          const double* w = vals_.data() + nd.a;
          const double* x = vals_.data() + nd.b;
          for (int k = 0; k < nd.n; ++k) acc += w[k] * x[k];
          vals_[i] = acc;
          break;
        }
      }
    }
  }

  void zero_adjoints(Idx lo, Idx hi) {
    for (Idx i = lo; i < hi; ++i) adjs_[i] = 0.0;
  }

  // Seeds d(out)/d(out) = 1 and propagates adjoints in reverse order.
  // Adjoints of nodes in [seg, size) are cleared first; nodes below seg only
  // accumulate (callers zero those ranges themselves between batches).
  void backward(Idx out, Idx seg) {
    assert(out >= seg);
    zero_adjoints(seg, size());
    adjs_[out] = 1.0;
    for (Idx i = out; i >= seg; --i) {
      const double g = adjs_[i];
      if (g == 0.0) continue;
      const Node& nd = nodes_[i];
      switch (nd.op) {
        case Op::Leaf:
        case Op::Const: break;
        case Op::Add:
          adjs_[nd.a] += g;
          adjs_[nd.b] += g;
          break;
        case Op::Sub:
          adjs_[nd.a] += g;
          adjs_[nd.b] -= g;
          break;
        case Op::Mul:
          adjs_[nd.a] += g * vals_[nd.b];
          adjs_[nd.b] += g * vals_[nd.a];
          break;
        case Op::Tanh:
          adjs_[nd.a] += g * (1.0 - vals_[i] * vals_[i]);
          break;
        case Op::Abs:
          if (vals_[nd.a] > 0.0) adjs_[nd.a] += g;
          else if (vals_[nd.a] < 0.0) adjs_[nd.a] -= g;
          break;
        case Op::Copy:
          adjs_[nd.a] += g;
          break;
        case Op::Clamp:
          if (vals_[nd.a] > nd.c0 && vals_[nd.a] < nd.c1) adjs_[nd.a] += g;
          break;
        case Op::Affine: {
          double* aw = adjs_.data() + nd.a;
          double* ax = adjs_.data() + nd.b;
          const double* w = vals_.data() + nd.a;
          const double* x = vals_.data() + nd.b;
          for (int k = 0; k < nd.n; ++k) {
            aw[k] += g * x[k];
            ax[k] += g * w[k];
          }
          break;
        }
      }
    }
  }

 private:
  struct Node {
    Op op;
    Idx a, b;
    int n;
    double c0, c1;
  };

  Idx push(Op op, Idx a, Idx b, int n, double c0, double c1, double v) {
    nodes_.push_back(Node{op, a, b, n, c0, c1});
    vals_.push_back(v);
    adjs_.push_back(0.0);
    return static_cast<Idx>(nodes_.size() - 1);
  }

  std::vector<Node> nodes_;
  std::vector<double> vals_;
  std::vector<double> adjs_;
};

}  // namespace ventlab
