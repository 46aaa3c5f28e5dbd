// SPDX-License-Identifier: Apache-2.0
/**
 * @file   autodiff.hpp
 * @brief  Reverse-mode differentiation over a dynamically recorded tape.
 *
 * Every operation appends a node to the Tape holding its forward value and a
 * closure that scatters the output adjoint into its inputs. Nodes are stored
 * in creation order, which is already a topological order, so backward() is
 * a single reverse sweep.
 *
 *   Tape tape;
 *   Var x = tape.leaf(Tensor::vector({1, 2}));
 *   Var y = ad::sum(ad::mul(x, x));
 *   tape.backward(y);
 *   tape.grad(x);  // [2, 4]
 */
#pragma once

#include <cstddef>
#include <deque>
#include <functional>
#include <span>
#include <vector>

#include "vqa/tensor.hpp"

namespace vqa::ad {

class Tape;

/// Handle to a node on a Tape. Cheap to copy.
class Var {
 public:
  Var() = default;
  Var(Tape* tape, std::size_t id) : tape_(tape), id_(id) {}

  Tape* tape() const { return tape_; }
  std::size_t id() const { return id_; }
  bool valid() const { return tape_ != nullptr; }

  const Tensor& value() const;
  const Shape& shape() const { return value().shape(); }
  bool requires_grad() const;

 private:
  Tape* tape_ = nullptr;
  std::size_t id_ = 0;
};

class Tape {
 public:
  /// Called during the backward sweep with the node's accumulated adjoint.
  using BackwardFn = std::function<void(Tape&, const Tensor& out_grad)>;

  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  Var leaf(Tensor value, bool requires_grad = true);
  Var constant(Tensor value) { return leaf(std::move(value), false); }

  /// Appends an operation node. `fn` is dropped when no parent needs a
  /// gradient.
  Var record(Tensor value, std::span<const Var> parents, BackwardFn fn);

  /// Seeds d(root)/d(root) = 1 and sweeps the tape in reverse. The root must
  /// hold exactly one element.
  void backward(Var root);

  const Tensor& value(Var v) const { return nodes_[v.id()].value; }
  bool requires_grad(Var v) const { return nodes_[v.id()].requires_grad; }

  /// Accumulated gradient; zeros for nodes the root does not reach.
  Tensor grad(Var v) const;

  /// Adds `g` into the adjoint of `v`; no-op for constants.
  void accumulate(Var v, const Tensor& g);
  /// Adds `g` into a single entry of the adjoint of `v`.
  void accumulate_at(Var v, std::size_t index, double g);
  /// Mutable adjoint buffer of `v`, allocated on first use.
  std::span<double> grad_buffer(Var v);

  std::size_t size() const { return nodes_.size(); }

 private:
  struct Node {
    Tensor value;
    Tensor grad;
    bool requires_grad = false;
    BackwardFn backward;
  };
  std::deque<Node> nodes_;  // deque: references stay valid as the tape grows
};

// ---------------------------------------------------------------------------
// Elementwise
// ---------------------------------------------------------------------------
Var add(Var a, Var b);
Var sub(Var a, Var b);
Var mul(Var a, Var b);
Var neg(Var a);
Var scale(Var a, double factor);
Var add_scalar(Var a, double offset);
Var sigmoid(Var a);
Var tanh(Var a);
Var abs(Var a);

/// x * s for a single-element Var `s`, differentiable in both.
Var mul_by(Var x, Var s);
/// x + s for a single-element Var `s`, differentiable in both.
Var add_by(Var x, Var s);

// ---------------------------------------------------------------------------
// Reductions and structure
// ---------------------------------------------------------------------------
Var sum(Var a);
Var mean(Var a);
/// Single entry of `a` as a rank-0 Var.
Var element(Var a, std::size_t index);
Var reshape(Var a, Shape shape);
/// Removes `axis` by picking `index` along it.
Var select(Var a, std::size_t axis, std::size_t index);
/// Stacks equally shaped Vars along a new axis at position `axis`.
Var stack(std::span<const Var> parts, std::size_t axis);
/// Row-wise choice over the leading axis: row i comes from `next` when
/// take_next[i], otherwise from `prev`.
Var blend_rows(Var prev, Var next, const std::vector<bool>& take_next);
/// sum_i weights[i] * parts[i] over single-element Vars; weights are constants.
Var weighted_sum(std::span<const Var> parts, std::span<const double> weights);

// ---------------------------------------------------------------------------
// Linear algebra
// ---------------------------------------------------------------------------
/// y = W x + b along the last axis: x[..., n], W[m, n], b[m] -> y[..., m].
Var affine(Var x, Var w, Var b);

}  // namespace vqa::ad
