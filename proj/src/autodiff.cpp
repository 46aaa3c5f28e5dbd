// SPDX-License-Identifier: Apache-2.0
#include "vqa/autodiff.hpp"

#include <Eigen/Core>
#include <cmath>

#include "vqa/errors.hpp"

namespace vqa::ad {

namespace {

using RowMatrix =
    Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using ConstMatrixMap = Eigen::Map<const RowMatrix>;
using MatrixMap = Eigen::Map<RowMatrix>;
using ConstVectorMap = Eigen::Map<const Eigen::VectorXd>;

void require_same_shape(const char* op, Var a, Var b) {
  if (a.shape() != b.shape()) {
    throw DimensionError(std::string(op) + ": shape mismatch " +
                         shape_str(a.shape()) + " vs " + shape_str(b.shape()));
  }
}

void require_single(const char* op, Var s) {
  if (s.value().size() != 1) {
    throw DimensionError(std::string(op) + ": expected single-element operand, got " +
                         shape_str(s.shape()));
  }
}

Tape& tape_of(Var a) {
  if (!a.valid()) throw Error("operation on an unbound Var");
  return *a.tape();
}

template <class Fn>
Tensor map_values(const Tensor& in, Fn fn) {
  Tensor out(in.shape());
  for (std::size_t i = 0; i < in.size(); ++i) out[i] = fn(in[i]);
  return out;
}

// Product of dims before `axis` and after it.
std::pair<std::size_t, std::size_t> split_around(const Shape& shape,
                                                 std::size_t axis) {
  std::size_t outer = 1, inner = 1;
  for (std::size_t i = 0; i < axis; ++i) outer *= shape[i];
  for (std::size_t i = axis + 1; i < shape.size(); ++i) inner *= shape[i];
  return {outer, inner};
}

}  // namespace

// ---------------------------------------------------------------------------
// Var / Tape
// ---------------------------------------------------------------------------

const Tensor& Var::value() const { return tape_->value(*this); }
bool Var::requires_grad() const { return tape_->requires_grad(*this); }

Var Tape::leaf(Tensor value, bool requires_grad) {
  nodes_.push_back(Node{std::move(value), Tensor{}, requires_grad, nullptr});
  return Var(this, nodes_.size() - 1);
}

Var Tape::record(Tensor value, std::span<const Var> parents, BackwardFn fn) {
  bool needs = false;
  for (const Var& p : parents) {
    if (p.tape() != this) throw Error("operands recorded on different tapes");
    needs = needs || nodes_[p.id()].requires_grad;
  }
  nodes_.push_back(
      Node{std::move(value), Tensor{}, needs, needs ? std::move(fn) : nullptr});
  return Var(this, nodes_.size() - 1);
}

void Tape::backward(Var root) {
  if (root.tape() != this) throw Error("backward root belongs to another tape");
  Node& r = nodes_[root.id()];
  if (r.value.size() != 1) {
    throw DimensionError("backward root must be a single element, got shape " +
                         shape_str(r.value.shape()));
  }
  r.grad = Tensor(r.value.shape(), 1.0);
  for (std::size_t i = root.id() + 1; i-- > 0;) {
    Node& n = nodes_[i];
    if (n.backward && !n.grad.empty()) n.backward(*this, n.grad);
  }
}

Tensor Tape::grad(Var v) const {
  const Node& n = nodes_[v.id()];
  if (n.grad.empty()) return Tensor(n.value.shape());
  return n.grad;
}

std::span<double> Tape::grad_buffer(Var v) {
  Node& n = nodes_[v.id()];
  if (n.grad.empty()) n.grad = Tensor(n.value.shape());
  return n.grad.data();
}

void Tape::accumulate(Var v, const Tensor& g) {
  if (!nodes_[v.id()].requires_grad) return;
  auto buf = grad_buffer(v);
  for (std::size_t i = 0; i < buf.size(); ++i) buf[i] += g[i];
}

void Tape::accumulate_at(Var v, std::size_t index, double g) {
  if (!nodes_[v.id()].requires_grad) return;
  grad_buffer(v)[index] += g;
}

// ---------------------------------------------------------------------------
// Elementwise
// ---------------------------------------------------------------------------

Var add(Var a, Var b) {
  require_same_shape("add", a, b);
  Tensor out = a.value();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] += b.value()[i];
  const Var parents[] = {a, b};
  return tape_of(a).record(std::move(out), parents,
                           [a, b](Tape& t, const Tensor& g) {
                             t.accumulate(a, g);
                             t.accumulate(b, g);
                           });
}

Var sub(Var a, Var b) {
  require_same_shape("sub", a, b);
  Tensor out = a.value();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] -= b.value()[i];
  const Var parents[] = {a, b};
  return tape_of(a).record(std::move(out), parents,
                           [a, b](Tape& t, const Tensor& g) {
                             t.accumulate(a, g);
                             if (!b.requires_grad()) return;
                             auto gb = t.grad_buffer(b);
                             for (std::size_t i = 0; i < gb.size(); ++i) gb[i] -= g[i];
                           });
}

Var mul(Var a, Var b) {
  require_same_shape("mul", a, b);
  Tensor out = a.value();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] *= b.value()[i];
  const Var parents[] = {a, b};
  return tape_of(a).record(
      std::move(out), parents, [a, b](Tape& t, const Tensor& g) {
        const Tensor& av = a.value();
        const Tensor& bv = b.value();
        if (a.requires_grad()) {
          auto ga = t.grad_buffer(a);
          for (std::size_t i = 0; i < ga.size(); ++i) ga[i] += g[i] * bv[i];
        }
        if (b.requires_grad()) {
          auto gb = t.grad_buffer(b);
          for (std::size_t i = 0; i < gb.size(); ++i) gb[i] += g[i] * av[i];
        }
      });
}

Var neg(Var a) { return scale(a, -1.0); }

Var scale(Var a, double factor) {
  Tensor out = map_values(a.value(), [factor](double v) { return v * factor; });
  const Var parents[] = {a};
  return tape_of(a).record(std::move(out), parents,
                           [a, factor](Tape& t, const Tensor& g) {
                             auto ga = t.grad_buffer(a);
                             for (std::size_t i = 0; i < ga.size(); ++i)
                               ga[i] += g[i] * factor;
                           });
}

Var add_scalar(Var a, double offset) {
  Tensor out = map_values(a.value(), [offset](double v) { return v + offset; });
  const Var parents[] = {a};
  return tape_of(a).record(std::move(out), parents,
                           [a](Tape& t, const Tensor& g) { t.accumulate(a, g); });
}

Var sigmoid(Var a) {
  Tensor out = map_values(a.value(), [](double v) {
    // Split on sign so exp() never overflows.
    if (v >= 0) return 1.0 / (1.0 + std::exp(-v));
    const double e = std::exp(v);
    return e / (1.0 + e);
  });
  const Var parents[] = {a};
  Tape& tape = tape_of(a);
  const std::size_t out_id = tape.size();
  return tape.record(std::move(out), parents,
                     [a, out_id](Tape& t, const Tensor& g) {
                       const Tensor& s = t.value(Var(&t, out_id));
                       auto ga = t.grad_buffer(a);
                       for (std::size_t i = 0; i < ga.size(); ++i)
                         ga[i] += g[i] * s[i] * (1.0 - s[i]);
                     });
}

Var tanh(Var a) {
  Tensor out = map_values(a.value(), [](double v) { return std::tanh(v); });
  const Var parents[] = {a};
  Tape& tape = tape_of(a);
  const std::size_t out_id = tape.size();
  return tape.record(std::move(out), parents,
                     [a, out_id](Tape& t, const Tensor& g) {
                       const Tensor& y = t.value(Var(&t, out_id));
                       auto ga = t.grad_buffer(a);
                       for (std::size_t i = 0; i < ga.size(); ++i)
                         ga[i] += g[i] * (1.0 - y[i] * y[i]);
                     });
}

Var abs(Var a) {
  Tensor out = map_values(a.value(), [](double v) { return std::abs(v); });
  const Var parents[] = {a};
  return tape_of(a).record(std::move(out), parents,
                           [a](Tape& t, const Tensor& g) {
                             const Tensor& x = a.value();
                             auto ga = t.grad_buffer(a);
                             for (std::size_t i = 0; i < ga.size(); ++i) {
                               const double s = x[i] > 0 ? 1.0 : (x[i] < 0 ? -1.0 : 0.0);
                               ga[i] += g[i] * s;
                             }
                           });
}

Var mul_by(Var x, Var s) {
  require_single("mul_by", s);
  const double sv = s.value()[0];
  Tensor out = map_values(x.value(), [sv](double v) { return v * sv; });
  const Var parents[] = {x, s};
  return tape_of(x).record(
      std::move(out), parents, [x, s](Tape& t, const Tensor& g) {
        const Tensor& xv = x.value();
        const double sv = s.value()[0];
        double gs = 0.0;
        for (std::size_t i = 0; i < g.size(); ++i) gs += g[i] * xv[i];
        if (x.requires_grad()) {
          auto gx = t.grad_buffer(x);
          for (std::size_t i = 0; i < gx.size(); ++i) gx[i] += g[i] * sv;
        }
        t.accumulate_at(s, 0, gs);
      });
}

Var add_by(Var x, Var s) {
  require_single("add_by", s);
  const double sv = s.value()[0];
  Tensor out = map_values(x.value(), [sv](double v) { return v + sv; });
  const Var parents[] = {x, s};
  return tape_of(x).record(std::move(out), parents,
                           [x, s](Tape& t, const Tensor& g) {
                             double gs = 0.0;
                             for (std::size_t i = 0; i < g.size(); ++i) gs += g[i];
                             t.accumulate(x, g);
                             t.accumulate_at(s, 0, gs);
                           });
}

// ---------------------------------------------------------------------------
// Reductions and structure
// ---------------------------------------------------------------------------

Var sum(Var a) {
  double total = 0.0;
  for (double v : a.value().data()) total += v;
  const Var parents[] = {a};
  return tape_of(a).record(Tensor::scalar(total), parents,
                           [a](Tape& t, const Tensor& g) {
                             auto ga = t.grad_buffer(a);
                             for (double& v : ga) v += g[0];
                           });
}

Var mean(Var a) {
  const std::size_t n = a.value().size();
  if (n == 0) throw NumericError("mean of an empty tensor");
  return scale(sum(a), 1.0 / static_cast<double>(n));
}

Var element(Var a, std::size_t index) {
  if (index >= a.value().size()) {
    throw DimensionError("element index " + std::to_string(index) +
                         " out of range for shape " + shape_str(a.shape()));
  }
  const Var parents[] = {a};
  return tape_of(a).record(Tensor::scalar(a.value()[index]), parents,
                           [a, index](Tape& t, const Tensor& g) {
                             t.accumulate_at(a, index, g[0]);
                           });
}

Var reshape(Var a, Shape shape) {
  Tensor out = a.value().reshaped(std::move(shape));
  const Var parents[] = {a};
  return tape_of(a).record(std::move(out), parents,
                           [a](Tape& t, const Tensor& g) {
                             auto ga = t.grad_buffer(a);
                             for (std::size_t i = 0; i < ga.size(); ++i) ga[i] += g[i];
                           });
}

Var select(Var a, std::size_t axis, std::size_t index) {
  const Shape& in_shape = a.shape();
  if (axis >= in_shape.size() || index >= in_shape[axis]) {
    throw DimensionError("select: axis " + std::to_string(axis) + " index " +
                         std::to_string(index) + " invalid for shape " +
                         shape_str(in_shape));
  }
  const auto [outer, inner] = split_around(in_shape, axis);
  const std::size_t len = in_shape[axis];
  Shape out_shape = in_shape;
  out_shape.erase(out_shape.begin() + static_cast<std::ptrdiff_t>(axis));
  Tensor out(out_shape);
  const Tensor& in = a.value();
  for (std::size_t o = 0; o < outer; ++o)
    for (std::size_t i = 0; i < inner; ++i)
      out[o * inner + i] = in[(o * len + index) * inner + i];
  const Var parents[] = {a};
  return tape_of(a).record(
      std::move(out), parents,
      [a, outer, inner, len, index](Tape& t, const Tensor& g) {
        auto ga = t.grad_buffer(a);
        for (std::size_t o = 0; o < outer; ++o)
          for (std::size_t i = 0; i < inner; ++i)
            ga[(o * len + index) * inner + i] += g[o * inner + i];
      });
}

Var stack(std::span<const Var> parts, std::size_t axis) {
  if (parts.empty()) throw DimensionError("stack: no operands");
  const Shape& part_shape = parts[0].shape();
  if (axis > part_shape.size()) {
    throw DimensionError("stack: axis out of range for " + shape_str(part_shape));
  }
  for (const Var& p : parts) {
    if (p.shape() != part_shape) {
      throw DimensionError("stack: shape mismatch " + shape_str(part_shape) +
                           " vs " + shape_str(p.shape()));
    }
  }
  std::size_t outer = 1, inner = 1;
  for (std::size_t i = 0; i < axis; ++i) outer *= part_shape[i];
  for (std::size_t i = axis; i < part_shape.size(); ++i) inner *= part_shape[i];
  const std::size_t count = parts.size();
  Shape out_shape = part_shape;
  out_shape.insert(out_shape.begin() + static_cast<std::ptrdiff_t>(axis), count);
  Tensor out(out_shape);
  for (std::size_t k = 0; k < count; ++k) {
    const Tensor& v = parts[k].value();
    for (std::size_t o = 0; o < outer; ++o)
      for (std::size_t i = 0; i < inner; ++i)
        out[(o * count + k) * inner + i] = v[o * inner + i];
  }
  std::vector<Var> owned(parts.begin(), parts.end());
  return tape_of(parts[0]).record(
      std::move(out), parts,
      [owned, outer, inner, count](Tape& t, const Tensor& g) {
        for (std::size_t k = 0; k < count; ++k) {
          if (!owned[k].requires_grad()) continue;
          auto gp = t.grad_buffer(owned[k]);
          for (std::size_t o = 0; o < outer; ++o)
            for (std::size_t i = 0; i < inner; ++i)
              gp[o * inner + i] += g[(o * count + k) * inner + i];
        }
      });
}

Var blend_rows(Var prev, Var next, const std::vector<bool>& take_next) {
  require_same_shape("blend_rows", prev, next);
  const Shape& shape = prev.shape();
  if (shape.empty() || shape[0] != take_next.size()) {
    throw DimensionError("blend_rows: mask length " +
                         std::to_string(take_next.size()) + " vs shape " +
                         shape_str(shape));
  }
  const std::size_t rows = shape[0];
  const std::size_t width = prev.value().size() / rows;
  Tensor out = prev.value();
  for (std::size_t r = 0; r < rows; ++r) {
    if (!take_next[r]) continue;
    for (std::size_t c = 0; c < width; ++c)
      out[r * width + c] = next.value()[r * width + c];
  }
  const Var parents[] = {prev, next};
  return tape_of(prev).record(
      std::move(out), parents,
      [prev, next, take_next, width](Tape& t, const Tensor& g) {
        for (std::size_t r = 0; r < take_next.size(); ++r) {
          const Var target = take_next[r] ? next : prev;
          if (!target.requires_grad()) continue;
          auto gt = t.grad_buffer(target);
          for (std::size_t c = 0; c < width; ++c)
            gt[r * width + c] += g[r * width + c];
        }
      });
}

Var weighted_sum(std::span<const Var> parts, std::span<const double> weights) {
  if (parts.empty() || parts.size() != weights.size()) {
    throw DimensionError("weighted_sum: " + std::to_string(parts.size()) +
                         " operands vs " + std::to_string(weights.size()) +
                         " weights");
  }
  double total = 0.0;
  for (std::size_t i = 0; i < parts.size(); ++i) {
    require_single("weighted_sum", parts[i]);
    total += weights[i] * parts[i].value()[0];
  }
  std::vector<Var> owned(parts.begin(), parts.end());
  std::vector<double> w(weights.begin(), weights.end());
  return tape_of(parts[0]).record(Tensor::scalar(total), parts,
                                  [owned, w](Tape& t, const Tensor& g) {
                                    for (std::size_t i = 0; i < owned.size(); ++i)
                                      t.accumulate_at(owned[i], 0, g[0] * w[i]);
                                  });
}

// ---------------------------------------------------------------------------
// Linear algebra
// ---------------------------------------------------------------------------

Var affine(Var x, Var w, Var b) {
  const Shape& xs = x.shape();
  const Shape& ws = w.shape();
  const Shape& bs = b.shape();
  if (xs.empty() || ws.size() != 2 || bs.size() != 1 || xs.back() != ws[1] ||
      bs[0] != ws[0]) {
    throw DimensionError("affine: incompatible shapes x" + shape_str(xs) + " W" +
                         shape_str(ws) + " b" + shape_str(bs));
  }
  const auto n = static_cast<Eigen::Index>(ws[1]);
  const auto m = static_cast<Eigen::Index>(ws[0]);
  const auto rows = static_cast<Eigen::Index>(x.value().size() / ws[1]);
  Shape out_shape = xs;
  out_shape.back() = ws[0];
  Tensor out(out_shape);
  {
    ConstMatrixMap xm(x.value().data().data(), rows, n);
    ConstMatrixMap wm(w.value().data().data(), m, n);
    ConstVectorMap bv(b.value().data().data(), m);
    MatrixMap ym(out.data().data(), rows, m);
    ym.noalias() = xm * wm.transpose();
    ym.rowwise() += bv.transpose();
  }
  const Var parents[] = {x, w, b};
  return tape_of(x).record(
      std::move(out), parents, [x, w, b, rows, n, m](Tape& t, const Tensor& g) {
        ConstMatrixMap gm(g.data().data(), rows, m);
        if (x.requires_grad()) {
          ConstMatrixMap wm(w.value().data().data(), m, n);
          MatrixMap gx(t.grad_buffer(x).data(), rows, n);
          gx.noalias() += gm * wm;
        }
        if (w.requires_grad()) {
          ConstMatrixMap xm(x.value().data().data(), rows, n);
          MatrixMap gw(t.grad_buffer(w).data(), m, n);
          gw.noalias() += gm.transpose() * xm;
        }
        if (b.requires_grad()) {
          Eigen::Map<Eigen::VectorXd> gb(t.grad_buffer(b).data(), m);
          gb += gm.colwise().sum().transpose();
        }
      });
}

}  // namespace vqa::ad
