// SPDX-License-Identifier: Apache-2.0
#include "vqa/losses.hpp"

#include <Eigen/Core>
#include <algorithm>
#include <cmath>

#include "vqa/errors.hpp"

namespace vqa {

using ad::Var;

namespace {

void require_vector(const char* op, Var v, std::size_t n) {
  if (v.shape().size() != 1 || v.shape()[0] != n) {
    throw DimensionError(std::string(op) + ": predictions " + shape_str(v.shape()) +
                         " vs " + std::to_string(n) + " labels");
  }
}

}  // namespace

Var monotonicity_loss(Var q_r, std::span<const double> mos) {
  const std::size_t n = mos.size();
  require_vector("monotonicity_loss", q_r, n);
  if (n < 2) throw ValidationError("monotonicity loss needs a batch of at least 2");

  using Eigen::ArrayXd;
  using Eigen::ArrayXXd;
  const auto len = static_cast<Eigen::Index>(n);
  const Eigen::Map<const ArrayXd> q(q_r.value().data().data(), len);
  const Eigen::Map<const ArrayXd> y(mos.data(), len);
  // diff(i, j) = q_i - q_j ; sign(i, j) = sign(mos_j - mos_i)
  const ArrayXXd diff = q.replicate(1, len) - q.transpose().replicate(len, 1);
  const ArrayXXd sign =
      (y.transpose().replicate(len, 1) - y.replicate(1, len)).sign();
  const ArrayXXd hinge = (diff * sign).max(0.0);
  // Each unordered pair appears twice with equal value.
  const double norm = static_cast<double>(n * (n - 1));
  const double value = hinge.sum() / norm;

  // Active mask times sign gives d hinge(i, j) / d q_i; d / d q_j is its
  // negation.
  ArrayXXd active = (hinge > 0.0).cast<double>() * sign;
  ArrayXd grad = (active.rowwise().sum() - active.colwise().sum().transpose()) / norm;
  std::vector<double> g(grad.data(), grad.data() + n);

  const Var parents[] = {q_r};
  return q_r.tape()->record(Tensor::scalar(value), parents,
                            [q_r, g](ad::Tape& t, const Tensor& out) {
                              auto gq = t.grad_buffer(q_r);
                              for (std::size_t i = 0; i < gq.size(); ++i)
                                gq[i] += out[0] * g[i];
                            });
}

Var pearson(Var x, Var y) {
  if (x.shape() != y.shape() || x.shape().size() != 1) {
    throw DimensionError("pearson: shapes " + shape_str(x.shape()) + " and " +
                         shape_str(y.shape()) + " must be equal vectors");
  }
  const std::size_t n = x.value().size();
  if (n < 2) throw NumericError("pearson correlation needs at least 2 samples");
  const auto& xv = x.value();
  const auto& yv = y.value();
  double mx = 0, my = 0;
  for (std::size_t i = 0; i < n; ++i) {
    mx += xv[i];
    my += yv[i];
  }
  mx /= static_cast<double>(n);
  my /= static_cast<double>(n);
  double sxy = 0, sxx = 0, syy = 0;
  for (std::size_t i = 0; i < n; ++i) {
    const double dx = xv[i] - mx, dy = yv[i] - my;
    sxy += dx * dy;
    sxx += dx * dx;
    syy += dy * dy;
  }
  // A constant vector can still leave a rounding-level spread around its mean.
  const auto constant = [](const Tensor& t) {
    return std::all_of(t.values().begin(), t.values().end(), [&](double v) { return v == t[0]; });
  };
  if (!(sxx > 0) || !(syy > 0) || constant(xv) || constant(yv)) {
    throw NumericError("pearson correlation undefined for a constant vector");
  }
  const double denom = std::sqrt(sxx * syy);
  const double r = sxy / denom;

  const Var parents[] = {x, y};
  return x.tape()->record(
      Tensor::scalar(r), parents,
      [x, y, mx, my, sxx, syy, denom, r](ad::Tape& t, const Tensor& out) {
        const auto& xv = x.value();
        const auto& yv = y.value();
        const double g = out[0];
        // dr/dx_i = (y_i - my) / denom - r (x_i - mx) / sxx; the mean terms
        // cancel because centred residuals sum to zero.
        if (x.requires_grad()) {
          auto gx = t.grad_buffer(x);
          for (std::size_t i = 0; i < gx.size(); ++i)
            gx[i] += g * ((yv[i] - my) / denom - r * (xv[i] - mx) / sxx);
        }
        if (y.requires_grad()) {
          auto gy = t.grad_buffer(y);
          for (std::size_t i = 0; i < gy.size(); ++i)
            gy[i] += g * ((xv[i] - mx) / denom - r * (yv[i] - my) / syy);
        }
      });
}

Var linearity_loss(Var q_p, std::span<const double> mos) {
  require_vector("linearity_loss", q_p, mos.size());
  const Var labels =
      q_p.tape()->constant(Tensor::vector(std::vector<double>(mos.begin(), mos.end())));
  return ad::scale(ad::add_scalar(ad::neg(pearson(q_p, labels)), 1.0), 0.5);
}

Var error_loss(Var q_s, std::span<const double> mos, double s_d) {
  require_vector("error_loss", q_s, mos.size());
  if (!(s_d > 0)) throw ValidationError("error loss needs a positive MOS range, got " + std::to_string(s_d));
  if (mos.empty()) throw ValidationError("error loss on an empty batch");
  const Var labels =
      q_s.tape()->constant(Tensor::vector(std::vector<double>(mos.begin(), mos.end())));
  return ad::scale(ad::mean(ad::abs(ad::sub(q_s, labels))), 1.0 / s_d);
}

std::string LossFlags::to_string() const {
  std::string out;
  auto add = [&out](bool on, const char* name) {
    if (!on) return;
    if (!out.empty()) out += ",";
    out += name;
  };
  add(rel, "rel");
  add(lin, "lin");
  add(err, "err");
  return out.empty() ? "none" : out;
}

LossFlags LossFlags::parse(std::string_view text) {
  if (text == "all") return LossFlags{};
  LossFlags f{false, false, false};
  std::size_t start = 0;
  while (start <= text.size()) {
    const std::size_t comma = std::min(text.find(',', start), text.size());
    const std::string_view part = text.substr(start, comma - start);
    if (part == "rel") f.rel = true;
    else if (part == "lin") f.lin = true;
    else if (part == "err") f.err = true;
    else if (!part.empty()) throw ConfigError("unknown loss component '" + std::string(part) + "'");
    start = comma + 1;
  }
  if (!f.any()) throw ConfigError("no loss component selected");
  return f;
}

DatasetLoss dataset_loss(const BatchPredictions& batch, const LossFlags& flags) {
  if (!flags.any()) throw ConfigError("no loss component enabled");
  std::vector<Var> parts;
  DatasetLoss out;
  const bool tied = std::all_of(batch.mos.begin(), batch.mos.end(),
                                [&](double v) { return v == batch.mos.front(); });
  if (flags.rel) {
    parts.push_back(monotonicity_loss(batch.q_r, batch.mos));
    out.rel = parts.back().value().item();
  }
  if (flags.lin && !tied) {
    parts.push_back(linearity_loss(batch.q_p, batch.mos));
    out.lin = parts.back().value().item();
  }
  if (flags.err) {
    parts.push_back(error_loss(batch.q_s, batch.mos, batch.s_d));
    out.err = parts.back().value().item();
  }
  if (parts.empty()) {
    out.total = batch.q_r.tape()->constant(Tensor::scalar(0.0));
    return out;
  }
  out.total = parts[0];
  for (std::size_t i = 1; i < parts.size(); ++i) out.total = ad::add(out.total, parts[i]);
  return out;
}

std::vector<double> softmax(std::span<const double> values) {
  if (values.empty()) return {};
  const double top = *std::max_element(values.begin(), values.end());
  std::vector<double> w(values.size());
  double z = 0.0;
  for (std::size_t i = 0; i < values.size(); ++i) {
    w[i] = std::exp(values[i] - top);
    z += w[i];
  }
  for (double& v : w) v /= z;
  return w;
}

OverallLoss overall_loss(std::span<const Var> per_dataset) {
  if (per_dataset.empty()) throw ValidationError("overall loss over zero datasets");
  std::vector<double> values;
  for (const Var& v : per_dataset) values.push_back(v.value().item());
  OverallLoss out;
  out.weights = softmax(values);
  out.total = ad::weighted_sum(per_dataset, out.weights);
  return out;
}

}  // namespace vqa
