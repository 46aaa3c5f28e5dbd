// SPDX-License-Identifier: Apache-2.0
#include "vqa/grad_check.hpp"

#include <algorithm>
#include <cmath>

#include "vqa/errors.hpp"

namespace vqa {

namespace {

double evaluate(const ScalarFunction& f, std::span<const Tensor> inputs) {
  ad::Tape tape;
  std::vector<ad::Var> leaves;
  leaves.reserve(inputs.size());
  for (const Tensor& t : inputs) leaves.push_back(tape.leaf(t, false));
  const double v = f(tape, leaves).value().item();
  if (!std::isfinite(v)) throw NumericError("grad_check: non-finite evaluation");
  return v;
}

}  // namespace

double grad_check(const ScalarFunction& f, std::span<const Tensor> inputs,
                  double eps) {
  std::vector<Tensor> analytic;
  {
    ad::Tape tape;
    std::vector<ad::Var> leaves;
    for (const Tensor& t : inputs) leaves.push_back(tape.leaf(t));
    const ad::Var root = f(tape, leaves);
    if (!std::isfinite(root.value().item())) {
      throw NumericError("grad_check: non-finite evaluation");
    }
    tape.backward(root);
    for (const ad::Var& v : leaves) analytic.push_back(tape.grad(v));
  }

  std::vector<Tensor> probe(inputs.begin(), inputs.end());
  double worst = 0.0;
  for (std::size_t k = 0; k < probe.size(); ++k) {
    for (std::size_t i = 0; i < probe[k].size(); ++i) {
      const double saved = probe[k][i];
      probe[k][i] = saved + eps;
      const double up = evaluate(f, probe);
      probe[k][i] = saved - eps;
      const double down = evaluate(f, probe);
      probe[k][i] = saved;
      const double numeric = (up - down) / (2.0 * eps);
      const double err =
          std::abs(analytic[k][i] - numeric) / std::max(1.0, std::abs(numeric));
      worst = std::max(worst, err);
    }
  }
  return worst;
}

}  // namespace vqa
