// SPDX-License-Identifier: Apache-2.0
/**
 * @file   losses.hpp
 * @brief  Stage-wise supervision for mixed-dataset training.
 *
 * Each dataset contributes L = L_rel + L_lin + L_err computed on one batch of
 * its own videos; datasets are combined with softmax(L) weights that are held
 * constant for the gradient.
 */
#pragma once

#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "vqa/autodiff.hpp"

namespace vqa {

/// Mean pairwise hinge on mis-ordered pairs:
///   2/(N(N-1)) * sum_{i<j} max((q_i - q_j) * sign(mos_j - mos_i), 0).
/// Evaluated as a dense N x N matrix rather than a pair loop. Needs N >= 2.
ad::Var monotonicity_loss(ad::Var q_r, std::span<const double> mos);

/// Differentiable Pearson correlation of two equally sized vectors.
ad::Var pearson(ad::Var x, ad::Var y);

/// (1 - PLCC(q_p, mos)) / 2. Throws NumericError on zero spread.
ad::Var linearity_loss(ad::Var q_p, std::span<const double> mos);

/// mean_i |q_s_i - mos_i| / s_d. Throws ValidationError when s_d <= 0.
ad::Var error_loss(ad::Var q_s, std::span<const double> mos, double s_d);

struct LossFlags {
  bool rel = true;
  bool lin = true;
  bool err = true;

  bool any() const { return rel || lin || err; }
  std::string to_string() const;
  /// Comma-separated subset of {rel, lin, err}, or "all".
  static LossFlags parse(std::string_view text);
};

struct BatchPredictions {
  ad::Var q_r;
  ad::Var q_p;
  ad::Var q_s;
  std::vector<double> mos;
  double s_d = 1.0;
};

struct DatasetLoss {
  ad::Var total;
  double rel = 0.0;
  double lin = 0.0;
  double err = 0.0;
};

/// Sum of the enabled components. A batch whose MOS are all tied contributes
/// zero linearity loss (the correlation is undefined) and, through the sign
/// term, zero monotonicity loss.
DatasetLoss dataset_loss(const BatchPredictions& batch, const LossFlags& flags);

std::vector<double> softmax(std::span<const double> values);

struct OverallLoss {
  ad::Var total;
  std::vector<double> weights;
};

/// sum_d softmax(L)_d * L_d with the weights treated as constants.
OverallLoss overall_loss(std::span<const ad::Var> per_dataset);

}  // namespace vqa
