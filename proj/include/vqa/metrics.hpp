// SPDX-License-Identifier: Apache-2.0
/**
 * @file   metrics.hpp
 * @brief  Correlation, error and significance statistics for evaluation.
 */
#pragma once

#include <array>
#include <span>
#include <utility>
#include <vector>

namespace vqa::metrics {

/// 1-based ranks; tied values share their mean rank.
std::vector<double> average_ranks(std::span<const double> x);

double plcc(std::span<const double> x, std::span<const double> y);
/// Pearson correlation of average ranks.
double srocc(std::span<const double> x, std::span<const double> y);
/// Kendall tau-b, O(N log N).
double krocc(std::span<const double> x, std::span<const double> y);
double rmse(std::span<const double> x, std::span<const double> y);

/// (b1 - b2) / (1 + exp(-(x - b3) / |b4|)) + b2
double logistic4(double x, const std::array<double, 4>& beta);

struct LogisticFit {
  std::array<double, 4> beta{};
  std::vector<double> mapped;
  bool converged = false;
  int iterations = 0;
};

/// Least-squares fit of logistic4 mapping pred -> mos with damped
/// Gauss-Newton from (max mos, min mos, mean pred, std pred); the first two
/// are swapped when pred and mos are negatively correlated. Stops when the
/// relative loss change drops below 1e-10 or after 200 iterations, returning
/// the best iterate either way.
LogisticFit fit_4pl(std::span<const double> pred, std::span<const double> mos);

/// sum n_d * metric_d / sum n_d.
double weighted_overall(std::span<const std::pair<double, std::size_t>> per_dataset);

struct TTestResult {
  double t = 0.0;
  double p = 1.0;
  std::size_t dof = 0;
};

/// Two-sided paired Student t test on a - b.
TTestResult paired_t_test(std::span<const double> a, std::span<const double> b);

/// Regularized incomplete beta I_x(a, b).
double incomplete_beta(double a, double b, double x);
/// P(T <= t) for Student's t with `dof` degrees of freedom.
double student_t_cdf(double t, double dof);

}  // namespace vqa::metrics
