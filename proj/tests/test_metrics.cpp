// SPDX-License-Identifier: Apache-2.0
#include <doctest.h>

#include <cmath>
#include <random>

#include "oracles.hpp"
#include "vqa/errors.hpp"
#include "vqa/metrics.hpp"

using namespace vqa;
using namespace vqa::metrics;
using V = std::vector<double>;

namespace {

V uniform(std::size_t n, std::mt19937_64& rng, double lo = 0, double hi = 1) {
  return oracle::random_tensor({n}, rng, lo, hi).values();
}

// Rounds to a coarse grid so that ties are common.
V coarse(std::size_t n, std::mt19937_64& rng) {
  V x = uniform(n, rng, 0, 5);
  for (double& v : x) v = std::round(v);
  return x;
}

}  // namespace

TEST_CASE("srocc examples") {
  CHECK(srocc(V{0.2, 0.5, 0.9}, V{1, 2, 3}) == doctest::Approx(1.0).epsilon(1e-15));
  CHECK(srocc(V{0.2, 0.5, 0.9}, V{3, 2, 1}) == doctest::Approx(-1.0).epsilon(1e-15));
  CHECK(srocc(V{1, 2, 2, 3}, V{1, 3, 2, 4}) == doctest::Approx(0.9487).epsilon(1e-4));
  CHECK(average_ranks(V{1, 2, 2, 3}) == V{1, 2.5, 2.5, 4});
  CHECK_THROWS_AS(srocc(V{1, 1, 1}, V{1, 2, 3}), NumericError);
  CHECK_THROWS_AS(srocc(V{1, 2}, V{1, 2, 3}), DimensionError);
}

TEST_CASE("krocc examples") {
  CHECK(krocc(V{1, 2, 3, 4}, V{10, 20, 30, 40}) == doctest::Approx(1.0).epsilon(1e-15));
  CHECK(krocc(V{1, 2, 3, 4}, V{4, 3, 2, 1}) == doctest::Approx(-1.0).epsilon(1e-15));
  CHECK_THROWS_AS(krocc(V{2, 2, 2}, V{1, 2, 3}), NumericError);
}

TEST_CASE("rank correlations match the counting oracles") {
  std::mt19937_64 rng(1);
  for (int trial = 0; trial < 200; ++trial) {
    const std::size_t n = 3 + rng() % 40;
    const V x = trial % 2 ? coarse(n, rng) : uniform(n, rng);
    const V y = coarse(n, rng);
    if (average_ranks(x) == V(n, (n + 1) / 2.0) || average_ranks(y) == V(n, (n + 1) / 2.0)) continue;
    CHECK(std::abs(srocc(x, y) - oracle::spearman(x, y)) < 1e-12);
    CHECK(std::abs(krocc(x, y) - oracle::kendall_tau_b(x, y)) < 1e-12);
    CHECK(average_ranks(x) == oracle::ranks(x));
  }
}

TEST_CASE("plcc and rmse examples") {
  CHECK(plcc(V{0, 1, 2}, V{1, 3, 5}) == doctest::Approx(1.0).epsilon(1e-15));
  CHECK(plcc(V{0, 1, 2}, V{1, -1, -3}) == doctest::Approx(-1.0).epsilon(1e-15));
  CHECK(plcc(V{0, 1, 2}, V{0, 1, 3}) == doctest::Approx(0.9820).epsilon(1e-4));
  CHECK(rmse(V{1, 2, 3}, V{1, 2, 3}) == 0.0);
  CHECK(rmse(V{0, 0}, V{3, 4}) == doctest::Approx(std::sqrt(12.5)).epsilon(1e-15));
  CHECK_THROWS_AS(plcc(V{1, 1}, V{1, 2}), NumericError);
}

TEST_CASE("correlation invariances") {
  std::mt19937_64 rng(2);
  for (int trial = 0; trial < 50; ++trial) {
    const V x = uniform(30, rng), y = uniform(30, rng);
    V warped, affine, flipped;
    for (double v : x) {
      warped.push_back(std::exp(4 * v) + v * v * v);
      affine.push_back(2.5 * v + 1);
      flipped.push_back(-0.5 * v);
    }
    CHECK(std::abs(srocc(warped, y) - srocc(x, y)) < 1e-12);
    CHECK(std::abs(krocc(warped, y) - krocc(x, y)) < 1e-12);
    CHECK(std::abs(plcc(affine, y) - plcc(x, y)) < 1e-12);
    CHECK(std::abs(plcc(flipped, y) + plcc(x, y)) < 1e-12);
    CHECK(std::abs(plcc(x, y) - oracle::pearson(x, y)) < 1e-12);
  }
}

TEST_CASE("4PL fit recovers its own generator") {
  const std::array<double, 4> beta{1, 0, 0.5, 0.25};
  V pred, mos;
  for (int i = 0; i < 50; ++i) {
    pred.push_back(i / 49.0);
    mos.push_back(logistic4(pred.back(), beta));
    CHECK(mos.back() == oracle::logistic4(pred.back(), 1, 0, 0.5, 0.25));
  }
  const LogisticFit fit = fit_4pl(pred, mos);
  CHECK(rmse(fit.mapped, mos) < 1e-6);
}

TEST_CASE("4PL fit on already perfect data") {
  V x;
  for (int i = 0; i <= 20; ++i) x.push_back(i / 20.0);
  const LogisticFit fit = fit_4pl(x, x);
  CHECK(plcc(fit.mapped, x) >= 1.0 - 1e-9);
}

TEST_CASE("4PL fit handles both orientations") {
  std::mt19937_64 rng(3);
  std::normal_distribution<double> noise(0, 0.05);
  V pred = uniform(60, rng), up, down;
  for (double p : pred) {
    const double e = noise(rng);
    up.push_back(oracle::logistic4(p, 5, 1, 0.4, 0.15) + e);
    down.push_back(oracle::logistic4(p, 1, 5, 0.4, 0.15) - e);
  }
  const double a = plcc(fit_4pl(pred, up).mapped, up);
  const double b = plcc(fit_4pl(pred, down).mapped, down);
  CHECK(a > 0.95);
  CHECK(std::abs(a - b) < 1e-6);
}

TEST_CASE("4PL fit never lowers PLCC") {
  std::mt19937_64 rng(4);
  std::normal_distribution<double> noise(0, 0.3);
  for (int trial = 0; trial < 30; ++trial) {
    const V pred = uniform(40, rng);
    V mos;
    for (double p : pred) mos.push_back(1 + 4 * p * p + noise(rng));
    CHECK(plcc(fit_4pl(pred, mos).mapped, mos) >= std::abs(plcc(pred, mos)) - 1e-9);
  }
  CHECK_THROWS_AS(fit_4pl(V{1, 1, 1, 1, 1}, V{1, 2, 3, 4, 5}), NumericError);
}

TEST_CASE("weighted overall") {
  using P = std::pair<double, std::size_t>;
  CHECK(weighted_overall(std::vector<P>{{0.8, 1200}, {0.6, 234}}) == doctest::Approx(0.7674).epsilon(1e-4));
  CHECK(weighted_overall(std::vector<P>{{0.8, 10}, {0.6, 10}}) == doctest::Approx(0.7).epsilon(1e-15));
  CHECK(weighted_overall(std::vector<P>{{0.42, 7}}) == 0.42);
  CHECK_THROWS_AS(weighted_overall(std::vector<P>{}), ValidationError);
}

TEST_CASE("paired t test") {
  const V a{0.91, 0.93, 0.90, 0.94, 0.92, 0.95, 0.89, 0.93, 0.92, 0.94};
  const V b{0.90, 0.91, 0.90, 0.92, 0.90, 0.93, 0.90, 0.91, 0.91, 0.92};
  const TTestResult r = paired_t_test(a, b);
  CHECK(std::abs(r.t - oracle::paired_t(a, b)) < 1e-10);
  CHECK(r.dof == 9);
  // Reference values from scipy.stats.ttest_rel.
  CHECK(std::abs(r.t - 3.8806450418189566) < 1e-10);
  CHECK(std::abs(r.p - 0.0037277347283079564) < 1e-8);
  const TTestResult small = paired_t_test(V{0.5, 0.7, 0.2}, V{0.4, 0.5, 0.3});
  CHECK(std::abs(small.p - 0.5285954792089684) < 1e-8);

  V c, d;
  for (int i = 0; i < 10; ++i) {
    c.push_back(0.9 + 1e-4 * ((i * 7) % 5));
    d.push_back(0.8);
  }
  CHECK(paired_t_test(c, d).p < 1e-3);
  CHECK_THROWS_AS(paired_t_test(a, a), NumericError);
}

TEST_CASE("student t and incomplete beta against scipy") {
  CHECK(std::abs(student_t_cdf(-2.5, 3) - 0.04385332350403277) < 1e-8);
  CHECK(std::abs(student_t_cdf(1.3, 17) - 0.8945240930562365) < 1e-8);
  CHECK(student_t_cdf(0, 5) == doctest::Approx(0.5).epsilon(1e-12));
  CHECK(std::abs(incomplete_beta(2.5, 1.5, 0.3) - 0.08894372317066562) < 1e-8);
  CHECK(std::abs(incomplete_beta(0.5, 0.5, 0.9) - 0.7951672353008665) < 1e-8);
}
