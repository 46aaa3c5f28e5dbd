// SPDX-License-Identifier: Apache-2.0
#include <doctest.h>

#include <cmath>
#include <random>

#include "oracles.hpp"
#include "vqa/errors.hpp"
#include "vqa/grad_check.hpp"
#include "vqa/losses.hpp"

using namespace vqa;
using ad::Tape;
using ad::Var;

namespace {

double mono(const std::vector<double>& q, const std::vector<double>& mos) {
  Tape tape;
  return monotonicity_loss(tape.constant(Tensor::vector(q)), mos).value().item();
}

double lin(const std::vector<double>& q, const std::vector<double>& mos) {
  Tape tape;
  return linearity_loss(tape.constant(Tensor::vector(q)), mos).value().item();
}

double err(const std::vector<double>& q, const std::vector<double>& mos, double s_d) {
  Tape tape;
  return error_loss(tape.constant(Tensor::vector(q)), mos, s_d).value().item();
}

double overall(const std::vector<double>& losses, std::vector<double>* weights = nullptr) {
  Tape tape;
  std::vector<Var> parts;
  for (double l : losses) parts.push_back(tape.constant(Tensor::scalar(l)));
  const OverallLoss o = overall_loss(parts);
  if (weights) *weights = o.weights;
  return o.total.value().item();
}

std::vector<double> uniform(std::size_t n, std::mt19937_64& rng, double lo = -2, double hi = 2) {
  return oracle::random_tensor({n}, rng, lo, hi).values();
}

}  // namespace

TEST_CASE("monotonicity loss examples") {
  CHECK(mono({0.2, 0.5, 0.9}, {1, 2, 3}) == 0.0);
  CHECK(mono({0.2, 0.5, 0.9}, {3, 2, 1}) == doctest::Approx(1.4 / 3.0).epsilon(1e-14));
  CHECK(mono({0.2, 0.5, 0.9}, {2, 2, 2}) == 0.0);
  Tape tape;
  const double one[] = {1.0};
  CHECK_THROWS_AS(monotonicity_loss(tape.constant(Tensor::vector({0.3})), one), ValidationError);
}

TEST_CASE("monotonicity loss equals the pair loop") {
  std::mt19937_64 rng(1);
  for (int trial = 0; trial < 100; ++trial) {
    const std::size_t n = 2 + rng() % 63;
    const auto q = uniform(n, rng);
    auto mos = uniform(n, rng, 1, 5);
    // Force some label ties.
    for (std::size_t i = 0; i + 1 < n; i += 5) mos[i + 1] = mos[i];
    CHECK(std::abs(mono(q, mos) - oracle::monotonicity(q, mos)) < 1e-12);
  }
}

TEST_CASE("monotonicity loss depends only on the order of mos") {
  std::mt19937_64 rng(2);
  for (int trial = 0; trial < 20; ++trial) {
    const auto q = uniform(20, rng);
    const auto mos = uniform(20, rng, 1, 5);
    std::vector<double> warped;
    for (double m : mos) warped.push_back(std::exp(3 * m) - 7);
    CHECK(mono(q, warped) == mono(q, mos));
  }
}

TEST_CASE("linearity loss examples") {
  CHECK(lin({1, 3, 5}, {0, 1, 2}) == doctest::Approx(0.0).epsilon(1e-15));
  CHECK(std::abs(lin({1, 3, 5}, {0, 1, 2})) < 1e-15);
  CHECK(std::abs(lin({0, -1, -2}, {0, 1, 2}) - 1.0) < 1e-15);
  const double plcc = oracle::pearson({0, 1, 2}, {0, 1, 3});
  CHECK(plcc == doctest::Approx(0.9820).epsilon(1e-4));
  CHECK(lin({0, 1, 2}, {0, 1, 3}) == doctest::Approx((1 - plcc) / 2).epsilon(1e-14));
  CHECK(lin({0, 1, 2}, {0, 1, 3}) == doctest::Approx(0.0090).epsilon(1e-2));
  Tape tape;
  const double mos[] = {1, 2, 3};
  CHECK_THROWS_AS(linearity_loss(tape.constant(Tensor::vector({0.4, 0.4, 0.4})), mos), NumericError);
}

TEST_CASE("linearity loss invariants") {
  std::mt19937_64 rng(3);
  for (int trial = 0; trial < 50; ++trial) {
    const auto q = uniform(16, rng), mos = uniform(16, rng, 1, 5);
    const double base = lin(q, mos);
    CHECK(base >= 0.0);
    CHECK(base <= 1.0);
    std::vector<double> q2, mos2;
    for (double v : q) q2.push_back(3.5 * v - 2);
    for (double v : mos) mos2.push_back(0.2 * v + 9);
    CHECK(std::abs(lin(q2, mos) - base) < 1e-12);
    CHECK(std::abs(lin(q, mos2) - base) < 1e-12);
  }
}

TEST_CASE("error loss examples") {
  CHECK(err({1, 2, 3}, {1, 2, 3}, 2) == 0.0);
  CHECK(err({1, 2}, {2, 4}, 2) == 0.75);
  CHECK(err({1, 2}, {2, 4}, 2) == err({3, 6}, {6, 12}, 6));
  Tape tape;
  const double mos[] = {1.0};
  CHECK_THROWS_AS(error_loss(tape.constant(Tensor::vector({1})), mos, 0.0), ValidationError);
  CHECK_THROWS_AS(error_loss(tape.constant(Tensor::vector({1})), mos, -1.0), ValidationError);

  std::mt19937_64 rng(4);
  for (int trial = 0; trial < 20; ++trial) {
    const auto q = uniform(10, rng), mos = uniform(10, rng);
    CHECK(err(q, mos, 1.5) > 0.0);
  }
}

TEST_CASE("dataset loss sums the enabled components") {
  Tape tape;
  BatchPredictions b{tape.constant(Tensor::vector({0.2, 0.5, 0.9})), tape.constant(Tensor::vector({0, 1, 3})),
                     tape.constant(Tensor::vector({1, 2, 3})), {3, 2, 1}, 2.0};
  const DatasetLoss all = dataset_loss(b, {});
  const double rel = 1.4 / 3.0, linv = (1 + oracle::pearson({0, 1, 3}, {3, 2, 1})) / 2, errv = (2 + 0 + 2) / 3.0 / 2.0;
  CHECK(all.rel == doctest::Approx(rel).epsilon(1e-14));
  CHECK(all.lin == doctest::Approx(1 - linv).epsilon(1e-14));
  CHECK(all.err == doctest::Approx(errv).epsilon(1e-14));
  CHECK(all.total.value().item() == doctest::Approx(all.rel + all.lin + all.err).epsilon(1e-14));

  // Components taken from the single-loss examples.
  const double sum = mono({0.2, 0.5, 0.9}, {3, 2, 1}) + lin({0, 1, 2}, {0, 1, 3}) + err({1, 2}, {2, 4}, 2);
  CHECK(sum == doctest::Approx(1.2257).epsilon(1e-4));

  const DatasetLoss only = dataset_loss(b, LossFlags::parse("rel,err"));
  CHECK(only.lin == 0.0);
  CHECK(only.total.value().item() == doctest::Approx(rel + errv).epsilon(1e-14));
  CHECK_THROWS_AS(dataset_loss(b, {false, false, false}), ConfigError);

  BatchPredictions perfect{tape.constant(Tensor::vector({1, 2, 3})), tape.constant(Tensor::vector({1, 2, 3})),
                           tape.constant(Tensor::vector({1, 2, 3})), {1, 2, 3}, 2.0};
  CHECK(std::abs(dataset_loss(perfect, {}).total.value().item()) < 1e-15);

  BatchPredictions tied{tape.constant(Tensor::vector({1, 2, 3})), tape.constant(Tensor::vector({1, 2, 3})),
                        tape.constant(Tensor::vector({2, 2, 2})), {2, 2, 2}, 2.0};
  const DatasetLoss t = dataset_loss(tied, {});
  CHECK(t.rel == 0.0);
  CHECK(t.lin == 0.0);
  CHECK(t.err == 0.0);
}

TEST_CASE("loss flag parsing") {
  const LossFlags a = LossFlags::parse("all");
  CHECK((a.rel && a.lin && a.err));
  const LossFlags r = LossFlags::parse("rel");
  CHECK((r.rel && !r.lin && !r.err));
  CHECK(LossFlags::parse("lin,err").to_string() == "lin,err");
  CHECK_THROWS_AS(LossFlags::parse("rel,foo"), ConfigError);
  CHECK_THROWS_AS(LossFlags::parse(""), ConfigError);
}

TEST_CASE("overall loss examples") {
  std::vector<double> w;
  CHECK(overall({0.7, 0.7, 0.7}, &w) == doctest::Approx(0.7).epsilon(1e-15));
  for (double v : w) CHECK(v == doctest::Approx(1.0 / 3.0).epsilon(1e-15));
  CHECK(overall({0.0, std::log(3.0)}, &w) == doctest::Approx(0.75 * std::log(3.0)).epsilon(1e-14));
  CHECK(w[0] == doctest::Approx(0.25).epsilon(1e-14));
  CHECK(w[1] == doctest::Approx(0.75).epsilon(1e-14));
  CHECK(overall({0.0, std::log(3.0)}) == doctest::Approx(0.8240).epsilon(1e-4));
  CHECK(overall({1.234}) == 1.234);
}

TEST_CASE("overall loss is bounded and permutation-equivariant") {
  std::mt19937_64 rng(5);
  for (int trial = 0; trial < 50; ++trial) {
    const auto l = uniform(2 + rng() % 6, rng, 0, 3);
    std::vector<double> w, wr;
    const double o = overall(l, &w);
    CHECK(o >= *std::min_element(l.begin(), l.end()) - 1e-15);
    CHECK(o <= *std::max_element(l.begin(), l.end()) + 1e-15);
    std::vector<double> rev(l.rbegin(), l.rend());
    CHECK(std::abs(overall(rev, &wr) - o) < 1e-14);
    for (std::size_t i = 0; i < l.size(); ++i) CHECK(std::abs(wr[i] - w[l.size() - 1 - i]) < 1e-15);
  }
}

TEST_CASE("overall loss gradient treats the weights as constants") {
  Tape tape;
  const Var a = tape.leaf(Tensor::scalar(0.0)), b = tape.leaf(Tensor::scalar(std::log(3.0)));
  const Var parts[] = {a, b};
  tape.backward(overall_loss(parts).total);
  CHECK(tape.grad(a).item() == doctest::Approx(0.25).epsilon(1e-14));
  CHECK(tape.grad(b).item() == doctest::Approx(0.75).epsilon(1e-14));
}

TEST_CASE("loss gradients match central differences") {
  std::mt19937_64 rng(6);
  const auto mos = uniform(12, rng, 1, 5);
  const std::vector<Tensor> q{oracle::random_tensor({12}, rng)};
  CHECK(grad_check([&](Tape&, std::span<const Var> in) { return monotonicity_loss(in[0], mos); }, q) < 1e-4);
  CHECK(grad_check([&](Tape&, std::span<const Var> in) { return linearity_loss(in[0], mos); }, q) < 1e-4);
  CHECK(grad_check([&](Tape&, std::span<const Var> in) { return error_loss(in[0], mos, 4.0); }, q) < 1e-4);
  CHECK(grad_check([](Tape&, std::span<const Var> in) { return pearson(in[0], in[1]); },
                   std::vector<Tensor>{q[0], oracle::random_tensor({12}, rng)}) < 1e-4);
  CHECK(grad_check(
            [&](Tape&, std::span<const Var> in) {
              const BatchPredictions b{in[0], in[1], in[2], mos, 4.0};
              return dataset_loss(b, {}).total;
            },
            std::vector<Tensor>{q[0], oracle::random_tensor({12}, rng), oracle::random_tensor({12}, rng, 1, 5)}) <
        1e-4);
}
