// SPDX-License-Identifier: Apache-2.0
#include <doctest.h>

#include <cmath>
#include <random>

#include <json.hpp>

#include "oracles.hpp"
#include "vqa/checkpoint.hpp"
#include "vqa/errors.hpp"
#include "vqa/grad_check.hpp"
#include "vqa/model.hpp"

using namespace vqa;
using ad::Tape;
using ad::Var;

namespace {

ModelParams random_model(const ModelDims& dims, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  ModelParams p = init_model(dims, rng);
  p.visit([&](const std::string& name, Tensor& t) {
    if (name != "map.beta") t = oracle::random_tensor(t.shape(), rng);
  });
  return p;
}

double pool(const std::vector<double>& q, std::size_t tau, double gamma) {
  Tape tape;
  return temporal_pool(tape.constant(Tensor::vector(q)), {tau, gamma}).value().item();
}

double pooled_mean(const std::vector<double>& q, std::size_t tau, double gamma) {
  Tape tape;
  const Tensor rows = Tensor({1, q.size()}, q);
  return pooled_scores(tape.constant(rows), {q.size()}, {tau, gamma}).value().item();
}

std::vector<double> random_scores(std::size_t n, std::mt19937_64& rng, double lo = -2, double hi = 2) {
  return oracle::random_tensor({n}, rng, lo, hi).values();
}

FrameFeatureSequence as_sequence(const Tensor& t, std::string id) {
  FrameFeatureSequence s{std::move(id), t.dim(0), t.dim(1), {}};
  for (double v : t.values()) s.features.push_back(static_cast<float>(v));
  return s;
}

}  // namespace

TEST_CASE("reduce_features examples") {
  ModelDims dims{128, 128, 2};
  ModelParams p = zero_model(dims);
  for (std::size_t i = 0; i < 128; ++i) p.w_fx.at(i, i) = 1.0;
  std::mt19937_64 rng(1);
  const Tensor f = oracle::random_tensor({3, 128}, rng);
  Tape tape;
  CHECK(reduce_features(tape.constant(f), bind_model(tape, p)).value() == f);

  ModelParams c = zero_model({6, 4, 2});
  c.b_fx = Tensor::vector({0.1, -0.2, 0.3, 0.4});
  const Tensor rows = reduce_features(tape.constant(oracle::random_tensor({3, 6}, rng)), bind_model(tape, c)).value();
  for (std::size_t t = 0; t < 3; ++t)
    for (std::size_t k = 0; k < 4; ++k) CHECK(rows.at(t, k) == c.b_fx[k]);
}

TEST_CASE("reduce_features matches a direct matrix product") {
  const ModelParams p = random_model({7, 5, 3}, 2);
  std::mt19937_64 rng(3);
  const Tensor f = oracle::random_tensor({4, 7}, rng);
  Tape tape;
  const Tensor x = reduce_features(tape.constant(f), bind_model(tape, p)).value();
  for (std::size_t t = 0; t < 4; ++t) {
    const std::vector<double> row(f.values().begin() + static_cast<std::ptrdiff_t>(t * 7),
                                  f.values().begin() + static_cast<std::ptrdiff_t>(t * 7 + 7));
    const auto expect = oracle::matvec(p.w_fx, p.b_fx, row);
    for (std::size_t k = 0; k < 5; ++k) CHECK(std::abs(x.at(t, k) - expect[k]) < 1e-12);
  }
}

TEST_CASE("frame_scores examples") {
  ModelParams p = zero_model({4, 3, 2});
  p.b_hq = Tensor::vector({0.3});
  std::mt19937_64 rng(4);
  Tape tape;
  const Tensor q = frame_scores(tape.constant(oracle::random_tensor({5, 3}, rng)), bind_model(tape, p)).value();
  CHECK(q.values() == std::vector<double>(5, 0.3));

  const ModelParams r = random_model({4, 3, 2}, 5);
  const Tensor x = oracle::random_tensor({1, 3}, rng);
  const ModelVars v = bind_model(tape, r, [](const std::string&) { return false; });
  const double one = frame_scores(tape.constant(x), v).value().item();
  const Var h = gru_cell(tape.constant(x.reshaped({3})), tape.constant(Tensor({2})), v.gru);
  const double composed = ad::affine(h, v.w_hq, v.b_hq).value().item();
  CHECK(one == composed);
}

TEST_CASE("frame_scores gradient w.r.t. inputs") {
  const ModelParams p = random_model({4, 3, 2}, 6);
  std::mt19937_64 rng(7);
  const double err = grad_check(
      [&](Tape& t, std::span<const Var> in) {
        const ModelVars v = bind_model(t, p, [](const std::string&) { return false; });
        const Var q = frame_scores(in[0], v);
        return ad::sum(ad::mul(q, t.constant(Tensor::vector({0.3, -1.1, 0.7, 2.0, -0.4}))));
      },
      std::vector<Tensor>{oracle::random_tensor({5, 3}, rng)});
  CHECK(err < 1e-5);
}

TEST_CASE("temporal pooling worked example") {
  const std::vector<double> q{1.0, 0.0, 2.0};
  const auto trace = oracle::temporal_pool(q, 12, 0.5);
  CHECK(trace.l == std::vector<double>{1, 1, 0});
  CHECK(trace.m[0] == doctest::Approx(0.4248).epsilon(1e-4));
  CHECK(trace.m[1] == doctest::Approx(0.2384).epsilon(1e-3));
  CHECK(trace.m[2] == 2.0);
  CHECK(trace.qp[0] == doctest::Approx(0.7124).epsilon(1e-4));
  CHECK(trace.qp[1] == doctest::Approx(0.6192).epsilon(1e-4));
  CHECK(trace.q_r == doctest::Approx(0.685).epsilon(1e-3));
  CHECK(std::abs(pool(q, 12, 0.5) - trace.q_r) < 1e-6);
}

TEST_CASE("temporal pooling small cases") {
  CHECK(pool({0, 0, 0, 0}, 12, 0.5) == 0.5);
  CHECK(pool({2, 1}, 12, 1.0) == doctest::Approx(oracle::sigmoid(2.0)).epsilon(1e-15));
  CHECK(pool({2, 1}, 12, 1.0) == doctest::Approx(0.8808).epsilon(1e-4));
  Tape tape;
  CHECK_THROWS_AS(temporal_pool(tape.constant(Tensor({0})), {}), ValidationError);
}

TEST_CASE("temporal pooling matches direct evaluation") {
  std::mt19937_64 rng(8);
  for (int trial = 0; trial < 200; ++trial) {
    const std::size_t T = 1 + rng() % 40;
    const std::size_t tau = 1 + rng() % 15;
    const double gamma = std::uniform_real_distribution<double>(0, 1)(rng);
    const auto q = random_scores(T, rng);
    CHECK(std::abs(pool(q, tau, gamma) - oracle::temporal_pool(q, tau, gamma).q_r) < 1e-12);
  }
}

TEST_CASE("temporal pooling invariants") {
  std::mt19937_64 rng(9);
  for (int trial = 0; trial < 100; ++trial) {
    const std::size_t T = 1 + rng() % 30;
    const auto q = random_scores(T, rng);
    const double c = std::uniform_real_distribution<double>(-3, 3)(rng);

    CHECK(std::abs(pool(std::vector<double>(T, c), 1 + rng() % 20, 0.5) - oracle::sigmoid(c)) < 1e-15);
    CHECK(pool(q, T, 0.3) == pool(q, T + 7, 0.3));

    const auto trace = oracle::temporal_pool(q, 5, 0.0);
    CHECK(std::abs(pooled_mean(q, 5, 0.0) - oracle::mean(trace.m)) < 1e-12);
    CHECK(std::abs(pooled_mean(q, 5, 1.0) - oracle::mean(oracle::temporal_pool(q, 5, 1.0).l)) < 1e-12);

    const double lo = *std::min_element(q.begin(), q.end()), hi = *std::max_element(q.begin(), q.end());
    const double current = pooled_mean(q, 4, 0.0);
    CHECK(current >= lo);
    CHECK(current <= hi);

    std::vector<double> shifted = q;
    for (double& v : shifted) v += c;
    CHECK(std::abs(pooled_mean(shifted, 6, 0.5) - pooled_mean(q, 6, 0.5) - c) < 1e-10);
  }
}

TEST_CASE("temporal pooling gradients") {
  std::mt19937_64 rng(10);
  const std::vector<std::size_t> lengths{7, 3, 1};
  const double err = grad_check(
      [&](Tape& t, std::span<const Var> in) {
        const Var qr = temporal_pool_batch(in[0], lengths, {3, 0.4});
        return ad::sum(ad::mul(qr, t.constant(Tensor::vector({1.0, -0.6, 2.0}))));
      },
      std::vector<Tensor>{oracle::random_tensor({3, 7}, rng, -2, 2)});
  CHECK(err < 1e-6);
}

TEST_CASE("batched pooling equals single-sequence pooling") {
  std::mt19937_64 rng(11);
  const std::vector<std::size_t> lengths{6, 2, 4};
  const Tensor q = oracle::random_tensor({3, 6}, rng);
  Tape tape;
  const Tensor batch = temporal_pool_batch(tape.constant(q), lengths, {2, 0.5}).value();
  for (std::size_t b = 0; b < 3; ++b) {
    const std::vector<double> row(q.values().begin() + static_cast<std::ptrdiff_t>(b * 6),
                                  q.values().begin() + static_cast<std::ptrdiff_t>(b * 6 + lengths[b]));
    CHECK(batch[b] == pool(row, 2, 0.5));
  }
}

TEST_CASE("nonlinear map examples") {
  const double unit[] = {1, 0, 0, 1};
  CHECK(nonlinear_map_value(0.0, unit) == 0.5);
  const double steep[] = {1, 0, -500, 1000};
  double previous = -1.0;
  for (int i = 0; i <= 100; ++i) {
    const double v = nonlinear_map_value(i / 100.0, steep);
    CHECK(v >= previous);
    previous = v;
  }
  CHECK(nonlinear_map_value(0.45, steep) < 1e-10);
  CHECK(nonlinear_map_value(0.55, steep) > 1 - 1e-10);
}

TEST_CASE("nonlinear map equals the 4PL under the reparameterisation") {
  std::mt19937_64 rng(12);
  for (int trial = 0; trial < 20; ++trial) {
    const auto b = random_scores(4, rng, -3, 3);
    const double beta[] = {b[0] - b[1], b[1], -b[2] / std::abs(b[3]), 1 / std::abs(b[3])};
    for (int i = 0; i <= 50; ++i) {
      const double x = -1.0 + i * 0.04;
      CHECK(std::abs(nonlinear_map_value(x, beta) - oracle::logistic4(x, b[0], b[1], b[2], b[3])) < 1e-12);
    }
  }
}

TEST_CASE("nonlinear map autodiff agrees with the scalar form and gradients") {
  std::mt19937_64 rng(13);
  const Tensor qr = oracle::random_tensor({5}, rng, 0, 1), beta = oracle::random_tensor({4}, rng);
  Tape tape;
  const Tensor out = nonlinear_map(tape.constant(qr), tape.constant(beta)).value();
  for (std::size_t i = 0; i < 5; ++i) CHECK(out[i] == nonlinear_map_value(qr[i], beta.values()));
  const double err = grad_check(
      [](Tape& t, std::span<const Var> in) {
        return ad::sum(ad::mul(nonlinear_map(in[0], in[1]), t.constant(Tensor::vector({1, -2, 3, 0.5, 1}))));
      },
      std::vector<Tensor>{qr, beta});
  CHECK(err < 1e-6);
}

TEST_CASE("nonlinear map initialisation") {
  const double cal[] = {0.3, 0.5, 0.7};
  const auto beta = init_nonlinear_map(cal);
  CHECK(beta[0] == 1.0);
  CHECK(beta[1] == 0.0);
  CHECK(beta[2] == doctest::Approx(-2.5).epsilon(1e-12));
  CHECK(beta[3] == doctest::Approx(5.0).epsilon(1e-12));
  const double flat[] = {0.4, 0.4, 0.4};
  CHECK_THROWS_AS(init_nonlinear_map(flat), NumericError);
  const double one[] = {0.4};
  CHECK_THROWS_AS(init_nonlinear_map(one), NumericError);
}

TEST_CASE("alignment examples") {
  Tape tape;
  auto run = [&](double q, double s, double b) {
    return align(tape.constant(Tensor::scalar(q)), tape.constant(Tensor::vector({s, b}))).value().item();
  };
  CHECK(run(0.37, 1, 0) == 0.37);
  CHECK(run(0.5, 2, -1) == 0.0);

  ModelParams p = zero_model({2, 2, 2});
  add_alignment(p, "KoNViD-1k", 4.64 - 1.22, 1.22);
  const ModelVars v = bind_model(tape, p);
  const Tensor ends = align(tape.constant(Tensor::vector({0, 1})), v, "KoNViD-1k").value();
  CHECK(ends[0] == doctest::Approx(1.22).epsilon(1e-12));
  CHECK(ends[1] == doctest::Approx(4.64).epsilon(1e-12));
  CHECK_THROWS_AS(align(tape.constant(Tensor::vector({0})), v, "LIVE-VQC"), ValidationError);
  CHECK_THROWS_AS(add_alignment(p, "KoNViD-1k", 1, 0), ValidationError);
}

TEST_CASE("predict_video on a zero model") {
  ModelParams p = zero_model({5, 3, 2});
  std::mt19937_64 rng(14);
  const auto seq = as_sequence(oracle::random_tensor({9, 5}, rng), "z");
  const QualityTriple t = predict_video(seq, p, {});
  CHECK(t.q_r == 0.5);
  CHECK(!t.q_s.has_value());
}

TEST_CASE("predict_video matches a frame-by-frame evaluation") {
  ModelParams p = random_model({6, 4, 3}, 15);
  p.beta = Tensor::vector({2.0, -0.5, 0.3, 4.0});
  add_alignment(p, "d", 3.0, 1.0);
  std::mt19937_64 rng(16);
  for (std::size_t T : {1u, 4u, 23u}) {
    const Tensor video = oracle::random_tensor({T, 6}, rng);
    const auto seq = as_sequence(video, "v");
    const QualityTriple got = predict_video(seq, p, {5, 0.5}, "d");
    const auto expect = oracle::forward(p, seq.to_tensor(), {5, 0.5});
    CHECK(std::abs(got.q_r - expect.q_r) < 1e-12);
    CHECK(std::abs(got.q_p - expect.q_p) < 1e-12);
    REQUIRE(got.q_s.has_value());
    CHECK(std::abs(*got.q_s - (3.0 * got.q_p + 1.0)) < 1e-12);
    CHECK(got.q_r > 0.0);
    CHECK(got.q_r < 1.0);
    CHECK(predict_video(seq, p, {5, 0.5}, "d") == got);
  }
}

TEST_CASE("q_p ranks videos as q_r does when beta1 * beta4 > 0") {
  std::mt19937_64 rng(17);
  for (int trial = 0; trial < 20; ++trial) {
    auto b = random_scores(4, rng, 0.1, 3);
    b[2] = -b[2];
    double previous = -INFINITY;
    for (int i = 0; i <= 200; ++i) {
      const double v = nonlinear_map_value(i / 200.0, b);
      CHECK(v > previous);
      previous = v;
    }
  }
}

TEST_CASE("predict_video rejects a feature dimension mismatch") {
  const ModelParams p = zero_model({6, 4, 3});
  std::mt19937_64 rng(18);
  const auto seq = as_sequence(oracle::random_tensor({3, 5}, rng), "bad");
  try {
    predict_video(seq, p, {});
    FAIL("expected DimensionError");
  } catch (const DimensionError& e) {
    const std::string msg = e.what();
    CHECK(msg.find('5') != std::string::npos);
    CHECK(msg.find('6') != std::string::npos);
  }
}

TEST_CASE("checkpoint round-trips exactly") {
  Checkpoint c;
  c.params = random_model({5, 4, 3}, 19);
  c.params.beta = Tensor::vector({1.0 / 3.0, -0.1, 1e-300, 7.25});
  add_alignment(c.params, "a", 0.7, 0.0);
  add_alignment(c.params, "b", 2.1, 1.9);
  c.pooling = {7, 0.25};
  c.alignment_mode = AlignmentMode::LinearRescale;
  c.split_seed = 18446744073709551557ull;
  c.epoch = 12;
  c.val_srocc = 0.912345678901234;
  const Checkpoint back = checkpoint_from_json(checkpoint_to_json(c));
  std::vector<Tensor> a, b;
  c.params.visit([&](const std::string&, const Tensor& t) { a.push_back(t); });
  back.params.visit([&](const std::string&, const Tensor& t) { b.push_back(t); });
  CHECK(a == b);
  CHECK(back.params.alignments[1].dataset == "b");
  CHECK(back.pooling.tau == 7);
  CHECK(back.pooling.gamma == 0.25);
  CHECK(back.alignment_mode == AlignmentMode::LinearRescale);
  CHECK(back.split_seed == c.split_seed);
  CHECK(back.epoch == 12);
  CHECK(back.val_srocc == c.val_srocc);
}

TEST_CASE("malformed checkpoints") {
  CHECK_THROWS_AS(checkpoint_from_json("{}"), FormatError);
  CHECK_THROWS_AS(checkpoint_from_json("[1,2"), FormatError);
  Checkpoint c;
  c.params = zero_model({3, 2, 2});
  auto doc = nlohmann::json::parse(checkpoint_to_json(c));
  doc["version"] = 9;
  CHECK_THROWS_AS(checkpoint_from_json(doc.dump()), FormatError);
  doc["version"] = 1;
  doc.erase("pooling");
  CHECK_THROWS_AS(checkpoint_from_json(doc.dump()), FormatError);
  CHECK_THROWS_AS(load_checkpoint("/nonexistent/ckpt.json"), IoError);
}

TEST_CASE("pooling config validation") {
  CHECK_THROWS_AS((PoolingConfig{0, 0.5}.validate()), ConfigError);
  CHECK_THROWS_AS((PoolingConfig{3, 1.5}.validate()), ConfigError);
  CHECK_NOTHROW((PoolingConfig{1, 0.0}.validate()));
  CHECK(parse_alignment_mode("linear_rescale") == AlignmentMode::LinearRescale);
  CHECK_THROWS_AS(parse_alignment_mode("other"), ConfigError);
}
