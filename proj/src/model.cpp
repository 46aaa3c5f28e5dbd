// SPDX-License-Identifier: Apache-2.0
#include "vqa/model.hpp"

#include <algorithm>
#include <cmath>

#include "vqa/errors.hpp"

namespace vqa {

using ad::Var;

void PoolingConfig::validate() const {
  if (tau < 1) throw ConfigError("pooling tau must be >= 1");
  if (!(gamma >= 0.0 && gamma <= 1.0)) throw ConfigError("pooling gamma must lie in [0, 1]");
}

std::string_view to_string(AlignmentMode m) {
  return m == AlignmentMode::DatasetSpecific ? "dataset_specific" : "linear_rescale";
}

AlignmentMode parse_alignment_mode(std::string_view text) {
  if (text == "dataset_specific") return AlignmentMode::DatasetSpecific;
  if (text == "linear_rescale") return AlignmentMode::LinearRescale;
  throw ConfigError("unknown alignment mode '" + std::string(text) +
                    "' (dataset_specific|linear_rescale)");
}

// ---------------------------------------------------------------------------
// Parameters
// ---------------------------------------------------------------------------

ModelParams zero_model(const ModelDims& dims) {
  ModelParams p;
  p.w_fx = Tensor({dims.reduced_dim, dims.feature_dim});
  p.b_fx = Tensor({dims.reduced_dim});
  p.gru = zero_gru_params(dims.reduced_dim, dims.hidden_dim);
  p.w_hq = Tensor({1, dims.hidden_dim});
  p.b_hq = Tensor({1});
  p.beta = Tensor::vector({1.0, 0.0, 0.0, 1.0});
  return p;
}

ModelParams init_model(const ModelDims& dims, std::mt19937_64& rng) {
  ModelParams p = zero_model(dims);
  auto fill_uniform = [&rng](Tensor& t, std::size_t fan_in) {
    const double bound = 1.0 / std::sqrt(static_cast<double>(fan_in));
    std::uniform_real_distribution<double> dist(-bound, bound);
    for (double& v : t.data()) v = dist(rng);
  };
  fill_uniform(p.w_fx, dims.feature_dim);
  p.gru = random_gru_params(dims.reduced_dim, dims.hidden_dim, rng);
  fill_uniform(p.w_hq, dims.hidden_dim);
  return p;
}

void add_alignment(ModelParams& params, std::string dataset, double scale,
                   double shift) {
  if (params.alignment_index(dataset)) {
    throw ValidationError("alignment for dataset '" + dataset + "' already exists");
  }
  params.alignments.push_back({std::move(dataset), Tensor::vector({scale, shift})});
}

ModelDims dims_of(const ModelParams& params) {
  return ModelDims{params.w_fx.dim(1), params.w_fx.dim(0), params.w_hq.dim(1)};
}

void validate_model(const ModelParams& p) {
  if (p.w_fx.rank() != 2 || p.w_hq.rank() != 2) {
    throw DimensionError("model weights must be matrices");
  }
  const ModelDims d = dims_of(p);
  auto expect = [](const std::string& name, const Tensor& t, const Shape& s) {
    if (t.shape() != s) {
      throw DimensionError(name + " has shape " + shape_str(t.shape()) +
                           ", expected " + shape_str(s));
    }
  };
  expect("reduce.b", p.b_fx, {d.reduced_dim});
  validate_gru_params(p.gru);
  expect("gru.w_z", p.gru.w_z, {d.hidden_dim, d.reduced_dim});
  expect("score.w", p.w_hq, {1, d.hidden_dim});
  expect("score.b", p.b_hq, {1});
  expect("map.beta", p.beta, {4});
  for (const auto& a : p.alignments) expect("align." + a.dataset, a.xi, {2});
  p.visit([](const std::string& name, const Tensor& t) {
    if (!t.all_finite()) throw NumericError("parameter " + name + " is not finite");
  });
}

ModelVars bind_model(ad::Tape& tape, const ModelParams& params,
                     const TrainablePredicate& trainable) {
  std::vector<Var> leaves;
  params.visit([&](const std::string& name, const Tensor& t) {
    leaves.push_back(tape.leaf(t, !trainable || trainable(name)));
  });
  ModelVars v;
  for (const auto& a : params.alignments) v.alignments.push_back({a.dataset, Var{}});
  std::size_t k = 0;
  v.visit([&](const std::string&, Var& var) { var = leaves[k++]; });
  return v;
}

// ---------------------------------------------------------------------------
// Relative quality assessor
// ---------------------------------------------------------------------------

Var reduce_features(Var features, const ModelVars& m) {
  return ad::affine(features, m.w_fx, m.b_fx);
}

Var frame_scores(Var x, const ModelVars& m) {
  const Shape s = x.shape();
  if (s.size() != 2) throw DimensionError("frame_scores: expected [T, R], got " + shape_str(s));
  if (s[0] == 0) throw ValidationError("frame_scores: empty sequence");
  Var q = frame_scores_batch(ad::reshape(x, {1, s[0], s[1]}), {s[0]}, m);
  return ad::reshape(q, {s[0]});
}

Var frame_scores_batch(Var x, const std::vector<std::size_t>& lengths,
                       const ModelVars& m) {
  const Shape s = x.shape();
  if (s.size() != 3) {
    throw DimensionError("frame_scores_batch: expected [B, T, R], got " + shape_str(s));
  }
  const std::size_t hidden = m.w_hq.shape()[1];
  Var h0 = x.tape()->constant(Tensor({s[0], hidden}));
  Var h = seq_gru_batch(x, h0, lengths, m.gru);
  return ad::reshape(ad::affine(h, m.w_hq, m.b_hq), {s[0], s[1]});
}

namespace {

struct WindowStats {
  std::size_t argmin_prev;  // lowest-index minimiser over the memory window
  double memory;
  double current;
};

// Memory and current elements at 0-based frame t of a row of length len.
WindowStats window_stats(const double* q, std::size_t len, std::size_t t,
                         std::size_t tau, std::vector<double>& weights) {
  WindowStats s{};
  if (t == 0) {
    s.argmin_prev = 0;
  } else {
    const std::size_t lo = t > tau ? t - tau : 0;
    s.argmin_prev = lo;
    for (std::size_t k = lo + 1; k < t; ++k)
      if (q[k] < q[s.argmin_prev]) s.argmin_prev = k;
  }
  s.memory = q[s.argmin_prev];

  const std::size_t hi = std::min(t + tau, len - 1);
  double lowest = q[t];
  for (std::size_t k = t + 1; k <= hi; ++k) lowest = std::min(lowest, q[k]);
  weights.assign(hi - t + 1, 0.0);
  double z = 0.0;
  for (std::size_t k = t; k <= hi; ++k) {
    weights[k - t] = std::exp(-(q[k] - lowest));
    z += weights[k - t];
  }
  s.current = 0.0;
  for (std::size_t k = t; k <= hi; ++k) {
    weights[k - t] /= z;
    s.current += weights[k - t] * q[k];
  }
  return s;
}

}  // namespace

Var pooled_scores(Var q, const std::vector<std::size_t>& lengths,
                  const PoolingConfig& cfg) {
  cfg.validate();
  const Shape s = q.shape();
  if (s.size() != 2) throw DimensionError("pooled_scores: expected [B, T], got " + shape_str(s));
  const std::size_t rows = s[0];
  const std::size_t cols = s[1];
  if (cols == 0) throw ValidationError("temporal pooling of an empty sequence");
  if (lengths.size() != rows) {
    throw DimensionError("pooled_scores: " + std::to_string(lengths.size()) +
                         " lengths for " + std::to_string(rows) + " rows");
  }
  for (std::size_t len : lengths) {
    if (len == 0) throw ValidationError("temporal pooling of an empty sequence");
    if (len > cols) throw DimensionError("pooled_scores: length exceeds padded width");
  }

  const Tensor& qv = q.value();
  Tensor out({rows});
  std::vector<double> weights;
  for (std::size_t b = 0; b < rows; ++b) {
    const double* row = qv.data().data() + b * cols;
    double acc = 0.0;
    for (std::size_t t = 0; t < lengths[b]; ++t) {
      const WindowStats ws = window_stats(row, lengths[b], t, cfg.tau, weights);
      acc += cfg.gamma * ws.memory + (1.0 - cfg.gamma) * ws.current;
    }
    out[b] = acc / static_cast<double>(lengths[b]);
  }

  const Var parents[] = {q};
  return q.tape()->record(
      std::move(out), parents, [q, lengths, cfg, cols](ad::Tape& t, const Tensor& g) {
        const Tensor& qv = q.value();
        auto gq = t.grad_buffer(q);
        std::vector<double> weights;
        for (std::size_t b = 0; b < lengths.size(); ++b) {
          const double* row = qv.data().data() + b * cols;
          double* grow = gq.data() + b * cols;
          const double scale = g[b] / static_cast<double>(lengths[b]);
          for (std::size_t tt = 0; tt < lengths[b]; ++tt) {
            const WindowStats ws = window_stats(row, lengths[b], tt, cfg.tau, weights);
            grow[ws.argmin_prev] += cfg.gamma * scale;
            // d m / d q_k = w_k (1 - q_k + m)
            for (std::size_t j = 0; j < weights.size(); ++j) {
              const std::size_t k = tt + j;
              grow[k] += (1.0 - cfg.gamma) * scale * weights[j] * (1.0 - row[k] + ws.current);
            }
          }
        }
      });
}

Var temporal_pool(Var q, const PoolingConfig& cfg) {
  const Shape s = q.shape();
  if (s.size() != 1) throw DimensionError("temporal_pool: expected [T], got " + shape_str(s));
  if (s[0] == 0) throw ValidationError("temporal pooling of an empty sequence");
  Var pooled = pooled_scores(ad::reshape(q, {1, s[0]}), {s[0]}, cfg);
  return ad::reshape(ad::sigmoid(pooled), {});
}

Var temporal_pool_batch(Var q, const std::vector<std::size_t>& lengths,
                        const PoolingConfig& cfg) {
  return ad::sigmoid(pooled_scores(q, lengths, cfg));
}

// ---------------------------------------------------------------------------
// Nonlinear mapping and alignment
// ---------------------------------------------------------------------------

Var nonlinear_map(Var q_r, Var beta) {
  if (beta.shape() != Shape{4}) {
    throw DimensionError("nonlinear_map: beta must have shape [4], got " + shape_str(beta.shape()));
  }
  const Var inner =
      ad::add_by(ad::mul_by(q_r, ad::element(beta, 3)), ad::element(beta, 2));
  return ad::add_by(ad::mul_by(ad::sigmoid(inner), ad::element(beta, 0)),
                    ad::element(beta, 1));
}

double nonlinear_map_value(double q_r, std::span<const double> beta) {
  if (beta.size() != 4) throw DimensionError("nonlinear_map_value: beta must have 4 entries");
  const double x = beta[3] * q_r + beta[2];
  const double s = x >= 0 ? 1.0 / (1.0 + std::exp(-x)) : std::exp(x) / (1.0 + std::exp(x));
  return beta[0] * s + beta[1];
}

std::array<double, 4> init_nonlinear_map(std::span<const double> qr) {
  if (qr.size() < 2) throw NumericError("nonlinear map calibration needs at least 2 scores");
  // Identical scores can leave a rounding-level spread behind the mean.
  const auto [lo, hi] = std::minmax_element(qr.begin(), qr.end());
  if (*lo == *hi) throw NumericError("nonlinear map calibration has zero spread");
  double mean = 0.0;
  for (double v : qr) mean += v;
  mean /= static_cast<double>(qr.size());
  double ss = 0.0;
  for (double v : qr) ss += (v - mean) * (v - mean);
  const double sd = std::sqrt(ss / static_cast<double>(qr.size() - 1));
  if (!(sd > 0.0) || !std::isfinite(sd)) {
    throw NumericError("nonlinear map calibration has zero spread");
  }
  constexpr double c = 1.0;
  return {1.0, 0.0, -c * mean / sd, c / sd};
}

Var align(Var q_p, Var xi) {
  if (xi.shape() != Shape{2}) {
    throw DimensionError("align: xi must have shape [2], got " + shape_str(xi.shape()));
  }
  return ad::add_by(ad::mul_by(q_p, ad::element(xi, 0)), ad::element(xi, 1));
}

Var align(Var q_p, const ModelVars& m, std::string_view dataset) {
  const auto idx = m.alignment_index(dataset);
  if (!idx) throw ValidationError("no alignment for dataset '" + std::string(dataset) + "'");
  return align(q_p, m.alignments[*idx].xi);
}

// ---------------------------------------------------------------------------
// Composition
// ---------------------------------------------------------------------------

BatchOutputs forward_batch(const ModelVars& m, Var features,
                           const std::vector<std::size_t>& lengths,
                           const PoolingConfig& cfg,
                           std::optional<std::size_t> alignment) {
  const Shape s = features.shape();
  const std::size_t feature_dim = m.w_fx.shape()[1];
  if (s.size() != 3 || s[2] != feature_dim) {
    throw DimensionError("features " + shape_str(s) + " do not match model feature dim " +
                         std::to_string(feature_dim));
  }
  BatchOutputs out;
  const Var q = frame_scores_batch(reduce_features(features, m), lengths, m);
  out.q_r = temporal_pool_batch(q, lengths, cfg);
  out.q_p = nonlinear_map(out.q_r, m.beta);
  if (alignment) {
    if (*alignment >= m.alignments.size()) {
      throw ValidationError("alignment index out of range");
    }
    out.q_s = align(out.q_p, m.alignments[*alignment].xi);
  }
  return out;
}

PaddedFeatures pad_sequences(std::span<const Tensor* const> videos) {
  if (videos.empty()) throw ValidationError("cannot pad an empty batch");
  const std::size_t dim = videos[0]->dim(1);
  std::size_t longest = 0;
  for (const Tensor* v : videos) {
    if (v->rank() != 2 || v->dim(1) != dim) {
      throw DimensionError("pad_sequences: video shape " + shape_str(v->shape()) +
                           " does not match feature dim " + std::to_string(dim));
    }
    if (v->dim(0) == 0) throw ValidationError("pad_sequences: video without frames");
    longest = std::max(longest, v->dim(0));
  }
  PaddedFeatures out{Tensor({videos.size(), longest, dim}), {}};
  for (std::size_t b = 0; b < videos.size(); ++b) {
    const Tensor& v = *videos[b];
    std::copy(v.data().begin(), v.data().end(),
              out.features.data().begin() + static_cast<std::ptrdiff_t>(b * longest * dim));
    out.lengths.push_back(v.dim(0));
  }
  return out;
}

std::vector<QualityTriple> predict_many(std::span<const Tensor* const> videos,
                                        const ModelParams& params,
                                        const PoolingConfig& cfg,
                                        std::optional<std::string_view> dataset,
                                        std::size_t chunk) {
  std::optional<std::size_t> alignment;
  if (dataset) {
    alignment = params.alignment_index(*dataset);
    if (!alignment) {
      throw ValidationError("no alignment for dataset '" + std::string(*dataset) + "'");
    }
  }
  const std::size_t feature_dim = params.w_fx.dim(1);
  for (const Tensor* v : videos) {
    if (v->rank() != 2 || v->dim(1) != feature_dim) {
      throw DimensionError("video feature dim " + std::to_string(v->rank() == 2 ? v->dim(1) : 0) +
                           " does not match model feature dim " + std::to_string(feature_dim));
    }
  }
  std::vector<QualityTriple> out;
  out.reserve(videos.size());
  chunk = std::max<std::size_t>(chunk, 1);
  for (std::size_t start = 0; start < videos.size(); start += chunk) {
    const std::size_t stop = std::min(videos.size(), start + chunk);
    const PaddedFeatures padded = pad_sequences(videos.subspan(start, stop - start));
    ad::Tape tape;
    const ModelVars m = bind_model(tape, params, [](const std::string&) { return false; });
    const BatchOutputs o = forward_batch(m, tape.constant(padded.features),
                                         padded.lengths, cfg, alignment);
    for (std::size_t i = 0; i < stop - start; ++i) {
      QualityTriple tr{o.q_r.value()[i], o.q_p.value()[i], std::nullopt};
      if (o.q_s) tr.q_s = o.q_s->value()[i];
      out.push_back(tr);
    }
  }
  return out;
}

QualityTriple predict_video(const FrameFeatureSequence& seq,
                            const ModelParams& params, const PoolingConfig& cfg,
                            std::optional<std::string_view> dataset) {
  seq.validate();
  const Tensor features = seq.to_tensor();
  const Tensor* one[] = {&features};
  return predict_many(one, params, cfg, dataset).front();
}

}  // namespace vqa
