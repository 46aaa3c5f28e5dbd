// SPDX-License-Identifier: Apache-2.0
/**
 * @file   model.hpp
 * @brief  Relative quality assessor, nonlinear mapping and per-dataset
 *         perceptual scale alignment.
 *
 * Per video with frame features f_t:
 *
 *   x_t  = W_fx f_t + b_fx                 feature reduction
 *   h_t  = GRU(x_t, h_{t-1}), h_0 = 0
 *   q_t  = W_hq h_t + b_hq                 frame score
 *   Q_r  = sigmoid(mean_t q'_t)            temporal-memory pooling
 *   Q_p  = b1 * sigmoid(b4 * Q_r + b3) + b2
 *   Q_s  = xi1 * Q_p + xi2                 for the dataset being rated
 */
#pragma once

#include <array>
#include <cstdint>
#include <functional>
#include <optional>
#include <random>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "vqa/autodiff.hpp"
#include "vqa/feature_io.hpp"
#include "vqa/gru.hpp"
#include "vqa/tensor.hpp"

namespace vqa {

struct PoolingConfig {
  std::size_t tau = 12;
  double gamma = 0.5;

  void validate() const;
};

enum class AlignmentMode { DatasetSpecific, LinearRescale };

std::string_view to_string(AlignmentMode m);
AlignmentMode parse_alignment_mode(std::string_view text);

template <class T>
struct Alignment {
  std::string dataset;
  T xi;  // [scale, shift]
};

template <class T>
struct ModelWeights {
  T w_fx, b_fx;  // [R, F], [R]
  GruWeights<T> gru;
  T w_hq, b_hq;  // [1, H], [1]
  T beta;        // [4]: range scale, range shift, input shift, input scale
  std::vector<Alignment<T>> alignments;

  template <class Self, class Fn>
  static void visit_fields(Self& self, Fn&& fn) {
    fn(std::string("reduce.w"), self.w_fx);
    fn(std::string("reduce.b"), self.b_fx);
    self.gru.visit([&](const char* name, auto& t) { fn("gru." + std::string(name), t); });
    fn(std::string("score.w"), self.w_hq);
    fn(std::string("score.b"), self.b_hq);
    fn(std::string("map.beta"), self.beta);
    for (auto& a : self.alignments) fn("align." + a.dataset, a.xi);
  }
  /// Calls fn(name, tensor) for every parameter in a fixed order.
  template <class Fn>
  void visit(Fn&& fn) { visit_fields(*this, fn); }
  template <class Fn>
  void visit(Fn&& fn) const { visit_fields(*this, fn); }

  std::optional<std::size_t> alignment_index(std::string_view dataset) const {
    for (std::size_t i = 0; i < alignments.size(); ++i)
      if (alignments[i].dataset == dataset) return i;
    return std::nullopt;
  }
};

using ModelParams = ModelWeights<Tensor>;
using ModelVars = ModelWeights<ad::Var>;

struct ModelDims {
  std::size_t feature_dim = 4096;
  std::size_t reduced_dim = 128;
  std::size_t hidden_dim = 32;
};

/// Every tensor zero; beta = (1, 0, 0, 1); no alignments.
ModelParams zero_model(const ModelDims& dims);
/// Weights uniform in +-1/sqrt(fan_in), biases zero, beta = (1, 0, 0, 1).
ModelParams init_model(const ModelDims& dims, std::mt19937_64& rng);
void add_alignment(ModelParams& params, std::string dataset, double scale,
                   double shift);
ModelDims dims_of(const ModelParams& params);
/// Throws DimensionError on inconsistent shapes, NumericError on non-finite
/// values.
void validate_model(const ModelParams& params);

using TrainablePredicate = std::function<bool(const std::string& name)>;

/// Places every parameter on the tape; names rejected by `trainable` become
/// constants.
ModelVars bind_model(ad::Tape& tape, const ModelParams& params,
                     const TrainablePredicate& trainable = {});

ad::Var reduce_features(ad::Var features, const ModelVars& m);

/// x[T, R] -> q[T].
ad::Var frame_scores(ad::Var x, const ModelVars& m);
/// x[B, T_max, R] -> q[B, T_max]; entries past lengths[b] are unspecified.
ad::Var frame_scores_batch(ad::Var x, const std::vector<std::size_t>& lengths,
                           const ModelVars& m);

/// Mean over t of q'_t = gamma * l_t + (1 - gamma) * m_t for each row, where
/// l_t is the minimum of the previous tau scores (l_1 = q_1) and m_t the
/// softmin-weighted average of q_t..q_{t+tau}. q[B, T_max] -> [B]. The min
/// passes its gradient to the lowest-index minimiser.
ad::Var pooled_scores(ad::Var q, const std::vector<std::size_t>& lengths,
                      const PoolingConfig& cfg);
/// q[T] -> scalar Q_r.
ad::Var temporal_pool(ad::Var q, const PoolingConfig& cfg);
/// q[B, T_max] -> Q_r[B].
ad::Var temporal_pool_batch(ad::Var q, const std::vector<std::size_t>& lengths,
                            const PoolingConfig& cfg);

/// Q_p = beta[0] * sigmoid(beta[3] * q_r + beta[2]) + beta[1], elementwise.
ad::Var nonlinear_map(ad::Var q_r, ad::Var beta);
double nonlinear_map_value(double q_r, std::span<const double> beta);

/// beta from the spread of relative scores: (1, 0, -mean/std, 1/std) with the
/// sample standard deviation. Throws NumericError for < 2 values or zero
/// spread.
std::array<double, 4> init_nonlinear_map(std::span<const double> calibration_qr);

/// Q_s = xi[0] * q_p + xi[1].
ad::Var align(ad::Var q_p, ad::Var xi);
/// Looks up the alignment for `dataset`; throws ValidationError if missing.
ad::Var align(ad::Var q_p, const ModelVars& m, std::string_view dataset);

struct BatchOutputs {
  ad::Var q_r;
  ad::Var q_p;
  std::optional<ad::Var> q_s;
};

/// Full forward pass over padded features[B, T_max, F].
BatchOutputs forward_batch(const ModelVars& m, ad::Var features,
                           const std::vector<std::size_t>& lengths,
                           const PoolingConfig& cfg,
                           std::optional<std::size_t> alignment = std::nullopt);

/// Zero-padded [B, T_max, F] stack of [T_i, F] tensors plus their lengths.
struct PaddedFeatures {
  Tensor features;
  std::vector<std::size_t> lengths;
};
PaddedFeatures pad_sequences(std::span<const Tensor* const> videos);

struct QualityTriple {
  double q_r = 0.5;
  double q_p = 0.0;
  std::optional<double> q_s;

  bool operator==(const QualityTriple&) const = default;
};

QualityTriple predict_video(const FrameFeatureSequence& seq,
                            const ModelParams& params, const PoolingConfig& cfg,
                            std::optional<std::string_view> dataset = std::nullopt);

/// Batched inference over [T_i, F] tensors, `chunk` videos per pass.
std::vector<QualityTriple> predict_many(std::span<const Tensor* const> videos,
                                        const ModelParams& params,
                                        const PoolingConfig& cfg,
                                        std::optional<std::string_view> dataset = std::nullopt,
                                        std::size_t chunk = 64);

}  // namespace vqa
