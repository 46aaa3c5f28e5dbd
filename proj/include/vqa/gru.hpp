// SPDX-License-Identifier: Apache-2.0
/**
 * @file   gru.hpp
 * @brief  Gated recurrent unit built from tape operations.
 *
 *   z  = sigmoid(W_z x + bw_z + U_z h + bu_z)
 *   r  = sigmoid(W_r x + bw_r + U_r h + bu_r)
 *   n  = tanh(W_n x + bw_n + r * (U_n h + bu_n))
 *   h' = z * h + (1 - z) * n
 */
#pragma once

#include <cstddef>
#include <random>
#include <vector>

#include "vqa/autodiff.hpp"
#include "vqa/tensor.hpp"

namespace vqa {

template <class T>
struct GruWeights {
  T w_z, w_r, w_n;  // [n_h, n_in]
  T u_z, u_r, u_n;  // [n_h, n_h]
  T bw_z, bw_r, bw_n;
  T bu_z, bu_r, bu_n;

  template <class Self, class Fn>
  static void visit_fields(Self& self, Fn&& fn) {
    fn("w_z", self.w_z);
    fn("w_r", self.w_r);
    fn("w_n", self.w_n);
    fn("u_z", self.u_z);
    fn("u_r", self.u_r);
    fn("u_n", self.u_n);
    fn("bw_z", self.bw_z);
    fn("bw_r", self.bw_r);
    fn("bw_n", self.bw_n);
    fn("bu_z", self.bu_z);
    fn("bu_r", self.bu_r);
    fn("bu_n", self.bu_n);
  }
  template <class Fn>
  void visit(Fn&& fn) { visit_fields(*this, fn); }
  template <class Fn>
  void visit(Fn&& fn) const { visit_fields(*this, fn); }
};

using GruParams = GruWeights<Tensor>;
using GruVars = GruWeights<ad::Var>;

/// All-zero parameters for the given sizes.
GruParams zero_gru_params(std::size_t n_in, std::size_t n_h);
/// Weights uniform in +-1/sqrt(fan_in), biases zero.
GruParams random_gru_params(std::size_t n_in, std::size_t n_h,
                            std::mt19937_64& rng);

std::size_t gru_input_size(const GruParams& p);
std::size_t gru_hidden_size(const GruParams& p);
/// Throws DimensionError when the twelve tensors are not mutually consistent.
void validate_gru_params(const GruParams& p);

GruVars bind_gru(ad::Tape& tape, const GruParams& p, bool requires_grad = true);

/// One step given the input projections W_* x + bw_* (shape [..., n_h]).
ad::Var gru_update(ad::Var xz, ad::Var xr, ad::Var xn, ad::Var h_prev,
                   const GruVars& g);

/// x[..., n_in], h_prev[..., n_h] -> h[..., n_h].
ad::Var gru_cell(ad::Var x, ad::Var h_prev, const GruVars& g);

/// Unrolled GRU over xs[T, n_in] from h0[n_h]; row t of the result is h_t.
ad::Var seq_gru(ad::Var xs, ad::Var h0, const GruVars& g);

/// Batched unroll over xs[B, T_max, n_in]. Sequence b only advances while
/// t < lengths[b]; past its end the hidden state is carried unchanged, so
/// padded steps never affect the real ones. Returns [B, T_max, n_h].
ad::Var seq_gru_batch(ad::Var xs, ad::Var h0, const std::vector<std::size_t>& lengths,
                      const GruVars& g);

}  // namespace vqa
