// SPDX-License-Identifier: Apache-2.0
#include "vqa/gru.hpp"

#include <cmath>

#include "vqa/errors.hpp"

namespace vqa {

using ad::Var;

GruParams zero_gru_params(std::size_t n_in, std::size_t n_h) {
  GruParams p;
  p.w_z = p.w_r = p.w_n = Tensor({n_h, n_in});
  p.u_z = p.u_r = p.u_n = Tensor({n_h, n_h});
  p.bw_z = p.bw_r = p.bw_n = Tensor({n_h});
  p.bu_z = p.bu_r = p.bu_n = Tensor({n_h});
  return p;
}

GruParams random_gru_params(std::size_t n_in, std::size_t n_h,
                            std::mt19937_64& rng) {
  GruParams p = zero_gru_params(n_in, n_h);
  auto fill_uniform = [&rng](Tensor& t, std::size_t fan_in) {
    const double bound = 1.0 / std::sqrt(static_cast<double>(fan_in));
    std::uniform_real_distribution<double> dist(-bound, bound);
    for (double& v : t.data()) v = dist(rng);
  };
  for (Tensor* w : {&p.w_z, &p.w_r, &p.w_n}) fill_uniform(*w, n_in);
  for (Tensor* u : {&p.u_z, &p.u_r, &p.u_n}) fill_uniform(*u, n_h);
  return p;
}

std::size_t gru_input_size(const GruParams& p) { return p.w_z.dim(1); }
std::size_t gru_hidden_size(const GruParams& p) { return p.w_z.dim(0); }

void validate_gru_params(const GruParams& p) {
  if (p.w_z.rank() != 2) throw DimensionError("gru: W_z must be a matrix");
  const std::size_t n_h = p.w_z.dim(0);
  const std::size_t n_in = p.w_z.dim(1);
  const Shape w_shape{n_h, n_in}, u_shape{n_h, n_h}, b_shape{n_h};
  p.visit([&](const char* name, const Tensor& t) {
    const Shape& want = name[0] == 'w' ? w_shape : name[0] == 'u' ? u_shape : b_shape;
    if (t.shape() != want) {
      throw DimensionError(std::string("gru: ") + name + " has shape " +
                           shape_str(t.shape()) + ", expected " + shape_str(want));
    }
  });
}

GruVars bind_gru(ad::Tape& tape, const GruParams& p, bool requires_grad) {
  validate_gru_params(p);
  GruVars v;
  v.w_z = tape.leaf(p.w_z, requires_grad);
  v.w_r = tape.leaf(p.w_r, requires_grad);
  v.w_n = tape.leaf(p.w_n, requires_grad);
  v.u_z = tape.leaf(p.u_z, requires_grad);
  v.u_r = tape.leaf(p.u_r, requires_grad);
  v.u_n = tape.leaf(p.u_n, requires_grad);
  v.bw_z = tape.leaf(p.bw_z, requires_grad);
  v.bw_r = tape.leaf(p.bw_r, requires_grad);
  v.bw_n = tape.leaf(p.bw_n, requires_grad);
  v.bu_z = tape.leaf(p.bu_z, requires_grad);
  v.bu_r = tape.leaf(p.bu_r, requires_grad);
  v.bu_n = tape.leaf(p.bu_n, requires_grad);
  return v;
}

Var gru_update(Var xz, Var xr, Var xn, Var h_prev, const GruVars& g) {
  const Var z = ad::sigmoid(ad::add(xz, ad::affine(h_prev, g.u_z, g.bu_z)));
  const Var r = ad::sigmoid(ad::add(xr, ad::affine(h_prev, g.u_r, g.bu_r)));
  const Var n =
      ad::tanh(ad::add(xn, ad::mul(r, ad::affine(h_prev, g.u_n, g.bu_n))));
  // z * h + (1 - z) * n == n + z * (h - n)
  return ad::add(n, ad::mul(z, ad::sub(h_prev, n)));
}

Var gru_cell(Var x, Var h_prev, const GruVars& g) {
  const Shape& hs = h_prev.shape();
  if (hs.empty() || hs.back() != g.u_z.shape()[0]) {
    throw DimensionError("gru_cell: hidden state " + shape_str(hs) +
                         " does not match U " + shape_str(g.u_z.shape()));
  }
  return gru_update(ad::affine(x, g.w_z, g.bw_z), ad::affine(x, g.w_r, g.bw_r),
                    ad::affine(x, g.w_n, g.bw_n), h_prev, g);
}

Var seq_gru(Var xs, Var h0, const GruVars& g) {
  const Shape& s = xs.shape();
  if (s.size() != 2) {
    throw DimensionError("seq_gru: expected [T, n_in], got " + shape_str(s));
  }
  if (s[0] == 0) throw ValidationError("seq_gru: empty sequence");
  const std::size_t n_h = h0.shape().empty() ? 0 : h0.shape()[0];
  Var out = seq_gru_batch(ad::reshape(xs, {1, s[0], s[1]}),
                          ad::reshape(h0, {1, n_h}), {s[0]}, g);
  return ad::reshape(out, {s[0], n_h});
}

Var seq_gru_batch(Var xs, Var h0, const std::vector<std::size_t>& lengths,
                  const GruVars& g) {
  const Shape& s = xs.shape();
  if (s.size() != 3) {
    throw DimensionError("seq_gru_batch: expected [B, T, n_in], got " + shape_str(s));
  }
  const std::size_t batch = s[0];
  const std::size_t steps = s[1];
  if (steps == 0) throw ValidationError("seq_gru_batch: empty sequence");
  if (lengths.size() != batch) {
    throw DimensionError("seq_gru_batch: " + std::to_string(lengths.size()) +
                         " lengths for batch of " + std::to_string(batch));
  }
  for (std::size_t len : lengths) {
    if (len == 0 || len > steps) {
      throw DimensionError("seq_gru_batch: length " + std::to_string(len) +
                           " outside [1, " + std::to_string(steps) + "]");
    }
  }
  const std::size_t n_h = g.u_z.shape()[0];
  if (h0.shape() != Shape{batch, n_h}) {
    throw DimensionError("seq_gru_batch: h0 " + shape_str(h0.shape()) +
                         ", expected " + shape_str({batch, n_h}));
  }

  // Input projections for all steps at once.
  const Var pz = ad::affine(xs, g.w_z, g.bw_z);
  const Var pr = ad::affine(xs, g.w_r, g.bw_r);
  const Var pn = ad::affine(xs, g.w_n, g.bw_n);

  std::vector<Var> hidden;
  hidden.reserve(steps);
  Var h = h0;
  std::vector<bool> active(batch);
  for (std::size_t t = 0; t < steps; ++t) {
    Var next = gru_update(ad::select(pz, 1, t), ad::select(pr, 1, t),
                          ad::select(pn, 1, t), h, g);
    bool all_active = true;
    for (std::size_t b = 0; b < batch; ++b) {
      active[b] = t < lengths[b];
      all_active = all_active && active[b];
    }
    h = all_active ? next : ad::blend_rows(h, next, active);
    hidden.push_back(h);
  }
  return ad::stack(hidden, 1);
}

}  // namespace vqa
