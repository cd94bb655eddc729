#pragma once

// Scaled dot-product attention with a trainable sequence-scaling matrix on
// the query side. Keys and values keep one row per input token; the scaling
// matrix w_s remaps the projected queries to n_out rows, so the output
// sequence length follows w_s alone. n_out < n_in reduces a sequence,
// n_out > n_in expands it, and w_s = I recovers plain self-attention.

#include <cmath>
#include <cstddef>
#include <random>

#include "redattn/errors.hpp"
#include "redattn/rng.hpp"
#include "redattn/tensor.hpp"

namespace redattn {

// Weights of one attention block. w_q, w_k, w_v are d_in x d_attn; w_s is
// n_out x n_in and pins the block to exactly one sequence-length mapping.
template <typename T>
struct AttentionParams {
  Tensor<T> w_q;
  Tensor<T> w_k;
  Tensor<T> w_v;
  Tensor<T> w_s;

  std::size_t n_in() const { return w_s.cols(); }
  std::size_t n_out() const { return w_s.rows(); }
  std::size_t d_in() const { return w_q.rows(); }
  std::size_t d_attn() const { return w_q.cols(); }
};

template <typename T>
struct Projected {
  Tensor<T> q;
  Tensor<T> k;
  Tensor<T> v;
};

// All four matrices drawn uniform(-1/sqrt(fan_in), +1/sqrt(fan_in)); fan_in
// is d_in for the projections and n_in for the scaling matrix, which keeps
// scaled-query magnitudes comparable to the identity case.
template <typename T>
AttentionParams<T> init_attention(std::size_t n_in, std::size_t n_out, std::size_t d_in,
                                  std::size_t d_attn, std::mt19937_64& rng) {
  auto draw = [&rng](Shape shape, std::size_t fan_in) {
    Tensor<T> w = Tensor<T>::zeros(std::move(shape), true);
    const double bound = 1.0 / std::sqrt(static_cast<double>(fan_in));
    for (std::size_t i = 0; i < w.size(); ++i)
      w.data()[i] = static_cast<T>(uniform_draw(rng, -bound, bound));
    return w;
  };
  AttentionParams<T> p;
  p.w_q = draw({d_in, d_attn}, d_in);
  p.w_k = draw({d_in, d_attn}, d_in);
  p.w_v = draw({d_in, d_attn}, d_in);
  p.w_s = draw({n_out, n_in}, n_in);
  return p;
}

// K = x w_k, V = x w_v, Q = w_s (x w_q). x must have exactly n_in rows; the
// scaling matrix removes any flexibility in the input sequence length.
template <typename T>
Projected<T> project_qkv(const Tensor<T>& x, const AttentionParams<T>& p) {
  detail::require_matrix(x, "project_qkv");
  if (x.rows() != p.n_in())
    throw FixedLengthError("project_qkv: input has " + std::to_string(x.rows()) +
                           " rows but w_s fixes the sequence length to " +
                           std::to_string(p.n_in()));
  Projected<T> out;
  out.q = matmul(p.w_s, matmul(x, p.w_q));
  out.k = matmul(x, p.w_k);
  out.v = matmul(x, p.w_v);
  return out;
}

// softmax(q k^T / sqrt(d_k)), one weight row per query row.
template <typename T>
Tensor<T> attention_weights(const Tensor<T>& q, const Tensor<T>& k) {
  if (q.cols() != k.cols())
    throw DimensionError("attention: query width " + std::to_string(q.cols()) +
                         " does not match key width " + std::to_string(k.cols()));
  const T inv_sqrt_dk = T(1) / std::sqrt(static_cast<T>(q.cols()));
  return softmax_rows(scale(matmul_nt(q, k), inv_sqrt_dk));
}

// softmax(q k^T / sqrt(d_k)) v. Output is n_q x d_v: the row count is
// dictated by the query matrix alone.
template <typename T>
Tensor<T> scaled_dot_attention(const Tensor<T>& q, const Tensor<T>& k, const Tensor<T>& v) {
  if (k.rows() != v.rows())
    throw DimensionError("attention: " + std::to_string(k.rows()) + " key rows vs " +
                         std::to_string(v.rows()) + " value rows");
  return matmul(attention_weights(q, k), v);
}

// One reducing (or expanding) block: attention over the projected views.
template <typename T>
Tensor<T> reduce_attention(const Tensor<T>& x, const AttentionParams<T>& p) {
  Projected<T> qkv = project_qkv(x, p);
  return scaled_dot_attention(qkv.q, qkv.k, qkv.v);
}

}  // namespace redattn
