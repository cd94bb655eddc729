#pragma once

// Test-only oracles. The finite-difference checker and the plain-loop
// attention reference below never touch the tape machinery they are used to
// verify; they recompute everything from values alone.

#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <cstddef>
#include <random>
#include <vector>

#include "redattn/rng.hpp"
#include "redattn/tensor.hpp"

namespace testutil {

inline redattn::Tensor<double> rand_tensor(redattn::Shape shape, std::mt19937_64& rng,
                                           double lo = -1.0, double hi = 1.0) {
  auto t = redattn::Tensor<double>::zeros(std::move(shape));
  for (std::size_t i = 0; i < t.size(); ++i) t.data()[i] = redattn::uniform_draw(rng, lo, hi);
  return t;
}

// Central finite differences against the tape gradient. `build_loss` must
// read the leaf tensors through the handles given here and return a scalar;
// it is re-run with no active tape for every +/- step probe.
template <typename F>
void expect_gradients_match(F&& build_loss, std::vector<redattn::Tensor<double>> leaves,
                            double step = 1e-5, double rel_tol = 1e-4,
                            double abs_floor = 1e-6) {
  for (auto& leaf : leaves) {
    leaf.set_requires_grad(true);
    leaf.zero_grad();
  }
  {
    redattn::Tape<double> tape;
    auto loss = build_loss();
    redattn::backward(loss);
  }
  for (std::size_t li = 0; li < leaves.size(); ++li) {
    auto& leaf = leaves[li];
    auto g = leaf.grad();
    for (std::size_t i = 0; i < leaf.size(); ++i) {
      const double keep = leaf.data()[i];
      leaf.data()[i] = keep + step;
      const double up = build_loss().item();
      leaf.data()[i] = keep - step;
      const double down = build_loss().item();
      leaf.data()[i] = keep;
      const double fd = (up - down) / (2.0 * step);
      const double tol = std::max(abs_floor, rel_tol * std::max(std::abs(fd), std::abs(g[i])));
      INFO("leaf " << li << " component " << i << ": tape " << g[i] << " vs fd " << fd);
      REQUIRE(std::abs(g[i] - fd) <= tol);
    }
  }
}

// ---------------------------------------------------------------------------
// Plain-loop reference for the attention formulas, double precision, no
// shared code with the library ops.

using Mat = std::vector<std::vector<double>>;

inline Mat ref_matmul(const Mat& a, const Mat& b) {
  Mat c(a.size(), std::vector<double>(b[0].size(), 0.0));
  for (std::size_t i = 0; i < a.size(); ++i)
    for (std::size_t j = 0; j < b[0].size(); ++j)
      for (std::size_t p = 0; p < b.size(); ++p) c[i][j] += a[i][p] * b[p][j];
  return c;
}

inline Mat ref_softmax_rows(const Mat& a) {
  Mat y = a;
  for (auto& row : y) {
    double mx = row[0];
    for (double v : row) mx = std::max(mx, v);
    double denom = 0.0;
    for (double& v : row) {
      v = std::exp(v - mx);
      denom += v;
    }
    for (double& v : row) v /= denom;
  }
  return y;
}

// softmax(Q K^T / sqrt(d_k)) V evaluated step by step.
inline Mat ref_attention(const Mat& q, const Mat& k, const Mat& v) {
  const std::size_t dk = q[0].size();
  Mat scores(q.size(), std::vector<double>(k.size(), 0.0));
  for (std::size_t i = 0; i < q.size(); ++i)
    for (std::size_t j = 0; j < k.size(); ++j) {
      double dot = 0.0;
      for (std::size_t p = 0; p < dk; ++p) dot += q[i][p] * k[j][p];
      scores[i][j] = dot / std::sqrt(static_cast<double>(dk));
    }
  return ref_matmul(ref_softmax_rows(scores), v);
}

// Full reducing block: K = X Wk, V = X Wv, Q = Ws (X Wq), then attention.
inline Mat ref_reduce_attention(const Mat& x, const Mat& wq, const Mat& wk, const Mat& wv,
                                const Mat& ws) {
  return ref_attention(ref_matmul(ws, ref_matmul(x, wq)), ref_matmul(x, wk),
                       ref_matmul(x, wv));
}

inline Mat to_mat(const redattn::Tensor<double>& t) {
  Mat m(t.rows(), std::vector<double>(t.cols()));
  for (std::size_t i = 0; i < t.rows(); ++i)
    for (std::size_t j = 0; j < t.cols(); ++j) m[i][j] = t.at(i, j);
  return m;
}

}  // namespace testutil
