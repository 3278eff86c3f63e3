#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <span>
#include <stdexcept>
#include <vector>

#include "poperm/matrix.hpp"

namespace poperm {

// Guard on the Frobenius normalisation; reached only when every pairwise
// comparison cancels (e.g. all set elements identical). The guarded branch
// propagates a zero gradient.
inline constexpr double kCostNormEpsilon = 1e-12;

// Two-layer comparison network f. Input is the concatenated pair [x_i; x_j],
// hidden layer is ReLU, output has one channel per ordering axis (1 for
// sequences, 2 for grids).
struct OrderingCostParams {
  DenseMatrix w1;          // hidden x 2*featdim
  std::vector<double> b1;  // hidden
  DenseMatrix w2;          // channels x hidden
  std::vector<double> b2;  // channels

  std::size_t feature_dim() const { return w1.cols() / 2; }
  std::size_t hidden_dim() const { return w1.rows(); }
  std::size_t channels() const { return w2.rows(); }

  void validate() const {
    if (w1.cols() == 0 || w1.cols() % 2 != 0)
      throw std::invalid_argument("OrderingCostParams: w1 must have 2*featdim columns");
    if (b1.size() != w1.rows()) throw std::invalid_argument("OrderingCostParams: b1 size mismatch");
    if (w2.cols() != w1.rows()) throw std::invalid_argument("OrderingCostParams: w2/w1 mismatch");
    if (b2.size() != w2.rows()) throw std::invalid_argument("OrderingCostParams: b2 size mismatch");
    if (w2.rows() != 1 && w2.rows() != 2)
      throw std::invalid_argument("OrderingCostParams: channels must be 1 or 2");
  }
};

struct OrderingCostGrads {
  DenseMatrix w1;
  std::vector<double> b1;
  DenseMatrix w2;
  std::vector<double> b2;

  static OrderingCostGrads zeros_like(const OrderingCostParams& p) {
    return {DenseMatrix(p.w1.rows(), p.w1.cols()), std::vector<double>(p.b1.size(), 0.0),
            DenseMatrix(p.w2.rows(), p.w2.cols()), std::vector<double>(p.b2.size(), 0.0)};
  }
};

// Everything cost_matrix_vjp needs: the set, the pre-activations for all N^2
// ordered pairs (pair (i,j) at row i*N+j), the raw anti-symmetrised costs and
// their Frobenius norms.
struct CostCache {
  DenseMatrix input;                // N x featdim
  DenseMatrix preactivations;       // N^2 x hidden
  std::vector<DenseMatrix> ctilde;  // per channel, N x N
  std::vector<double> norm;         // per channel
};

// f(concat(xi, xj)): ReLU MLP, one value per channel.
inline std::vector<double> pairwise_f(const OrderingCostParams& params,
                                      std::span<const double> xi, std::span<const double> xj,
                                      double* preact_out = nullptr) {
  params.validate();
  const std::size_t d = params.feature_dim();
  if (xi.size() != d || xj.size() != d)
    throw std::invalid_argument("pairwise_f: feature dimension mismatch");
  const std::size_t hidden = params.hidden_dim();

  std::vector<double> out(params.channels(), 0.0);
  for (std::size_t h = 0; h < hidden; ++h) {
    const double* w_row = params.w1.data() + h * params.w1.cols();
    double pre = params.b1[h];
    for (std::size_t k = 0; k < d; ++k) pre += w_row[k] * xi[k] + w_row[d + k] * xj[k];
    if (preact_out) preact_out[h] = pre;
    if (pre > 0.0) {
      for (std::size_t c = 0; c < out.size(); ++c) out[c] += params.w2(c, h) * pre;
    }
  }
  for (std::size_t c = 0; c < out.size(); ++c) out[c] += params.b2[c];
  return out;
}

namespace detail {

// Sum of squares accumulated in sorted order, so the norm is bit-identical
// under any reordering of the set elements.
inline double ordered_sum_of_squares(const DenseMatrix& m) {
  std::vector<double> squares(m.size());
  for (std::size_t i = 0; i < m.size(); ++i) squares[i] = m.data()[i] * m.data()[i];
  std::sort(squares.begin(), squares.end());
  double acc = 0.0;
  for (double v : squares) acc += v;
  return acc;
}

}  // namespace detail

// Ordering cost per channel: C = (f(xi,xj) - f(xj,xi)) / ||.||_F with an exact
// zero diagonal. Anti-symmetric by construction.
inline std::vector<DenseMatrix> cost_matrix(const OrderingCostParams& params, const DenseMatrix& x,
                                            CostCache* cache = nullptr) {
  params.validate();
  const std::size_t n = x.rows();
  if (n == 0) throw std::invalid_argument("cost_matrix: empty set");
  if (x.cols() != params.feature_dim())
    throw std::invalid_argument("cost_matrix: set feature dimension mismatch");
  const std::size_t hidden = params.hidden_dim();
  const std::size_t channels = params.channels();

  DenseMatrix pre(n * n, hidden);
  DenseMatrix raw(n * n, channels);  // f outputs per ordered pair
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < n; ++j) {
      const std::size_t p = i * n + j;
      const auto out = pairwise_f(params, x.row(i), x.row(j), pre.data() + p * hidden);
      for (std::size_t c = 0; c < channels; ++c) raw(p, c) = out[c];
    }
  }

  std::vector<DenseMatrix> cost(channels);
  std::vector<DenseMatrix> ctilde(channels);
  std::vector<double> norms(channels);
  for (std::size_t c = 0; c < channels; ++c) {
    DenseMatrix ct(n, n);
    for (std::size_t i = 0; i < n; ++i) {
      for (std::size_t j = 0; j < n; ++j) {
        ct(i, j) = (i == j) ? 0.0 : raw(i * n + j, c) - raw(j * n + i, c);
      }
    }
    const double norm = std::sqrt(detail::ordered_sum_of_squares(ct));
    const double denom = std::max(norm, kCostNormEpsilon);
    cost[c] = scaled(ct, 1.0 / denom);
    ctilde[c] = std::move(ct);
    norms[c] = norm;
  }

  if (cache) {
    cache->input = x;
    cache->preactivations = std::move(pre);
    cache->ctilde = std::move(ctilde);
    cache->norm = std::move(norms);
  }
  return cost;
}

struct CostMatrixGrads {
  OrderingCostGrads params;
  DenseMatrix input;  // N x featdim
};

// Exact reverse pass of cost_matrix: through the Frobenius quotient, the
// anti-symmetrisation and every pair's MLP evaluation. Pair contributions are
// accumulated in a fixed (i, j) order.
inline CostMatrixGrads cost_matrix_vjp(const OrderingCostParams& params, const CostCache& cache,
                                       const std::vector<DenseMatrix>& d_cost) {
  params.validate();
  const std::size_t n = cache.input.rows();
  const std::size_t d = params.feature_dim();
  const std::size_t hidden = params.hidden_dim();
  const std::size_t channels = params.channels();
  if (d_cost.size() != channels) throw std::invalid_argument("cost_matrix_vjp: channel mismatch");
  if (cache.input.cols() != d || cache.ctilde.size() != channels)
    throw std::invalid_argument("cost_matrix_vjp: cache does not match params");

  // d_ctilde per channel through C = ctilde / max(norm, eps)
  std::vector<DenseMatrix> d_ctilde(channels);
  for (std::size_t c = 0; c < channels; ++c) {
    if (d_cost[c].rows() != n || d_cost[c].cols() != n)
      throw std::invalid_argument("cost_matrix_vjp: upstream shape mismatch");
    const double norm = cache.norm[c];
    DenseMatrix g(n, n);
    if (norm > kCostNormEpsilon) {
      // dC~ = (dC - <dC, C> C) / norm, with C = ctilde / norm
      double inner = 0.0;
      for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < n; ++j)
          if (i != j) inner += d_cost[c](i, j) * cache.ctilde[c](i, j) / norm;
      for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < n; ++j)
          if (i != j)
            g(i, j) = (d_cost[c](i, j) - inner * cache.ctilde[c](i, j) / norm) / norm;
    }
    d_ctilde[c] = std::move(g);
  }

  CostMatrixGrads grads{OrderingCostGrads::zeros_like(params), DenseMatrix(n, d)};
  std::vector<double> d_out(channels);
  std::vector<double> d_hidden(hidden);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < n; ++j) {
      if (i == j) continue;  // diagonal forced to zero, no flow
      // f(i,j) appears with +1 in ctilde(i,j) and -1 in ctilde(j,i)
      bool any = false;
      for (std::size_t c = 0; c < channels; ++c) {
        d_out[c] = d_ctilde[c](i, j) - d_ctilde[c](j, i);
        any = any || d_out[c] != 0.0;
      }
      if (!any) continue;

      const std::size_t p = i * n + j;
      const double* pre = cache.preactivations.data() + p * hidden;
      for (std::size_t c = 0; c < channels; ++c) grads.params.b2[c] += d_out[c];
      for (std::size_t h = 0; h < hidden; ++h) {
        const double post = pre[h] > 0.0 ? pre[h] : 0.0;
        double dh = 0.0;
        for (std::size_t c = 0; c < channels; ++c) {
          grads.params.w2(c, h) += d_out[c] * post;
          dh += params.w2(c, h) * d_out[c];
        }
        d_hidden[h] = pre[h] > 0.0 ? dh : 0.0;  // ReLU subgradient at 0 taken as 0
      }
      for (std::size_t h = 0; h < hidden; ++h) {
        const double dp = d_hidden[h];
        if (dp == 0.0) continue;
        grads.params.b1[h] += dp;
        double* w1_grad_row = grads.params.w1.data() + h * params.w1.cols();
        const double* w1_row = params.w1.data() + h * params.w1.cols();
        const double* xi = cache.input.data() + i * d;
        const double* xj = cache.input.data() + j * d;
        double* dxi = grads.input.data() + i * d;
        double* dxj = grads.input.data() + j * d;
        for (std::size_t k = 0; k < d; ++k) {
          w1_grad_row[k] += dp * xi[k];
          w1_grad_row[d + k] += dp * xj[k];
          dxi[k] += dp * w1_row[k];
          dxj[k] += dp * w1_row[d + k];
        }
      }
    }
  }
  return grads;
}

}  // namespace poperm
