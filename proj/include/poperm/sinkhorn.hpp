#pragma once

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <vector>

#include "poperm/matrix.hpp"

namespace poperm {

// Intermediates of one sinkhorn() call, kept for the reverse pass.
// exponentiated is the stabilised exp of the input; row_stage[l] / col_stage[l]
// are the matrices after the (l+1)-th row and column normalisation.
struct SinkhornCache {
  DenseMatrix exponentiated;
  std::vector<DenseMatrix> row_stage;
  std::vector<DenseMatrix> col_stage;

  std::size_t iterations() const { return row_stage.size(); }
  std::size_t dim() const { return exponentiated.rows(); }
};

// Exponentiate entrywise, then alternate row and column normalisation for a
// fixed number of iterations, ending on the column stage. The exponentiation
// subtracts the per-row maximum first; row normalisation cancels the shift, so
// the result is unchanged while overflow is impossible.
inline DenseMatrix sinkhorn(const DenseMatrix& m, std::size_t iterations,
                            SinkhornCache* cache = nullptr) {
  require_square_finite(m, "sinkhorn");
  if (iterations == 0) throw std::invalid_argument("sinkhorn: iterations must be >= 1");
  const std::size_t n = m.rows();

  DenseMatrix current(n, n);
  for (std::size_t i = 0; i < n; ++i) {
    double row_max = m(i, 0);
    for (std::size_t j = 1; j < n; ++j) row_max = std::max(row_max, m(i, j));
    for (std::size_t j = 0; j < n; ++j) current(i, j) = std::exp(m(i, j) - row_max);
  }
  if (cache) {
    cache->exponentiated = current;
    cache->row_stage.clear();
    cache->col_stage.clear();
    cache->row_stage.reserve(iterations);
    cache->col_stage.reserve(iterations);
  }

  for (std::size_t l = 0; l < iterations; ++l) {
    for (std::size_t i = 0; i < n; ++i) {
      double sum = 0.0;
      for (std::size_t j = 0; j < n; ++j) sum += current(i, j);
      for (std::size_t j = 0; j < n; ++j) current(i, j) /= sum;
    }
    if (cache) cache->row_stage.push_back(current);

    for (std::size_t j = 0; j < n; ++j) {
      double sum = 0.0;
      for (std::size_t i = 0; i < n; ++i) sum += current(i, j);
      for (std::size_t i = 0; i < n; ++i) current(i, j) /= sum;
    }
    if (cache) cache->col_stage.push_back(current);
  }
  return current;
}

// Vector-Jacobian product of sinkhorn: returns d<upstream, S(M)>/dM by walking
// the cached stages backwards through the column, row and exp Jacobians.
inline DenseMatrix sinkhorn_vjp(const SinkhornCache& cache, const DenseMatrix& upstream) {
  const std::size_t n = cache.dim();
  if (upstream.rows() != n || upstream.cols() != n) {
    throw std::invalid_argument("sinkhorn_vjp: upstream shape does not match cache");
  }
  const std::size_t iters = cache.iterations();
  if (iters == 0 || cache.col_stage.size() != iters) {
    throw std::invalid_argument("sinkhorn_vjp: cache is incomplete");
  }

  DenseMatrix grad = upstream;
  for (std::size_t l = iters; l-- > 0;) {
    // column normalisation: input row_stage[l], output col_stage[l]
    const DenseMatrix& col_in = cache.row_stage[l];
    const DenseMatrix& col_out = cache.col_stage[l];
    for (std::size_t j = 0; j < n; ++j) {
      double col_sum = 0.0;
      double weighted = 0.0;
      for (std::size_t i = 0; i < n; ++i) {
        col_sum += col_in(i, j);
        weighted += grad(i, j) * col_out(i, j);
      }
      for (std::size_t i = 0; i < n; ++i) grad(i, j) = (grad(i, j) - weighted) / col_sum;
    }

    // row normalisation: input is the previous column stage (or the
    // exponentiated matrix at l = 0), output row_stage[l]
    const DenseMatrix& row_in = (l == 0) ? cache.exponentiated : cache.col_stage[l - 1];
    const DenseMatrix& row_out = cache.row_stage[l];
    for (std::size_t i = 0; i < n; ++i) {
      double row_sum = 0.0;
      double weighted = 0.0;
      for (std::size_t j = 0; j < n; ++j) {
        row_sum += row_in(i, j);
        weighted += grad(i, j) * row_out(i, j);
      }
      for (std::size_t j = 0; j < n; ++j) grad(i, j) = (grad(i, j) - weighted) / row_sum;
    }
  }

  // exponentiation (the row-max shift is constant under row normalisation)
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < n; ++j) grad(i, j) *= cache.exponentiated(i, j);
  return grad;
}

}  // namespace poperm
