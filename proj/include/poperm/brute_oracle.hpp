#pragma once

#include <algorithm>
#include <cstddef>
#include <numeric>
#include <stdexcept>
#include <vector>

#include "poperm/hungarian.hpp"
#include "poperm/matrix.hpp"
#include "poperm/structure.hpp"

namespace poperm {

inline constexpr std::size_t kMaxQuadraticProgramSize = 12;  // N^4 entries
inline constexpr std::size_t kMaxBruteForceSize = 8;         // N! permutations

// Dense N^2 x N^2 quadratic-program matrix with Q[(i,k)][(j,k')] = C_ij O_kk'
// under the index bijection l = i*N + k; grid channels are summed.
inline DenseMatrix build_q(const std::vector<DenseMatrix>& cost,
                           const ComparisonStructure& structure) {
  if (cost.size() != structure.channels())
    throw std::invalid_argument("build_q: channel count mismatch");
  const std::size_t n = structure.positions();
  if (n > kMaxQuadraticProgramSize)
    throw std::invalid_argument("build_q: size guard exceeded (N <= 12)");
  for (const DenseMatrix& c : cost)
    if (c.rows() != n || c.cols() != n) throw std::invalid_argument("build_q: cost shape mismatch");

  DenseMatrix q(n * n, n * n);
  for (std::size_t ch = 0; ch < cost.size(); ++ch) {
    const DenseMatrix& c = cost[ch];
    const DenseMatrix& o = structure.position_signs[ch];
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t k = 0; k < n; ++k) {
        const std::size_t l = i * n + k;
        for (std::size_t j = 0; j < n; ++j) {
          const double cij = c(i, j);
          if (cij == 0.0) continue;
          for (std::size_t kp = 0; kp < n; ++kp) q(l, j * n + kp) += cij * o(k, kp);
        }
      }
  }
  return q;
}

// p^T Q p with p the row-major flattening of P.
inline double quadratic_form(const DenseMatrix& q, const DenseMatrix& p) {
  if (q.rows() != p.size() || q.cols() != p.size())
    throw std::invalid_argument("quadratic_form: size mismatch");
  double total = 0.0;
  for (std::size_t l = 0; l < q.rows(); ++l) {
    const double pl = p.data()[l];
    if (pl == 0.0) continue;
    const double* q_row = q.data() + l * q.cols();
    double acc = 0.0;
    for (std::size_t lp = 0; lp < q.cols(); ++lp) acc += q_row[lp] * p.data()[lp];
    total += pl * acc;
  }
  return total;
}

struct BruteForceResult {
  HardPermutation best;
  double cost = 0.0;
};

// Exhaustive minimum over all N! hard permutations; first minimiser in
// lexicographic order of the assignment array wins.
inline BruteForceResult brute_min(const std::vector<DenseMatrix>& cost,
                                  const ComparisonStructure& structure) {
  if (cost.size() != structure.channels())
    throw std::invalid_argument("brute_min: channel count mismatch");
  const std::size_t n = structure.positions();
  if (n > kMaxBruteForceSize)
    throw std::invalid_argument("brute_min: size guard exceeded (N <= 8)");

  std::vector<std::size_t> assignment(n);
  std::iota(assignment.begin(), assignment.end(), std::size_t{0});

  BruteForceResult result;
  bool first = true;
  do {
    double total = 0.0;
    for (std::size_t ch = 0; ch < cost.size(); ++ch) {
      const DenseMatrix& c = cost[ch];
      const DenseMatrix& o = structure.position_signs[ch];
      for (std::size_t k = 0; k < n; ++k)
        for (std::size_t kp = 0; kp < n; ++kp) {
          const double okk = o(k, kp);
          if (okk != 0.0) total += c(assignment[k], assignment[kp]) * okk;
        }
    }
    if (first || total < result.cost) {
      first = false;
      result.cost = total;
      result.best.assignment = assignment;
    }
  } while (std::next_permutation(assignment.begin(), assignment.end()));
  return result;
}

}  // namespace poperm
