#pragma once

#include <cstddef>
#include <limits>
#include <stdexcept>
#include <vector>

#include "poperm/matrix.hpp"

namespace poperm {

// Hard assignment: assignment[k] is the index of the element placed at output
// position k. Always a bijection on {0..N-1}.
struct HardPermutation {
  std::vector<std::size_t> assignment;

  std::size_t size() const { return assignment.size(); }
  bool is_bijection() const {
    std::vector<bool> seen(assignment.size(), false);
    for (std::size_t v : assignment) {
      if (v >= assignment.size() || seen[v]) return false;
      seen[v] = true;
    }
    return true;
  }
};

inline double assignment_cost(const DenseMatrix& cost, const HardPermutation& perm) {
  double total = 0.0;
  for (std::size_t k = 0; k < perm.assignment.size(); ++k) total += cost(perm.assignment[k], k);
  return total;
}

// Kuhn-Munkres via shortest augmenting paths, O(N^3). Rows are elements,
// columns are positions; minimises sum_k cost(assignment[k], k). Rows are
// introduced in increasing index order and columns scanned in increasing
// index order, so the result is deterministic under ties.
inline HardPermutation hungarian(const DenseMatrix& cost) {
  require_square_finite(cost, "hungarian");
  const std::size_t n = cost.rows();
  if (n == 0) return HardPermutation{};

  const double inf = std::numeric_limits<double>::infinity();
  std::vector<double> row_pot(n + 1, 0.0), col_pot(n + 1, 0.0);
  std::vector<std::size_t> col_match(n + 1, 0);  // col_match[j] = row matched to column j (1-based)
  std::vector<std::size_t> path(n + 1, 0);

  for (std::size_t row = 1; row <= n; ++row) {
    col_match[0] = row;
    std::size_t j0 = 0;
    std::vector<double> min_slack(n + 1, inf);
    std::vector<bool> used(n + 1, false);
    do {
      used[j0] = true;
      const std::size_t i0 = col_match[j0];
      double delta = inf;
      std::size_t j1 = 0;
      for (std::size_t j = 1; j <= n; ++j) {
        if (used[j]) continue;
        const double reduced = cost(i0 - 1, j - 1) - row_pot[i0] - col_pot[j];
        if (reduced < min_slack[j]) {
          min_slack[j] = reduced;
          path[j] = j0;
        }
        if (min_slack[j] < delta) {
          delta = min_slack[j];
          j1 = j;
        }
      }
      for (std::size_t j = 0; j <= n; ++j) {
        if (used[j]) {
          row_pot[col_match[j]] += delta;
          col_pot[j] -= delta;
        } else {
          min_slack[j] -= delta;
        }
      }
      j0 = j1;
    } while (col_match[j0] != 0);
    do {
      const std::size_t j1 = path[j0];
      col_match[j0] = col_match[j1];
      j0 = j1;
    } while (j0 != 0);
  }

  HardPermutation result;
  result.assignment.resize(n);
  for (std::size_t j = 1; j <= n; ++j) result.assignment[j - 1] = col_match[j] - 1;
  if (!result.is_bijection()) throw std::runtime_error("hungarian: internal error, not a bijection");
  return result;
}

}  // namespace poperm
