#pragma once

#include <algorithm>
#include <cmath>
#include <vector>

#include "poperm/hungarian.hpp"
#include "poperm/matrix.hpp"
#include "poperm/mosaic_task.hpp"

namespace poperm {

struct MetricsRecord {
  double accuracy = 0.0;   // 1 when every position is correct
  double mse_hard = 0.0;   // reconstruction by the rounded hard permutation
  double mse_soft = 0.0;   // reconstruction by the soft P
  double kendall_tau = 0.0;
  bool has_kendall = false;
};

// Hungarian rounding of a soft permutation: assignment costs are -P.
inline HardPermutation round_permutation(const DenseMatrix& p) {
  DenseMatrix neg = scaled(p, -1.0);
  return hungarian(neg);
}

namespace detail {

inline double mse(const DenseMatrix& a, const DenseMatrix& b) {
  double acc = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double d = a.data()[i] - b.data()[i];
    acc += d * d;
  }
  return acc / static_cast<double>(a.size());
}

inline DenseMatrix gather_rows(const DenseMatrix& x, const HardPermutation& perm) {
  DenseMatrix out(x.rows(), x.cols());
  for (std::size_t k = 0; k < perm.assignment.size(); ++k)
    for (std::size_t c = 0; c < x.cols(); ++c) out(k, c) = x(perm.assignment[k], c);
  return out;
}

// Kendall rank correlation between the produced ordering and the target
// ordering of positions.
inline double kendall_tau(const std::vector<std::size_t>& predicted_pos,
                          const std::vector<std::size_t>& true_pos) {
  const std::size_t n = predicted_pos.size();
  if (n < 2) return 1.0;
  long concordant = 0, discordant = 0;
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = i + 1; j < n; ++j) {
      const int a = predicted_pos[i] < predicted_pos[j] ? 1 : -1;
      const int b = true_pos[i] < true_pos[j] ? 1 : -1;
      (a == b ? concordant : discordant)++;
    }
  return static_cast<double>(concordant - discordant) /
         (static_cast<double>(n) * static_cast<double>(n - 1) / 2.0);
}

}  // namespace detail

// Sequence tasks: the target is the correctly ordered set (row k = the
// element that belongs at position k). Exactness is judged on values.
inline MetricsRecord evaluate_sequence(const DenseMatrix& p, const DenseMatrix& x,
                                       const DenseMatrix& target) {
  MetricsRecord rec;
  const HardPermutation hard = round_permutation(p);
  const DenseMatrix hard_recon = detail::gather_rows(x, hard);
  rec.accuracy = (hard_recon == target) ? 1.0 : 0.0;
  rec.mse_hard = detail::mse(hard_recon, target);
  rec.mse_soft = detail::mse(matmul(p, x), target);

  // positions: predicted_pos[i] = output slot of element i; true_pos by rank
  // in the target (stable on ties)
  const std::size_t n = x.rows();
  std::vector<std::size_t> predicted_pos(n), true_pos(n);
  for (std::size_t k = 0; k < n; ++k) predicted_pos[hard.assignment[k]] = k;
  std::vector<std::size_t> order(n);
  for (std::size_t i = 0; i < n; ++i) order[i] = i;
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return x(a, 0) < x(b, 0); });
  for (std::size_t k = 0; k < n; ++k) true_pos[order[k]] = k;
  rec.kendall_tau = detail::kendall_tau(predicted_pos, true_pos);
  rec.has_kendall = true;
  return rec;
}

// Mosaic tasks: exactness is judged against the instance's own ground-truth
// assignment, so it is invariant to the presentation shuffle.
inline MetricsRecord evaluate_mosaic(const DenseMatrix& p, const MosaicInstance& instance) {
  MetricsRecord rec;
  const HardPermutation hard = round_permutation(p);
  rec.accuracy = (hard.assignment == instance.ground_truth.assignment) ? 1.0 : 0.0;
  const DenseMatrix target = instance.ordered_tiles();
  rec.mse_hard = detail::mse(detail::gather_rows(instance.tiles, hard), target);
  rec.mse_soft = detail::mse(matmul(p, instance.tiles), target);
  return rec;
}

// Median of the per-row Shannon entropies of a doubly-stochastic matrix.
inline double median_row_entropy(const DenseMatrix& p) {
  std::vector<double> entropies(p.rows(), 0.0);
  for (std::size_t i = 0; i < p.rows(); ++i) {
    double h = 0.0;
    for (std::size_t j = 0; j < p.cols(); ++j) {
      const double v = p(i, j);
      if (v > 0.0) h -= v * std::log(v);
    }
    entropies[i] = h;
  }
  std::sort(entropies.begin(), entropies.end());
  const std::size_t n = entropies.size();
  return (n % 2 == 1) ? entropies[n / 2] : 0.5 * (entropies[n / 2 - 1] + entropies[n / 2]);
}

}  // namespace poperm
