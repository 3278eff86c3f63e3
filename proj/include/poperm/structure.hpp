#pragma once

#include <cstddef>
#include <stdexcept>
#include <vector>

#include "poperm/matrix.hpp"

namespace poperm {

// Target shape of the optimised permutation, realised as one anti-symmetric
// sign matrix O per cost channel: O[k][k'] = +1 when position k should come
// "before" k' along that channel's axis, -1 for after, 0 otherwise.
//
// Sequence: one channel over output indices. Grid: positions linearised
// row-major; channel 0 compares positions within the same grid row by column
// (left-to-right cost), channel 1 compares within the same grid column by row
// (top-to-bottom cost). Summing the per-channel bilinear costs is identical
// to summing a sequence cost over every individual row and column.
struct ComparisonStructure {
  enum class Kind { Sequence, Grid };

  Kind kind = Kind::Sequence;
  std::size_t grid_rows = 0;
  std::size_t grid_cols = 0;
  std::vector<DenseMatrix> position_signs;

  std::size_t positions() const {
    return position_signs.empty() ? 0 : position_signs.front().rows();
  }
  std::size_t channels() const { return position_signs.size(); }

  static ComparisonStructure sequence(std::size_t n) {
    if (n == 0) throw std::invalid_argument("ComparisonStructure: empty sequence");
    ComparisonStructure s;
    s.kind = Kind::Sequence;
    DenseMatrix o(n, n);
    for (std::size_t k = 0; k < n; ++k)
      for (std::size_t kp = 0; kp < n; ++kp) o(k, kp) = (k < kp) ? 1.0 : (k > kp ? -1.0 : 0.0);
    s.position_signs.push_back(std::move(o));
    return s;
  }

  static ComparisonStructure grid(std::size_t rows, std::size_t cols) {
    if (rows == 0 || cols == 0) throw std::invalid_argument("ComparisonStructure: empty grid");
    ComparisonStructure s;
    s.kind = Kind::Grid;
    s.grid_rows = rows;
    s.grid_cols = cols;
    const std::size_t n = rows * cols;
    DenseMatrix row_channel(n, n);
    DenseMatrix col_channel(n, n);
    for (std::size_t k = 0; k < n; ++k) {
      const std::size_t kr = k / cols, kc = k % cols;
      for (std::size_t kp = 0; kp < n; ++kp) {
        const std::size_t pr = kp / cols, pc = kp % cols;
        if (kr == pr && kc != pc) row_channel(k, kp) = (kc < pc) ? 1.0 : -1.0;
        if (kc == pc && kr != pr) col_channel(k, kp) = (kr < pr) ? 1.0 : -1.0;
      }
    }
    s.position_signs.push_back(std::move(row_channel));
    s.position_signs.push_back(std::move(col_channel));
    return s;
  }
};

}  // namespace poperm
