#pragma once

#include <algorithm>
#include <cstdint>
#include <stdexcept>
#include <utility>
#include <vector>

#include "poperm/matrix.hpp"
#include "poperm/rng.hpp"

namespace poperm {

struct SortTaskConfig {
  std::size_t set_size = 5;
  double interval_lo = 0.0;
  double interval_hi = 1.0;
  std::size_t train_sets = std::size_t{1} << 14;
  std::size_t batch_size = 512;
  std::uint64_t seed = 0;

  void validate() const {
    if (set_size < 2) throw std::invalid_argument("SortTaskConfig: set_size must be >= 2");
    if (!(interval_lo < interval_hi))
      throw std::invalid_argument("SortTaskConfig: interval must satisfy lo < hi");
  }
};

struct SortBatch {
  std::vector<DenseMatrix> inputs;   // each N x 1
  std::vector<DenseMatrix> targets;  // ascending sort of the matching input
};

// One instance per global index; deterministic under (seed, index).
inline std::pair<DenseMatrix, DenseMatrix> gen_sort_instance(const SortTaskConfig& cfg,
                                                             std::uint64_t index) {
  Rng rng(mix_seed(cfg.seed, index));
  DenseMatrix x(cfg.set_size, 1);
  for (std::size_t i = 0; i < cfg.set_size; ++i)
    x(i, 0) = rng.uniform(cfg.interval_lo, cfg.interval_hi);
  DenseMatrix target = x;
  std::sort(target.data(), target.data() + target.size());
  return {std::move(x), std::move(target)};
}

inline SortBatch gen_sort_batch(const SortTaskConfig& cfg, std::uint64_t batch_index) {
  cfg.validate();
  SortBatch batch;
  batch.inputs.reserve(cfg.batch_size);
  batch.targets.reserve(cfg.batch_size);
  for (std::size_t i = 0; i < cfg.batch_size; ++i) {
    auto [x, target] = gen_sort_instance(cfg, batch_index * cfg.batch_size + i);
    batch.inputs.push_back(std::move(x));
    batch.targets.push_back(std::move(target));
  }
  return batch;
}

}  // namespace poperm
