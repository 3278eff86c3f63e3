#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>
#include <thread>
#include <vector>

#include "poperm/gradcheck.hpp"
#include "poperm/matrix.hpp"
#include "poperm/metrics.hpp"
#include "poperm/mosaic_task.hpp"
#include "poperm/ordering_cost.hpp"
#include "poperm/param_store.hpp"
#include "poperm/perm_opt.hpp"
#include "poperm/sort_task.hpp"
#include "poperm/structure.hpp"

namespace poperm {

namespace names {
inline constexpr const char* kW1 = "f.w1";
inline constexpr const char* kB1 = "f.b1";
inline constexpr const char* kW2 = "f.w2";
inline constexpr const char* kB2 = "f.b2";
inline constexpr const char* kEta = "eta";
inline constexpr const char* kInitW = "init.w";
inline constexpr const char* kEncW = "enc.w";
inline constexpr const char* kEncB = "enc.b";
}  // namespace names

struct ModelSpec {
  enum class Task { Sort, Mosaic };

  Task task = Task::Sort;
  InitMode init = InitMode::Uniform;
  std::size_t set_size = 5;
  std::size_t hidden_dim = 16;
  std::size_t inner_steps = 6;
  std::size_t sinkhorn_iterations = 4;
  double eta0 = 1.0;
  // mosaic only
  std::size_t grid_rows = 0;
  std::size_t grid_cols = 0;
  std::size_t tile_pixels = 0;
  std::size_t embed_dim = 0;

  std::size_t feature_dim() const { return task == Task::Sort ? 1 : embed_dim; }
  std::size_t channels() const { return task == Task::Sort ? 1 : 2; }

  ComparisonStructure structure() const {
    return task == Task::Sort ? ComparisonStructure::sequence(set_size)
                              : ComparisonStructure::grid(grid_rows, grid_cols);
  }

  void validate() const {
    if (set_size < 1) throw std::invalid_argument("ModelSpec: set_size must be >= 1");
    if (hidden_dim < 1) throw std::invalid_argument("ModelSpec: hidden_dim must be >= 1");
    if (task == Task::Mosaic) {
      if (grid_rows * grid_cols != set_size)
        throw std::invalid_argument("ModelSpec: grid does not match set size");
      if (tile_pixels == 0 || embed_dim == 0)
        throw std::invalid_argument("ModelSpec: mosaic needs tile_pixels and embed_dim");
    }
  }
};

// Xavier for weight matrices, zeros for biases, eta0 for the inner step size.
inline ParamStore init_param_store(const ModelSpec& spec, std::uint64_t seed) {
  spec.validate();
  ParamStore store;
  store.add(names::kW1, xavier_init({spec.hidden_dim, 2 * spec.feature_dim()}, mix_seed(seed, 1)));
  store.add(names::kB1, Tensor::zeros({spec.hidden_dim}));
  store.add(names::kW2, xavier_init({spec.channels(), spec.hidden_dim}, mix_seed(seed, 2)));
  store.add(names::kB2, Tensor::zeros({spec.channels()}));
  store.add(names::kEta, Tensor::scalar(spec.eta0));
  if (spec.init == InitMode::LinearAssignment)
    store.add(names::kInitW, xavier_init({spec.set_size, spec.feature_dim()}, mix_seed(seed, 3)));
  if (spec.task == ModelSpec::Task::Mosaic) {
    store.add(names::kEncW, xavier_init({spec.embed_dim, spec.tile_pixels}, mix_seed(seed, 4)));
    store.add(names::kEncB, Tensor::zeros({spec.embed_dim}));
  }
  return store;
}

inline OrderingCostParams cost_params_from(const ParamStore& store) {
  OrderingCostParams p;
  p.w1 = store.at(names::kW1).as_matrix();
  p.b1 = store.at(names::kB1).values;
  p.w2 = store.at(names::kW2).as_matrix();
  p.b2 = store.at(names::kB2).values;
  return p;
}

inline InitParams init_params_from(const ParamStore& store) {
  return InitParams{store.at(names::kInitW).as_matrix()};
}

inline TileEncoderParams encoder_params_from(const ParamStore& store) {
  return TileEncoderParams{store.at(names::kEncW).as_matrix(), store.at(names::kEncB).values};
}

inline PoConfig po_config_from(const ModelSpec& spec, const ParamStore& store) {
  PoConfig cfg;
  cfg.inner_steps = spec.inner_steps;
  cfg.sinkhorn_iterations = spec.sinkhorn_iterations;
  cfg.step_size = store.at(names::kEta).as_scalar();
  cfg.init = spec.init;
  cfg.structure = spec.structure();
  return cfg;
}

namespace detail {

inline void append_po_gradients(GradientMap& out, const PoGradients& g) {
  out.accumulate(names::kW1, Tensor::from_matrix(g.cost_params.w1));
  out.accumulate(names::kB1, Tensor::from_vector(g.cost_params.b1));
  out.accumulate(names::kW2, Tensor::from_matrix(g.cost_params.w2));
  out.accumulate(names::kB2, Tensor::from_vector(g.cost_params.b2));
  out.accumulate(names::kEta, Tensor::scalar(g.step_size));
  if (g.init_weights) out.accumulate(names::kInitW, Tensor::from_matrix(*g.init_weights));
}

}  // namespace detail

// Forward pass of the sorting pipeline: the set itself is the feature matrix.
inline PoForwardResult sort_forward(const ModelSpec& spec, const ParamStore& store,
                                    const DenseMatrix& x) {
  const OrderingCostParams cost = cost_params_from(store);
  const PoConfig cfg = po_config_from(spec, store);
  if (spec.init == InitMode::LinearAssignment) {
    const InitParams init = init_params_from(store);
    return po_forward(x, cost, cfg, &init);
  }
  return po_forward(x, cost, cfg);
}

// MSE between the permuted set and the ascending target; fills gradients for
// every learnable tensor when requested.
inline double sort_loss(const ModelSpec& spec, const ParamStore& store, const DenseMatrix& x,
                        const DenseMatrix& target, GradientMap* grads) {
  const PoForwardResult fwd = sort_forward(spec, store, x);
  const auto [loss, d_output] = mse_loss(fwd.output, target);
  if (grads) {
    const OrderingCostParams cost = cost_params_from(store);
    if (spec.init == InitMode::LinearAssignment) {
      const InitParams init = init_params_from(store);
      detail::append_po_gradients(*grads, po_backward(cost, fwd.trace, d_output, nullptr, &init));
    } else {
      detail::append_po_gradients(*grads, po_backward(cost, fwd.trace, d_output));
    }
  }
  return loss;
}

// Forward pass of the mosaic pipeline: encoded tiles drive the ordering cost,
// the resulting permutation is applied to the raw tiles.
struct MosaicForward {
  PoForwardResult po;
  TileEncoderCache encoder_cache;
  DenseMatrix features;
};

inline MosaicForward mosaic_forward(const ModelSpec& spec, const ParamStore& store,
                                    const MosaicInstance& instance) {
  const TileEncoderParams enc = encoder_params_from(store);
  MosaicForward fwd;
  fwd.features = encode_tiles(enc, instance.tiles, &fwd.encoder_cache);
  const OrderingCostParams cost = cost_params_from(store);
  const PoConfig cfg = po_config_from(spec, store);
  if (spec.init == InitMode::LinearAssignment) {
    const InitParams init = init_params_from(store);
    fwd.po = po_forward(fwd.features, cost, cfg, &init);
  } else {
    fwd.po = po_forward(fwd.features, cost, cfg);
  }
  return fwd;
}

// MSE between the soft reconstruction P * tiles and the correctly ordered
// tiles. The loss reaches the learnable tensors through the permutation,
// so the backward pass feeds the reconstruction gradient in via dP.
inline double mosaic_loss(const ModelSpec& spec, const ParamStore& store,
                          const MosaicInstance& instance, GradientMap* grads) {
  const MosaicForward fwd = mosaic_forward(spec, store, instance);
  const DenseMatrix target = instance.ordered_tiles();
  const DenseMatrix recon = matmul(fwd.po.permutation, instance.tiles);
  const auto [loss, d_recon] = mse_loss(recon, target);
  if (grads) {
    const DenseMatrix d_perm = matmul_abt(d_recon, instance.tiles);  // dP = dRecon tiles^T
    const DenseMatrix d_output(instance.tiles.rows(), spec.embed_dim);
    const OrderingCostParams cost = cost_params_from(store);
    PoGradients po_grads;
    if (spec.init == InitMode::LinearAssignment) {
      const InitParams init = init_params_from(store);
      po_grads = po_backward(cost, fwd.po.trace, d_output, &d_perm, &init);
    } else {
      po_grads = po_backward(cost, fwd.po.trace, d_output, &d_perm);
    }
    detail::append_po_gradients(*grads, po_grads);
    const TileEncoderParams enc = encoder_params_from(store);
    const TileEncoderGrads enc_grads = encode_tiles_vjp(enc, fwd.encoder_cache, po_grads.input);
    grads->accumulate(names::kEncW, Tensor::from_matrix(enc_grads.w));
    grads->accumulate(names::kEncB, Tensor::from_vector(enc_grads.b));
  }
  return loss;
}

// --- deterministic batched gradients -----------------------------------------

struct BatchResult {
  double mean_loss = 0.0;
  GradientMap grads;  // gradient of the mean loss
};

// Runs per-instance closures on up to `threads` workers, then reduces losses
// and gradients sequentially in instance order; the result is identical for
// every thread count.
template <typename InstanceFn>
BatchResult run_batch(std::size_t count, std::size_t threads, const InstanceFn& fn) {
  struct Slot {
    double loss = 0.0;
    GradientMap grads;
  };
  std::vector<Slot> slots(count);
  auto worker = [&](std::size_t begin, std::size_t end) {
    for (std::size_t i = begin; i < end; ++i) slots[i].loss = fn(i, &slots[i].grads);
  };
  if (threads <= 1 || count <= 1) {
    worker(0, count);
  } else {
    const std::size_t used = std::min(threads, count);
    std::vector<std::thread> pool;
    pool.reserve(used);
    const std::size_t chunk = (count + used - 1) / used;
    for (std::size_t t = 0; t < used; ++t) {
      const std::size_t begin = t * chunk;
      const std::size_t end = std::min(count, begin + chunk);
      if (begin < end) pool.emplace_back(worker, begin, end);
    }
    for (auto& th : pool) th.join();
  }

  BatchResult result;
  for (std::size_t i = 0; i < count; ++i) {
    result.mean_loss += slots[i].loss;
    result.grads.accumulate_scaled(slots[i].grads, 1.0);
  }
  result.mean_loss /= static_cast<double>(count);
  result.grads.scale(1.0 / static_cast<double>(count));
  return result;
}

}  // namespace poperm
