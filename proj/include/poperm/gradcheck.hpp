#pragma once

#include <cmath>
#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "poperm/matrix.hpp"
#include "poperm/param_store.hpp"
#include "poperm/rng.hpp"

namespace poperm {

// Mean over all entries of the squared difference, with its gradient.
inline std::pair<double, DenseMatrix> mse_loss(const DenseMatrix& y, const DenseMatrix& target) {
  if (!y.same_shape(target)) throw std::invalid_argument("mse_loss: shape mismatch");
  const double count = static_cast<double>(y.size());
  double loss = 0.0;
  DenseMatrix grad(y.rows(), y.cols());
  for (std::size_t i = 0; i < y.size(); ++i) {
    const double diff = y.data()[i] - target.data()[i];
    loss += diff * diff;
    grad.data()[i] = 2.0 * diff / count;
  }
  return {loss / count, grad};
}

// loss_fn evaluates the scalar loss for a given store; when grads is non-null
// it must also fill the analytic gradients at that point.
using LossFn = std::function<double(const ParamStore&, GradientMap* grads)>;

struct FiniteDiffReport {
  double max_rel_error = 0.0;
  std::string worst_name;
  std::size_t worst_index = 0;
  double worst_analytic = 0.0;
  double worst_numeric = 0.0;
  std::size_t coordinates_checked = 0;
  bool deterministic = true;
  double rel_tol = 0.0;

  bool passed() const { return deterministic && max_rel_error <= rel_tol; }
};

// Central finite differences per scalar coordinate against the analytic
// gradient, sub-sampled to at most max_coords coordinates per tensor (seeded).
// Relative error is |a - f| / max(|a|, |f|, 1e-8).
inline FiniteDiffReport finite_diff_check(const LossFn& loss_fn, const ParamStore& store,
                                          double step, double rel_tol, std::uint64_t seed = 0,
                                          std::size_t max_coords = 200) {
  FiniteDiffReport report;
  report.rel_tol = rel_tol;

  GradientMap analytic;
  const double base = loss_fn(store, &analytic);
  if (loss_fn(store, nullptr) != base) {
    report.deterministic = false;
    return report;
  }

  ParamStore probe = store;
  for (const auto& e : store.entries()) {
    std::vector<std::size_t> coords(e.value.size());
    for (std::size_t i = 0; i < coords.size(); ++i) coords[i] = i;
    if (coords.size() > max_coords) {
      Rng rng(mix_seed(seed, std::hash<std::string>{}(e.name)));
      shuffle(coords, rng);
      coords.resize(max_coords);
    }

    for (std::size_t idx : coords) {
      const double original = probe.at(e.name).values[idx];
      probe.at(e.name).values[idx] = original + step;
      const double plus = loss_fn(probe, nullptr);
      probe.at(e.name).values[idx] = original - step;
      const double minus = loss_fn(probe, nullptr);
      probe.at(e.name).values[idx] = original;

      const double numeric = (plus - minus) / (2.0 * step);
      const double exact = analytic.contains(e.name) ? analytic.at(e.name).values[idx] : 0.0;
      const double rel =
          std::abs(exact - numeric) / std::max({std::abs(exact), std::abs(numeric), 1e-8});
      ++report.coordinates_checked;
      if (rel > report.max_rel_error) {
        report.max_rel_error = rel;
        report.worst_name = e.name;
        report.worst_index = idx;
        report.worst_analytic = exact;
        report.worst_numeric = numeric;
      }
    }
  }
  return report;
}

}  // namespace poperm
