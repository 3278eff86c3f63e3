#pragma once

#include <cstddef>
#include <optional>
#include <stdexcept>
#include <vector>

#include "poperm/matrix.hpp"
#include "poperm/ordering_cost.hpp"
#include "poperm/sinkhorn.hpp"
#include "poperm/structure.hpp"

namespace poperm {

enum class InitMode { Uniform, LinearAssignment };

// How the inner gradient is applied to the unnormalised permutation. The
// model's update applies the gradient taken with respect to the normalised
// permutation directly; TrueJacobian additionally pushes it through the
// Sinkhorn Jacobian and exists only for the entropy comparison tests.
enum class InnerUpdate { DirectGradient, TrueJacobian };

struct PoConfig {
  std::size_t inner_steps = 6;          // T
  double step_size = 1.0;               // eta
  std::size_t sinkhorn_iterations = 4;  // L
  InitMode init = InitMode::Uniform;
  ComparisonStructure structure;
  InnerUpdate update = InnerUpdate::DirectGradient;

  void validate() const {
    if (inner_steps < 1) throw std::invalid_argument("PoConfig: inner_steps must be >= 1");
    if (sinkhorn_iterations < 1)
      throw std::invalid_argument("PoConfig: sinkhorn_iterations must be >= 1");
    if (structure.channels() == 0) throw std::invalid_argument("PoConfig: structure not set");
  }
};

// Position-wise linear assignment weights, used by the LinearAssignment init.
struct InitParams {
  DenseMatrix w;  // positions x featdim
};

// Everything po_backward needs: all unnormalised and normalised permutations,
// the Sinkhorn caches, the inner gradients, and the ordering costs with their
// cache.
struct PoTrace {
  std::vector<DenseMatrix> ptilde;              // T+1 unnormalised states
  std::vector<DenseMatrix> p;                   // T+1 normalised states, p[T] final
  std::vector<SinkhornCache> sinkhorn_caches;   // T+1
  std::vector<DenseMatrix> inner_grads;         // T
  std::vector<DenseMatrix> cost;                // per channel
  CostCache cost_cache;
  DenseMatrix input;
  PoConfig config;
};

// P~(0): exact zeros for uniform (Sinkhorn then yields all 1/N), or the
// elementwise linear assignment w_k . x_i.
inline DenseMatrix init_assignment(const PoConfig& config, const DenseMatrix& x,
                                   const InitParams* init_params = nullptr) {
  const std::size_t n = x.rows();
  if (config.init == InitMode::Uniform) return DenseMatrix(n, n, 0.0);
  if (init_params == nullptr)
    throw std::invalid_argument("init_assignment: linear-assignment init requires init params");
  if (init_params->w.rows() != config.structure.positions())
    throw std::invalid_argument("init_assignment: init weights position count mismatch");
  if (init_params->w.cols() != x.cols())
    throw std::invalid_argument("init_assignment: init weights feature dimension mismatch");
  return matmul_abt(x, init_params->w);  // (x w^T)_{ik} = w_k . x_i
}

// Total ordering cost sum_ch <C_ch, P O_ch P^T>; equal to the pairwise double
// sum for the sequence channel and to the summed row/column subproblems for
// grids.
inline double total_cost(const std::vector<DenseMatrix>& cost, const DenseMatrix& p,
                         const ComparisonStructure& structure) {
  if (cost.size() != structure.channels())
    throw std::invalid_argument("total_cost: channel count mismatch");
  double total = 0.0;
  for (std::size_t c = 0; c < cost.size(); ++c) {
    const DenseMatrix& o = structure.position_signs[c];
    if (cost[c].rows() != p.rows() || o.rows() != p.cols())
      throw std::invalid_argument("total_cost: shape mismatch");
    const DenseMatrix b = matmul_abt(p, o);      // B = P O^T
    total += frobenius_dot(cost[c], matmul_abt(p, b));  // <C, P B^T> = <C, P O P^T>
  }
  return total;
}

// Analytic gradient of total_cost with respect to P: sum_ch 2 C_ch (P O_ch^T).
inline DenseMatrix cost_gradient(const std::vector<DenseMatrix>& cost, const DenseMatrix& p,
                                 const ComparisonStructure& structure) {
  if (cost.size() != structure.channels())
    throw std::invalid_argument("cost_gradient: channel count mismatch");
  DenseMatrix grad(p.rows(), p.cols());
  for (std::size_t c = 0; c < cost.size(); ++c) {
    const DenseMatrix& o = structure.position_signs[c];
    if (cost[c].rows() != p.rows() || o.rows() != p.cols())
      throw std::invalid_argument("cost_gradient: shape mismatch");
    const DenseMatrix b = matmul_abt(p, o);
    add_scaled(grad, 2.0, matmul(cost[c], b));
  }
  return grad;
}

struct PoForwardResult {
  DenseMatrix output;       // Y = P X
  DenseMatrix permutation;  // final normalised P
  PoTrace trace;
};

// Unrolled forward pass: ordering costs, init, T gradient steps on the
// unnormalised permutation with Sinkhorn renormalisation, final projection
// and application to the set.
inline PoForwardResult po_forward(const DenseMatrix& x, const OrderingCostParams& cost_params,
                                  const PoConfig& config,
                                  const InitParams* init_params = nullptr) {
  config.validate();
  cost_params.validate();
  const std::size_t n = x.rows();
  if (n == 0) throw std::invalid_argument("po_forward: empty set");
  if (n != config.structure.positions())
    throw std::invalid_argument("po_forward: set size does not match target positions");
  if (cost_params.channels() != config.structure.channels())
    throw std::invalid_argument("po_forward: cost channels do not match structure");

  PoTrace trace;
  trace.config = config;
  trace.input = x;
  trace.cost = cost_matrix(cost_params, x, &trace.cost_cache);

  const std::size_t steps = config.inner_steps;
  trace.ptilde.reserve(steps + 1);
  trace.p.reserve(steps + 1);
  trace.sinkhorn_caches.resize(steps + 1);
  trace.inner_grads.reserve(steps);

  trace.ptilde.push_back(init_assignment(config, x, init_params));
  for (std::size_t t = 0; t < steps; ++t) {
    trace.p.push_back(
        sinkhorn(trace.ptilde[t], config.sinkhorn_iterations, &trace.sinkhorn_caches[t]));
    DenseMatrix g = cost_gradient(trace.cost, trace.p[t], config.structure);
    if (config.update == InnerUpdate::TrueJacobian) {
      g = sinkhorn_vjp(trace.sinkhorn_caches[t], g);
    }
    DenseMatrix next = trace.ptilde[t];
    add_scaled(next, -config.step_size, g);
    trace.inner_grads.push_back(std::move(g));
    trace.ptilde.push_back(std::move(next));
  }
  trace.p.push_back(
      sinkhorn(trace.ptilde[steps], config.sinkhorn_iterations, &trace.sinkhorn_caches[steps]));

  PoForwardResult result;
  result.permutation = trace.p.back();
  result.output = matmul(result.permutation, x);
  result.trace = std::move(trace);
  return result;
}

struct PoGradients {
  OrderingCostGrads cost_params;
  DenseMatrix input;      // dX
  double step_size = 0.0; // d eta
  std::optional<DenseMatrix> init_weights;
};

// Exact reverse-mode pass through the recurrence exactly as po_forward runs
// it. d_output is the gradient at Y; d_permutation optionally adds a gradient
// applied directly to the final P.
inline PoGradients po_backward(const OrderingCostParams& cost_params, const PoTrace& trace,
                               const DenseMatrix& d_output,
                               const DenseMatrix* d_permutation = nullptr,
                               const InitParams* init_params = nullptr) {
  if (trace.config.update != InnerUpdate::DirectGradient)
    throw std::invalid_argument("po_backward: trace was recorded with the true-Jacobian update");
  const std::size_t n = trace.input.rows();
  const std::size_t steps = trace.config.inner_steps;
  if (d_output.rows() != n || d_output.cols() != trace.input.cols())
    throw std::invalid_argument("po_backward: d_output shape mismatch");
  if (d_permutation && (d_permutation->rows() != n || d_permutation->cols() != n))
    throw std::invalid_argument("po_backward: d_permutation shape mismatch");
  if (trace.config.init == InitMode::LinearAssignment && init_params == nullptr)
    throw std::invalid_argument("po_backward: linear-assignment trace requires init params");

  const ComparisonStructure& structure = trace.config.structure;
  const std::size_t channels = structure.channels();

  // Y = P X
  DenseMatrix d_p_final = matmul_abt(d_output, trace.input);  // dY X^T
  if (d_permutation) add_scaled(d_p_final, 1.0, *d_permutation);
  DenseMatrix d_input = matmul_atb(trace.p.back(), d_output);  // P^T dY

  std::vector<DenseMatrix> d_cost(channels, DenseMatrix(n, n));
  double d_eta = 0.0;

  DenseMatrix d_ptilde = sinkhorn_vjp(trace.sinkhorn_caches[steps], d_p_final);
  for (std::size_t t = steps; t-- > 0;) {
    // P~(t+1) = P~(t) - eta G(t)
    d_eta -= frobenius_dot(d_ptilde, trace.inner_grads[t]);
    DenseMatrix d_g = scaled(d_ptilde, -trace.config.step_size);

    // G(t) = sum_ch 2 C_ch B_ch with B_ch = P(t) O_ch^T
    DenseMatrix d_p_t(n, n);
    for (std::size_t c = 0; c < channels; ++c) {
      const DenseMatrix& o = structure.position_signs[c];
      const DenseMatrix b = matmul_abt(trace.p[t], o);
      add_scaled(d_cost[c], 2.0, matmul_abt(d_g, b));                  // dC += 2 dG B^T
      add_scaled(d_p_t, 2.0, matmul(matmul_atb(trace.cost[c], d_g), o));  // dP += 2 C^T dG O
    }

    // P(t) = S(P~(t)); the carried d_ptilde passes through unchanged
    add_scaled(d_ptilde, 1.0, sinkhorn_vjp(trace.sinkhorn_caches[t], d_p_t));
  }

  PoGradients grads;
  grads.step_size = d_eta;
  if (trace.config.init == InitMode::LinearAssignment) {
    // P~(0) = X W^T
    grads.init_weights = matmul_atb(d_ptilde, trace.input);  // dW = dP~(0)^T X
    add_scaled(d_input, 1.0, matmul(d_ptilde, init_params->w));
  }
  CostMatrixGrads cost_grads = cost_matrix_vjp(cost_params, trace.cost_cache, d_cost);
  grads.cost_params = std::move(cost_grads.params);
  add_scaled(d_input, 1.0, cost_grads.input);
  grads.input = std::move(d_input);
  return grads;
}

}  // namespace poperm
