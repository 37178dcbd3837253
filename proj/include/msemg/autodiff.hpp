#pragma once

// Reverse-mode gradients for the fixed network graph, the MSE objective, a
// central-difference reference, and the Adam update.
//
// Gradients use the model's flat layout: grad[i] is dL/dparams.values[i].

#include <concepts>
#include <cstdint>
#include <span>
#include <vector>

#include "msemg/nn.hpp"

namespace msemg::train {

template <std::floating_point Real>
Real mse_loss(std::span<const Real> pred, std::span<const Real> target);

// Block adjoints. Each adds into `grad` (full flat parameter array) and, when
// non-empty, into `dx`.

template <std::floating_point Real>
void conv1d_backward(const nn::ConvSpec& spec, std::span<const Real> params, std::span<const Real> x,
                     std::size_t steps, std::span<const Real> dy, std::span<Real> grad, std::span<Real> dx);

template <std::floating_point Real>
void hnf_backward(const nn::HnfSpec& spec, std::span<const Real> params, const nn::HnfCache<Real>& cache,
                  std::size_t steps, std::span<const Real> dy, std::span<Real> grad, std::span<Real> dx);

template <std::floating_point Real>
void mamba_backward(const nn::MambaSpec& spec, std::span<const Real> params, const nn::MambaCache<Real>& cache,
                    std::size_t steps, std::span<const Real> dy, std::span<Real> grad, std::span<Real> dx);

/// Forward + backward on one segment. Adds scale * dL/dparams into `grad`
/// and returns the unscaled loss. Throws NumericalError naming the stage
/// that produced a non-finite value.
template <std::floating_point Real>
Real accumulate_gradients(const nn::BasicModelParams<Real>& params, std::span<const Real> x,
                          std::span<const Real> target, std::span<Real> grad, Real scale = Real(1));

template <std::floating_point Real>
struct LossAndGradients {
  Real loss = 0;
  std::vector<Real> grads;
};

template <std::floating_point Real>
LossAndGradients<Real> backward(std::span<const Real> x, std::span<const Real> target,
                                const nn::BasicModelParams<Real>& params);

/// (L(p + eps e_i) - L(p - eps e_i)) / (2 eps) for every parameter, in double.
std::vector<double> finite_difference_grad(std::span<const double> x, std::span<const double> target,
                                           const nn::BasicModelParams<double>& params, double eps);

struct AdamState {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  std::int64_t step = 0;
  std::vector<double> m;
  std::vector<double> v;

  static AdamState zeros(std::size_t count, double lr = 1e-3);
};

/// Bias-corrected Adam update in place.
template <std::floating_point Real>
void adam_step(std::span<Real> params, std::span<const Real> grads, AdamState& state);

struct ClipResult {
  double norm = 0;  // before clipping
  bool clipped = false;
};

/// Rescales grads so their global L2 norm is at most max_norm.
template <std::floating_point Real>
ClipResult clip_global_norm(std::span<Real> grads, double max_norm);

}  // namespace msemg::train
