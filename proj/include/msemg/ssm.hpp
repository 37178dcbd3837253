#pragma once

// Diagonal state-space model: zero-order-hold discretization, LTI recurrence,
// kernel unrolling, and the input-dependent (selective) scan.
//
// Continuous system:  h'(t) = A h(t) + B x(t),  y(t) = C h(t)
// Discrete system:    h_t = Abar h_{t-1} + Bbar x_t,  y_t = C h_t
//
// A is diagonal throughout, so Abar = exp(delta * A) elementwise and the scan
// costs O(T * H).

#include <cmath>
#include <concepts>
#include <cstddef>
#include <cstdint>
#include <span>
#include <utility>
#include <vector>

namespace msemg::ssm {

struct SsmParams {
  std::vector<double> a;  // diagonal of A
  std::vector<double> b;
  std::vector<double> c;
  double delta = 1.0;

  std::size_t state_dim() const { return a.size(); }
  /// Throws ValidationError on size mismatch, H == 0, non-finite entries or delta <= 0.
  void validate() const;

  /// Seeded system with every a[i] drawn from (a_low, a_high), both negative.
  static SsmParams random_stable(std::size_t state_dim, std::uint64_t seed,
                                 double a_low = -2.0, double a_high = -0.05);
};

struct SsmState {
  std::vector<double> h;
  std::size_t t = 0;

  static SsmState zeros(std::size_t state_dim) { return {std::vector<double>(state_dim, 0.0), 0}; }
};

struct DiscretizedSsm {
  std::vector<double> a_bar;
  std::vector<double> b_bar;

  std::size_t state_dim() const { return a_bar.size(); }
};

struct SsmKernel {
  std::vector<double> coeffs;  // C Abar^j Bbar, j = 0..k

  std::size_t order() const { return coeffs.empty() ? 0 : coeffs.size() - 1; }
};

/// Time-varying delta_t, B_t, C_t for a single input channel. b and c are
/// time-major: entry (t, n) lives at t * state_dim + n.
struct SelectiveInputs {
  std::vector<double> delta;
  std::vector<double> b;
  std::vector<double> c;
  std::size_t state_dim = 0;

  std::size_t steps() const { return delta.size(); }
  void validate() const;

  /// Selectivity switched off: the same (delta, B, C) at every one of `steps` steps.
  static SelectiveInputs constant(const SsmParams& params, std::size_t steps);
};

// Below |delta * a| = kSeriesThreshold the ZOH input gain switches to its
// Taylor series; the closed form loses digits to cancellation there.
inline constexpr double kSeriesThreshold = 1e-4;

/// (e^z - 1) / z, finite at z = 0.
template <std::floating_point Real>
Real expm1_ratio(Real z) {
  if (std::abs(z) < Real(kSeriesThreshold)) {
    return Real(1) + z * (Real(1) / 2 + z * (Real(1) / 6 + z * (Real(1) / 24)));
  }
  return std::expm1(z) / z;
}

/// (z e^z - e^z + 1) / z^2, the z-derivative of expm1_ratio.
template <std::floating_point Real>
Real expm1_ratio_slope(Real z) {
  // The closed form cancels to z^2 / 2, so it needs a wider series band than
  // expm1_ratio, wider still in single precision.
  constexpr Real band = sizeof(Real) >= sizeof(double) ? Real(0.02) : Real(0.1);
  if (std::abs(z) < band) {
    return Real(1) / 2 +
           z * (Real(1) / 3 + z * (Real(1) / 8 + z * (Real(1) / 30 +
                                                      z * (Real(1) / 144 + z * (Real(1) / 840)))));
  }
  return (z * std::exp(z) - std::expm1(z)) / (z * z);
}

/// Bbar / B under zero-order hold: (delta a)^-1 (e^{delta a} - 1) delta.
template <std::floating_point Real>
Real zoh_input_gain(Real delta, Real a) {
  return delta * expm1_ratio(delta * a);
}

DiscretizedSsm discretize_zoh(const SsmParams& params);

std::pair<SsmState, double> ssm_step(const DiscretizedSsm& disc, const SsmState& state, double x,
                                     std::span<const double> c);

std::vector<double> ssm_scan_lti(const DiscretizedSsm& disc, std::span<const double> c,
                                 std::span<const double> x, const SsmState& h0);

SsmKernel unroll_kernel(const DiscretizedSsm& disc, std::span<const double> c, std::size_t k);

/// Causal convolution y_t = sum_{j <= min(t, k)} K_j x_{t-j}; output has the input's length.
std::vector<double> apply_kernel(std::span<const double> x, const SsmKernel& kernel);

std::vector<double> selective_scan(std::span<const double> x, const SelectiveInputs& sel,
                                   std::span<const double> a);
std::vector<double> selective_scan(std::span<const double> x, const SelectiveInputs& sel,
                                   std::span<const double> a, const SsmState& h0);

/// Reference integrator for the continuous system with a dense H x H matrix
/// `a_dense` (row-major). The input is held constant over each sample interval
/// of length `delta`, which is integrated with `substeps` classical RK4 steps.
/// Returns C h sampled at the end of every interval.
std::vector<double> simulate_continuous_rk4(std::span<const double> a_dense,
                                            std::span<const double> b, std::span<const double> c,
                                            std::span<const double> x, double delta, int substeps,
                                            std::span<const double> h0 = {});

/// Row-major dense matrix with `diag` on the diagonal.
std::vector<double> dense_from_diagonal(std::span<const double> diag);

namespace detail {

/// Per-step quantities a backward pass needs. h has (T + 1) rows; row 0 is h0.
template <std::floating_point Real>
struct ScanTrace {
  std::vector<Real> h;
  std::vector<Real> a_bar;
  std::vector<Real> b_gain;
};

/// Selective scan over one channel. delta has T entries, a has H, b and c are
/// T x H time-major. `h` is the running state (in: h0, out: h_T).
template <std::floating_point Real>
void selective_scan_kernel(std::span<const Real> x, std::span<const Real> delta,
                           std::span<const Real> a, std::span<const Real> b,
                           std::span<const Real> c, std::span<Real> h, std::span<Real> y,
                           ScanTrace<Real>* trace) {
  const std::size_t steps = x.size();
  const std::size_t dim = a.size();
  if (trace) {
    trace->h.resize((steps + 1) * dim);
    trace->a_bar.resize(steps * dim);
    trace->b_gain.resize(steps * dim);
    std::copy(h.begin(), h.end(), trace->h.begin());
  }
  for (std::size_t t = 0; t < steps; ++t) {
    const Real dt = delta[t];
    const Real xt = x[t];
    const Real* bt = b.data() + t * dim;
    const Real* ct = c.data() + t * dim;
    Real acc = 0;
    for (std::size_t n = 0; n < dim; ++n) {
      const Real z = dt * a[n];
      const Real a_bar = std::exp(z);
      const Real gain = dt * expm1_ratio(z);
      h[n] = a_bar * h[n] + gain * bt[n] * xt;
      acc += ct[n] * h[n];
      if (trace) {
        trace->a_bar[t * dim + n] = a_bar;
        trace->b_gain[t * dim + n] = gain;
        trace->h[(t + 1) * dim + n] = h[n];
      }
    }
    y[t] = acc;
  }
}

/// Reverse-time adjoint of selective_scan_kernel. Every output gradient is
/// accumulated (+=), so callers sharing B and C across channels can pass the
/// same db / dc buffers.
template <std::floating_point Real>
void selective_scan_backward(std::span<const Real> dy, std::span<const Real> x,
                             std::span<const Real> delta, std::span<const Real> a,
                             std::span<const Real> b, std::span<const Real> c,
                             const ScanTrace<Real>& trace, std::span<Real> dx,
                             std::span<Real> ddelta, std::span<Real> da, std::span<Real> db,
                             std::span<Real> dc) {
  const std::size_t steps = x.size();
  const std::size_t dim = a.size();
  std::vector<Real> dh(dim, Real(0));
  for (std::size_t t = steps; t-- > 0;) {
    const Real dt = delta[t];
    const Real xt = x[t];
    const Real gy = dy[t];
    const Real* h_now = trace.h.data() + (t + 1) * dim;
    const Real* h_prev = trace.h.data() + t * dim;
    Real gx = 0;
    Real gdelta = 0;
    for (std::size_t n = 0; n < dim; ++n) {
      const std::size_t i = t * dim + n;
      dc[i] += gy * h_now[n];
      const Real g = dh[n] + c[i] * gy;
      const Real a_bar = trace.a_bar[i];
      const Real gain = trace.b_gain[i];
      const Real g_abar = g * h_prev[n];
      const Real g_gain = g * b[i] * xt;
      gx += g * gain * b[i];
      db[i] += g * gain * xt;
      // d gain / d delta = e^{delta a};  d gain / d a = delta^2 psi(delta a)
      gdelta += g_abar * a[n] * a_bar + g_gain * a_bar;
      da[n] += g_abar * dt * a_bar + g_gain * dt * dt * expm1_ratio_slope(dt * a[n]);
      dh[n] = g * a_bar;
    }
    dx[t] += gx;
    ddelta[t] += gdelta;
  }
}

}  // namespace detail

}  // namespace msemg::ssm
