#include "msemg/ssm.hpp"

#include <algorithm>
#include <cmath>
#include <random>
#include <string>

#include "msemg/errors.hpp"

namespace msemg::ssm {

namespace {

bool all_finite(std::span<const double> v) {
  return std::all_of(v.begin(), v.end(), [](double x) { return std::isfinite(x); });
}

void check_disc(const DiscretizedSsm& disc, std::span<const double> c) {
  require(disc.a_bar.size() == disc.b_bar.size(), "discretized SSM: a_bar/b_bar size mismatch");
  require(c.size() == disc.a_bar.size(), "C has " + std::to_string(c.size()) +
                                             " entries, state dimension is " +
                                             std::to_string(disc.a_bar.size()));
}

}  // namespace

void SsmParams::validate() const {
  require(!a.empty(), "SSM state dimension must be at least 1");
  require(b.size() == a.size() && c.size() == a.size(), "SSM A/B/C sizes differ");
  require(all_finite(a) && all_finite(b) && all_finite(c) && std::isfinite(delta),
          "SSM parameters must be finite");
  require(delta > 0, "SSM step size delta must be positive");
}

SsmParams SsmParams::random_stable(std::size_t state_dim, std::uint64_t seed, double a_low,
                                   double a_high) {
  require(state_dim >= 1, "state_dim must be at least 1");
  require(a_low < a_high && a_high < 0, "stable construction needs a_low < a_high < 0");
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> a_dist(a_low, a_high);
  std::normal_distribution<double> w_dist(0.0, 1.0);
  std::uniform_real_distribution<double> delta_dist(0.05, 0.5);
  SsmParams p;
  p.a.resize(state_dim);
  p.b.resize(state_dim);
  p.c.resize(state_dim);
  for (std::size_t i = 0; i < state_dim; ++i) {
    p.a[i] = a_dist(rng);
    p.b[i] = w_dist(rng);
    p.c[i] = w_dist(rng);
  }
  p.delta = delta_dist(rng);
  return p;
}

void SelectiveInputs::validate() const {
  require(state_dim >= 1, "selective inputs: state_dim must be at least 1");
  require(b.size() == delta.size() * state_dim && c.size() == delta.size() * state_dim,
          "selective inputs: delta, B and C lengths disagree");
  for (std::size_t t = 0; t < delta.size(); ++t) {
    if (!(delta[t] > 0) || !std::isfinite(delta[t])) {
      throw ValidationError("selective inputs: delta[" + std::to_string(t) +
                            "] must be positive and finite");
    }
  }
}

SelectiveInputs SelectiveInputs::constant(const SsmParams& params, std::size_t steps) {
  params.validate();
  SelectiveInputs sel;
  sel.state_dim = params.state_dim();
  sel.delta.assign(steps, params.delta);
  sel.b.reserve(steps * sel.state_dim);
  sel.c.reserve(steps * sel.state_dim);
  for (std::size_t t = 0; t < steps; ++t) {
    sel.b.insert(sel.b.end(), params.b.begin(), params.b.end());
    sel.c.insert(sel.c.end(), params.c.begin(), params.c.end());
  }
  return sel;
}

DiscretizedSsm discretize_zoh(const SsmParams& params) {
  params.validate();
  DiscretizedSsm disc;
  const std::size_t dim = params.state_dim();
  disc.a_bar.resize(dim);
  disc.b_bar.resize(dim);
  for (std::size_t i = 0; i < dim; ++i) {
    disc.a_bar[i] = std::exp(params.delta * params.a[i]);
    disc.b_bar[i] = zoh_input_gain(params.delta, params.a[i]) * params.b[i];
  }
  return disc;
}

std::pair<SsmState, double> ssm_step(const DiscretizedSsm& disc, const SsmState& state, double x,
                                     std::span<const double> c) {
  check_disc(disc, c);
  require(state.h.size() == disc.state_dim(), "hidden state dimension mismatch");
  SsmState next{std::vector<double>(disc.state_dim()), state.t + 1};
  double y = 0;
  for (std::size_t i = 0; i < disc.state_dim(); ++i) {
    next.h[i] = disc.a_bar[i] * state.h[i] + disc.b_bar[i] * x;
    y += c[i] * next.h[i];
  }
  return {std::move(next), y};
}

std::vector<double> ssm_scan_lti(const DiscretizedSsm& disc, std::span<const double> c,
                                 std::span<const double> x, const SsmState& h0) {
  check_disc(disc, c);
  require(!x.empty(), "ssm_scan_lti: empty input sequence");
  require(h0.h.size() == disc.state_dim(), "hidden state dimension mismatch");
  std::vector<double> h = h0.h;
  std::vector<double> y(x.size());
  for (std::size_t t = 0; t < x.size(); ++t) {
    double acc = 0;
    for (std::size_t i = 0; i < h.size(); ++i) {
      h[i] = disc.a_bar[i] * h[i] + disc.b_bar[i] * x[t];
      acc += c[i] * h[i];
    }
    y[t] = acc;
  }
  return y;
}

SsmKernel unroll_kernel(const DiscretizedSsm& disc, std::span<const double> c, std::size_t k) {
  check_disc(disc, c);
  SsmKernel kernel;
  kernel.coeffs.resize(k + 1);
  // powers[i] holds Abar_i^j B_i as j advances.
  std::vector<double> powers = disc.b_bar;
  for (std::size_t j = 0; j <= k; ++j) {
    double acc = 0;
    for (std::size_t i = 0; i < powers.size(); ++i) {
      acc += c[i] * powers[i];
      powers[i] *= disc.a_bar[i];
    }
    kernel.coeffs[j] = acc;
  }
  return kernel;
}

std::vector<double> apply_kernel(std::span<const double> x, const SsmKernel& kernel) {
  require(!kernel.coeffs.empty(), "apply_kernel: empty kernel");
  std::vector<double> y(x.size(), 0.0);
  const std::size_t taps = kernel.coeffs.size();
  for (std::size_t t = 0; t < x.size(); ++t) {
    const std::size_t last = std::min(t + 1, taps);
    double acc = 0;
    for (std::size_t j = 0; j < last; ++j) acc += kernel.coeffs[j] * x[t - j];
    y[t] = acc;
  }
  return y;
}

std::vector<double> selective_scan(std::span<const double> x, const SelectiveInputs& sel,
                                   std::span<const double> a) {
  return selective_scan(x, sel, a, SsmState::zeros(a.size()));
}

std::vector<double> selective_scan(std::span<const double> x, const SelectiveInputs& sel,
                                   std::span<const double> a, const SsmState& h0) {
  sel.validate();
  require(x.size() == sel.steps(), "selective_scan: input has " + std::to_string(x.size()) +
                                       " steps, selective inputs have " +
                                       std::to_string(sel.steps()));
  require(a.size() == sel.state_dim, "selective_scan: A size differs from state_dim");
  require(h0.h.size() == a.size(), "hidden state dimension mismatch");
  std::vector<double> h = h0.h;
  std::vector<double> y(x.size());
  detail::selective_scan_kernel<double>(x, sel.delta, a, sel.b, sel.c, h, y, nullptr);
  return y;
}

std::vector<double> dense_from_diagonal(std::span<const double> diag) {
  const std::size_t n = diag.size();
  std::vector<double> m(n * n, 0.0);
  for (std::size_t i = 0; i < n; ++i) m[i * n + i] = diag[i];
  return m;
}

std::vector<double> simulate_continuous_rk4(std::span<const double> a_dense,
                                            std::span<const double> b, std::span<const double> c,
                                            std::span<const double> x, double delta, int substeps,
                                            std::span<const double> h0) {
  const std::size_t dim = b.size();
  require(substeps >= 1, "simulate_continuous_rk4: substeps must be >= 1");
  require(a_dense.size() == dim * dim && c.size() == dim, "simulate_continuous_rk4: shape mismatch");
  require(h0.empty() || h0.size() == dim, "simulate_continuous_rk4: h0 size mismatch");

  std::vector<double> h(dim, 0.0);
  if (!h0.empty()) std::copy(h0.begin(), h0.end(), h.begin());
  std::vector<double> k1(dim), k2(dim), k3(dim), k4(dim), tmp(dim);

  auto deriv = [&](const std::vector<double>& state, double u, std::vector<double>& out) {
    for (std::size_t i = 0; i < dim; ++i) {
      double acc = b[i] * u;
      for (std::size_t j = 0; j < dim; ++j) acc += a_dense[i * dim + j] * state[j];
      out[i] = acc;
    }
  };

  const double step = delta / substeps;
  std::vector<double> y(x.size());
  for (std::size_t t = 0; t < x.size(); ++t) {
    const double u = x[t];
    for (int s = 0; s < substeps; ++s) {
      deriv(h, u, k1);
      for (std::size_t i = 0; i < dim; ++i) tmp[i] = h[i] + 0.5 * step * k1[i];
      deriv(tmp, u, k2);
      for (std::size_t i = 0; i < dim; ++i) tmp[i] = h[i] + 0.5 * step * k2[i];
      deriv(tmp, u, k3);
      for (std::size_t i = 0; i < dim; ++i) tmp[i] = h[i] + step * k3[i];
      deriv(tmp, u, k4);
      for (std::size_t i = 0; i < dim; ++i) {
        h[i] += step / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
      }
    }
    double acc = 0;
    for (std::size_t i = 0; i < dim; ++i) acc += c[i] * h[i];
    y[t] = acc;
  }
  return y;
}

}  // namespace msemg::ssm
