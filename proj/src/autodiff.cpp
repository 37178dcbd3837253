#include "msemg/autodiff.hpp"

#include <algorithm>
#include <cmath>

#include "msemg/errors.hpp"

namespace msemg::train {

namespace {

template <std::floating_point Real>
Real sigmoid(Real z) {
  return Real(1) / (Real(1) + std::exp(-z));
}

template <std::floating_point Real>
Real silu_grad(Real z) {
  const Real s = sigmoid(z);
  return s * (Real(1) + z * (Real(1) - s));
}

// Matches the cutoff in nn::softplus.
template <std::floating_point Real>
Real softplus_grad(Real z) {
  return z > Real(20) ? Real(1) : sigmoid(z);
}

template <std::floating_point Real>
void check_finite(std::span<const Real> values, const char* op) {
  for (Real v : values) {
    if (!std::isfinite(v)) throw NumericalError(op, "non-finite value");
  }
}

}  // namespace

template <std::floating_point Real>
Real mse_loss(std::span<const Real> pred, std::span<const Real> target) {
  require(pred.size() == target.size(), "mse_loss: length mismatch (" + std::to_string(pred.size()) + " vs " +
                                            std::to_string(target.size()) + ")");
  require(!pred.empty(), "mse_loss: empty input");
  double acc = 0;
  for (std::size_t i = 0; i < pred.size(); ++i) {
    const double d = static_cast<double>(pred[i]) - static_cast<double>(target[i]);
    acc += d * d;
  }
  return static_cast<Real>(acc / static_cast<double>(pred.size()));
}

template <std::floating_point Real>
void conv1d_backward(const nn::ConvSpec& spec, std::span<const Real> params, std::span<const Real> x,
                     std::size_t steps, std::span<const Real> dy, std::span<Real> grad, std::span<Real> dx) {
  const auto in = static_cast<std::size_t>(spec.in);
  const auto out = static_cast<std::size_t>(spec.out);
  const auto k = static_cast<std::size_t>(spec.kernel);
  require(x.size() == in * steps && dy.size() == out * steps, "conv1d_backward: shape mismatch");
  require(dx.empty() || dx.size() == in * steps, "conv1d_backward: dx shape mismatch");
  require(grad.size() == params.size(), "conv1d_backward: gradient array size mismatch");

  const Real* w = params.data() + spec.weight;
  Real* gw = grad.data() + spec.weight;
  const auto left = static_cast<std::ptrdiff_t>(spec.left_pad());
  const auto n = static_cast<std::ptrdiff_t>(steps);
  for (std::size_t o = 0; o < out; ++o) {
    const Real* dyo = dy.data() + o * steps;
    if (spec.has_bias) {
      double acc = 0;
      for (std::size_t t = 0; t < steps; ++t) acc += dyo[t];
      grad[spec.bias + o] += static_cast<Real>(acc);
    }
    const std::size_t i_first = spec.depthwise ? o : 0;
    const std::size_t i_last = spec.depthwise ? o + 1 : in;
    for (std::size_t i = i_first; i < i_last; ++i) {
      const Real* xi = x.data() + i * steps;
      const std::size_t w_row = spec.depthwise ? o * k : (o * in + i) * k;
      for (std::size_t j = 0; j < k; ++j) {
        const std::ptrdiff_t shift = static_cast<std::ptrdiff_t>(j) - left;
        const std::ptrdiff_t lo = std::max<std::ptrdiff_t>(0, -shift);
        const std::ptrdiff_t hi = std::min<std::ptrdiff_t>(n, n - shift);
        double acc = 0;
        for (std::ptrdiff_t t = lo; t < hi; ++t) acc += static_cast<double>(dyo[t]) * xi[t + shift];
        gw[w_row + j] += static_cast<Real>(acc);
        if (!dx.empty()) {
          Real* dxi = dx.data() + i * steps;
          const Real wv = w[w_row + j];
          for (std::ptrdiff_t t = lo; t < hi; ++t) dxi[t + shift] += wv * dyo[t];
        }
      }
    }
  }
}

template <std::floating_point Real>
void hnf_backward(const nn::HnfSpec& spec, std::span<const Real> params, const nn::HnfCache<Real>& cache,
                  std::size_t steps, std::span<const Real> dy, std::span<Real> grad, std::span<Real> dx) {
  const auto cc = static_cast<std::size_t>(spec.concat_channels);
  std::vector<Real> dact(cc * steps, Real(0));
  conv1d_backward<Real>(spec.fuse, params, cache.act, steps, dy, grad, dact);
  for (std::size_t c = 0; c < cc; ++c) {
    if (!spec.nonlinear[c]) continue;
    for (std::size_t t = 0; t < steps; ++t) dact[c * steps + t] *= silu_grad(cache.pre[c * steps + t]);
  }
  std::size_t row = 0;
  for (const nn::ConvSpec& br : spec.branches) {
    const auto rows = static_cast<std::size_t>(br.out);
    conv1d_backward<Real>(br, params, cache.input, steps,
                          std::span<const Real>(dact.data() + row * steps, rows * steps), grad, dx);
    row += rows;
  }
}

template <std::floating_point Real>
void mamba_backward(const nn::MambaSpec& spec, std::span<const Real> params, const nn::MambaCache<Real>& m,
                    std::size_t steps, std::span<const Real> dy, std::span<Real> grad, std::span<Real> dx) {
  const auto d = static_cast<std::size_t>(spec.d_model);
  const auto di = static_cast<std::size_t>(spec.d_inner);
  const auto hs = static_cast<std::size_t>(spec.state_dim);
  require(dy.size() == d * steps, "mamba_backward: dy shape mismatch");
  require(m.traces.size() == di, "mamba_backward: forward cache has no scan traces");

  // Residual branch.
  if (!dx.empty()) {
    for (std::size_t i = 0; i < d * steps; ++i) dx[i] += dy[i];
  }

  std::vector<Real> dgated(di * steps, Real(0));
  conv1d_backward<Real>(spec.out_proj, params, m.gated, steps, dy, grad, dgated);

  std::vector<Real> dproj(2 * di * steps, Real(0));
  std::vector<Real> dscan(di * steps);
  const Real* g = m.proj.data() + di * steps;
  Real* dg = dproj.data() + di * steps;
  for (std::size_t i = 0; i < di * steps; ++i) {
    dscan[i] = dgated[i] * m.gate[i];
    dg[i] = dgated[i] * m.y[i] * silu_grad(g[i]);
  }

  std::vector<Real> dv(di * steps, Real(0));
  std::vector<Real> ddelta(di * steps, Real(0));
  std::vector<Real> da(di * hs, Real(0));
  std::vector<Real> db(steps * hs, Real(0));
  std::vector<Real> dc(steps * hs, Real(0));
  for (std::size_t c = 0; c < di; ++c) {
    const std::span<const Real> dyc(dscan.data() + c * steps, steps);
    ssm::detail::selective_scan_backward<Real>(
        dyc, std::span<const Real>(m.v.data() + c * steps, steps),
        std::span<const Real>(m.delta.data() + c * steps, steps), std::span<const Real>(m.a.data() + c * hs, hs),
        m.b, m.c, m.traces[c], std::span<Real>(dv.data() + c * steps, steps),
        std::span<Real>(ddelta.data() + c * steps, steps), std::span<Real>(da.data() + c * hs, hs), db, dc);
  }

  // A = -exp(a_log)  =>  dL/da_log = dL/dA * A
  for (std::size_t i = 0; i < di * hs; ++i) grad[spec.a_log + i] += da[i] * m.a[i];

  for (std::size_t i = 0; i < di * steps; ++i) ddelta[i] *= softplus_grad(m.delta_pre[i]);
  conv1d_backward<Real>(spec.dt_proj, params, m.v, steps, ddelta, grad, dv);

  std::vector<Real> dbh(hs * steps), dch(hs * steps);
  for (std::size_t n = 0; n < hs; ++n) {
    for (std::size_t t = 0; t < steps; ++t) {
      dbh[n * steps + t] = db[t * hs + n];
      dch[n * steps + t] = dc[t * hs + n];
    }
  }
  conv1d_backward<Real>(spec.b_proj, params, m.v, steps, dbh, grad, dv);
  conv1d_backward<Real>(spec.c_proj, params, m.v, steps, dch, grad, dv);

  std::vector<Real> dconv(di * steps);
  for (std::size_t i = 0; i < di * steps; ++i) dconv[i] = dv[i] * silu_grad(m.conv[i]);
  conv1d_backward<Real>(spec.conv, params, std::span<const Real>(m.proj.data(), di * steps), steps, dconv, grad,
                        std::span<Real>(dproj.data(), di * steps));

  conv1d_backward<Real>(spec.in_proj, params, m.input, steps, dproj, grad, dx);
}

template <std::floating_point Real>
Real accumulate_gradients(const nn::BasicModelParams<Real>& params, std::span<const Real> x,
                          std::span<const Real> target, std::span<Real> grad, Real scale) {
  require(x.size() == target.size(), "backward: input and target lengths differ");
  require(grad.size() == params.values.size(), "backward: gradient array size mismatch");
  const std::span<const Real> p(params.values);
  const std::size_t steps = x.size();
  const auto d = static_cast<std::size_t>(params.layout.mamba.d_model);

  nn::ForwardCache<Real> cache;
  const auto out = nn::msemg_forward<Real>(params, x, &cache);
  check_finite<Real>(cache.mamba.input, "hnf_in forward");
  check_finite<Real>(cache.hnf_out.input, "mamba forward");
  check_finite<Real>(out, "hnf_out forward");
  const Real loss = mse_loss<Real>(out, target);
  if (!std::isfinite(loss)) throw NumericalError("mse_loss", "non-finite loss");

  std::vector<Real> dout(steps);
  const Real k = scale * Real(2) / static_cast<Real>(steps);
  for (std::size_t t = 0; t < steps; ++t) dout[t] = k * (out[t] - target[t]);

  std::vector<Real> dmid(d * steps, Real(0));
  hnf_backward<Real>(params.layout.hnf_out, p, cache.hnf_out, steps, dout, grad, dmid);
  check_finite<Real>(dmid, "hnf_out backward");
  std::vector<Real> dlatent(d * steps, Real(0));
  mamba_backward<Real>(params.layout.mamba, p, cache.mamba, steps, dmid, grad, dlatent);
  check_finite<Real>(dlatent, "mamba backward");
  hnf_backward<Real>(params.layout.hnf_in, p, cache.hnf_in, steps, dlatent, grad, {});
  check_finite<Real>(grad, "hnf_in backward");
  return loss;
}

template <std::floating_point Real>
LossAndGradients<Real> backward(std::span<const Real> x, std::span<const Real> target,
                                const nn::BasicModelParams<Real>& params) {
  LossAndGradients<Real> r;
  r.grads.assign(params.values.size(), Real(0));
  r.loss = accumulate_gradients<Real>(params, x, target, r.grads);
  return r;
}

std::vector<double> finite_difference_grad(std::span<const double> x, std::span<const double> target,
                                           const nn::BasicModelParams<double>& params, double eps) {
  require(eps > 0, "finite_difference_grad: eps must be positive");
  nn::BasicModelParams<double> probe = params;
  auto loss_at = [&]() { return mse_loss<double>(nn::msemg_forward<double>(probe, x), target); };
  std::vector<double> grad(params.values.size());
  for (std::size_t i = 0; i < grad.size(); ++i) {
    const double saved = probe.values[i];
    probe.values[i] = saved + eps;
    const double up = loss_at();
    probe.values[i] = saved - eps;
    const double down = loss_at();
    probe.values[i] = saved;
    grad[i] = (up - down) / (2 * eps);
  }
  return grad;
}

AdamState AdamState::zeros(std::size_t count, double lr) {
  AdamState s;
  s.lr = lr;
  s.m.assign(count, 0.0);
  s.v.assign(count, 0.0);
  return s;
}

template <std::floating_point Real>
void adam_step(std::span<Real> params, std::span<const Real> grads, AdamState& state) {
  require(params.size() == grads.size(), "adam_step: parameter and gradient sizes differ");
  require(state.m.size() == params.size() && state.v.size() == params.size(),
          "adam_step: optimizer moments do not match the parameter count");
  state.step += 1;
  const double c1 = 1.0 - std::pow(state.beta1, static_cast<double>(state.step));
  const double c2 = 1.0 - std::pow(state.beta2, static_cast<double>(state.step));
  for (std::size_t i = 0; i < params.size(); ++i) {
    const double g = grads[i];
    state.m[i] = state.beta1 * state.m[i] + (1.0 - state.beta1) * g;
    state.v[i] = state.beta2 * state.v[i] + (1.0 - state.beta2) * g * g;
    const double update = state.lr * (state.m[i] / c1) / (std::sqrt(state.v[i] / c2) + state.eps);
    params[i] = static_cast<Real>(params[i] - update);
  }
}

template <std::floating_point Real>
ClipResult clip_global_norm(std::span<Real> grads, double max_norm) {
  require(max_norm > 0, "clip_global_norm: max_norm must be positive");
  double sq = 0;
  for (Real g : grads) sq += static_cast<double>(g) * g;
  ClipResult r{std::sqrt(sq), false};
  if (r.norm > max_norm) {
    const double k = max_norm / r.norm;
    for (Real& g : grads) g = static_cast<Real>(g * k);
    r.clipped = true;
  }
  return r;
}

#define MSEMG_INSTANTIATE(Real)                                                                          \
  template Real mse_loss<Real>(std::span<const Real>, std::span<const Real>);                            \
  template void conv1d_backward<Real>(const nn::ConvSpec&, std::span<const Real>, std::span<const Real>, \
                                      std::size_t, std::span<const Real>, std::span<Real>, std::span<Real>); \
  template void hnf_backward<Real>(const nn::HnfSpec&, std::span<const Real>, const nn::HnfCache<Real>&,  \
                                   std::size_t, std::span<const Real>, std::span<Real>, std::span<Real>);    \
  template void mamba_backward<Real>(const nn::MambaSpec&, std::span<const Real>,                        \
                                     const nn::MambaCache<Real>&, std::size_t, std::span<const Real>,     \
                                     std::span<Real>, std::span<Real>);                                  \
  template Real accumulate_gradients<Real>(const nn::BasicModelParams<Real>&, std::span<const Real>,    \
                                           std::span<const Real>, std::span<Real>, Real);                \
  template LossAndGradients<Real> backward<Real>(std::span<const Real>, std::span<const Real>,          \
                                                 const nn::BasicModelParams<Real>&);                     \
  template void adam_step<Real>(std::span<Real>, std::span<const Real>, AdamState&);                    \
  template ClipResult clip_global_norm<Real>(std::span<Real>, double);

MSEMG_INSTANTIATE(float)
MSEMG_INSTANTIATE(double)

#undef MSEMG_INSTANTIATE

}  // namespace msemg::train
