#include "msemg/nn.hpp"

#include <algorithm>
#include <cmath>
#include <random>
#include <set>

#include "msemg/errors.hpp"

namespace msemg::nn {

void ModelConfig::validate() const {
  require(d_model >= 1, "model config: d_model must be >= 1");
  require(expand >= 1, "model config: expand must be >= 1");
  require(state_dim >= 1, "model config: state_dim must be >= 1");
  require(conv_width >= 1, "model config: conv_width must be >= 1");
  require(!hnf_kernels.empty(), "model config: hnf_kernels is empty");
  for (int k : hnf_kernels) {
    require(k >= 1 && k % 2 == 1, "model config: HNF kernel sizes must be positive and odd, got " +
                                      std::to_string(k));
  }
  require(hnf_branch_channels >= 1, "model config: hnf_branch_channels must be >= 1");
  require(dt_min > 0 && dt_min <= dt_max, "model config: need 0 < dt_min <= dt_max");
  require(fs > 0, "model config: fs must be positive");
}

void to_json(nlohmann::json& j, const ModelConfig& c) {
  j = {{"d_model", c.d_model},
       {"expand", c.expand},
       {"state_dim", c.state_dim},
       {"conv_width", c.conv_width},
       {"hnf_kernels", c.hnf_kernels},
       {"hnf_branch_channels", c.hnf_branch_channels},
       {"dt_min", c.dt_min},
       {"dt_max", c.dt_max},
       {"fs", c.fs},
       {"seed", c.seed}};
}

void from_json(const nlohmann::json& j, ModelConfig& c) {
  static const std::set<std::string> known = {"d_model",     "expand",  "state_dim",
                                              "conv_width",  "hnf_kernels", "hnf_branch_channels",
                                              "dt_min",      "dt_max",  "fs", "seed"};
  require(j.is_object(), "model config must be a JSON object");
  for (const auto& [key, value] : j.items()) {
    require(known.count(key) == 1, "model config: unknown key '" + key + "'");
  }
  ModelConfig d;
  c.d_model = j.value("d_model", d.d_model);
  c.expand = j.value("expand", d.expand);
  c.state_dim = j.value("state_dim", d.state_dim);
  c.conv_width = j.value("conv_width", d.conv_width);
  c.hnf_kernels = j.value("hnf_kernels", d.hnf_kernels);
  c.hnf_branch_channels = j.value("hnf_branch_channels", d.hnf_branch_channels);
  c.dt_min = j.value("dt_min", d.dt_min);
  c.dt_max = j.value("dt_max", d.dt_max);
  c.fs = j.value("fs", d.fs);
  c.seed = j.value("seed", d.seed);
}

std::size_t ConvSpec::weight_count() const {
  return static_cast<std::size_t>(out) * static_cast<std::size_t>(depthwise ? 1 : in) *
         static_cast<std::size_t>(kernel);
}

// Layout -------------------------------------------------------------------

namespace {

struct LayoutBuilder {
  Layout& layout;

  std::size_t add(const std::string& name, std::vector<std::size_t> shape) {
    std::size_t size = 1;
    for (std::size_t s : shape) size *= s;
    const std::size_t offset = layout.total;
    layout.tensors.push_back({name, std::move(shape), offset, size});
    layout.total += size;
    return offset;
  }

  ConvSpec conv(const std::string& name, int in, int out, int kernel, Padding padding, bool depthwise,
                bool has_bias) {
    ConvSpec s{in, out, kernel, padding, depthwise, has_bias, 0, 0};
    const auto o = static_cast<std::size_t>(out);
    const auto k = static_cast<std::size_t>(kernel);
    s.weight = depthwise ? add(name + ".weight", {o, k})
                         : add(name + ".weight", {o, static_cast<std::size_t>(in), k});
    if (has_bias) s.bias = add(name + ".bias", {o});
    return s;
  }

  HnfSpec hnf(const std::string& name, int in, int out, const ModelConfig& c) {
    HnfSpec h;
    for (std::size_t i = 0; i < c.hnf_kernels.size(); ++i) {
      h.branches.push_back(conv(name + ".branch" + std::to_string(i), in, c.hnf_branch_channels,
                                c.hnf_kernels[i], Padding::same, false, true));
    }
    h.concat_channels = c.hnf_branch_channels * static_cast<int>(c.hnf_kernels.size());
    // Even concatenated channels are nonlinear: ceil(half) of them, spread
    // evenly over the branches.
    h.nonlinear.resize(static_cast<std::size_t>(h.concat_channels));
    for (std::size_t i = 0; i < h.nonlinear.size(); ++i) h.nonlinear[i] = (i % 2 == 0);
    h.fuse = conv(name + ".fuse", h.concat_channels, out, 1, Padding::same, false, true);
    return h;
  }
};

}  // namespace

Layout Layout::build(const ModelConfig& config) {
  config.validate();
  Layout layout;
  LayoutBuilder b{layout};
  const int d = config.d_model;
  const int di = config.d_inner();
  const int hs = config.state_dim;

  layout.hnf_in = b.hnf("hnf_in", 1, d, config);

  MambaSpec& m = layout.mamba;
  m.d_model = d;
  m.d_inner = di;
  m.state_dim = hs;
  m.in_proj = b.conv("mamba.in_proj", d, 2 * di, 1, Padding::same, false, false);
  m.conv = b.conv("mamba.conv", di, di, config.conv_width, Padding::causal, true, true);
  m.dt_proj = b.conv("mamba.dt_proj", di, di, 1, Padding::same, false, true);
  m.b_proj = b.conv("mamba.b_proj", di, hs, 1, Padding::same, false, false);
  m.c_proj = b.conv("mamba.c_proj", di, hs, 1, Padding::same, false, false);
  m.a_log = b.add("mamba.a_log", {static_cast<std::size_t>(di), static_cast<std::size_t>(hs)});
  m.out_proj = b.conv("mamba.out_proj", di, d, 1, Padding::same, false, false);

  layout.hnf_out = b.hnf("hnf_out", d, 1, config);
  return layout;
}

const TensorInfo& Layout::tensor(const std::string& name) const {
  for (const auto& t : tensors) {
    if (t.name == name) return t;
  }
  throw ValidationError("no parameter tensor named '" + name + "'");
}

std::size_t count_parameters(const ModelConfig& config) { return Layout::build(config).total; }

ModelParams init_params(const ModelConfig& config) {
  ModelParams p = zeros_like<float>(config);
  std::mt19937_64 rng(config.seed);

  auto fill_uniform = [&](std::size_t offset, std::size_t count, double bound) {
    std::uniform_real_distribution<double> dist(-bound, bound);
    for (std::size_t i = 0; i < count; ++i) p.values[offset + i] = static_cast<float>(dist(rng));
  };
  auto init_conv = [&](const ConvSpec& s) {
    const double fan_in = static_cast<double>((s.depthwise ? 1 : s.in) * s.kernel);
    const double bound = 1.0 / std::sqrt(fan_in);
    fill_uniform(s.weight, s.weight_count(), bound);
    if (s.has_bias) fill_uniform(s.bias, static_cast<std::size_t>(s.out), bound);
  };
  auto init_hnf = [&](const HnfSpec& h) {
    for (const auto& br : h.branches) init_conv(br);
    init_conv(h.fuse);
  };

  const MambaSpec& m = p.layout.mamba;
  init_hnf(p.layout.hnf_in);
  init_conv(m.in_proj);
  init_conv(m.conv);
  init_conv(m.dt_proj);
  init_conv(m.b_proj);
  init_conv(m.c_proj);
  init_conv(m.out_proj);
  init_hnf(p.layout.hnf_out);

  // softplus(bias) = dt  <=>  bias = dt + log(-expm1(-dt))
  std::uniform_real_distribution<double> log_dt(std::log(config.dt_min), std::log(config.dt_max));
  for (int c = 0; c < m.d_inner; ++c) {
    const double dt = std::exp(log_dt(rng));
    p.values[m.dt_proj.bias + static_cast<std::size_t>(c)] = static_cast<float>(dt + std::log(-std::expm1(-dt)));
  }
  for (int c = 0; c < m.d_inner; ++c) {
    for (int n = 0; n < m.state_dim; ++n) {
      p.values[m.a_log + static_cast<std::size_t>(c * m.state_dim + n)] = static_cast<float>(std::log(n + 1.0));
    }
  }
  return p;
}

// Forward ------------------------------------------------------------------

template <std::floating_point Real>
void conv1d_forward(const ConvSpec& spec, std::span<const Real> params, std::span<const Real> x,
                    std::size_t steps, std::span<Real> y) {
  const auto in = static_cast<std::size_t>(spec.in);
  const auto out = static_cast<std::size_t>(spec.out);
  const auto k = static_cast<std::size_t>(spec.kernel);
  require(x.size() == in * steps, "conv1d: input has " + std::to_string(x.size()) + " values, expected " +
                                      std::to_string(in) + " x " + std::to_string(steps));
  require(y.size() == out * steps, "conv1d: output buffer size mismatch");
  require(!spec.depthwise || in == out, "conv1d: depthwise conv needs in == out");
  require(spec.weight + spec.weight_count() <= params.size(), "conv1d: weights out of range");

  const Real* w = params.data() + spec.weight;
  const auto left = static_cast<std::ptrdiff_t>(spec.left_pad());
  const auto n = static_cast<std::ptrdiff_t>(steps);
  for (std::size_t o = 0; o < out; ++o) {
    Real* yo = y.data() + o * steps;
    std::fill(yo, yo + steps, spec.has_bias ? params[spec.bias + o] : Real(0));
    const std::size_t i_first = spec.depthwise ? o : 0;
    const std::size_t i_last = spec.depthwise ? o + 1 : in;
    for (std::size_t i = i_first; i < i_last; ++i) {
      const Real* xi = x.data() + i * steps;
      const Real* wi = spec.depthwise ? w + o * k : w + (o * in + i) * k;
      for (std::size_t j = 0; j < k; ++j) {
        const Real wv = wi[j];
        const std::ptrdiff_t shift = static_cast<std::ptrdiff_t>(j) - left;
        const std::ptrdiff_t lo = std::max<std::ptrdiff_t>(0, -shift);
        const std::ptrdiff_t hi = std::min<std::ptrdiff_t>(n, n - shift);
        for (std::ptrdiff_t t = lo; t < hi; ++t) yo[t] += wv * xi[t + shift];
      }
    }
  }
}

template <std::floating_point Real>
std::vector<Real> hnf_forward(const HnfSpec& spec, std::span<const Real> params, std::span<const Real> x,
                              std::size_t steps, HnfCache<Real>* cache) {
  const auto cc = static_cast<std::size_t>(spec.concat_channels);
  std::vector<Real> pre(cc * steps);
  std::size_t row = 0;
  for (const ConvSpec& br : spec.branches) {
    const auto rows = static_cast<std::size_t>(br.out);
    conv1d_forward<Real>(br, params, x, steps, std::span<Real>(pre.data() + row * steps, rows * steps));
    row += rows;
  }
  require(row == cc, "hnf: branch widths do not add up to the fuse input");
  std::vector<Real> act = pre;
  for (std::size_t c = 0; c < cc; ++c) {
    if (!spec.nonlinear[c]) continue;
    for (std::size_t t = 0; t < steps; ++t) act[c * steps + t] = silu(pre[c * steps + t]);
  }
  std::vector<Real> out(static_cast<std::size_t>(spec.fuse.out) * steps);
  conv1d_forward<Real>(spec.fuse, params, act, steps, out);
  if (cache) {
    cache->input.assign(x.begin(), x.end());
    cache->pre = std::move(pre);
    cache->act = std::move(act);
  }
  return out;
}

template <std::floating_point Real>
std::vector<Real> mamba_forward(const MambaSpec& spec, std::span<const Real> params, std::span<const Real> x,
                                std::size_t steps, MambaCache<Real>* cache) {
  const auto d = static_cast<std::size_t>(spec.d_model);
  const auto di = static_cast<std::size_t>(spec.d_inner);
  const auto hs = static_cast<std::size_t>(spec.state_dim);
  require(x.size() == d * steps, "mamba: input width does not match d_model");

  MambaCache<Real> local;
  MambaCache<Real>& m = cache ? *cache : local;
  m.input.assign(x.begin(), x.end());
  m.proj.assign(2 * di * steps, Real(0));
  conv1d_forward<Real>(spec.in_proj, params, x, steps, m.proj);

  m.conv.assign(di * steps, Real(0));
  conv1d_forward<Real>(spec.conv, params, std::span<const Real>(m.proj.data(), di * steps), steps, m.conv);
  m.v.resize(di * steps);
  for (std::size_t i = 0; i < di * steps; ++i) m.v[i] = silu(m.conv[i]);

  m.delta_pre.assign(di * steps, Real(0));
  conv1d_forward<Real>(spec.dt_proj, params, m.v, steps, m.delta_pre);
  m.delta.resize(di * steps);
  for (std::size_t i = 0; i < di * steps; ++i) m.delta[i] = softplus(m.delta_pre[i]);

  std::vector<Real> bh(hs * steps), ch(hs * steps);
  conv1d_forward<Real>(spec.b_proj, params, m.v, steps, bh);
  conv1d_forward<Real>(spec.c_proj, params, m.v, steps, ch);
  m.b.resize(steps * hs);
  m.c.resize(steps * hs);
  for (std::size_t n = 0; n < hs; ++n) {
    for (std::size_t t = 0; t < steps; ++t) {
      m.b[t * hs + n] = bh[n * steps + t];
      m.c[t * hs + n] = ch[n * steps + t];
    }
  }

  m.a.resize(di * hs);
  for (std::size_t i = 0; i < di * hs; ++i) m.a[i] = -std::exp(params[spec.a_log + i]);

  m.y.assign(di * steps, Real(0));
  if (cache) m.traces.resize(di);
  std::vector<Real> h(hs);
  for (std::size_t c = 0; c < di; ++c) {
    std::fill(h.begin(), h.end(), Real(0));
    ssm::detail::selective_scan_kernel<Real>(
        std::span<const Real>(m.v.data() + c * steps, steps),
        std::span<const Real>(m.delta.data() + c * steps, steps),
        std::span<const Real>(m.a.data() + c * hs, hs), m.b, m.c, h,
        std::span<Real>(m.y.data() + c * steps, steps), cache ? &m.traces[c] : nullptr);
  }

  m.gate.resize(di * steps);
  m.gated.resize(di * steps);
  const Real* g = m.proj.data() + di * steps;
  for (std::size_t i = 0; i < di * steps; ++i) {
    m.gate[i] = silu(g[i]);
    m.gated[i] = m.y[i] * m.gate[i];
  }

  std::vector<Real> out(d * steps);
  conv1d_forward<Real>(spec.out_proj, params, m.gated, steps, out);
  for (std::size_t i = 0; i < d * steps; ++i) out[i] += x[i];
  return out;
}

template <std::floating_point Real>
std::vector<Real> msemg_forward(const BasicModelParams<Real>& params, std::span<const Real> x,
                                ForwardCache<Real>* cache) {
  for (Real v : x) {
    if (!std::isfinite(v)) throw ValidationError("msemg_forward: input contains non-finite samples");
  }
  require(params.values.size() == params.layout.total, "msemg_forward: parameter array has the wrong size");
  const std::size_t steps = x.size();
  require(steps >= 1, "msemg_forward: empty input");
  const std::span<const Real> p(params.values);
  if (cache) cache->steps = steps;
  const auto latent = hnf_forward<Real>(params.layout.hnf_in, p, x, steps, cache ? &cache->hnf_in : nullptr);
  const auto mixed =
      mamba_forward<Real>(params.layout.mamba, p, latent, steps, cache ? &cache->mamba : nullptr);
  return hnf_forward<Real>(params.layout.hnf_out, p, mixed, steps, cache ? &cache->hnf_out : nullptr);
}

Signal denoise(const ModelParams& params, const Signal& x, std::size_t segment_samples) {
  x.validate();
  require(x.fs == params.config.fs, "denoise: input is sampled at " + std::to_string(x.fs) +
                                        " Hz but the model expects " + std::to_string(params.config.fs) + " Hz");
  const std::size_t n = x.samples.size();
  const std::size_t seg = segment_samples == 0 ? n : segment_samples;
  Signal out = x;
  for (std::size_t start = 0; start < n; start += seg) {
    const std::size_t len = std::min(seg, n - start);
    std::vector<float> chunk(x.samples.begin() + static_cast<std::ptrdiff_t>(start),
                             x.samples.begin() + static_cast<std::ptrdiff_t>(start + len));
    const auto y = msemg_forward<float>(params, chunk);
    for (std::size_t i = 0; i < len; ++i) {
      if (!std::isfinite(y[i])) {
        throw NumericalError("denoise", "model output is non-finite at sample " + std::to_string(start + i));
      }
      out.samples[start + i] = static_cast<double>(y[i]);
    }
  }
  out.provenance["denoiser"] = "msemg";
  return out;
}

#define MSEMG_INSTANTIATE(Real)                                                                   \
  template void conv1d_forward<Real>(const ConvSpec&, std::span<const Real>, std::span<const Real>, \
                                     std::size_t, std::span<Real>);                               \
  template std::vector<Real> hnf_forward<Real>(const HnfSpec&, std::span<const Real>,              \
                                               std::span<const Real>, std::size_t, HnfCache<Real>*); \
  template std::vector<Real> mamba_forward<Real>(const MambaSpec&, std::span<const Real>,          \
                                                 std::span<const Real>, std::size_t,               \
                                                 MambaCache<Real>*);                               \
  template std::vector<Real> msemg_forward<Real>(const BasicModelParams<Real>&,                    \
                                                 std::span<const Real>, ForwardCache<Real>*);

MSEMG_INSTANTIATE(float)
MSEMG_INSTANTIATE(double)

#undef MSEMG_INSTANTIATE

}  // namespace msemg::nn
