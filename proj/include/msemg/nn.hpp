#pragma once

// The denoising network: a multi-kernel convolution block (HNF) lifting the
// signal into a latent space, one selective-SSM (Mamba) block, and a second
// HNF block projecting back to one channel.
//
// Tensors are channel-major: element (c, t) of a C x T activation lives at
// c * T + t. All parameters sit in one flat array described by a Layout, so
// gradients and optimizer moments share the same indexing.

#include <cmath>
#include <concepts>
#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "json.hpp"
#include "msemg/signal.hpp"
#include "msemg/ssm.hpp"

namespace msemg::nn {

struct ModelConfig {
  int d_model = 32;
  int expand = 2;
  int state_dim = 16;
  int conv_width = 4;
  std::vector<int> hnf_kernels = {3, 9, 27};
  int hnf_branch_channels = 16;  // output channels of each HNF branch
  double dt_min = 1e-3;
  double dt_max = 0.1;
  double fs = 1000;  // sampling rate the model is trained for
  std::uint64_t seed = 0;

  int d_inner() const { return expand * d_model; }
  void validate() const;
};

/// Unknown keys are rejected; missing keys keep their defaults.
void to_json(nlohmann::json& j, const ModelConfig& c);
void from_json(const nlohmann::json& j, ModelConfig& c);

enum class Padding { same, causal };

/// Where one convolution's weights live in the flat parameter array.
/// Weight shape is out x in x kernel (depthwise: out x kernel, in == out).
struct ConvSpec {
  int in = 1;
  int out = 1;
  int kernel = 1;
  Padding padding = Padding::same;
  bool depthwise = false;
  bool has_bias = true;
  std::size_t weight = 0;  // offsets into the flat array
  std::size_t bias = 0;

  std::size_t weight_count() const;
  std::size_t parameter_count() const { return weight_count() + (has_bias ? out : 0); }
  /// Zero samples inserted before t = 0.
  int left_pad() const { return padding == Padding::causal ? kernel - 1 : (kernel - 1) / 2; }
};

struct HnfSpec {
  std::vector<ConvSpec> branches;
  ConvSpec fuse;                 // 1 x 1
  std::vector<char> nonlinear;   // per concatenated channel
  int concat_channels = 0;
};

struct MambaSpec {
  int d_model = 0;
  int d_inner = 0;
  int state_dim = 0;
  ConvSpec in_proj;   // d_model -> 2 d_inner, rows [0, d_inner) main path, rest gate
  ConvSpec conv;      // depthwise causal, d_inner channels
  ConvSpec dt_proj;   // d_inner -> d_inner, bias is the delta bias
  ConvSpec b_proj;    // d_inner -> state_dim, no bias
  ConvSpec c_proj;    // d_inner -> state_dim, no bias
  ConvSpec out_proj;  // d_inner -> d_model, no bias
  std::size_t a_log = 0;  // d_inner x state_dim; A = -exp(a_log)
};

struct TensorInfo {
  std::string name;
  std::vector<std::size_t> shape;
  std::size_t offset = 0;
  std::size_t size = 0;
};

struct Layout {
  HnfSpec hnf_in;
  MambaSpec mamba;
  HnfSpec hnf_out;
  std::vector<TensorInfo> tensors;  // fixed serialization order
  std::size_t total = 0;

  static Layout build(const ModelConfig& config);
  const TensorInfo& tensor(const std::string& name) const;
};

template <std::floating_point Real>
struct BasicModelParams {
  ModelConfig config;
  Layout layout;
  std::vector<Real> values;

  std::span<Real> tensor(const std::string& name) {
    const TensorInfo& info = layout.tensor(name);
    return {values.data() + info.offset, info.size};
  }
  std::span<const Real> tensor(const std::string& name) const {
    const TensorInfo& info = layout.tensor(name);
    return {values.data() + info.offset, info.size};
  }

  template <std::floating_point Other>
  BasicModelParams<Other> cast() const {
    return {config, layout, std::vector<Other>(values.begin(), values.end())};
  }
};

using ModelParams = BasicModelParams<float>;

/// Seeded uniform fan-in init; A_log[c, n] = log(n + 1); delta bias set so
/// softplus(bias) is log-uniform in [dt_min, dt_max].
ModelParams init_params(const ModelConfig& config);

/// Zero array shaped like the model (gradients, optimizer moments).
template <std::floating_point Real>
BasicModelParams<Real> zeros_like(const ModelConfig& config) {
  BasicModelParams<Real> p{config, Layout::build(config), {}};
  p.values.assign(p.layout.total, Real(0));
  return p;
}

std::size_t count_parameters(const ModelConfig& config);

// Activation caches kept by the forward pass for the backward pass.

template <std::floating_point Real>
struct HnfCache {
  std::vector<Real> input;  // C_in x T
  std::vector<Real> pre;    // concat x T, before the mask nonlinearity
  std::vector<Real> act;    // concat x T, after
};

template <std::floating_point Real>
struct MambaCache {
  std::vector<Real> input;      // d_model x T
  std::vector<Real> proj;       // 2 d_inner x T
  std::vector<Real> conv;       // d_inner x T, depthwise conv output
  std::vector<Real> v;          // SiLU(conv)
  std::vector<Real> delta_pre;  // d_inner x T
  std::vector<Real> delta;      // softplus(delta_pre)
  std::vector<Real> b;          // T x H
  std::vector<Real> c;          // T x H
  std::vector<Real> a;          // d_inner x H, -exp(a_log)
  std::vector<Real> y;          // d_inner x T, scan output
  std::vector<Real> gate;       // d_inner x T, SiLU(g)
  std::vector<Real> gated;      // y * gate
  std::vector<ssm::detail::ScanTrace<Real>> traces;  // one per channel
};

template <std::floating_point Real>
struct ForwardCache {
  std::size_t steps = 0;
  HnfCache<Real> hnf_in;
  MambaCache<Real> mamba;
  HnfCache<Real> hnf_out;
};

template <std::floating_point Real>
Real silu(Real x) {
  return x / (Real(1) + std::exp(-x));
}

template <std::floating_point Real>
Real softplus(Real x) {
  return x > Real(20) ? x : std::log1p(std::exp(x));
}

/// y = conv(x) over `steps` samples; x is in x steps, y is out x steps.
template <std::floating_point Real>
void conv1d_forward(const ConvSpec& spec, std::span<const Real> params, std::span<const Real> x,
                    std::size_t steps, std::span<Real> y);

template <std::floating_point Real>
std::vector<Real> hnf_forward(const HnfSpec& spec, std::span<const Real> params,
                              std::span<const Real> x, std::size_t steps, HnfCache<Real>* cache);

template <std::floating_point Real>
std::vector<Real> mamba_forward(const MambaSpec& spec, std::span<const Real> params,
                                std::span<const Real> x, std::size_t steps, MambaCache<Real>* cache);

/// hnf_out(mamba(hnf_in(x))) on a single-channel segment. Throws
/// ValidationError on non-finite input.
template <std::floating_point Real>
std::vector<Real> msemg_forward(const BasicModelParams<Real>& params, std::span<const Real> x,
                                ForwardCache<Real>* cache = nullptr);

/// Runs the float model on a whole signal, one segment of `segment_samples`
/// at a time (0 = whole signal at once). Output length equals input length.
Signal denoise(const ModelParams& params, const Signal& x, std::size_t segment_samples = 0);

}  // namespace msemg::nn
