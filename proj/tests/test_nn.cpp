#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>
#include <random>

#include "msemg/checkpoint.hpp"
#include "msemg/errors.hpp"
#include "msemg/nn.hpp"
#include "msemg/signal_io.hpp"
#include "test_util.hpp"

using namespace msemg;
using namespace msemg::nn;
using msemg::testing::gaussian;
using msemg::testing::make_signal;
using Ld = long double;

namespace {

ModelConfig tiny_config(std::uint64_t seed = 0) {
  ModelConfig c;
  c.d_model = 4;
  c.expand = 2;
  c.state_dim = 3;
  c.conv_width = 3;
  c.hnf_kernels = {1, 3, 5};
  c.hnf_branch_channels = 3;
  c.seed = seed;
  return c;
}

// Parameters with every entry drawn at random (including biases and A_log),
// so no term of the forward pass is trivially zero.
BasicModelParams<double> random_params(const ModelConfig& c, std::uint64_t seed) {
  auto p = init_params(c).cast<double>();
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(-0.6, 0.6);
  for (double& v : p.values) v = u(rng);
  return p;
}

// Reference convolution: explicit zero padding, no pointer arithmetic.
std::vector<Ld> naive_conv(const ConvSpec& s, const std::vector<double>& params, const std::vector<Ld>& x,
                           std::size_t T) {
  std::vector<Ld> y(static_cast<std::size_t>(s.out) * T, 0.0L);
  const int left = s.padding == Padding::causal ? s.kernel - 1 : (s.kernel - 1) / 2;
  for (int o = 0; o < s.out; ++o) {
    for (std::size_t t = 0; t < T; ++t) {
      Ld acc = s.has_bias ? params[s.bias + o] : 0.0L;
      for (int i = 0; i < s.in; ++i) {
        if (s.depthwise && i != o) continue;
        for (int j = 0; j < s.kernel; ++j) {
          const long src = static_cast<long>(t) + j - left;
          if (src < 0 || src >= static_cast<long>(T)) continue;
          const std::size_t widx =
              s.depthwise ? s.weight + o * s.kernel + j : s.weight + (o * s.in + i) * s.kernel + j;
          acc += params[widx] * x[i * T + static_cast<std::size_t>(src)];
        }
      }
      y[o * T + t] = acc;
    }
  }
  return y;
}

Ld silu_ld(Ld v) { return v / (1.0L + std::exp(-v)); }

std::vector<Ld> naive_hnf(const HnfSpec& h, const std::vector<double>& p, const std::vector<Ld>& x, std::size_t T) {
  std::vector<Ld> cat;
  for (const auto& br : h.branches) {
    const auto y = naive_conv(br, p, x, T);
    cat.insert(cat.end(), y.begin(), y.end());
  }
  for (std::size_t c = 0; c < cat.size() / T; ++c) {
    if (c % 2 != 0) continue;
    for (std::size_t t = 0; t < T; ++t) cat[c * T + t] = silu_ld(cat[c * T + t]);
  }
  return naive_conv(h.fuse, p, cat, T);
}

std::vector<Ld> naive_mamba(const MambaSpec& m, const std::vector<double>& p, const std::vector<Ld>& x, std::size_t T) {
  const std::size_t di = m.d_inner, hs = m.state_dim;
  const auto proj = naive_conv(m.in_proj, p, x, T);
  const std::vector<Ld> main(proj.begin(), proj.begin() + di * T);
  auto v = naive_conv(m.conv, p, main, T);
  for (Ld& e : v) e = silu_ld(e);
  const auto dpre = naive_conv(m.dt_proj, p, v, T);
  const auto B = naive_conv(m.b_proj, p, v, T);
  const auto C = naive_conv(m.c_proj, p, v, T);
  std::vector<Ld> gated(di * T);
  for (std::size_t c = 0; c < di; ++c) {
    std::vector<Ld> h(hs, 0.0L);
    for (std::size_t t = 0; t < T; ++t) {
      const Ld z = dpre[c * T + t];
      const Ld delta = z > 20 ? z : std::log1p(std::exp(z));
      Ld y = 0;
      for (std::size_t n = 0; n < hs; ++n) {
        const Ld a = -std::exp(static_cast<Ld>(p[m.a_log + c * hs + n]));
        const Ld abar = std::exp(delta * a);
        h[n] = abar * h[n] + (abar - 1.0L) / a * B[n * T + t] * v[c * T + t];
        y += C[n * T + t] * h[n];
      }
      gated[c * T + t] = y * silu_ld(proj[(di + c) * T + t]);
    }
  }
  auto out = naive_conv(m.out_proj, p, gated, T);
  for (std::size_t i = 0; i < out.size(); ++i) out[i] += x[i];
  return out;
}

std::vector<Ld> naive_model(const BasicModelParams<double>& p, const std::vector<double>& x) {
  const std::vector<Ld> xin(x.begin(), x.end());
  const auto a = naive_hnf(p.layout.hnf_in, p.values, xin, x.size());
  const auto b = naive_mamba(p.layout.mamba, p.values, a, x.size());
  return naive_hnf(p.layout.hnf_out, p.values, b, x.size());
}

std::size_t closed_form_count(const ModelConfig& c) {
  std::size_t ksum = 0;
  for (int k : c.hnf_kernels) ksum += static_cast<std::size_t>(k);
  const std::size_t nb = c.hnf_kernels.size(), bc = c.hnf_branch_channels;
  const std::size_t d = c.d_model, di = c.d_inner(), hs = c.state_dim, w = c.conv_width;
  const std::size_t hnf_in = bc * ksum + bc * nb + (bc * nb) * d + d;
  const std::size_t mamba = d * 2 * di + (di * w + di) + (di * di + di) + 3 * di * hs + di * d;
  const std::size_t hnf_out = d * bc * ksum + bc * nb + bc * nb + 1;
  return hnf_in + mamba + hnf_out;
}

}  // namespace

TEST(Conv1d, MatchesNaiveLoopsForAllPaddings) {
  std::mt19937_64 rng(1);
  for (int trial = 0; trial < 60; ++trial) {
    ConvSpec s;
    s.in = 1 + static_cast<int>(rng() % 4);
    s.depthwise = rng() % 3 == 0;
    s.out = s.depthwise ? s.in : 1 + static_cast<int>(rng() % 4);
    s.kernel = 1 + static_cast<int>(rng() % 7);
    s.padding = rng() % 2 ? Padding::causal : Padding::same;
    if (s.padding == Padding::same && s.kernel % 2 == 0) s.kernel += 1;
    s.has_bias = rng() % 2;
    s.weight = 3;
    s.bias = s.weight + s.weight_count();
    const std::size_t T = 1 + rng() % 40;
    const auto params = gaussian(s.bias + s.out + 2, trial);
    const auto x = gaussian(s.in * T, 100 + trial);
    std::vector<double> y(s.out * T);
    conv1d_forward<double>(s, params, x, T, y);
    const auto ref = naive_conv(s, params, std::vector<Ld>(x.begin(), x.end()), T);
    for (std::size_t i = 0; i < y.size(); ++i) EXPECT_NEAR(y[i], static_cast<double>(ref[i]), 1e-12);
  }
}

TEST(Conv1d, CenterTapIsIdentityAndCausalTapIsIdentity) {
  for (int k : {1, 3, 7}) {
    ConvSpec s{1, 1, k, Padding::same, false, false, 0, 0};
    std::vector<double> w(k, 0.0);
    w[(k - 1) / 2] = 1.0;
    const auto x = gaussian(50, k);
    std::vector<double> y(50);
    conv1d_forward<double>(s, w, x, 50, y);
    EXPECT_EQ(y, x);

    ConvSpec c{1, 1, k, Padding::causal, false, false, 0, 0};
    std::vector<double> wc(k, 0.0);
    wc[k - 1] = 1.0;
    conv1d_forward<double>(c, wc, x, 50, y);
    EXPECT_EQ(y, x);
  }
}

TEST(Conv1d, CausalPaddingNeverLooksAhead) {
  ConvSpec s{2, 2, 4, Padding::causal, true, true, 0, 8};
  const auto params = gaussian(10, 3);
  auto x = gaussian(2 * 30, 4);
  std::vector<double> y1(60), y2(60);
  conv1d_forward<double>(s, params, x, 30, y1);
  for (std::size_t t = 20; t < 30; ++t) x[t] += 5.0, x[30 + t] -= 5.0;
  conv1d_forward<double>(s, params, x, 30, y2);
  for (std::size_t t = 0; t < 20; ++t) {
    EXPECT_EQ(y1[t], y2[t]);
    EXPECT_EQ(y1[30 + t], y2[30 + t]);
  }
}

TEST(Hnf, SingleLinearBranchReducesToAffineMap) {
  ModelConfig c = tiny_config();
  c.hnf_kernels = {1};
  c.hnf_branch_channels = 1;
  const Layout layout = Layout::build(c);
  // One concatenated channel, which is channel 0 and therefore SiLU.
  std::vector<double> p(layout.total, 0.0);
  const auto& h = layout.hnf_in;
  p[h.branches[0].weight] = 2.0;
  p[h.branches[0].bias] = -0.5;
  for (int o = 0; o < c.d_model; ++o) {
    p[h.fuse.weight + o] = 1.0 + o;
    p[h.fuse.bias + o] = 0.25 * o;
  }
  const auto x = gaussian(17, 5);
  const auto y = hnf_forward<double>(h, p, x, 17, nullptr);
  for (int o = 0; o < c.d_model; ++o) {
    for (std::size_t t = 0; t < 17; ++t) {
      const double pre = 2.0 * x[t] - 0.5;
      EXPECT_NEAR(y[o * 17 + t], (1.0 + o) * silu(pre) + 0.25 * o, 1e-14);
    }
  }
}

TEST(Hnf, OddChannelsStayLinear) {
  ModelConfig c = tiny_config();
  c.hnf_kernels = {1};
  c.hnf_branch_channels = 2;
  const Layout layout = Layout::build(c);
  ASSERT_EQ(layout.hnf_in.nonlinear, (std::vector<char>{1, 0}));
  std::vector<double> p(layout.total, 0.0);
  const auto& h = layout.hnf_in;
  p[h.branches[0].weight + 1] = 1.0;  // channel 1 copies the input
  p[h.fuse.weight + 1] = 1.0;         // output 0 reads channel 1
  const auto x = gaussian(9, 6);
  const auto y = hnf_forward<double>(h, p, x, 9, nullptr);
  for (std::size_t t = 0; t < 9; ++t) EXPECT_EQ(y[t], x[t]);
}

TEST(Mamba, ZeroOutputProjectionLeavesTheResidual) {
  const auto c = tiny_config();
  auto p = random_params(c, 2);
  for (double& v : p.tensor("mamba.out_proj.weight")) v = 0.0;
  const std::size_t T = 23;
  const auto x = gaussian(c.d_model * T, 7);
  const auto y = mamba_forward<double>(p.layout.mamba, p.values, x, T, nullptr);
  EXPECT_EQ(y, x);
}

TEST(Mamba, IsCausalInTime) {
  const auto c = tiny_config();
  const auto p = random_params(c, 3);
  const std::size_t T = 40;
  auto x = gaussian(c.d_model * T, 8);
  const auto y1 = mamba_forward<double>(p.layout.mamba, p.values, x, T, nullptr);
  for (int ch = 0; ch < c.d_model; ++ch) {
    for (std::size_t t = 25; t < T; ++t) x[ch * T + t] = -x[ch * T + t] + 1.0;
  }
  const auto y2 = mamba_forward<double>(p.layout.mamba, p.values, x, T, nullptr);
  for (int ch = 0; ch < c.d_model; ++ch) {
    for (std::size_t t = 0; t < 25; ++t) EXPECT_EQ(y1[ch * T + t], y2[ch * T + t]);
  }
}

TEST(Model, MatchesIndependentReference) {
  for (std::uint64_t seed = 0; seed < 6; ++seed) {
    const auto c = tiny_config(seed);
    const auto p = random_params(c, 10 + seed);
    for (std::size_t T : {1u, 2u, 9u, 33u}) {
      const auto x = gaussian(T, 20 + seed + T);
      const auto y = msemg_forward<double>(p, x);
      const auto ref = naive_model(p, x);
      ASSERT_EQ(y.size(), T);
      for (std::size_t t = 0; t < T; ++t) {
        EXPECT_NEAR(y[t], static_cast<double>(ref[t]), 1e-11 * std::max(1.0, std::abs(static_cast<double>(ref[t]))));
      }
    }
  }
}

TEST(Model, FloatAgreesWithDouble) {
  const auto pf = init_params(ModelConfig{});
  const auto pd = pf.cast<double>();
  const auto xd = gaussian(300, 9, 0.5);
  const std::vector<float> xf(xd.begin(), xd.end());
  const auto yf = msemg_forward<float>(pf, xf);
  const auto yd = msemg_forward<double>(pd, std::vector<double>(xf.begin(), xf.end()));
  for (std::size_t t = 0; t < yd.size(); ++t) EXPECT_NEAR(yf[t], yd[t], 1e-4 * std::max(1.0, std::abs(yd[t])));
}

TEST(Model, RejectsNonFiniteInput) {
  const auto p = init_params(tiny_config());
  std::vector<float> x(10, 0.1f);
  x[4] = std::numeric_limits<float>::quiet_NaN();
  EXPECT_THROW(msemg_forward<float>(p, x), ValidationError);
  x[4] = std::numeric_limits<float>::infinity();
  EXPECT_THROW(msemg_forward<float>(p, x), ValidationError);
}

TEST(Layout, ClosedFormParameterCount) {
  EXPECT_EQ(count_parameters(ModelConfig{}), 36001u);
  std::mt19937_64 rng(4);
  for (int trial = 0; trial < 30; ++trial) {
    ModelConfig c;
    c.d_model = 1 + static_cast<int>(rng() % 16);
    c.expand = 1 + static_cast<int>(rng() % 3);
    c.state_dim = 1 + static_cast<int>(rng() % 8);
    c.conv_width = 1 + static_cast<int>(rng() % 5);
    c.hnf_kernels.clear();
    for (std::size_t i = 0, n = 1 + rng() % 4; i < n; ++i) c.hnf_kernels.push_back(1 + 2 * static_cast<int>(rng() % 6));
    c.hnf_branch_channels = 1 + static_cast<int>(rng() % 6);
    EXPECT_EQ(count_parameters(c), closed_form_count(c));
  }
}

TEST(Layout, TensorsTileTheArrayInOrder) {
  const Layout layout = Layout::build(ModelConfig{});
  std::size_t offset = 0;
  for (const auto& t : layout.tensors) {
    EXPECT_EQ(t.offset, offset) << t.name;
    std::size_t size = 1;
    for (auto s : t.shape) size *= s;
    EXPECT_EQ(t.size, size);
    offset += t.size;
  }
  EXPECT_EQ(offset, layout.total);
  EXPECT_EQ(layout.tensors.front().name, "hnf_in.branch0.weight");
  EXPECT_EQ(layout.tensors.back().name, "hnf_out.fuse.bias");
  EXPECT_EQ(layout.tensor("mamba.a_log").shape, (std::vector<std::size_t>{64, 16}));
  EXPECT_THROW(layout.tensor("nope"), ValidationError);
}

TEST(Init, DeterministicAndWithinDocumentedRanges) {
  ModelConfig c;
  c.seed = 11;
  const auto a = init_params(c), b = init_params(c);
  EXPECT_EQ(a.values, b.values);
  c.seed = 12;
  EXPECT_NE(init_params(c).values, a.values);

  const auto a_log = a.tensor("mamba.a_log");
  for (int ch = 0; ch < 64; ++ch) {
    for (int n = 0; n < 16; ++n) EXPECT_FLOAT_EQ(a_log[ch * 16 + n], static_cast<float>(std::log(n + 1.0)));
  }
  for (float bias : a.tensor("mamba.dt_proj.bias")) {
    const double dt = softplus(static_cast<double>(bias));
    EXPECT_GE(dt, c.dt_min * (1 - 1e-5));
    EXPECT_LE(dt, c.dt_max * (1 + 1e-5));
  }
  const double bound = 1.0 / std::sqrt(64.0);
  for (float w : a.tensor("mamba.dt_proj.weight")) EXPECT_LE(std::abs(w), bound);
}

TEST(Config, JsonRoundTripAndUnknownKeys) {
  ModelConfig c = tiny_config(99);
  c.dt_max = 0.05;
  const nlohmann::json j = c;
  const auto back = j.get<ModelConfig>();
  EXPECT_EQ(nlohmann::json(back), j);
  nlohmann::json bad = j;
  bad["d_modle"] = 3;
  EXPECT_THROW(bad.get<ModelConfig>(), ValidationError);
  c.hnf_kernels = {2};
  EXPECT_THROW(c.validate(), ValidationError);
  c = ModelConfig{};
  c.dt_min = 0.2;
  EXPECT_THROW(c.validate(), ValidationError);
}

TEST(Denoise, SegmentedInferenceIsPerChunkForward) {
  const auto p = init_params(tiny_config(1));
  const Signal x = make_signal(gaussian(250, 12, 0.3), 1000);
  const Signal whole = denoise(p, x, 0);
  EXPECT_EQ(whole.size(), 250u);
  const Signal seg = denoise(p, x, 100);
  std::vector<float> tail(x.samples.begin() + 200, x.samples.end());
  const auto ref = msemg_forward<float>(p, tail);
  for (std::size_t i = 0; i < 50; ++i) EXPECT_EQ(seg.samples[200 + i], static_cast<double>(ref[i]));
  EXPECT_THROW(denoise(p, make_signal(gaussian(100, 1), 2000)), ValidationError);
}

TEST(Checkpoint, RoundTripIsBitExact) {
  auto c = tiny_config(5);
  c.fs = 2000;
  const auto p = init_params(c);
  const auto bytes = encode_checkpoint(p);
  const auto q = decode_checkpoint(bytes);
  EXPECT_EQ(q.values, p.values);
  EXPECT_EQ(nlohmann::json(q.config), nlohmann::json(p.config));
  EXPECT_EQ(encode_checkpoint(q), bytes);

  const auto dir = std::filesystem::temp_directory_path() / "msemg_test_ckpt";
  std::filesystem::remove_all(dir);
  std::filesystem::create_directories(dir);
  save_checkpoint(dir / "m.msmg", p);
  EXPECT_TRUE(std::filesystem::exists(dir / "m.msmg.json"));
  EXPECT_EQ(load_checkpoint(dir / "m.msmg").values, p.values);
  EXPECT_EQ(io::read_file_bytes(dir / "m.msmg"), bytes);
}

TEST(Checkpoint, CorruptFilesAreRejected) {
  const auto bytes = encode_checkpoint(init_params(tiny_config()));
  auto bad = bytes;
  bad[0] = 'X';
  EXPECT_THROW(decode_checkpoint(bad), FormatError);
  bad = bytes;
  bad[4] = 2;
  EXPECT_THROW(decode_checkpoint(bad), FormatError);
  bad = bytes;
  bad.pop_back();
  EXPECT_THROW(decode_checkpoint(bad), FormatError);
  bad = bytes;
  bad.push_back(0);
  EXPECT_THROW(decode_checkpoint(bad), FormatError);
  EXPECT_THROW(load_checkpoint("/nonexistent/m.msmg"), IoError);
}
