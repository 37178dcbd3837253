#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numbers>
#include <random>

#include "msemg/data.hpp"
#include "msemg/dsp.hpp"
#include "msemg/errors.hpp"

namespace msemg::data {

namespace {

struct Wave {
  double offset_s;  // relative to the R peak
  double amplitude;
  double width_s;   // Gaussian sigma
};

// P, Q, R, S, T. Every component sits well inside +-300 ms of the R peak so a
// 600 ms template window holds the whole beat.
constexpr Wave kBeat[] = {
    {-0.160, 0.12, 0.020},
    {-0.025, -0.12, 0.008},
    {0.000, 1.00, 0.010},
    {0.025, -0.25, 0.008},
    {0.200, 0.30, 0.030},
};
constexpr double kBeatReach = 0.4;

// Piecewise-constant burst levels joined by 100 ms raised-cosine ramps.
std::vector<double> burst_envelope(std::size_t n, double fs, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> length_dist(0.5, 2.0);
  std::uniform_real_distribution<double> level_dist(0.2, 1.0);
  std::vector<double> env(n);
  const double ramp = 0.1 * fs;
  double prev_level = level_dist(rng);
  double start = 0;
  while (start < static_cast<double>(n)) {
    const double level = level_dist(rng);
    const double stop = start + length_dist(rng) * fs;
    for (std::size_t i = static_cast<std::size_t>(start); i < n && static_cast<double>(i) < stop; ++i) {
      const double into = static_cast<double>(i) - start;
      double w = 1.0;
      if (into < ramp) w = 0.5 * (1.0 - std::cos(std::numbers::pi * into / ramp));
      env[i] = prev_level + (level - prev_level) * w;
    }
    prev_level = level;
    start = std::ceil(stop);
  }
  return env;
}

}  // namespace

Signal synth_semg(double duration_s, double fs, std::uint64_t seed) {
  require(fs > 0, "synth_semg: fs must be positive");
  const auto n = static_cast<std::size_t>(std::llround(duration_s * fs));
  require(n >= 1, "synth_semg: duration * fs must be at least one sample");

  std::mt19937_64 rng(seed);
  std::normal_distribution<double> noise(0.0, 1.0);
  Signal s;
  s.fs = fs;
  s.samples.resize(n);
  for (double& v : s.samples) v = noise(rng);

  if (n > 1) {
    const double high = std::min(150.0, 0.45 * fs);
    const double low = std::min(20.0, 0.5 * high);
    const auto band = dsp::design_butterworth(2, dsp::FilterType::bandpass, {low, high}, fs);
    s = dsp::filter_apply(s, band, dsp::FilterMode::zero_phase);
  }
  const auto env = burst_envelope(n, fs, rng);
  for (std::size_t i = 0; i < n; ++i) s.samples[i] *= env[i];

  s.provenance = {{"source", "synth-semg"}, {"seed", std::to_string(seed)}};
  return normalize(s).signal;
}

SyntheticEcg synth_ecg(double duration_s, double fs, double bpm, std::uint64_t seed,
                       const EcgOptions& options) {
  require(bpm >= 30 && bpm <= 180, "synth_ecg: bpm must lie in [30, 180]");
  require(fs > 0, "synth_ecg: fs must be positive");
  const auto n = static_cast<std::size_t>(std::llround(duration_s * fs));
  require(n >= 1, "synth_ecg: duration * fs must be at least one sample");

  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> unit(-1.0, 1.0);
  const double period = 60.0 / bpm;

  SyntheticEcg out;
  out.signal.fs = fs;
  out.signal.samples.assign(n, 0.0);
  out.signal.provenance = {{"source", "synth-ecg"}, {"seed", std::to_string(seed)},
                           {"bpm", std::to_string(bpm)}};

  const double first = period * (0.2 + 0.3 * (unit(rng) + 1.0));
  for (double t = first; t < duration_s;) {
    const double amp = 1.0 + options.amplitude_jitter * unit(rng);
    const double center = t * fs;
    const auto lo = static_cast<long>(std::floor(center - kBeatReach * fs));
    const auto hi = static_cast<long>(std::ceil(center + kBeatReach * fs));
    for (long i = std::max(0L, lo); i <= hi && i < static_cast<long>(n); ++i) {
      const double dt = static_cast<double>(i) / fs - t;
      double v = 0;
      for (const Wave& w : kBeat) {
        const double z = (dt - w.offset_s) / w.width_s;
        v += w.amplitude * std::exp(-0.5 * z * z);
      }
      out.signal.samples[static_cast<std::size_t>(i)] += amp * v;
    }
    out.r_peaks.push_back(static_cast<std::size_t>(std::llround(center)));
    t += period * (1.0 + options.period_jitter * unit(rng));
  }
  if (!out.r_peaks.empty() && out.r_peaks.back() >= n) out.r_peaks.pop_back();
  return out;
}

SynthCorpus synth_corpus(int count, double duration_s, double fs, std::uint64_t seed) {
  require(count >= 3, "synth_corpus: need at least 3 recordings per kind to fill three splits");
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> bpm_dist(50.0, 100.0);
  SynthCorpus corpus;
  corpus.manifest.seed = seed;

  const int n_test = std::max(1, count / 5);
  const int n_val = std::max(1, count / 5);
  const int n_train = count - n_val - n_test;
  auto split_of = [&](int i) { return i < n_train ? "train" : (i < n_train + n_val ? "val" : "test"); };

  for (const char* name : {"train", "val", "test"}) {
    SplitSpec& spec = corpus.manifest.splits[name];
    spec.snr_grid_db = std::string(name) == "test" ? snr_grid(-14, 0, 2) : snr_grid(-15, -5, 2);
  }
  for (int i = 0; i < count; ++i) {
    char id[16];
    std::snprintf(id, sizeof id, "%03d", i);
    const std::uint64_t semg_seed = rng();
    const std::uint64_t ecg_seed = rng();
    const double bpm = bpm_dist(rng);

    Signal semg = synth_semg(duration_s, fs, semg_seed);
    semg.provenance["subject"] = std::string("semg-") + id;
    Signal ecg = preprocess_ecg(synth_ecg(duration_s, fs, bpm, ecg_seed).signal, fs);
    ecg.provenance["subject"] = std::string("ecg-") + id;

    SplitSpec& spec = corpus.manifest.splits[split_of(i)];
    spec.clean.push_back({std::string("semg/semg_") + id + ".msg", std::string("semg-") + id});
    spec.artifacts.push_back({std::string("ecg/ecg_") + id + ".msg", std::string("ecg-") + id});
    corpus.semg.push_back(std::move(semg));
    corpus.ecg.push_back(std::move(ecg));
  }
  corpus.manifest.validate();
  return corpus;
}

}  // namespace msemg::data
