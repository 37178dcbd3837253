#include <cmath>
#include <numbers>
#include <numeric>
#include <string>

#include "msemg/dsp.hpp"
#include "msemg/errors.hpp"

namespace msemg::dsp {

namespace {

constexpr int kZeroCrossings = 64;  // per side, in units of the slower rate
constexpr double kKaiserBeta = 8.0;
constexpr double kCutoffFraction = 0.9;

double sinc(double x) {
  if (x == 0.0) return 1.0;
  const double px = std::numbers::pi * x;
  return std::sin(px) / px;
}

// Low-pass prototype at the upsampled rate, one polyphase branch per
// residue class of the tap index. Each branch is rescaled to unit DC gain so
// constant inputs come out exactly constant.
std::vector<double> design_prototype(long up, double cutoff_norm, std::size_t half) {
  const std::size_t taps = 2 * half + 1;
  std::vector<double> h(taps);
  const double i0_beta = std::cyl_bessel_i(0.0, kKaiserBeta);
  for (std::size_t k = 0; k < taps; ++k) {
    const double m = static_cast<double>(k) - static_cast<double>(half);
    const double r = m / static_cast<double>(half);
    const double window = std::cyl_bessel_i(0.0, kKaiserBeta * std::sqrt(std::max(0.0, 1.0 - r * r))) / i0_beta;
    h[k] = 2.0 * cutoff_norm * sinc(2.0 * cutoff_norm * m) * window;
  }
  for (long phase = 0; phase < up; ++phase) {
    double sum = 0;
    for (std::size_t k = static_cast<std::size_t>(phase); k < taps; k += static_cast<std::size_t>(up)) sum += h[k];
    if (sum == 0.0) continue;
    for (std::size_t k = static_cast<std::size_t>(phase); k < taps; k += static_cast<std::size_t>(up)) h[k] /= sum;
  }
  return h;
}

}  // namespace

std::pair<long, long> rational_ratio(double fs_in, double fs_out, long max_den) {
  require(fs_in > 0 && fs_out > 0, "resample: sampling rates must be positive");
  const double target = fs_out / fs_in;
  // Continued-fraction convergents of fs_out / fs_in.
  long p0 = 0, q0 = 1, p1 = 1, q1 = 0;
  double rem = target;
  for (int iter = 0; iter < 64; ++iter) {
    const double a = std::floor(rem);
    const long ai = static_cast<long>(a);
    const long p2 = ai * p1 + p0;
    const long q2 = ai * q1 + q0;
    if (q2 > max_den) break;
    p0 = p1, q0 = q1, p1 = p2, q1 = q2;
    if (std::abs(static_cast<double>(p1) / static_cast<double>(q1) - target) <= 1e-12 * target) {
      const long g = std::gcd(p1, q1);
      return {p1 / g, q1 / g};
    }
    const double frac = rem - a;
    if (frac <= 0) break;
    rem = 1.0 / frac;
  }
  throw ValidationError("resample: ratio " + std::to_string(fs_out) + "/" + std::to_string(fs_in) +
                        " has no rational form with denominator <= " + std::to_string(max_den));
}

Signal resample(const Signal& x, double fs_out) {
  x.validate();
  require(fs_out > 0 && std::isfinite(fs_out), "resample: fs_out must be positive");
  const auto [up, down] = rational_ratio(x.fs, fs_out);
  Signal y;
  y.fs = fs_out;
  y.provenance = x.provenance;
  if (up == down) {
    y.samples = x.samples;
    return y;
  }

  const double cutoff_hz = kCutoffFraction * std::min(x.fs, fs_out) / 2.0;
  const double cutoff_norm = cutoff_hz / (x.fs * static_cast<double>(up));
  const std::size_t half = static_cast<std::size_t>(kZeroCrossings) *
                           static_cast<std::size_t>(std::max(up, down));
  const std::vector<double> h = design_prototype(up, cutoff_norm, half);

  const std::size_t n = x.samples.size();
  const auto out_len = static_cast<std::size_t>(
      std::llround(static_cast<double>(n) * static_cast<double>(up) / static_cast<double>(down)));
  const std::size_t pad = half / static_cast<std::size_t>(up) + 2;

  // Odd-reflection padding keeps the edges free of the step a zero pad would add.
  std::vector<double> ext(n + 2 * pad);
  auto at = [&](long i) -> double {
    const long last = static_cast<long>(n) - 1;
    if (i < 0) {
      const long k = std::min(-i, last);
      return 2.0 * x.samples.front() - x.samples[static_cast<std::size_t>(k)];
    }
    if (i > last) {
      const long k = std::max(2 * last - i, 0L);
      return 2.0 * x.samples.back() - x.samples[static_cast<std::size_t>(k)];
    }
    return x.samples[static_cast<std::size_t>(i)];
  };
  for (std::size_t i = 0; i < ext.size(); ++i) ext[i] = at(static_cast<long>(i) - static_cast<long>(pad));

  const long taps = static_cast<long>(h.size());
  y.samples.resize(out_len);
  for (std::size_t m = 0; m < out_len; ++m) {
    // Position in the zero-stuffed stream, shifted so h is centered.
    const long j = static_cast<long>(m) * down + static_cast<long>(pad) * up + static_cast<long>(half);
    long k = j % up;
    double acc = 0;
    for (; k < taps; k += up) {
      const long idx = (j - k) / up;
      if (idx < 0) break;
      if (idx < static_cast<long>(ext.size())) acc += h[static_cast<std::size_t>(k)] * ext[static_cast<std::size_t>(idx)];
    }
    y.samples[m] = acc;
  }
  return y;
}

}  // namespace msemg::dsp
