#include <algorithm>
#include <cmath>
#include <numbers>

#include "msemg/dsp.hpp"
#include "msemg/errors.hpp"

namespace msemg::dsp {

namespace {

std::size_t ms_to_samples(double ms, double fs) {
  return static_cast<std::size_t>(std::llround(ms * fs / 1000.0));
}

// Centered moving average of width `width` samples (shrinks at the edges).
std::vector<double> moving_average(const std::vector<double>& x, std::size_t width) {
  const std::size_t n = x.size();
  std::vector<double> prefix(n + 1, 0.0);
  for (std::size_t i = 0; i < n; ++i) prefix[i + 1] = prefix[i] + x[i];
  const std::size_t before = width / 2;
  const std::size_t after = width - before;
  std::vector<double> out(n);
  for (std::size_t i = 0; i < n; ++i) {
    const std::size_t lo = i >= before ? i - before : 0;
    const std::size_t hi = std::min(n, i + after);
    out[i] = (prefix[hi] - prefix[lo]) / static_cast<double>(hi - lo);
  }
  return out;
}

// Blockwise running threshold: max(factor * median, fraction * max) over a
// centered window, evaluated every quarter window.
std::vector<double> adaptive_threshold(const std::vector<double>& env, std::size_t window,
                                       double factor, double fraction) {
  const std::size_t n = env.size();
  const std::size_t hop = std::max<std::size_t>(1, window / 4);
  std::vector<double> thr(n);
  std::vector<double> buf;
  for (std::size_t start = 0; start < n; start += hop) {
    const std::size_t center = std::min(n - 1, start + hop / 2);
    const std::size_t lo = center >= window / 2 ? center - window / 2 : 0;
    const std::size_t hi = std::min(n, lo + window);
    buf.assign(env.begin() + static_cast<std::ptrdiff_t>(lo), env.begin() + static_cast<std::ptrdiff_t>(hi));
    const double peak = *std::max_element(buf.begin(), buf.end());
    auto mid = buf.begin() + static_cast<std::ptrdiff_t>(buf.size() / 2);
    std::nth_element(buf.begin(), mid, buf.end());
    const double level = std::max(factor * *mid, fraction * peak);
    for (std::size_t i = start; i < std::min(n, start + hop); ++i) thr[i] = level;
  }
  return thr;
}

}  // namespace

RPeakList detect_r_peaks(const Signal& x, const RPeakOptions& options) {
  x.validate();
  require(x.fs >= 100, "detect_r_peaks: fs must be at least 100 Hz");
  require(x.duration() >= 2.0, "detect_r_peaks: need at least 2 s of signal");

  const auto band = design_butterworth(2, FilterType::bandpass,
                                       {options.band_low_hz, options.band_high_hz}, x.fs);
  const Signal bp = filter_apply(x, band, FilterMode::zero_phase);

  std::vector<double> energy(bp.samples.size());
  for (std::size_t i = 0; i < energy.size(); ++i) energy[i] = bp.samples[i] * bp.samples[i];
  const auto env = moving_average(energy, std::max<std::size_t>(1, ms_to_samples(options.integration_ms, x.fs)));
  const auto thr = adaptive_threshold(env, ms_to_samples(options.median_window_s * 1000.0, x.fs),
                                      options.median_factor, options.max_fraction);

  const std::size_t refractory = ms_to_samples(options.refractory_ms, x.fs);
  const std::size_t n = env.size();
  std::vector<std::size_t> picks;
  for (std::size_t i = 1; i + 1 < n; ++i) {
    if (!(env[i] > thr[i]) || env[i] < env[i - 1] || env[i] < env[i + 1]) continue;
    if (!picks.empty() && i - picks.back() < refractory) {
      if (env[i] > env[picks.back()]) picks.back() = i;
      continue;
    }
    picks.push_back(i);
  }

  const std::size_t reach = ms_to_samples(options.refine_ms, x.fs);
  RPeakList result;
  for (std::size_t p : picks) {
    const std::size_t lo = p >= reach ? p - reach : 0;
    const std::size_t hi = std::min(n - 1, p + reach);
    std::size_t best = lo;
    for (std::size_t i = lo; i <= hi; ++i) {
      if (bp.samples[i] > bp.samples[best]) best = i;
    }
    if (!result.indices.empty() && best <= result.indices.back()) continue;
    if (!result.indices.empty() && best - result.indices.back() < refractory) {
      if (bp.samples[best] > bp.samples[result.indices.back()]) result.indices.back() = best;
      continue;
    }
    result.indices.push_back(best);
  }
  if (result.indices.size() >= 2) {
    result.mean_period = static_cast<double>(result.indices.back() - result.indices.front()) /
                         static_cast<double>(result.indices.size() - 1);
  }
  return result;
}

TemplateSubtraction template_subtract(const Signal& x, const RPeakList& peaks, double window_ms,
                                      double taper_ms) {
  x.validate();
  TemplateSubtraction out;
  out.signal = x;
  const std::size_t width = ms_to_samples(window_ms, x.fs);
  require(width >= 2, "template_subtract: window shorter than two samples");
  const std::size_t before = width / 2;
  const std::size_t n = x.samples.size();

  out.ecg_template.assign(width, 0.0);
  for (std::size_t p : peaks.indices) {
    if (p < before || p - before + width > n) continue;
    for (std::size_t k = 0; k < width; ++k) out.ecg_template[k] += x.samples[p - before + k];
    ++out.beats_averaged;
  }
  if (out.beats_averaged < 2) {
    out.skipped = true;
    out.ecg_template.assign(width, 0.0);
    return out;
  }
  for (double& v : out.ecg_template) v /= static_cast<double>(out.beats_averaged);

  const std::size_t ramp = std::min(ms_to_samples(taper_ms, x.fs), width / 2);
  std::vector<double> taper(width, 1.0);
  for (std::size_t k = 0; k < ramp; ++k) {
    const double w = 0.5 * (1.0 - std::cos(std::numbers::pi * (static_cast<double>(k) + 0.5) /
                                           static_cast<double>(ramp)));
    taper[k] = w;
    taper[width - 1 - k] = w;
  }

  for (std::size_t p : peaks.indices) {
    for (std::size_t k = 0; k < width; ++k) {
      const long idx = static_cast<long>(p) - static_cast<long>(before) + static_cast<long>(k);
      if (idx < 0 || idx >= static_cast<long>(n)) continue;
      out.signal.samples[static_cast<std::size_t>(idx)] -= taper[k] * out.ecg_template[k];
    }
  }
  return out;
}

Signal template_subtraction_denoise(const Signal& x, double window_ms) {
  return template_subtract(x, detect_r_peaks(x), window_ms).signal;
}

}  // namespace msemg::dsp
