#include "msemg/spectrum.hpp"

#include <fftw3.h>

#include <cmath>
#include <memory>
#include <mutex>
#include <numbers>

#include "msemg/errors.hpp"

namespace msemg::spectrum {

std::size_t next_pow2(std::size_t n) {
  std::size_t p = 1;
  while (p < n) p <<= 1;
  return p;
}

std::vector<std::complex<double>> rfft(std::span<const double> x, std::size_t nfft) {
  require(nfft >= x.size() && nfft > 0, "rfft: nfft shorter than input");
  const std::size_t bins = nfft / 2 + 1;
  std::unique_ptr<double, decltype(&fftw_free)> in(fftw_alloc_real(nfft), &fftw_free);
  std::unique_ptr<fftw_complex, decltype(&fftw_free)> out(fftw_alloc_complex(bins), &fftw_free);
  // The FFTW planner is not thread-safe; execution is.
  static std::mutex planner_mutex;
  fftw_plan plan;
  {
    std::lock_guard lock(planner_mutex);
    plan = fftw_plan_dft_r2c_1d(static_cast<int>(nfft), in.get(), out.get(), FFTW_ESTIMATE);
  }
  for (std::size_t i = 0; i < nfft; ++i) in.get()[i] = i < x.size() ? x[i] : 0.0;
  fftw_execute(plan);
  {
    std::lock_guard lock(planner_mutex);
    fftw_destroy_plan(plan);
  }
  std::vector<std::complex<double>> result(bins);
  for (std::size_t k = 0; k < bins; ++k) result[k] = {out.get()[k][0], out.get()[k][1]};
  return result;
}

std::vector<double> hamming(std::size_t n) {
  std::vector<double> w(n, 1.0);
  if (n < 2) return w;
  for (std::size_t i = 0; i < n; ++i) {
    w[i] = 0.54 - 0.46 * std::cos(2.0 * std::numbers::pi * static_cast<double>(i) /
                                  static_cast<double>(n - 1));
  }
  return w;
}

std::vector<double> periodogram(std::span<const double> x, std::span<const double> window,
                                std::size_t nfft) {
  require(window.empty() || window.size() == x.size(), "periodogram: window length mismatch");
  std::vector<double> tapered(x.begin(), x.end());
  if (!window.empty()) {
    for (std::size_t i = 0; i < tapered.size(); ++i) tapered[i] *= window[i];
  }
  const auto bins = rfft(tapered, nfft);
  std::vector<double> power(bins.size());
  for (std::size_t k = 0; k < bins.size(); ++k) power[k] = std::norm(bins[k]);
  return power;
}

double dominant_frequency(std::span<const double> x, double fs) {
  const std::size_t nfft = next_pow2(x.size());
  const auto p = periodogram(x, {}, nfft);
  std::size_t best = 1;
  for (std::size_t k = 1; k < p.size(); ++k) {
    if (p[k] > p[best]) best = k;
  }
  return static_cast<double>(best) * fs / static_cast<double>(nfft);
}

double band_power_fraction(std::span<const double> x, double fs, double lo, double hi) {
  const std::size_t nfft = next_pow2(x.size());
  const auto p = periodogram(x, {}, nfft);
  double total = 0, band = 0;
  for (std::size_t k = 0; k < p.size(); ++k) {
    const double f = static_cast<double>(k) * fs / static_cast<double>(nfft);
    total += p[k];
    if (f >= lo && f <= hi) band += p[k];
  }
  return total > 0 ? band / total : 0.0;
}

}  // namespace msemg::spectrum
