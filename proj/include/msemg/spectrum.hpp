#pragma once

// FFT-backed helpers shared by metrics, synthesis checks and tests.

#include <complex>
#include <cstddef>
#include <span>
#include <vector>

namespace msemg::spectrum {

std::size_t next_pow2(std::size_t n);

/// Real-to-complex FFT of x zero-padded to `nfft`; returns nfft / 2 + 1 bins.
std::vector<std::complex<double>> rfft(std::span<const double> x, std::size_t nfft);

std::vector<double> hamming(std::size_t n);

/// One-sided periodogram |X_k|^2 of the windowed, zero-padded segment.
/// Bin k sits at k * fs / nfft.
std::vector<double> periodogram(std::span<const double> x, std::span<const double> window,
                                std::size_t nfft);

/// Frequency (Hz) of the largest non-DC periodogram bin of x (rectangular window).
double dominant_frequency(std::span<const double> x, double fs);

/// Fraction of one-sided power between lo and hi Hz (inclusive).
double band_power_fraction(std::span<const double> x, double fs, double lo, double hi);

}  // namespace msemg::spectrum
