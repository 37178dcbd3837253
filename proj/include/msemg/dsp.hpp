#pragma once

// Classical signal processing: Butterworth IIR design as biquad cascades,
// causal and zero-phase filtering, rational resampling, and the two classical
// ECG-removal baselines (high-pass filtering and template subtraction).

#include <complex>
#include <cstddef>
#include <string>
#include <vector>

#include "json.hpp"

#include "msemg/signal.hpp"

namespace msemg::dsp {

enum class FilterType { lowpass, highpass, bandpass };

std::string to_string(FilterType type);
FilterType filter_type_from_string(const std::string& name);

/// y[n] = b0 x[n] + b1 x[n-1] + b2 x[n-2] - a1 y[n-1] - a2 y[n-2]
struct Biquad {
  double b0 = 1, b1 = 0, b2 = 0;
  double a1 = 0, a2 = 0;

  std::complex<double> response(std::complex<double> z_inv) const;
  /// Largest pole magnitude (roots of z^2 + a1 z + a2).
  double pole_radius() const;
};

struct BiquadCascade {
  std::vector<Biquad> sections;
  double gain = 1;

  int order = 0;
  FilterType type = FilterType::lowpass;
  std::vector<double> cutoffs_hz;
  double fs = 0;

  /// Complex transfer function at frequency f (Hz).
  std::complex<double> response(double f_hz) const;
  /// Transfer function at an arbitrary point z of the complex plane.
  std::complex<double> response_at(std::complex<double> z) const;
  double magnitude_db(double f_hz) const;
  bool is_stable() const;
  /// Samples until the impulse response and filter state fall below 1e-6 of their peaks.
  std::size_t impulse_length() const;
};

void to_json(nlohmann::json& j, const BiquadCascade& f);
void from_json(const nlohmann::json& j, BiquadCascade& f);

/// Analog Butterworth prototype, frequency transform, bilinear transform with
/// prewarping at the cutoff(s). Bandpass of order N has 2N poles (N biquads).
BiquadCascade design_butterworth(int order, FilterType type, std::vector<double> cutoffs_hz,
                                 double fs);

enum class FilterMode { causal, zero_phase };

/// Causal: cascaded transposed direct-form II. Zero-phase: forward pass,
/// reverse, second pass, reverse, with odd-reflection padding of 3x the
/// impulse length on both ends.
Signal filter_apply(const Signal& x, const BiquadCascade& filter, FilterMode mode);

/// Rational polyphase resampling with a Kaiser-windowed sinc at 0.9x the lower
/// Nyquist frequency. Output length is round(n * fs_out / fs_in).
Signal resample(const Signal& x, double fs_out);

/// Reduced p / q with p / q == fs_out / fs_in (to 1e-12 relative), q <= max_den.
std::pair<long, long> rational_ratio(double fs_in, double fs_out, long max_den = 10000);

/// HP baseline: zero-phase Butterworth high-pass.
Signal highpass_denoise(const Signal& x, double cutoff_hz = 40.0, int order = 4);

struct RPeakList {
  std::vector<std::size_t> indices;
  double mean_period = 0;  // samples; 0 when fewer than two peaks
};

struct RPeakOptions {
  double band_low_hz = 5;
  double band_high_hz = 15;
  double integration_ms = 150;
  double median_window_s = 2.0;
  double median_factor = 4.0;
  double max_fraction = 0.3;  // threshold floor as a fraction of the running maximum
  double refractory_ms = 200;
  double refine_ms = 50;
};

/// Pan-Tompkins style detector: bandpass, squaring, moving-window
/// integration, adaptive threshold, refractory period, then refinement to the
/// bandpassed maximum.
RPeakList detect_r_peaks(const Signal& x, const RPeakOptions& options = {});

struct TemplateSubtraction {
  Signal signal;
  std::vector<double> ecg_template;
  std::size_t beats_averaged = 0;
  bool skipped = false;  // fewer than two complete beats; signal returned unchanged
};

/// Subtract the beat-averaged template at every peak, with cosine ramps of
/// taper_ms at both window edges. Samples outside every window are untouched.
TemplateSubtraction template_subtract(const Signal& x, const RPeakList& peaks,
                                      double window_ms = 600, double taper_ms = 10);

/// TS baseline: detect_r_peaks followed by template_subtract.
Signal template_subtraction_denoise(const Signal& x, double window_ms = 600);

}  // namespace msemg::dsp
