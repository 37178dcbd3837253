#pragma once

// Denoising quality measures: SNR improvement, waveform RMSE, and the RMSE of
// windowed ARV and mean-frequency feature vectors, aggregated per input SNR.

#include <cstddef>
#include <functional>
#include <string>
#include <vector>

#include "json.hpp"
#include "msemg/data.hpp"
#include "msemg/signal.hpp"

namespace msemg::metrics {

/// Reported in place of +inf when the residual is exactly zero.
inline constexpr double kSnrCapDb = 300.0;

struct Snr {
  double db = 0;
  bool capped = false;
};

/// 10 log10(sum ref^2 / sum (est - ref)^2).
Snr snr_db(const std::vector<double>& reference, const std::vector<double>& estimate);
Snr snr_db(const Signal& reference, const Signal& estimate);

/// snr_db(clean, denoised) - snr_db(clean, mixed); capped if either term is.
Snr snr_improvement(const Signal& clean, const Signal& mixed, const Signal& denoised);

double rmse(const std::vector<double>& a, const std::vector<double>& b);
double rmse(const Signal& a, const Signal& b);

struct FeatureVector {
  std::vector<double> values;
  double window_ms = 0;
};

/// Mean |x| per non-overlapping window; the trailing partial window is dropped.
FeatureVector arv_features(const Signal& x, double window_ms);

/// Spectral centroid per non-overlapping window: Hamming-windowed periodogram
/// on a power-of-two FFT, DC bin excluded. Windows need >= 64 samples.
FeatureVector mf_features(const Signal& x, double window_ms);

double feature_rmse(const FeatureVector& a, const FeatureVector& b);

struct PairRecord {
  std::size_t index = 0;
  double input_snr_db = 0;
  double snr_imp_db = 0;
  double rmse = 0;
  double rmse_arv = 0;
  double rmse_mf_hz = 0;
  bool capped = false;
};

struct Aggregate {
  double input_snr_db = 0;  // unused for the overall row
  std::size_t count = 0;
  double snr_imp_db = 0;
  double rmse = 0;
  double rmse_arv = 0;
  double rmse_mf_hz = 0;
};

struct MetricsReport {
  std::string denoiser;
  double arv_window_ms = 500;
  double mf_window_ms = 500;
  std::vector<PairRecord> records;
  std::vector<Aggregate> per_level;  // ascending input SNR
  Aggregate overall;
  std::size_t excluded = 0;
  std::vector<std::string> errors;  // one message per excluded pair
};

/// Means over records, per input-SNR level and overall.
void aggregate(MetricsReport& report);

/// Real denoisers must read only pair.mixed; the full pair is passed so test
/// oracles (returning pair.clean) fit the same signature.
struct NamedDenoiser {
  std::string name;
  std::function<Signal(const data::NoisyPair&)> apply;
};

NamedDenoiser identity_denoiser();
NamedDenoiser oracle_denoiser();

struct EvaluateOptions {
  double arv_window_ms = 500;
  double mf_window_ms = 500;
};

MetricsReport evaluate(const std::vector<data::NoisyPair>& pairs, const NamedDenoiser& denoiser,
                       const EvaluateOptions& options = {});

void to_json(nlohmann::json& j, const MetricsReport& r);
void from_json(const nlohmann::json& j, MetricsReport& r);

/// One row per pair, then one per SNR level, then the overall row.
std::string to_csv(const MetricsReport& r);

/// Table of overall rows, columns SNR_imp, RMSE, RMSE_ARV, RMSE_MF.
struct Comparison {
  std::string csv;
  std::string text;
};
Comparison compare(const std::vector<MetricsReport>& reports);
/// Parse a report JSON and fail with ValidationError if any metric is missing.
MetricsReport report_from_json_checked(const nlohmann::json& j, const std::string& origin);

}  // namespace msemg::metrics
