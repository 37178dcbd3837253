#include "msemg/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <map>
#include <sstream>

#include "msemg/errors.hpp"
#include "msemg/spectrum.hpp"

namespace msemg::metrics {

namespace {

std::size_t window_samples(double window_ms, double fs) {
  return static_cast<std::size_t>(std::llround(window_ms * fs / 1000.0));
}

std::string fmt(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.10g", v);
  return buf;
}

constexpr const char* kMetricKeys[] = {"snr_imp_db", "rmse", "rmse_arv", "rmse_mf_hz"};

}  // namespace

Snr snr_db(const std::vector<double>& reference, const std::vector<double>& estimate) {
  require(reference.size() == estimate.size(), "snr_db: length mismatch");
  double signal = 0, residual = 0;
  for (std::size_t i = 0; i < reference.size(); ++i) {
    const double d = estimate[i] - reference[i];
    signal += reference[i] * reference[i];
    residual += d * d;
  }
  require(signal > 0, "snr_db: reference has zero power");
  if (residual == 0.0) return {kSnrCapDb, true};
  return {10.0 * std::log10(signal / residual), false};
}

Snr snr_db(const Signal& reference, const Signal& estimate) {
  return snr_db(reference.samples, estimate.samples);
}

Snr snr_improvement(const Signal& clean, const Signal& mixed, const Signal& denoised) {
  const Snr out = snr_db(clean, denoised);
  const Snr in = snr_db(clean, mixed);
  return {out.db - in.db, out.capped || in.capped};
}

double rmse(const std::vector<double>& a, const std::vector<double>& b) {
  require(a.size() == b.size(), "rmse: length mismatch");
  if (a.empty()) return 0.0;
  double acc = 0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double d = a[i] - b[i];
    acc += d * d;
  }
  return std::sqrt(acc / static_cast<double>(a.size()));
}

double rmse(const Signal& a, const Signal& b) { return rmse(a.samples, b.samples); }

FeatureVector arv_features(const Signal& x, double window_ms) {
  const std::size_t w = window_samples(window_ms, x.fs);
  require(w >= 1, "arv_features: window shorter than one sample");
  FeatureVector f{{}, window_ms};
  for (std::size_t start = 0; start + w <= x.samples.size(); start += w) {
    double acc = 0;
    for (std::size_t i = start; i < start + w; ++i) acc += std::abs(x.samples[i]);
    f.values.push_back(acc / static_cast<double>(w));
  }
  return f;
}

FeatureVector mf_features(const Signal& x, double window_ms) {
  const std::size_t w = window_samples(window_ms, x.fs);
  require(w >= 64, "mf_features: window needs at least 64 samples, got " + std::to_string(w));
  const std::size_t nfft = spectrum::next_pow2(w);
  const auto taper = spectrum::hamming(w);
  FeatureVector f{{}, window_ms};
  for (std::size_t start = 0; start + w <= x.samples.size(); start += w) {
    const std::span<const double> chunk(x.samples.data() + start, w);
    const auto p = spectrum::periodogram(chunk, taper, nfft);
    double num = 0, den = 0;
    for (std::size_t k = 1; k < p.size(); ++k) {
      const double freq = static_cast<double>(k) * x.fs / static_cast<double>(nfft);
      num += freq * p[k];
      den += p[k];
    }
    f.values.push_back(den > 0 ? num / den : 0.0);
  }
  return f;
}

double feature_rmse(const FeatureVector& a, const FeatureVector& b) { return rmse(a.values, b.values); }

void aggregate(MetricsReport& report) {
  std::map<double, Aggregate> levels;
  Aggregate overall;
  for (const PairRecord& r : report.records) {
    Aggregate& lvl = levels[r.input_snr_db];
    lvl.input_snr_db = r.input_snr_db;
    for (Aggregate* a : {&lvl, &overall}) {
      a->count += 1;
      a->snr_imp_db += r.snr_imp_db;
      a->rmse += r.rmse;
      a->rmse_arv += r.rmse_arv;
      a->rmse_mf_hz += r.rmse_mf_hz;
    }
  }
  auto finish = [](Aggregate& a) {
    if (a.count == 0) return;
    const auto n = static_cast<double>(a.count);
    a.snr_imp_db /= n;
    a.rmse /= n;
    a.rmse_arv /= n;
    a.rmse_mf_hz /= n;
  };
  report.per_level.clear();
  for (auto& [snr, a] : levels) {
    finish(a);
    report.per_level.push_back(a);
  }
  finish(overall);
  report.overall = overall;
}

NamedDenoiser identity_denoiser() {
  return {"identity", [](const data::NoisyPair& p) { return p.mixed; }};
}

NamedDenoiser oracle_denoiser() {
  return {"oracle", [](const data::NoisyPair& p) { return p.clean; }};
}

MetricsReport evaluate(const std::vector<data::NoisyPair>& pairs, const NamedDenoiser& denoiser,
                       const EvaluateOptions& options) {
  require(!pairs.empty(), "evaluate: no pairs");
  MetricsReport report;
  report.denoiser = denoiser.name;
  report.arv_window_ms = options.arv_window_ms;
  report.mf_window_ms = options.mf_window_ms;
  for (std::size_t i = 0; i < pairs.size(); ++i) {
    const data::NoisyPair& pair = pairs[i];
    Signal out;
    try {
      out = denoiser.apply(pair);
      if (out.samples.size() != pair.clean.samples.size()) {
        throw ValidationError("denoiser output has " + std::to_string(out.samples.size()) +
                              " samples, expected " + std::to_string(pair.clean.samples.size()));
      }
      out.fs = pair.clean.fs;
    } catch (const std::exception& e) {
      report.excluded += 1;
      report.errors.push_back("pair " + std::to_string(i) + ": " + e.what());
      continue;
    }
    PairRecord r;
    r.index = i;
    r.input_snr_db = pair.target_snr_db;
    const Snr imp = snr_improvement(pair.clean, pair.mixed, out);
    r.snr_imp_db = imp.db;
    r.capped = imp.capped;
    r.rmse = rmse(pair.clean, out);
    r.rmse_arv = feature_rmse(arv_features(pair.clean, options.arv_window_ms),
                              arv_features(out, options.arv_window_ms));
    r.rmse_mf_hz = feature_rmse(mf_features(pair.clean, options.mf_window_ms),
                                mf_features(out, options.mf_window_ms));
    report.records.push_back(r);
  }
  aggregate(report);
  return report;
}

namespace {

nlohmann::json aggregate_json(const Aggregate& a, bool with_level) {
  nlohmann::json j = {{"count", a.count},
                      {"snr_imp_db", a.snr_imp_db},
                      {"rmse", a.rmse},
                      {"rmse_arv", a.rmse_arv},
                      {"rmse_mf_hz", a.rmse_mf_hz}};
  if (with_level) j["input_snr_db"] = a.input_snr_db;
  return j;
}

Aggregate aggregate_from_json(const nlohmann::json& j) {
  Aggregate a;
  a.count = j.at("count").get<std::size_t>();
  a.snr_imp_db = j.at("snr_imp_db").get<double>();
  a.rmse = j.at("rmse").get<double>();
  a.rmse_arv = j.at("rmse_arv").get<double>();
  a.rmse_mf_hz = j.at("rmse_mf_hz").get<double>();
  a.input_snr_db = j.value("input_snr_db", 0.0);
  return a;
}

}  // namespace

void to_json(nlohmann::json& j, const MetricsReport& r) {
  nlohmann::json records = nlohmann::json::array();
  for (const auto& p : r.records) {
    records.push_back({{"index", p.index},
                       {"input_snr_db", p.input_snr_db},
                       {"snr_imp_db", p.snr_imp_db},
                       {"rmse", p.rmse},
                       {"rmse_arv", p.rmse_arv},
                       {"rmse_mf_hz", p.rmse_mf_hz},
                       {"capped", p.capped}});
  }
  nlohmann::json levels = nlohmann::json::array();
  for (const auto& a : r.per_level) levels.push_back(aggregate_json(a, true));
  j = {{"denoiser", r.denoiser},
       {"arv_window_ms", r.arv_window_ms},
       {"mf_window_ms", r.mf_window_ms},
       {"records", records},
       {"per_level", levels},
       {"overall", aggregate_json(r.overall, false)},
       {"excluded", r.excluded},
       {"errors", r.errors}};
}

void from_json(const nlohmann::json& j, MetricsReport& r) {
  r.denoiser = j.at("denoiser").get<std::string>();
  r.arv_window_ms = j.value("arv_window_ms", 500.0);
  r.mf_window_ms = j.value("mf_window_ms", 500.0);
  r.records.clear();
  for (const auto& p : j.at("records")) {
    PairRecord rec;
    rec.index = p.at("index").get<std::size_t>();
    rec.input_snr_db = p.at("input_snr_db").get<double>();
    rec.snr_imp_db = p.at("snr_imp_db").get<double>();
    rec.rmse = p.at("rmse").get<double>();
    rec.rmse_arv = p.at("rmse_arv").get<double>();
    rec.rmse_mf_hz = p.at("rmse_mf_hz").get<double>();
    rec.capped = p.value("capped", false);
    r.records.push_back(rec);
  }
  r.per_level.clear();
  for (const auto& a : j.at("per_level")) r.per_level.push_back(aggregate_from_json(a));
  r.overall = aggregate_from_json(j.at("overall"));
  r.excluded = j.value("excluded", std::size_t{0});
  r.errors = j.value("errors", std::vector<std::string>{});
}

MetricsReport report_from_json_checked(const nlohmann::json& j, const std::string& origin) {
  if (!j.contains("overall") || !j.at("overall").is_object()) {
    throw ValidationError(origin + ": report has no overall metrics");
  }
  for (const char* key : kMetricKeys) {
    if (!j.at("overall").contains(key)) {
      throw ValidationError(origin + ": report is missing metric '" + std::string(key) + "'");
    }
  }
  try {
    return j.get<MetricsReport>();
  } catch (const nlohmann::json::exception& e) {
    throw ValidationError(origin + ": malformed report: " + e.what());
  }
}

std::string to_csv(const MetricsReport& r) {
  std::ostringstream out;
  out << "row,index,input_snr_db,snr_imp_db,rmse,rmse_arv,rmse_mf_hz,capped\n";
  for (const auto& p : r.records) {
    out << "pair," << p.index << ',' << fmt(p.input_snr_db) << ',' << fmt(p.snr_imp_db) << ','
        << fmt(p.rmse) << ',' << fmt(p.rmse_arv) << ',' << fmt(p.rmse_mf_hz) << ','
        << (p.capped ? 1 : 0) << '\n';
  }
  for (const auto& a : r.per_level) {
    out << "level,," << fmt(a.input_snr_db) << ',' << fmt(a.snr_imp_db) << ',' << fmt(a.rmse) << ','
        << fmt(a.rmse_arv) << ',' << fmt(a.rmse_mf_hz) << ",\n";
  }
  const auto& o = r.overall;
  out << "overall,,," << fmt(o.snr_imp_db) << ',' << fmt(o.rmse) << ',' << fmt(o.rmse_arv) << ','
      << fmt(o.rmse_mf_hz) << ",\n";
  return out.str();
}

Comparison compare(const std::vector<MetricsReport>& reports) {
  require(reports.size() >= 2, "compare: need at least two reports");
  Comparison c;
  std::ostringstream csv, text;
  csv << "denoiser,snr_imp_db,rmse,rmse_arv,rmse_mf_hz\n";
  char line[256];
  std::snprintf(line, sizeof line, "%-16s %12s %12s %12s %14s\n", "denoiser", "SNR_imp(dB)", "RMSE",
                "RMSE_ARV", "RMSE_MF(Hz)");
  text << line;
  for (const auto& r : reports) {
    const auto& o = r.overall;
    csv << r.denoiser << ',' << fmt(o.snr_imp_db) << ',' << fmt(o.rmse) << ',' << fmt(o.rmse_arv) << ','
        << fmt(o.rmse_mf_hz) << '\n';
    std::snprintf(line, sizeof line, "%-16s %12.3f %12.3e %12.3e %14.3f\n", r.denoiser.c_str(),
                  o.snr_imp_db, o.rmse, o.rmse_arv, o.rmse_mf_hz);
    text << line;
  }
  c.csv = csv.str();
  c.text = text.str();
  return c;
}

}  // namespace msemg::metrics
