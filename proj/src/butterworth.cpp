#include <algorithm>
#include <cmath>
#include <complex>
#include <numbers>

#include "msemg/dsp.hpp"
#include "msemg/errors.hpp"

namespace msemg::dsp {

namespace {

using cplx = std::complex<double>;

constexpr double kRealPoleTolerance = 1e-12;

double prewarp(double f_hz, double fs) { return 2.0 * fs * std::tan(std::numbers::pi * f_hz / fs); }

cplx bilinear(cplx s, double fs) { return (2.0 * fs + s) / (2.0 * fs - s); }

struct Denominator {
  double a1, a2;
  bool first_order;
};

// Groups digital poles into conjugate pairs; leftover real poles are paired
// among themselves, and a single unpaired real pole becomes a first-order
// section.
std::vector<Denominator> pair_poles(const std::vector<cplx>& poles) {
  std::vector<cplx> complex_upper;
  std::vector<double> reals;
  for (const cplx& p : poles) {
    if (std::abs(p.imag()) <= kRealPoleTolerance * std::max(1.0, std::abs(p))) {
      reals.push_back(p.real());
    } else if (p.imag() > 0) {
      complex_upper.push_back(p);
    }
  }
  // Closest-to-the-unit-circle pairs last, so the sharpest resonances act on
  // signals already attenuated by earlier sections.
  std::sort(complex_upper.begin(), complex_upper.end(),
            [](cplx a, cplx b) { return std::abs(a) < std::abs(b); });
  std::sort(reals.begin(), reals.end(), [](double a, double b) { return std::abs(a) < std::abs(b); });

  std::vector<Denominator> denominators;
  for (std::size_t i = 0; i + 1 < reals.size(); i += 2) {
    denominators.push_back({-(reals[i] + reals[i + 1]), reals[i] * reals[i + 1], false});
  }
  if (reals.size() % 2 == 1) denominators.push_back({-reals.back(), 0.0, true});
  for (const cplx& p : complex_upper) {
    denominators.push_back({-2.0 * p.real(), std::norm(p), false});
  }
  return denominators;
}

}  // namespace

std::string to_string(FilterType type) {
  switch (type) {
    case FilterType::lowpass: return "lowpass";
    case FilterType::highpass: return "highpass";
    case FilterType::bandpass: return "bandpass";
  }
  return "unknown";
}

FilterType filter_type_from_string(const std::string& name) {
  if (name == "lowpass") return FilterType::lowpass;
  if (name == "highpass") return FilterType::highpass;
  if (name == "bandpass") return FilterType::bandpass;
  throw ValidationError("unknown filter type '" + name + "'");
}

cplx Biquad::response(cplx z_inv) const {
  return (b0 + z_inv * (b1 + z_inv * b2)) / (1.0 + z_inv * (a1 + z_inv * a2));
}

double Biquad::pole_radius() const {
  const cplx disc = std::sqrt(cplx(a1 * a1 - 4.0 * a2, 0.0));
  const cplx r1 = (-a1 + disc) / 2.0;
  const cplx r2 = (-a1 - disc) / 2.0;
  return std::max(std::abs(r1), std::abs(r2));
}

cplx BiquadCascade::response_at(cplx z) const {
  const cplx z_inv = 1.0 / z;
  cplx h = gain;
  for (const auto& s : sections) h *= s.response(z_inv);
  return h;
}

cplx BiquadCascade::response(double f_hz) const {
  return response_at(std::polar(1.0, 2.0 * std::numbers::pi * f_hz / fs));
}

double BiquadCascade::magnitude_db(double f_hz) const {
  return 20.0 * std::log10(std::abs(response(f_hz)));
}

bool BiquadCascade::is_stable() const {
  return std::all_of(sections.begin(), sections.end(),
                     [](const Biquad& s) { return s.pole_radius() < 1.0; });
}

std::size_t BiquadCascade::impulse_length() const {
  // Relative to the peak response, so the overall gain does not matter.
  constexpr double tol = 1e-6;
  constexpr std::size_t cap = 1'000'000;
  std::vector<double> s1(sections.size(), 0.0), s2(sections.size(), 0.0);
  std::size_t last_significant = 0;
  double peak = 0, peak_state = 0;
  for (std::size_t n = 0; n < cap; ++n) {
    double v = n == 0 ? 1.0 : 0.0;
    double state = 0;
    for (std::size_t k = 0; k < sections.size(); ++k) {
      const Biquad& q = sections[k];
      const double y = q.b0 * v + s1[k];
      s1[k] = q.b1 * v - q.a1 * y + s2[k];
      s2[k] = q.b2 * v - q.a2 * y;
      state = std::max({state, std::abs(s1[k]), std::abs(s2[k])});
      v = y;
    }
    peak = std::max(peak, std::abs(v));
    peak_state = std::max(peak_state, state);
    if (std::abs(v) >= tol * peak) last_significant = n;
    if (n > 0 && std::abs(v) < tol * peak && state < tol * peak_state) return last_significant + 1;
  }
  return cap;
}

void to_json(nlohmann::json& j, const BiquadCascade& f) {
  nlohmann::json sections = nlohmann::json::array();
  for (const auto& s : f.sections) sections.push_back({s.b0, s.b1, s.b2, s.a1, s.a2});
  j = {{"type", to_string(f.type)},
       {"order", f.order},
       {"cutoffs_hz", f.cutoffs_hz},
       {"fs", f.fs},
       {"gain", f.gain},
       {"sections", sections}};
}

void from_json(const nlohmann::json& j, BiquadCascade& f) {
  f.type = filter_type_from_string(j.at("type").get<std::string>());
  f.order = j.at("order").get<int>();
  f.cutoffs_hz = j.at("cutoffs_hz").get<std::vector<double>>();
  f.fs = j.at("fs").get<double>();
  f.gain = j.at("gain").get<double>();
  f.sections.clear();
  for (const auto& s : j.at("sections")) {
    require(s.size() == 5, "biquad section needs 5 coefficients");
    f.sections.push_back({s[0].get<double>(), s[1].get<double>(), s[2].get<double>(),
                          s[3].get<double>(), s[4].get<double>()});
  }
}

BiquadCascade design_butterworth(int order, FilterType type, std::vector<double> cutoffs_hz,
                                 double fs) {
  require(order >= 1, "Butterworth order must be at least 1");
  require(fs > 0 && std::isfinite(fs), "sampling rate must be positive");
  const std::size_t needed = type == FilterType::bandpass ? 2 : 1;
  require(cutoffs_hz.size() == needed,
          to_string(type) + " design needs " + std::to_string(needed) + " cutoff(s)");
  for (double f : cutoffs_hz) {
    require(f > 0 && f < fs / 2, "cutoff " + std::to_string(f) + " Hz outside (0, fs/2)");
  }
  if (type == FilterType::bandpass) {
    require(cutoffs_hz[0] < cutoffs_hz[1], "bandpass needs f_low < f_high");
  }

  std::vector<cplx> prototype(order);
  for (int k = 0; k < order; ++k) {
    const double theta = std::numbers::pi * (2.0 * k + order + 1) / (2.0 * order);
    prototype[k] = std::polar(1.0, theta);
  }

  std::vector<cplx> analog;
  double reference_hz = 0;
  switch (type) {
    case FilterType::lowpass: {
      const double w = prewarp(cutoffs_hz[0], fs);
      for (const cplx& p : prototype) analog.push_back(w * p);
      reference_hz = 0;
      break;
    }
    case FilterType::highpass: {
      const double w = prewarp(cutoffs_hz[0], fs);
      for (const cplx& p : prototype) analog.push_back(w / p);
      reference_hz = fs / 2;
      break;
    }
    case FilterType::bandpass: {
      const double w1 = prewarp(cutoffs_hz[0], fs);
      const double w2 = prewarp(cutoffs_hz[1], fs);
      const double bw = w2 - w1;
      const double w0_sq = w1 * w2;
      // s^2 - p bw s + w0^2 = 0 for every prototype pole p.
      for (const cplx& p : prototype) {
        const cplx pb = p * bw;
        const cplx root = std::sqrt(pb * pb - 4.0 * w0_sq);
        analog.push_back((pb + root) / 2.0);
        analog.push_back((pb - root) / 2.0);
      }
      reference_hz = fs / std::numbers::pi * std::atan(std::sqrt(w0_sq) / (2.0 * fs));
      break;
    }
  }

  std::vector<cplx> digital;
  digital.reserve(analog.size());
  for (const cplx& s : analog) digital.push_back(bilinear(s, fs));

  BiquadCascade cascade;
  cascade.order = order;
  cascade.type = type;
  cascade.cutoffs_hz = std::move(cutoffs_hz);
  cascade.fs = fs;
  for (const auto& [a1, a2, first_order] : pair_poles(digital)) {
    Biquad s;
    s.a1 = a1;
    s.a2 = a2;
    switch (type) {
      case FilterType::lowpass:
        s.b0 = 1, s.b1 = first_order ? 1 : 2, s.b2 = first_order ? 0 : 1;
        break;
      case FilterType::highpass:
        s.b0 = 1, s.b1 = first_order ? -1 : -2, s.b2 = first_order ? 0 : 1;
        break;
      case FilterType::bandpass:
        // One zero at z = 1 and one at z = -1 per pole pair.
        s.b0 = 1, s.b1 = 0, s.b2 = -1;
        break;
    }
    cascade.sections.push_back(s);
  }
  cascade.gain = 1.0 / std::abs(cascade.response(reference_hz));
  return cascade;
}

}  // namespace msemg::dsp
