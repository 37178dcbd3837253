#include <algorithm>
#include <string>

#include "msemg/dsp.hpp"
#include "msemg/errors.hpp"

namespace msemg::dsp {

namespace {

void run_cascade(std::vector<double>& x, const BiquadCascade& f) {
  for (double& v : x) v *= f.gain;
  for (const Biquad& q : f.sections) {
    double s1 = 0, s2 = 0;
    for (double& v : x) {
      const double in = v;
      const double y = q.b0 * in + s1;
      s1 = q.b1 * in - q.a1 * y + s2;
      s2 = q.b2 * in - q.a2 * y;
      v = y;
    }
  }
}

// Point reflection about each endpoint: x[-k] = 2 x[0] - x[k].
std::vector<double> odd_extend(const std::vector<double>& x, std::size_t pad) {
  const std::size_t n = x.size();
  std::vector<double> out;
  out.reserve(n + 2 * pad);
  for (std::size_t k = pad; k >= 1; --k) out.push_back(2.0 * x.front() - x[k]);
  out.insert(out.end(), x.begin(), x.end());
  for (std::size_t k = 1; k <= pad; ++k) out.push_back(2.0 * x.back() - x[n - 1 - k]);
  return out;
}

}  // namespace

Signal filter_apply(const Signal& x, const BiquadCascade& filter, FilterMode mode) {
  require(std::abs(x.fs - filter.fs) <= 1e-9 * filter.fs,
          "signal fs " + std::to_string(x.fs) + " Hz differs from filter design fs " +
              std::to_string(filter.fs) + " Hz");
  Signal y = x;
  if (x.samples.empty()) return y;
  if (mode == FilterMode::causal) {
    run_cascade(y.samples, filter);
    return y;
  }
  const std::size_t n = x.samples.size();
  const std::size_t pad = std::min(3 * filter.impulse_length(), n - 1);
  std::vector<double> work = odd_extend(x.samples, pad);
  run_cascade(work, filter);
  std::reverse(work.begin(), work.end());
  run_cascade(work, filter);
  std::reverse(work.begin(), work.end());
  std::copy(work.begin() + static_cast<std::ptrdiff_t>(pad),
            work.begin() + static_cast<std::ptrdiff_t>(pad + n), y.samples.begin());
  return y;
}

Signal highpass_denoise(const Signal& x, double cutoff_hz, int order) {
  const auto filter = design_butterworth(order, FilterType::highpass, {cutoff_hz}, x.fs);
  return filter_apply(x, filter, FilterMode::zero_phase);
}

}  // namespace msemg::dsp
