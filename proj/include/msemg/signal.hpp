#pragma once

#include <cstddef>
#include <map>
#include <string>
#include <vector>

namespace msemg {

/// A sampled real-valued waveform. Provenance keys are free-form
/// ("source", "subject", "channel", "exercise", "segment", ...).
struct Signal {
  std::vector<double> samples;
  double fs = 0;
  std::map<std::string, std::string> provenance;

  std::size_t size() const { return samples.size(); }
  double duration() const { return fs > 0 ? static_cast<double>(samples.size()) / fs : 0.0; }

  /// fs > 0, non-empty, all samples finite. Throws ValidationError otherwise.
  void validate() const;
};

/// Mean square of the samples; 0 for an empty range.
double mean_power(const std::vector<double>& x);
double rms(const std::vector<double>& x);

}  // namespace msemg
