#include "msemg/data.hpp"

#include <algorithm>
#include <cmath>
#include <random>
#include <set>

#include "msemg/dsp.hpp"
#include "msemg/errors.hpp"
#include "msemg/signal_io.hpp"

namespace msemg::data {

Normalized normalize(const Signal& x) {
  require(!x.samples.empty(), "normalize: empty signal");
  double peak = 0;
  for (double v : x.samples) peak = std::max(peak, std::abs(v));
  Normalized out{x, 1.0};
  if (peak == 0.0) return out;
  out.scale = peak;
  for (double& v : out.signal.samples) v /= peak;
  return out;
}

Signal denormalize(const Signal& x, double scale) {
  Signal y = x;
  for (double& v : y.samples) v *= scale;
  return y;
}

std::vector<Signal> segment(const Signal& x, double seconds) {
  const auto length = static_cast<std::size_t>(std::floor(seconds * x.fs));
  require(length >= 1, "segment: seconds * fs must be at least one sample");
  std::vector<Signal> out;
  const std::size_t count = x.samples.size() / length;
  out.reserve(count);
  for (std::size_t i = 0; i < count; ++i) {
    Signal s;
    s.fs = x.fs;
    s.provenance = x.provenance;
    s.provenance["segment"] = std::to_string(i);
    const auto first = x.samples.begin() + static_cast<std::ptrdiff_t>(i * length);
    s.samples.assign(first, first + static_cast<std::ptrdiff_t>(length));
    out.push_back(std::move(s));
  }
  return out;
}

NoisyPair mix_at_snr(const Signal& clean, const Signal& artifact, double snr_db) {
  require(clean.fs == artifact.fs, "mix_at_snr: clean and artifact sampling rates differ");
  require(clean.samples.size() == artifact.samples.size(), "mix_at_snr: clean and artifact lengths differ");
  require(std::isfinite(snr_db), "mix_at_snr: SNR must be finite");
  const double p_clean = mean_power(clean.samples);
  const double p_artifact = mean_power(artifact.samples);
  require(p_clean > 0, "mix_at_snr: clean signal has zero power");
  require(p_artifact > 0, "mix_at_snr: artifact has zero power");

  NoisyPair pair;
  pair.clean = clean;
  pair.artifact = artifact;
  pair.target_snr_db = snr_db;
  pair.scale = std::sqrt(p_clean / (p_artifact * std::pow(10.0, snr_db / 10.0)));
  pair.mixed = clean;
  for (std::size_t i = 0; i < clean.samples.size(); ++i) {
    pair.mixed.samples[i] = clean.samples[i] + pair.scale * artifact.samples[i];
  }
  pair.mixed.provenance["snr_db"] = std::to_string(snr_db);
  return pair;
}

double measured_snr_db(const NoisyPair& pair) {
  double signal = 0, noise = 0;
  for (std::size_t i = 0; i < pair.clean.samples.size(); ++i) {
    const double n = pair.mixed.samples[i] - pair.clean.samples[i];
    signal += pair.clean.samples[i] * pair.clean.samples[i];
    noise += n * n;
  }
  return 10.0 * std::log10(signal / noise);
}

std::vector<double> snr_grid(double first, double last, double step) {
  require(step > 0, "snr_grid: step must be positive");
  std::vector<double> grid;
  const auto count = static_cast<long>(std::floor((last - first) / step + 1e-9)) + 1;
  for (long i = 0; i < count; ++i) grid.push_back(first + static_cast<double>(i) * step);
  return grid;
}

// Manifest ------------------------------------------------------------------

namespace {

const std::set<std::string> kSplitNames = {"train", "val", "test"};

std::uint64_t split_seed(std::uint64_t seed, const std::string& split) {
  // FNV-1a of the split name, mixed into the manifest seed.
  std::uint64_t h = 1469598103934665603ULL;
  for (unsigned char c : split) h = (h ^ c) * 1099511628211ULL;
  return seed ^ h;
}

}  // namespace

void to_json(nlohmann::json& j, const ManifestEntry& e) { j = {{"path", e.path}, {"subject", e.subject}}; }

void from_json(const nlohmann::json& j, ManifestEntry& e) {
  e.path = j.at("path").get<std::string>();
  e.subject = j.at("subject").get<std::string>();
}

void DatasetManifest::validate() const {
  require(schema_version == kSchemaVersion,
          "manifest schema_version " + std::to_string(schema_version) + " is not supported");
  require(!splits.empty(), "manifest has no splits");
  for (const auto& [name, spec] : splits) {
    require(kSplitNames.count(name) == 1, "manifest split '" + name + "' is not one of train/val/test");
    require(!spec.clean.empty(), "split '" + name + "' has no clean entries");
    require(!spec.artifacts.empty(), "split '" + name + "' has no artifact entries");
    require(!spec.snr_grid_db.empty(), "split '" + name + "' has an empty SNR grid");
    require(spec.artifact_draws >= 1, "split '" + name + "' needs artifact_draws >= 1");
  }
  auto check_disjoint = [&](bool artifacts) {
    std::map<std::string, std::string> owner;
    for (const auto& [name, spec] : splits) {
      for (const auto& e : artifacts ? spec.artifacts : spec.clean) {
        auto [it, inserted] = owner.emplace(e.subject, name);
        if (!inserted && it->second != name) {
          throw ValidationError(std::string("split leakage: ") + (artifacts ? "artifact" : "clean") +
                                " subject '" + e.subject + "' appears in '" + it->second +
                                "' and '" + name + "'");
        }
      }
    }
  };
  check_disjoint(false);
  check_disjoint(true);
}

std::filesystem::path DatasetManifest::resolve(const std::string& path) const {
  const std::filesystem::path p(path);
  return p.is_absolute() ? p : base_dir / p;
}

void to_json(nlohmann::json& j, const DatasetManifest& m) {
  nlohmann::json splits = nlohmann::json::object();
  for (const auto& [name, spec] : m.splits) {
    splits[name] = {{"clean", spec.clean},
                    {"artifacts", spec.artifacts},
                    {"snr_grid_db", spec.snr_grid_db},
                    {"artifact_draws", spec.artifact_draws}};
  }
  j = {{"schema_version", m.schema_version}, {"seed", m.seed}, {"splits", splits}};
}

void from_json(const nlohmann::json& j, DatasetManifest& m) {
  m.schema_version = j.at("schema_version").get<int>();
  m.seed = j.at("seed").get<std::uint64_t>();
  m.splits.clear();
  for (const auto& [name, s] : j.at("splits").items()) {
    SplitSpec spec;
    spec.clean = s.at("clean").get<std::vector<ManifestEntry>>();
    spec.artifacts = s.at("artifacts").get<std::vector<ManifestEntry>>();
    spec.snr_grid_db = s.at("snr_grid_db").get<std::vector<double>>();
    spec.artifact_draws = s.value("artifact_draws", 1);
    m.splits.emplace(name, std::move(spec));
  }
}

DatasetManifest load_manifest(const std::filesystem::path& path) {
  DatasetManifest m;
  try {
    m = nlohmann::json::parse(io::read_file_text(path)).get<DatasetManifest>();
  } catch (const nlohmann::json::exception& e) {
    throw ValidationError(path.string() + ": malformed manifest: " + e.what());
  }
  m.base_dir = path.parent_path();
  m.validate();
  return m;
}

void save_manifest(const std::filesystem::path& path, const DatasetManifest& m) {
  m.validate();
  io::write_file_atomic(path, nlohmann::json(m).dump(2) + "\n");
}

std::vector<NoisyPair> build_pairs(const std::vector<Signal>& clean, const std::vector<Signal>& artifacts,
                                   const SplitSpec& spec, std::uint64_t seed) {
  require(!clean.empty() && !artifacts.empty(), "build_pairs: empty clean or artifact pool");
  require(!spec.snr_grid_db.empty(), "build_pairs: empty SNR grid");
  std::mt19937_64 rng(seed);
  std::vector<NoisyPair> pairs;
  pairs.reserve(clean.size() * static_cast<std::size_t>(spec.artifact_draws) * spec.snr_grid_db.size());

  std::vector<Signal> pool;
  pool.reserve(artifacts.size());
  for (const Signal& a : artifacts) {
    pool.push_back(a.fs == clean.front().fs ? a : dsp::resample(a, clean.front().fs));
  }

  for (const Signal& c : clean) {
    require(c.fs == clean.front().fs, "build_pairs: clean segments must share one sampling rate");
    const Signal segment = normalize(c).signal;
    const std::size_t n = segment.samples.size();
    for (int d = 0; d < spec.artifact_draws; ++d) {
      std::uniform_int_distribution<std::size_t> pick(0, pool.size() - 1);
      const Signal& source = pool[pick(rng)];
      const std::size_t len = source.samples.size();
      // Windows longer than the source wrap around cyclically.
      const std::size_t max_offset = len >= n ? len - n : len - 1;
      std::uniform_int_distribution<std::size_t> offset_dist(0, max_offset);
      const std::size_t offset = offset_dist(rng);
      Signal window;
      window.fs = segment.fs;
      window.provenance = source.provenance;
      window.provenance["offset"] = std::to_string(offset);
      window.samples.resize(n);
      for (std::size_t i = 0; i < n; ++i) window.samples[i] = source.samples[(offset + i) % len];
      for (double snr : spec.snr_grid_db) pairs.push_back(mix_at_snr(segment, window, snr));
    }
  }
  return pairs;
}

std::vector<NoisyPair> build_dataset(const DatasetManifest& manifest, const std::string& split) {
  manifest.validate();
  const auto it = manifest.splits.find(split);
  require(it != manifest.splits.end(), "manifest has no '" + split + "' split");
  const SplitSpec& spec = it->second;
  std::vector<Signal> clean, artifacts;
  for (const auto& e : spec.clean) {
    Signal s = io::read_signal(manifest.resolve(e.path));
    s.provenance["subject"] = e.subject;
    clean.push_back(std::move(s));
  }
  for (const auto& e : spec.artifacts) {
    Signal s = io::read_signal(manifest.resolve(e.path));
    s.provenance["subject"] = e.subject;
    artifacts.push_back(std::move(s));
  }
  return build_pairs(clean, artifacts, spec, split_seed(manifest.seed, split));
}

std::vector<Signal> preprocess_semg(const Signal& raw, double fs_out, double seconds) {
  raw.validate();
  const auto band = dsp::design_butterworth(4, dsp::FilterType::bandpass,
                                            {20.0, std::min(500.0, 0.45 * raw.fs)}, raw.fs);
  const Signal filtered = dsp::filter_apply(raw, band, dsp::FilterMode::zero_phase);
  const Signal resampled = dsp::resample(filtered, fs_out);
  std::vector<Signal> segments = segment(resampled, seconds);
  for (Signal& s : segments) s = normalize(s).signal;
  return segments;
}

Signal preprocess_ecg(const Signal& raw, double fs_out) {
  raw.validate();
  Signal x = dsp::resample(raw, fs_out);
  const auto hp = dsp::design_butterworth(3, dsp::FilterType::highpass, {10.0}, fs_out);
  const auto lp = dsp::design_butterworth(3, dsp::FilterType::lowpass, {std::min(200.0, 0.45 * fs_out)}, fs_out);
  x = dsp::filter_apply(x, hp, dsp::FilterMode::zero_phase);
  return dsp::filter_apply(x, lp, dsp::FilterMode::zero_phase);
}

}  // namespace msemg::data
