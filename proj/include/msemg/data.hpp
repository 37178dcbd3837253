#pragma once

// Normalization, segmentation, SNR-controlled contamination, the dataset
// manifest and its split protocol, and the synthetic surrogate generators.

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include "json.hpp"
#include "msemg/signal.hpp"

namespace msemg::data {

struct Normalized {
  Signal signal;
  double scale = 1;  // original = normalized * scale
};

/// Divide by the peak absolute amplitude. All-zero input comes back unchanged with scale 1.
Normalized normalize(const Signal& x);
Signal denormalize(const Signal& x, double scale);

/// Non-overlapping segments of floor(seconds * fs) samples; the remainder is dropped.
std::vector<Signal> segment(const Signal& x, double seconds);

struct NoisyPair {
  Signal clean;
  Signal artifact;  // unscaled
  Signal mixed;     // clean + scale * artifact
  double target_snr_db = 0;
  double scale = 1;
};

/// scale = sqrt(P_clean / (P_artifact * 10^(snr_db / 10))), P = mean square.
NoisyPair mix_at_snr(const Signal& clean, const Signal& artifact, double snr_db);

/// 10 log10(P_clean / P_{mixed - clean}).
double measured_snr_db(const NoisyPair& pair);

/// Inclusive arithmetic grid, e.g. snr_grid(-15, -5, 2) -> {-15, -13, ..., -5}.
std::vector<double> snr_grid(double first, double last, double step);

struct ManifestEntry {
  std::string path;  // relative to the manifest directory unless absolute
  std::string subject;
};

void to_json(nlohmann::json& j, const ManifestEntry& e);
void from_json(const nlohmann::json& j, ManifestEntry& e);

struct SplitSpec {
  std::vector<ManifestEntry> clean;
  std::vector<ManifestEntry> artifacts;
  std::vector<double> snr_grid_db;
  int artifact_draws = 1;  // artifact draws per clean segment
};

struct DatasetManifest {
  static constexpr int kSchemaVersion = 1;

  int schema_version = kSchemaVersion;
  std::uint64_t seed = 0;
  std::map<std::string, SplitSpec> splits;  // keys: train, val, test
  std::filesystem::path base_dir;           // not serialized; set by load

  /// Checks schema version, split names, non-empty grids and subject
  /// disjointness (clean subjects and artifact subjects separately).
  void validate() const;
  std::filesystem::path resolve(const std::string& path) const;
};

void to_json(nlohmann::json& j, const DatasetManifest& m);
void from_json(const nlohmann::json& j, DatasetManifest& m);

DatasetManifest load_manifest(const std::filesystem::path& path);
void save_manifest(const std::filesystem::path& path, const DatasetManifest& m);

/// Pairs for one split: every clean segment x `artifact_draws` seeded random
/// artifact windows x every SNR in the grid, in that nesting order. Clean
/// segments are max-abs normalized; artifacts are resampled to the clean rate.
std::vector<NoisyPair> build_dataset(const DatasetManifest& manifest, const std::string& split);

/// Same construction from in-memory pools (used by build_dataset and tests).
std::vector<NoisyPair> build_pairs(const std::vector<Signal>& clean, const std::vector<Signal>& artifacts,
                                   const SplitSpec& spec, std::uint64_t seed);

/// Raw 2 kHz sEMG -> 4th-order 20-500 Hz zero-phase bandpass -> 1 kHz ->
/// segments of `seconds` -> per-segment normalization.
std::vector<Signal> preprocess_semg(const Signal& raw, double fs_out = 1000, double seconds = 10);

/// Raw ECG -> resampled to fs_out -> 3rd-order 10 Hz high-pass and 200 Hz
/// low-pass, zero-phase.
Signal preprocess_ecg(const Signal& raw, double fs_out = 1000);

// Synthetic surrogates.

/// Gaussian noise shaped by a 20-150 Hz bandpass, modulated by a slow random
/// burst envelope (bursts of 0.5-2 s), normalized to unit peak.
Signal synth_semg(double duration_s, double fs, std::uint64_t seed);

struct EcgOptions {
  double period_jitter = 0.03;     // relative, uniform
  double amplitude_jitter = 0.10;  // relative, uniform
};

struct SyntheticEcg {
  Signal signal;
  std::vector<std::size_t> r_peaks;  // planted R-wave sample indices
};

/// Gaussian-bump P-QRS-T beats at `bpm`.
SyntheticEcg synth_ecg(double duration_s, double fs, double bpm, std::uint64_t seed,
                       const EcgOptions& options = {});

/// A seeded synthetic corpus: `count` sEMG recordings and `count` ECG
/// recordings (50-100 bpm, band-limited like preprocess_ecg), one subject per
/// recording, split by subject into train/val/test (60/20/20, at least one
/// each) with SNR grids -15..-5 dB (train, val) and -14..0 dB (test), step 2.
/// Manifest paths are semg/semg_NNN.msg and ecg/ecg_NNN.msg.
struct SynthCorpus {
  std::vector<Signal> semg;
  std::vector<Signal> ecg;
  DatasetManifest manifest;
};

SynthCorpus synth_corpus(int count, double duration_s, double fs, std::uint64_t seed);

}  // namespace msemg::data
