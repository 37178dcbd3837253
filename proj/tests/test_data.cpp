#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <random>

#include "msemg/data.hpp"
#include "msemg/errors.hpp"
#include "msemg/signal_io.hpp"
#include "msemg/spectrum.hpp"
#include "test_util.hpp"

using namespace msemg;
using namespace msemg::data;
using msemg::testing::gaussian;
using msemg::testing::make_signal;
using msemg::testing::sine;
namespace fs = std::filesystem;

namespace {

fs::path scratch_dir(const std::string& name) {
  const fs::path dir = fs::temp_directory_path() / ("msemg_test_data_" + name);
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

// Direct oracle for the SNR definition.
long double snr_oracle(const std::vector<double>& clean, const std::vector<double>& mixed) {
  long double pc = 0, pn = 0;
  for (std::size_t i = 0; i < clean.size(); ++i) {
    pc += static_cast<long double>(clean[i]) * clean[i];
    const long double d = static_cast<long double>(mixed[i]) - clean[i];
    pn += d * d;
  }
  return 10.0L * std::log10(pc / pn);
}

DatasetManifest two_split_manifest() {
  DatasetManifest m;
  m.seed = 5;
  m.splits["train"] = SplitSpec{{{"a.msg", "s1"}, {"b.msg", "s2"}}, {{"e1.msg", "r1"}}, {-10, -5}, 1};
  m.splits["test"] = SplitSpec{{{"c.msg", "s3"}}, {{"e2.msg", "r2"}}, {-8}, 1};
  return m;
}

}  // namespace

TEST(SignalIo, BinaryRoundTripIsExact) {
  Signal s = make_signal(gaussian(1234, 1), 2000);
  s.samples[3] = -0.0;
  s.samples[4] = 1e-310;
  s.provenance = {{"source", "unit"}, {"subject", "ß-7"}};
  const auto bytes = io::encode_signal(s);
  ASSERT_EQ(std::string(bytes.begin(), bytes.begin() + 4), "MSG1");
  const Signal r = io::decode_signal(bytes);
  EXPECT_EQ(r.fs, 2000);
  EXPECT_EQ(r.samples, s.samples);
  EXPECT_TRUE(std::signbit(r.samples[3]));
  EXPECT_EQ(r.provenance, s.provenance);
  EXPECT_EQ(io::encode_signal(r), bytes);
}

TEST(SignalIo, FileRoundTripAndCsv) {
  const auto dir = scratch_dir("io");
  Signal s = make_signal(gaussian(300, 2), 128);
  s.provenance["channel"] = "3";
  io::write_signal(dir / "x.msg", s);
  const Signal r = io::read_signal(dir / "x.msg");
  EXPECT_EQ(r.samples, s.samples);
  EXPECT_EQ(r.provenance, s.provenance);

  io::write_signal_csv(dir / "x.csv", s);
  const Signal c = io::read_signal(dir / "x.csv");
  EXPECT_EQ(c.fs, 128);
  EXPECT_EQ(c.samples, s.samples);  // shortest round-trip formatting

  for (const std::string header : {"1000", "fs=1000", "fs,1000"}) {
    std::ofstream(dir / "h.csv") << header << "\n0.5\n-1.25\n";
    const Signal h = io::read_signal(dir / "h.csv");
    EXPECT_EQ(h.fs, 1000);
    EXPECT_EQ(h.samples, (std::vector<double>{0.5, -1.25}));
  }
}

TEST(SignalIo, CorruptInputsAreRejected) {
  auto bytes = io::encode_signal(make_signal({1, 2, 3}, 100));
  auto bad_magic = bytes;
  bad_magic[3] = '2';
  EXPECT_THROW(io::decode_signal(bad_magic), FormatError);
  auto bad_version = bytes;
  bad_version[4] = 9;
  EXPECT_THROW(io::decode_signal(bad_version), FormatError);
  auto truncated = bytes;
  truncated.resize(truncated.size() - 3);
  EXPECT_THROW(io::decode_signal(truncated), FormatError);
  EXPECT_THROW(io::read_signal("/nonexistent/dir/x.msg"), IoError);
}

TEST(SignalIo, AtomicWriteLeavesNoTemporaries) {
  const auto dir = scratch_dir("atomic");
  io::write_file_atomic(dir / "f.txt", std::string("first"));
  io::write_file_atomic(dir / "f.txt", std::string("second"));
  EXPECT_EQ(io::read_file_text(dir / "f.txt"), "second");
  EXPECT_EQ(std::distance(fs::directory_iterator(dir), fs::directory_iterator{}), 1);
}

TEST(Normalize, PeakBecomesOneAndScaleInverts) {
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    const Signal x = make_signal(gaussian(500, seed, 3.0 + seed), 1000);
    const auto n = normalize(x);
    EXPECT_DOUBLE_EQ(msemg::testing::max_abs(n.signal.samples), 1.0);
    const Signal back = denormalize(n.signal, n.scale);
    EXPECT_LE(msemg::testing::max_abs_diff(back.samples, x.samples), 1e-12 * n.scale);
  }
  const Signal z = make_signal(std::vector<double>(10, 0.0), 1000);
  EXPECT_EQ(normalize(z).scale, 1.0);
  EXPECT_EQ(normalize(z).signal.samples, z.samples);
}

TEST(Segment, DropsRemainderAndPreservesOrder) {
  std::vector<double> ramp(2750);
  for (std::size_t i = 0; i < ramp.size(); ++i) ramp[i] = static_cast<double>(i);
  const auto segs = segment(make_signal(ramp, 1000), 1.0);
  ASSERT_EQ(segs.size(), 2u);
  for (std::size_t k = 0; k < 2; ++k) {
    ASSERT_EQ(segs[k].size(), 1000u);
    EXPECT_EQ(segs[k].samples.front(), 1000.0 * k);
    EXPECT_EQ(segs[k].samples.back(), 1000.0 * k + 999);
  }
  EXPECT_TRUE(segment(make_signal(std::vector<double>(999, 1.0), 1000), 1.0).empty());
}

TEST(Mixing, MeasuredSnrMatchesTargetOverTheGrid) {
  std::mt19937_64 rng(99);
  const auto grid = snr_grid(-15, 0, 1);
  ASSERT_EQ(grid.size(), 16u);
  for (int trial = 0; trial < 100; ++trial) {
    const Signal c = make_signal(gaussian(2000, rng(), 0.3), 1000);
    const Signal a = make_signal(gaussian(2000, rng(), 5.0), 1000);
    for (double snr : grid) {
      const auto p = mix_at_snr(c, a, snr);
      EXPECT_LE(std::abs(measured_snr_db(p) - snr), 1e-9);
      EXPECT_LE(std::abs(static_cast<double>(snr_oracle(p.clean.samples, p.mixed.samples)) - snr), 1e-9);
      for (std::size_t i = 0; i < 2000; i += 97) {
        EXPECT_DOUBLE_EQ(p.mixed.samples[i], c.samples[i] + p.scale * a.samples[i]);
      }
    }
  }
}

TEST(Mixing, ScaleFollowsClosedForm) {
  const Signal c = sine(50, 1000, 1000, 2.0);
  const Signal a = sine(7, 1000, 1000, 1.0);
  const auto p = mix_at_snr(c, a, -10);
  // Equal-duration whole-period sines: P_c = 2, P_a = 1/2.
  EXPECT_NEAR(p.scale, std::sqrt(2.0 / (0.5 * 0.1)), 1e-9);
}

TEST(Mixing, RejectsDegenerateInputs) {
  const Signal c = make_signal(gaussian(100, 1), 1000);
  EXPECT_THROW(mix_at_snr(c, make_signal(std::vector<double>(100, 0.0), 1000), 0), ValidationError);
  EXPECT_THROW(mix_at_snr(make_signal(std::vector<double>(100, 0.0), 1000), c, 0), ValidationError);
  EXPECT_THROW(mix_at_snr(c, make_signal(gaussian(99, 2), 1000), 0), ValidationError);
  EXPECT_THROW(mix_at_snr(c, make_signal(gaussian(100, 2), 500), 0), ValidationError);
  EXPECT_THROW(mix_at_snr(c, c, std::nan("")), ValidationError);
}

TEST(SnrGrid, InclusiveEndpoints) {
  EXPECT_EQ(snr_grid(-15, -5, 2), (std::vector<double>{-15, -13, -11, -9, -7, -5}));
  EXPECT_EQ(snr_grid(-14, 0, 2).size(), 8u);
  EXPECT_THROW(snr_grid(0, 1, 0), ValidationError);
}

TEST(Manifest, JsonRoundTripAndValidation) {
  const auto m = two_split_manifest();
  EXPECT_NO_THROW(m.validate());
  const nlohmann::json j = m;
  const auto r = j.get<DatasetManifest>();
  EXPECT_EQ(nlohmann::json(r), j);
  EXPECT_EQ(r.splits.at("train").clean[1].subject, "s2");
}

TEST(Manifest, LeakageIsRejectedPerPool) {
  auto m = two_split_manifest();
  m.splits["test"].clean.push_back({"d.msg", "s1"});
  EXPECT_THROW(m.validate(), ValidationError);

  m = two_split_manifest();
  m.splits["test"].artifacts.push_back({"e3.msg", "r1"});
  EXPECT_THROW(m.validate(), ValidationError);

  // A subject id shared between the clean and artifact pools is not leakage.
  m = two_split_manifest();
  m.splits["test"].artifacts.push_back({"e3.msg", "s1"});
  EXPECT_NO_THROW(m.validate());
}

TEST(Manifest, StructuralErrors) {
  auto m = two_split_manifest();
  m.schema_version = 2;
  EXPECT_THROW(m.validate(), ValidationError);
  m = two_split_manifest();
  m.splits["holdout"] = m.splits["test"];
  EXPECT_THROW(m.validate(), ValidationError);
  m = two_split_manifest();
  m.splits["train"].snr_grid_db.clear();
  EXPECT_THROW(m.validate(), ValidationError);
  m = two_split_manifest();
  m.splits["train"].artifact_draws = 0;
  EXPECT_THROW(m.validate(), ValidationError);
  m = DatasetManifest{};
  EXPECT_THROW(m.validate(), ValidationError);

  const auto dir = scratch_dir("malformed");
  std::ofstream(dir / "manifest.json") << "{\"schema_version\": 1";
  EXPECT_THROW(load_manifest(dir / "manifest.json"), ValidationError);
}

// The shape the external ingestion scripts emit for the published protocol:
// sEMG subjects split by id, three held-out MIT-BIH NSRD records for test,
// six-level training grid and eight-level test grid.
TEST(Manifest, IngestionProtocolManifestValidates) {
  const auto text = R"({
    "schema_version": 1,
    "seed": 0,
    "splits": {
      "train": {
        "clean": [{"path": "ninapro/s01_e2_ch01.msg", "subject": "ninapro-s01"},
                  {"path": "ninapro/s02_e2_ch01.msg", "subject": "ninapro-s02"}],
        "artifacts": [{"path": "nsrd/16265.msg", "subject": "nsrd-16265"},
                      {"path": "nsrd/16272.msg", "subject": "nsrd-16272"}],
        "snr_grid_db": [-15, -13, -11, -9, -7, -5]
      },
      "val": {
        "clean": [{"path": "ninapro/s03_e2_ch01.msg", "subject": "ninapro-s03"}],
        "artifacts": [{"path": "nsrd/16273.msg", "subject": "nsrd-16273"}],
        "snr_grid_db": [-15, -13, -11, -9, -7, -5]
      },
      "test": {
        "clean": [{"path": "ninapro/s10_e2_ch01.msg", "subject": "ninapro-s10"}],
        "artifacts": [{"path": "nsrd/16420.msg", "subject": "nsrd-16420"},
                      {"path": "nsrd/16539.msg", "subject": "nsrd-16539"},
                      {"path": "nsrd/16786.msg", "subject": "nsrd-16786"}],
        "snr_grid_db": [-14, -12, -10, -8, -6, -4, -2, 0]
      }
    }
  })";
  const auto m = nlohmann::json::parse(text).get<DatasetManifest>();
  EXPECT_NO_THROW(m.validate());
  EXPECT_EQ(m.splits.at("train").snr_grid_db.size(), 6u);
  EXPECT_EQ(m.splits.at("test").snr_grid_db.size(), 8u);
  EXPECT_EQ(m.splits.at("test").artifact_draws, 1);
}

TEST(Manifest, SaveLoadResolvesRelativePaths) {
  const auto dir = scratch_dir("manifest");
  const auto m = two_split_manifest();
  save_manifest(dir / "m.json", m);
  const auto r = load_manifest(dir / "m.json");
  EXPECT_EQ(r.resolve("a.msg"), dir / "a.msg");
  EXPECT_EQ(r.resolve("/abs/a.msg"), fs::path("/abs/a.msg"));
}

TEST(BuildPairs, CountsNestingAndNormalization) {
  std::vector<Signal> clean, art;
  for (int i = 0; i < 3; ++i) clean.push_back(make_signal(gaussian(1000, i, 4.0), 1000));
  for (int i = 0; i < 2; ++i) art.push_back(make_signal(gaussian(5000, 10 + i), 1000));
  SplitSpec spec{{}, {}, {-10, -5, 0}, 2};
  const auto pairs = build_pairs(clean, art, spec, 17);
  ASSERT_EQ(pairs.size(), 3u * 2u * 3u);
  for (std::size_t k = 0; k < pairs.size(); ++k) {
    EXPECT_EQ(pairs[k].target_snr_db, spec.snr_grid_db[k % 3]);
    EXPECT_DOUBLE_EQ(msemg::testing::max_abs(pairs[k].clean.samples), 1.0);
    EXPECT_EQ(pairs[k].clean.samples, normalize(clean[k / 6]).signal.samples);
    EXPECT_LE(std::abs(measured_snr_db(pairs[k]) - pairs[k].target_snr_db), 1e-9);
  }
  // The artifact window is shared across the SNR grid of one draw.
  EXPECT_EQ(pairs[0].artifact.samples, pairs[2].artifact.samples);
}

TEST(BuildPairs, DeterministicInTheSeed) {
  std::vector<Signal> clean{make_signal(gaussian(800, 1), 1000)};
  std::vector<Signal> art{make_signal(gaussian(4000, 2), 1000), make_signal(gaussian(4000, 3), 1000)};
  SplitSpec spec{{}, {}, {-10}, 8};
  const auto a = build_pairs(clean, art, spec, 3);
  const auto b = build_pairs(clean, art, spec, 3);
  const auto c = build_pairs(clean, art, spec, 4);
  bool any_diff = false;
  for (std::size_t i = 0; i < a.size(); ++i) {
    EXPECT_EQ(a[i].mixed.samples, b[i].mixed.samples);
    any_diff |= a[i].mixed.samples != c[i].mixed.samples;
  }
  EXPECT_TRUE(any_diff);
}

TEST(BuildPairs, ArtifactsAreResampledToTheCleanRate) {
  std::vector<Signal> clean{make_signal(gaussian(1000, 1), 1000)};
  std::vector<Signal> art{sine(5, 128, 1280)};
  const auto pairs = build_pairs(clean, art, SplitSpec{{}, {}, {-5}, 1}, 0);
  ASSERT_EQ(pairs.size(), 1u);
  EXPECT_EQ(pairs[0].artifact.fs, 1000);
  EXPECT_NEAR(spectrum::dominant_frequency(pairs[0].artifact.samples, 1000), 5.0, 1.0);
}

TEST(Preprocess, SemgChain) {
  const Signal raw = make_signal(gaussian(2000 * 25, 3), 2000);
  const auto segs = preprocess_semg(raw, 1000, 10);
  ASSERT_EQ(segs.size(), 2u);
  for (const auto& s : segs) {
    EXPECT_EQ(s.fs, 1000);
    EXPECT_EQ(s.size(), 10000u);
    EXPECT_DOUBLE_EQ(msemg::testing::max_abs(s.samples), 1.0);
    EXPECT_LT(spectrum::band_power_fraction(s.samples, 1000, 0, 10), 0.01);
  }
}

TEST(Preprocess, EcgChainRemovesBaselineWander) {
  Signal raw = sine(0.3, 360, 360 * 20, 5.0);
  const auto beat = synth_ecg(20, 360, 70, 1).signal;
  for (std::size_t i = 0; i < raw.size(); ++i) raw.samples[i] += beat.samples[i];
  const Signal x = preprocess_ecg(raw, 1000);
  EXPECT_EQ(x.fs, 1000);
  EXPECT_EQ(x.size(), 20000u);
  EXPECT_LT(spectrum::band_power_fraction(x.samples, 1000, 0, 1), 0.01);
}

TEST(Synth, SemgIsBandLimitedAndPeakNormalized) {
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    const Signal s = synth_semg(4, 1000, seed);
    EXPECT_EQ(s.size(), 4000u);
    EXPECT_DOUBLE_EQ(msemg::testing::max_abs(s.samples), 1.0);
    EXPECT_GT(spectrum::band_power_fraction(s.samples, 1000, 15, 200), 0.9);
  }
  EXPECT_EQ(synth_semg(2, 1000, 4).samples, synth_semg(2, 1000, 4).samples);
}

TEST(Synth, EcgPeaksAtRequestedRate) {
  data::EcgOptions opt;
  opt.period_jitter = 0;
  const auto e = synth_ecg(30, 1000, 75, 2, opt);
  ASSERT_GE(e.r_peaks.size(), 36u);
  for (std::size_t i = 1; i < e.r_peaks.size(); ++i) EXPECT_EQ(e.r_peaks[i] - e.r_peaks[i - 1], 800u);
  for (std::size_t p : e.r_peaks) EXPECT_GT(e.signal.samples[p], 0.5 * msemg::testing::max_abs(e.signal.samples));
}

TEST(Synth, CorpusIsConsistentAndDeterministic) {
  const auto a = synth_corpus(10, 3, 1000, 8);
  EXPECT_EQ(a.semg.size(), 10u);
  EXPECT_EQ(a.ecg.size(), 10u);
  EXPECT_NO_THROW(a.manifest.validate());
  EXPECT_EQ(a.manifest.splits.at("test").clean.size(), 2u);
  EXPECT_EQ(a.manifest.splits.at("val").clean.size(), 2u);
  EXPECT_EQ(a.manifest.splits.at("train").clean.size(), 6u);
  EXPECT_EQ(a.manifest.splits.at("train").snr_grid_db, snr_grid(-15, -5, 2));
  EXPECT_EQ(a.manifest.splits.at("test").snr_grid_db, snr_grid(-14, 0, 2));
  const auto b = synth_corpus(10, 3, 1000, 8);
  for (std::size_t i = 0; i < 10; ++i) {
    EXPECT_EQ(a.semg[i].samples, b.semg[i].samples);
    EXPECT_EQ(a.ecg[i].samples, b.ecg[i].samples);
  }
  EXPECT_EQ(nlohmann::json(a.manifest), nlohmann::json(b.manifest));
  EXPECT_THROW(synth_corpus(2, 3, 1000, 8), ValidationError);
}
