// msemg: command-line front end for synthesis, contamination, training,
// denoising, evaluation and report comparison.
//
// Exit codes: 0 success, 1 unexpected failure, 2 invalid input or flags,
// 3 file I/O failure, 4 numerical abort (non-finite values), 5 bad file
// format (magic / version).

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <set>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"
#include "msemg/checkpoint.hpp"
#include "msemg/data.hpp"
#include "msemg/dsp.hpp"
#include "msemg/errors.hpp"
#include "msemg/metrics.hpp"
#include "msemg/nn.hpp"
#include "msemg/signal_io.hpp"
#include "msemg/train.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace msemg;

namespace {

enum ExitCode { kOk = 0, kFailure = 1, kValidation = 2, kIo = 3, kNumerical = 4, kFormat = 5 };

// JSON config files. Top-level scalars and arrays set options of the main
// command; an object keyed by a subcommand name sets that subcommand's
// options. Keys may use '_' or '-'.
class JsonConfig : public CLI::Config {
 public:
  std::string to_config(const CLI::App* app, bool default_also, bool, std::string) const override {
    json j = json::object();
    for (const CLI::Option* opt : app->get_options()) {
      if (opt->get_lnames().empty() || !opt->get_configurable()) continue;
      const std::string name = opt->get_lnames().front();
      if (opt->count() > 0) {
        j[name] = opt->results().size() == 1 ? json(opt->results().front()) : json(opt->results());
      } else if (default_also && !opt->get_default_str().empty()) {
        j[name] = opt->get_default_str();
      }
    }
    return j.dump(2);
  }

  std::vector<CLI::ConfigItem> from_config(std::istream& input) const override {
    json j;
    try {
      j = json::parse(input);
    } catch (const json::exception& e) {
      throw CLI::ConversionError("config file is not valid JSON: " + std::string(e.what()));
    }
    if (!j.is_object()) throw CLI::ConversionError("config file must hold a JSON object");
    std::vector<CLI::ConfigItem> items;
    flatten(j, {}, items);
    return items;
  }

 private:
  static std::string option_name(std::string key) {
    for (char& c : key) {
      if (c == '_') c = '-';
    }
    return key;
  }

  static std::string scalar(const json& v) { return v.is_string() ? v.get<std::string>() : v.dump(); }

  static void flatten(const json& j, const std::vector<std::string>& parents, std::vector<CLI::ConfigItem>& out) {
    for (const auto& [key, value] : j.items()) {
      if (value.is_object()) {
        auto sub = parents;
        sub.push_back(key);
        flatten(value, sub, out);
        continue;
      }
      CLI::ConfigItem item;
      item.parents = parents;
      item.name = option_name(key);
      if (value.is_array()) {
        for (const auto& v : value) item.inputs.push_back(scalar(v));
      } else {
        item.inputs.push_back(scalar(value));
      }
      out.push_back(std::move(item));
    }
  }
};

void write_json(const fs::path& path, const json& j) { io::write_file_atomic(path, j.dump(2) + "\n"); }

void ensure_dir(const fs::path& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw IoError(dir.string(), "cannot create directory: " + ec.message());
}

std::string numbered(const std::string& prefix, std::size_t i, const std::string& suffix) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%04zu", i);
  return prefix + buf + suffix;
}

// Baseline denoisers -------------------------------------------------------

struct BaselineOptions {
  double hp_cutoff = 40.0;
  int hp_order = 4;
  double ts_window_ms = 600.0;
};

std::function<Signal(const Signal&)> make_baseline(const std::string& name, const BaselineOptions& o) {
  if (name == "hp") {
    return [o](const Signal& x) { return dsp::highpass_denoise(x, o.hp_cutoff, o.hp_order); };
  }
  if (name == "ts") {
    return [o](const Signal& x) { return dsp::template_subtraction_denoise(x, o.ts_window_ms); };
  }
  if (name == "identity") return [](const Signal& x) { return x; };
  throw ValidationError("unknown baseline '" + name + "' (expected hp, ts or identity)");
}

// synth --------------------------------------------------------------------

struct SynthArgs {
  int count = 10;
  double duration = 2.0;
  double fs = 1000.0;
  std::uint64_t seed = 0;
  std::string out;
};

void cmd_synth(const SynthArgs& a) {
  require(a.count >= 3, "synth: --count must be at least 3 (one subject per split)");
  require(a.duration > 0 && a.fs > 0, "synth: --duration and --fs must be positive");
  const auto corpus = data::synth_corpus(a.count, a.duration, a.fs, a.seed);
  const fs::path out(a.out);
  ensure_dir(out / "semg");
  ensure_dir(out / "ecg");
  for (std::size_t i = 0; i < corpus.semg.size(); ++i) {
    char id[16];
    std::snprintf(id, sizeof id, "%03zu", i);
    io::write_signal(out / "semg" / (std::string("semg_") + id + ".msg"), corpus.semg[i]);
    io::write_signal(out / "ecg" / (std::string("ecg_") + id + ".msg"), corpus.ecg[i]);
  }
  data::save_manifest(out / "manifest.json", corpus.manifest);
  write_json(out / "synth_config.json",
             {{"command", "synth"}, {"count", a.count}, {"duration", a.duration}, {"fs", a.fs}, {"seed", a.seed}});
  std::cout << "wrote " << corpus.semg.size() << " sEMG + " << corpus.ecg.size() << " ECG files and "
            << (out / "manifest.json").string() << "\n";
}

// mix ----------------------------------------------------------------------

struct MixArgs {
  std::string manifest;
  std::string split = "test";
  std::string out;
};

void cmd_mix(const MixArgs& a) {
  const auto manifest = data::load_manifest(a.manifest);
  const auto pairs = data::build_dataset(manifest, a.split);
  const fs::path out(a.out);
  ensure_dir(out / "pairs");
  json entries = json::array();
  for (std::size_t i = 0; i < pairs.size(); ++i) {
    const auto& p = pairs[i];
    const std::string clean = "pairs/" + numbered("pair_", i, "_clean.msg");
    const std::string mixed = "pairs/" + numbered("pair_", i, "_mixed.msg");
    const std::string artifact = "pairs/" + numbered("pair_", i, "_artifact.msg");
    io::write_signal(out / clean, p.clean);
    io::write_signal(out / mixed, p.mixed);
    io::write_signal(out / artifact, p.artifact);
    entries.push_back({{"index", i},
                       {"clean", clean},
                       {"mixed", mixed},
                       {"artifact", artifact},
                       {"target_snr_db", p.target_snr_db},
                       {"scale", p.scale},
                       {"measured_snr_db", data::measured_snr_db(p)}});
  }
  write_json(out / "index.json", {{"split", a.split}, {"seed", manifest.seed}, {"pairs", entries}});
  write_json(out / "mix_config.json",
             {{"command", "mix"}, {"manifest", fs::absolute(a.manifest).string()}, {"split", a.split}});
  std::cout << "wrote " << pairs.size() << " pairs to " << (out / "index.json").string() << "\n";
}

std::vector<data::NoisyPair> load_index(const fs::path& index_path) {
  json index;
  try {
    index = json::parse(io::read_file_text(index_path));
  } catch (const json::exception& e) {
    throw ValidationError(index_path.string() + ": malformed pair index: " + e.what());
  }
  require(index.contains("pairs") && index["pairs"].is_array(), index_path.string() + ": index has no pairs");
  const fs::path base = index_path.parent_path();
  std::vector<std::string> missing;
  for (const auto& e : index["pairs"]) {
    for (const char* key : {"clean", "mixed", "artifact"}) {
      const fs::path p = base / e.at(key).get<std::string>();
      if (!fs::exists(p)) missing.push_back(p.string());
    }
  }
  if (!missing.empty()) {
    std::string list;
    for (const auto& m : missing) list += "\n  " + m;
    throw IoError(index_path.string(), std::to_string(missing.size()) + " referenced file(s) missing:" + list);
  }
  std::vector<data::NoisyPair> pairs;
  for (const auto& e : index["pairs"]) {
    data::NoisyPair p;
    p.clean = io::read_signal(base / e.at("clean").get<std::string>());
    p.mixed = io::read_signal(base / e.at("mixed").get<std::string>());
    p.artifact = io::read_signal(base / e.at("artifact").get<std::string>());
    p.target_snr_db = e.at("target_snr_db").get<double>();
    p.scale = e.at("scale").get<double>();
    pairs.push_back(std::move(p));
  }
  require(!pairs.empty(), index_path.string() + ": index lists no pairs");
  return pairs;
}

// train --------------------------------------------------------------------

struct TrainArgs {
  std::string manifest;
  std::string out;
  nn::ModelConfig model;
  train::TrainConfig train;
};

void cmd_train(TrainArgs a) {
  const auto manifest = data::load_manifest(a.manifest);
  const auto train_set = data::build_dataset(manifest, "train");
  const auto val_set = data::build_dataset(manifest, "val");
  a.model.fs = train_set.front().clean.fs;
  a.model.validate();
  a.train.validate();

  const fs::path out(a.out);
  ensure_dir(out);
  write_json(out / "resolved_config.json", {{"command", "train"},
                                           {"manifest", fs::absolute(a.manifest).string()},
                                           {"model", a.model},
                                           {"train", a.train}});
  if (a.train.checkpoint_every > 0) ensure_dir(out / "checkpoints");

  std::string log;
  auto on_epoch = [&](const train::EpochRecord& r, const nn::ModelParams& current) {
    log += json(r).dump() + "\n";
    io::write_file_atomic(out / "train_log.jsonl", log);
    std::fprintf(stderr, "epoch %d  loss %.6g  val SNR_imp %.3f dB%s\n", r.epoch, r.train_loss, r.val_snr_imp_db,
                 r.clipped_steps > 0 ? ("  (clipped " + std::to_string(r.clipped_steps) + " steps)").c_str() : "");
    if (a.train.checkpoint_every > 0 && r.epoch % a.train.checkpoint_every == 0) {
      nn::save_checkpoint(out / "checkpoints" / numbered("epoch_", static_cast<std::size_t>(r.epoch), ".msmg"),
                          current);
    }
  };
  io::write_file_atomic(out / "train_log.jsonl", std::string());
  const auto result = train::train(train_set, val_set, nn::init_params(a.model), a.train, on_epoch);
  nn::save_checkpoint(out / "model.msmg", result.best);
  nn::save_checkpoint(out / "last.msmg", result.last);
  write_json(out / "train_summary.json", {{"initial_val_snr_imp_db", result.initial_val_snr_imp_db},
                                         {"best_epoch", result.best_epoch},
                                         {"epochs_run", result.log.size()},
                                         {"stopped_early", result.stopped_early},
                                         {"train_pairs", train_set.size()},
                                         {"val_pairs", val_set.size()}});
  std::cout << "best epoch " << result.best_epoch << "; checkpoint " << (out / "model.msmg").string() << "\n";
}

// denoise ------------------------------------------------------------------

struct DenoiseArgs {
  std::string checkpoint;
  std::string baseline;
  std::vector<std::string> inputs;
  std::string out;
  std::size_t segment_samples = 0;
  BaselineOptions baseline_options;
};

void cmd_denoise(const DenoiseArgs& a) {
  require(a.checkpoint.empty() != a.baseline.empty(), "denoise: give exactly one of --checkpoint or --baseline");
  std::function<Signal(const Signal&)> fn;
  std::string name;
  if (!a.checkpoint.empty()) {
    auto params = std::make_shared<nn::ModelParams>(nn::load_checkpoint(a.checkpoint));
    fn = [params, seg = a.segment_samples](const Signal& x) { return nn::denoise(*params, x, seg); };
    name = "msemg";
  } else {
    fn = make_baseline(a.baseline, a.baseline_options);
    name = a.baseline;
  }
  const fs::path out(a.out);
  ensure_dir(out);
  std::set<std::string> names;
  for (const auto& in : a.inputs) {
    const std::string file = fs::path(in).stem().string() + ".msg";
    require(names.insert(file).second, "denoise: two inputs map to the same output name " + file);
  }
  for (const auto& in : a.inputs) {
    const Signal x = io::read_signal(in);
    Signal y = fn(x);
    y.provenance["denoiser"] = name;
    io::write_signal(out / (fs::path(in).stem().string() + ".msg"), y);
  }
  write_json(out / "denoise_config.json", {{"command", "denoise"},
                                          {"denoiser", name},
                                          {"checkpoint", a.checkpoint},
                                          {"inputs", a.inputs},
                                          {"segment_samples", a.segment_samples},
                                          {"hp_cutoff", a.baseline_options.hp_cutoff},
                                          {"hp_order", a.baseline_options.hp_order},
                                          {"ts_window_ms", a.baseline_options.ts_window_ms}});
  std::cout << "denoised " << a.inputs.size() << " file(s) with " << name << "\n";
}

// evaluate -----------------------------------------------------------------

struct EvaluateArgs {
  std::string index;
  std::string denoiser = "identity";
  std::string checkpoint;
  std::string name;
  std::string out;
  metrics::EvaluateOptions options;
  BaselineOptions baseline_options;
};

void cmd_evaluate(const EvaluateArgs& a) {
  const auto pairs = load_index(a.index);
  metrics::NamedDenoiser d;
  if (a.denoiser == "model") {
    require(!a.checkpoint.empty(), "evaluate: --denoiser model needs --checkpoint");
    auto params = std::make_shared<nn::ModelParams>(nn::load_checkpoint(a.checkpoint));
    d = {"msemg", [params](const data::NoisyPair& p) { return nn::denoise(*params, p.mixed); }};
  } else if (a.denoiser == "oracle") {
    d = metrics::oracle_denoiser();
  } else {
    auto fn = make_baseline(a.denoiser, a.baseline_options);
    d = {a.denoiser, [fn](const data::NoisyPair& p) { return fn(p.mixed); }};
  }
  if (!a.name.empty()) d.name = a.name;
  const auto report = metrics::evaluate(pairs, d, a.options);
  const fs::path out(a.out);
  ensure_dir(out);
  write_json(out / ("report_" + d.name + ".json"), report);
  io::write_file_atomic(out / ("report_" + d.name + ".csv"), metrics::to_csv(report));
  write_json(out / ("evaluate_config_" + d.name + ".json"),
             {{"command", "evaluate"},
              {"index", fs::absolute(a.index).string()},
              {"denoiser", a.denoiser},
              {"checkpoint", a.checkpoint},
              {"name", d.name},
              {"arv_window_ms", a.options.arv_window_ms},
              {"mf_window_ms", a.options.mf_window_ms}});
  const auto& o = report.overall;
  std::printf("%-16s %12s %12s %12s %14s\n", "denoiser", "SNR_imp(dB)", "RMSE", "RMSE_ARV", "RMSE_MF(Hz)");
  std::printf("%-16s %12.3f %12.3e %12.3e %14.3f\n", d.name.c_str(), o.snr_imp_db, o.rmse, o.rmse_arv, o.rmse_mf_hz);
  if (report.excluded > 0) {
    std::fprintf(stderr, "%zu pair(s) excluded:\n", report.excluded);
    for (const auto& e : report.errors) std::fprintf(stderr, "  %s\n", e.c_str());
  }
}

// compare ------------------------------------------------------------------

void cmd_compare(const std::vector<std::string>& paths, const std::string& out) {
  require(paths.size() >= 2, "compare: need at least two reports");
  std::vector<metrics::MetricsReport> reports;
  for (const auto& p : paths) {
    json j;
    try {
      j = json::parse(io::read_file_text(p));
    } catch (const json::exception& e) {
      throw ValidationError(p + ": not valid JSON: " + e.what());
    }
    reports.push_back(metrics::report_from_json_checked(j, p));
  }
  const auto table = metrics::compare(reports);
  std::cout << table.text;
  if (!out.empty()) {
    ensure_dir(out);
    io::write_file_atomic(fs::path(out) / "comparison.csv", table.csv);
    io::write_file_atomic(fs::path(out) / "comparison.txt", table.text);
  }
}

// inspect ------------------------------------------------------------------

void cmd_inspect(const std::string& checkpoint) {
  const auto params = nn::load_checkpoint(checkpoint);
  std::cout << "config:\n" << json(params.config).dump(2) << "\n";
  std::cout << "parameters: " << nn::count_parameters(params.config) << "\n";
  std::cout << "tensors:\n";
  for (const auto& t : params.layout.tensors) {
    std::string shape;
    for (std::size_t i = 0; i < t.shape.size(); ++i) shape += (i ? "x" : "") + std::to_string(t.shape[i]);
    std::printf("  %-28s %-14s %zu\n", t.name.c_str(), shape.c_str(), t.size);
  }
  std::cout << "reference model sizes (published, full scale): FCN 137801, SDEMG 1233857, MSEMG 279937\n";
}

int run(int argc, char** argv) {
  CLI::App app{"sEMG denoising toolkit: selective state-space denoiser, classical baselines, metrics"};
  app.config_formatter(std::make_shared<JsonConfig>());
  app.set_config("--config", "", "JSON config file; flags given on the command line take precedence");
  app.allow_config_extras(CLI::config_extras_mode::error);
  app.require_subcommand(1);

  SynthArgs synth;
  auto* s = app.add_subcommand("synth", "Write a seeded synthetic sEMG/ECG corpus and its manifest");
  s->add_option("--count", synth.count, "Recordings of each kind")->capture_default_str();
  s->add_option("--duration", synth.duration, "Seconds per recording")->capture_default_str();
  s->add_option("--fs", synth.fs, "Sampling rate (Hz)")->capture_default_str();
  s->add_option("--seed", synth.seed, "Random seed")->capture_default_str();
  s->add_option("--out", synth.out, "Output directory")->required();

  MixArgs mix;
  auto* m = app.add_subcommand("mix", "Materialize contaminated pairs of one manifest split");
  m->add_option("--manifest", mix.manifest, "Dataset manifest JSON")->required();
  m->add_option("--split", mix.split, "train, val or test")->capture_default_str();
  m->add_option("--out", mix.out, "Output directory")->required();

  TrainArgs tr;
  auto* t = app.add_subcommand("train", "Train the denoiser on a manifest's train split, validating on val");
  t->add_option("--manifest", tr.manifest, "Dataset manifest JSON")->required();
  t->add_option("--out", tr.out, "Output directory")->required();
  t->add_option("--d-model", tr.model.d_model, "Latent width")->capture_default_str();
  t->add_option("--expand", tr.model.expand, "Inner expansion factor")->capture_default_str();
  t->add_option("--state-dim", tr.model.state_dim, "SSM state size H")->capture_default_str();
  t->add_option("--conv-width", tr.model.conv_width, "Causal depthwise conv width")->capture_default_str();
  t->add_option("--hnf-kernels", tr.model.hnf_kernels, "HNF branch kernel sizes (odd)")->capture_default_str();
  t->add_option("--hnf-branch-channels", tr.model.hnf_branch_channels, "Channels per HNF branch")
      ->capture_default_str();
  t->add_option("--dt-min", tr.model.dt_min, "Lower bound of the initial step size")->capture_default_str();
  t->add_option("--dt-max", tr.model.dt_max, "Upper bound of the initial step size")->capture_default_str();
  t->add_option("--model-seed", tr.model.seed, "Weight initialization seed")->capture_default_str();
  t->add_option("--epochs", tr.train.epochs, "Training epochs")->capture_default_str();
  t->add_option("--batch-size", tr.train.batch_size, "Pairs per optimizer step")->capture_default_str();
  t->add_option("--lr", tr.train.learning_rate, "Adam learning rate")->capture_default_str();
  t->add_option("--seed", tr.train.seed, "Shuffling and cropping seed")->capture_default_str();
  t->add_option("--segment-length", tr.train.segment_length, "Training crop length in samples (0 = whole pair)")
      ->capture_default_str();
  t->add_option("--checkpoint-every", tr.train.checkpoint_every, "Save a checkpoint every N epochs (0 = off)")
      ->capture_default_str();
  t->add_option("--patience", tr.train.patience, "Stop after N epochs without validation gain (0 = off)")
      ->capture_default_str();
  t->add_option("--clip-norm", tr.train.clip_norm, "Global gradient norm limit")->capture_default_str();

  DenoiseArgs dn;
  auto* d = app.add_subcommand("denoise", "Denoise signal files with a checkpoint or a baseline");
  auto* ck = d->add_option("--checkpoint", dn.checkpoint, "Model checkpoint");
  auto* bl = d->add_option("--baseline", dn.baseline, "hp or ts")->check(CLI::IsMember({"hp", "ts"}));
  ck->excludes(bl);
  d->add_option("--input", dn.inputs, "Input signal files")->required();
  d->add_option("--out", dn.out, "Output directory")->required();
  d->add_option("--segment-samples", dn.segment_samples, "Model inference chunk (0 = whole file)")
      ->capture_default_str();
  d->add_option("--hp-cutoff", dn.baseline_options.hp_cutoff, "HP baseline cutoff (Hz)")->capture_default_str();
  d->add_option("--hp-order", dn.baseline_options.hp_order, "HP baseline order")->capture_default_str();
  d->add_option("--ts-window-ms", dn.baseline_options.ts_window_ms, "TS template window (ms)")
      ->capture_default_str();

  EvaluateArgs ev;
  auto* e = app.add_subcommand("evaluate", "Score a denoiser on a pair index");
  e->add_option("--index", ev.index, "index.json written by mix")->required();
  e->add_option("--denoiser", ev.denoiser, "identity, oracle, hp, ts or model")
      ->check(CLI::IsMember({"identity", "oracle", "hp", "ts", "model"}))
      ->capture_default_str();
  e->add_option("--checkpoint", ev.checkpoint, "Checkpoint for --denoiser model");
  e->add_option("--name", ev.name, "Report name (default: denoiser name)");
  e->add_option("--out", ev.out, "Output directory")->required();
  e->add_option("--arv-window-ms", ev.options.arv_window_ms, "ARV window (ms)")->capture_default_str();
  e->add_option("--mf-window-ms", ev.options.mf_window_ms, "MF window (ms)")->capture_default_str();
  e->add_option("--hp-cutoff", ev.baseline_options.hp_cutoff, "HP baseline cutoff (Hz)")->capture_default_str();
  e->add_option("--hp-order", ev.baseline_options.hp_order, "HP baseline order")->capture_default_str();
  e->add_option("--ts-window-ms", ev.baseline_options.ts_window_ms, "TS template window (ms)")
      ->capture_default_str();

  std::vector<std::string> reports;
  std::string compare_out;
  auto* c = app.add_subcommand("compare", "Side-by-side table of evaluation reports");
  c->add_option("reports", reports, "Report JSON files (two or more)")->required();
  c->add_option("--out", compare_out, "Also write comparison.csv / comparison.txt here");

  std::string inspect_path;
  auto* in = app.add_subcommand("inspect", "Print a checkpoint's config and parameter count");
  in->add_option("--checkpoint", inspect_path, "Model checkpoint")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& err) {
    return app.exit(err);
  } catch (const CLI::CallForAllHelp& err) {
    return app.exit(err);
  } catch (const CLI::ParseError& err) {
    app.exit(err);
    return kValidation;
  }

  try {
    if (*s) cmd_synth(synth);
    if (*m) cmd_mix(mix);
    if (*t) cmd_train(tr);
    if (*d) cmd_denoise(dn);
    if (*e) cmd_evaluate(ev);
    if (*c) cmd_compare(reports, compare_out);
    if (*in) cmd_inspect(inspect_path);
  } catch (const ValidationError& err) {
    std::fprintf(stderr, "error: %s\n", err.what());
    return kValidation;
  } catch (const IoError& err) {
    std::fprintf(stderr, "I/O error: %s\n", err.what());
    return kIo;
  } catch (const NumericalError& err) {
    std::fprintf(stderr, "numerical abort in %s\n", err.what());
    return kNumerical;
  } catch (const FormatError& err) {
    std::fprintf(stderr, "format error: %s\n", err.what());
    return kFormat;
  } catch (const std::exception& err) {
    std::fprintf(stderr, "error: %s\n", err.what());
    return kFailure;
  }
  return kOk;
}

}  // namespace

int main(int argc, char** argv) { return run(argc, argv); }
