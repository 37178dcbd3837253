#include "msemg/train.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>
#include <set>

#include "msemg/autodiff.hpp"
#include "msemg/errors.hpp"
#include "msemg/metrics.hpp"

namespace msemg::train {

void TrainConfig::validate() const {
  require(epochs >= 0, "train config: epochs must be >= 0");
  require(batch_size >= 1, "train config: batch_size must be >= 1");
  require(learning_rate >= 0 && std::isfinite(learning_rate), "train config: learning_rate must be >= 0");
  require(loss == "mse", "train config: unsupported loss '" + loss + "' (only mse)");
  require(checkpoint_every >= 0, "train config: checkpoint_every must be >= 0");
  require(patience >= 0, "train config: patience must be >= 0");
  require(clip_norm > 0, "train config: clip_norm must be positive");
}

void to_json(nlohmann::json& j, const TrainConfig& c) {
  j = {{"epochs", c.epochs},
       {"batch_size", c.batch_size},
       {"learning_rate", c.learning_rate},
       {"seed", c.seed},
       {"segment_length", c.segment_length},
       {"loss", c.loss},
       {"checkpoint_every", c.checkpoint_every},
       {"patience", c.patience},
       {"clip_norm", c.clip_norm}};
}

void from_json(const nlohmann::json& j, TrainConfig& c) {
  static const std::set<std::string> known = {"epochs", "batch_size", "learning_rate",   "seed",     "segment_length",
                                              "loss",   "checkpoint_every", "patience", "clip_norm"};
  require(j.is_object(), "train config must be a JSON object");
  for (const auto& [key, value] : j.items()) {
    require(known.count(key) == 1, "train config: unknown key '" + key + "'");
  }
  TrainConfig d;
  c.epochs = j.value("epochs", d.epochs);
  c.batch_size = j.value("batch_size", d.batch_size);
  c.learning_rate = j.value("learning_rate", d.learning_rate);
  c.seed = j.value("seed", d.seed);
  c.segment_length = j.value("segment_length", d.segment_length);
  c.loss = j.value("loss", d.loss);
  c.checkpoint_every = j.value("checkpoint_every", d.checkpoint_every);
  c.patience = j.value("patience", d.patience);
  c.clip_norm = j.value("clip_norm", d.clip_norm);
}

void to_json(nlohmann::json& j, const EpochRecord& r) {
  j = {{"epoch", r.epoch},
       {"train_loss", r.train_loss},
       {"val_snr_imp_db", r.val_snr_imp_db},
       {"steps", r.steps},
       {"clipped_steps", r.clipped_steps},
       {"max_grad_norm", r.max_grad_norm}};
}

std::string log_jsonl(const std::vector<EpochRecord>& log) {
  std::string out;
  for (const auto& r : log) out += nlohmann::json(r).dump() + "\n";
  return out;
}

double validation_snr_imp(const nn::ModelParams& params, const std::vector<data::NoisyPair>& pairs) {
  require(!pairs.empty(), "validation: no pairs");
  double acc = 0;
  for (const auto& p : pairs) {
    const Signal out = nn::denoise(params, p.mixed);
    acc += metrics::snr_improvement(p.clean, p.mixed, out).db;
  }
  return acc / static_cast<double>(pairs.size());
}

namespace {

double checked_validation(const nn::ModelParams& params, const std::vector<data::NoisyPair>& pairs, int epoch) {
  try {
    return validation_snr_imp(params, pairs);
  } catch (const NumericalError& e) {
    throw NumericalError(e.op(), "validation after epoch " + std::to_string(epoch) + ": " + e.what() +
                                     ", training aborted");
  }
}

}  // namespace

TrainResult train(const std::vector<data::NoisyPair>& train_set, const std::vector<data::NoisyPair>& val_set,
                  const nn::ModelParams& init, const TrainConfig& config, const EpochCallback& on_epoch) {
  config.validate();
  require(!train_set.empty(), "train: empty training set");
  require(!val_set.empty(), "train: empty validation set");
  const std::size_t length = train_set.front().clean.samples.size();
  for (const auto& p : train_set) {
    require(p.clean.samples.size() == length && p.mixed.samples.size() == length,
            "train: training pairs must all have the same length");
  }
  const std::size_t crop = config.segment_length == 0 ? length : std::min(config.segment_length, length);

  TrainResult result;
  result.last = init;
  result.best = init;
  result.initial_val_snr_imp_db = checked_validation(init, val_set, 0);
  double best_score = result.initial_val_snr_imp_db;
  int since_best = 0;

  std::mt19937_64 rng(config.seed);
  AdamState adam = AdamState::zeros(init.values.size(), config.learning_rate);
  std::vector<std::size_t> order(train_set.size());
  std::vector<float> grad(init.values.size());
  std::vector<float> x(crop), target(crop);

  for (int epoch = 1; epoch <= config.epochs; ++epoch) {
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::shuffle(order.begin(), order.end(), rng);
    EpochRecord rec;
    rec.epoch = epoch;
    double loss_sum = 0;

    for (std::size_t start = 0; start < order.size(); start += static_cast<std::size_t>(config.batch_size)) {
      const std::size_t stop = std::min(order.size(), start + static_cast<std::size_t>(config.batch_size));
      const float weight = 1.0f / static_cast<float>(stop - start);
      std::fill(grad.begin(), grad.end(), 0.0f);
      double batch_loss = 0;
      for (std::size_t b = start; b < stop; ++b) {
        const data::NoisyPair& pair = train_set[order[b]];
        std::size_t offset = 0;
        if (crop < length) offset = std::uniform_int_distribution<std::size_t>(0, length - crop)(rng);
        for (std::size_t i = 0; i < crop; ++i) {
          x[i] = static_cast<float>(pair.mixed.samples[offset + i]);
          target[i] = static_cast<float>(pair.clean.samples[offset + i]);
        }
        float loss = 0;
        try {
          loss = accumulate_gradients<float>(result.last, x, target, grad, weight);
        } catch (const NumericalError& e) {
          throw NumericalError(e.op(), std::string("epoch ") + std::to_string(epoch) + ", pair " +
                                           std::to_string(order[b]) + ": non-finite value, training aborted");
        }
        batch_loss += loss;
      }
      const ClipResult clip = clip_global_norm<float>(grad, config.clip_norm);
      rec.max_grad_norm = std::max(rec.max_grad_norm, clip.norm);
      rec.clipped_steps += clip.clipped ? 1 : 0;
      adam_step<float>(result.last.values, grad, adam);
      loss_sum += batch_loss / static_cast<double>(stop - start);
      rec.steps += 1;
    }
    rec.train_loss = loss_sum / static_cast<double>(std::max(rec.steps, 1));
    if (!std::isfinite(rec.train_loss)) {
      throw NumericalError("train", "non-finite training loss at epoch " + std::to_string(epoch));
    }
    rec.val_snr_imp_db = checked_validation(result.last, val_set, epoch);
    result.log.push_back(rec);

    if (rec.val_snr_imp_db > best_score) {
      best_score = rec.val_snr_imp_db;
      result.best = result.last;
      result.best_epoch = epoch;
      since_best = 0;
    } else {
      since_best += 1;
    }
    if (on_epoch) on_epoch(rec, result.last);
    if (config.patience > 0 && since_best >= config.patience) {
      result.stopped_early = true;
      break;
    }
  }
  return result;
}

}  // namespace msemg::train
