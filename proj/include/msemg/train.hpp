#pragma once

// Deterministic training loop: seeded shuffling and cropping, mini-batch MSE
// gradients, global-norm clipping, Adam, and per-epoch validation SNR
// improvement with best-epoch retention.

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "json.hpp"
#include "msemg/data.hpp"
#include "msemg/nn.hpp"

namespace msemg::train {

struct TrainConfig {
  int epochs = 20;
  int batch_size = 8;
  double learning_rate = 1e-3;
  std::uint64_t seed = 0;
  std::size_t segment_length = 0;  // random training crops; 0 = whole pairs
  std::string loss = "mse";
  int checkpoint_every = 0;        // epochs; 0 = only the final/best checkpoint
  int patience = 0;                // epochs without validation gain; 0 = never stop early
  double clip_norm = 1.0;

  void validate() const;
};

/// Unknown keys are rejected; missing keys keep their defaults.
void to_json(nlohmann::json& j, const TrainConfig& c);
void from_json(const nlohmann::json& j, TrainConfig& c);

struct EpochRecord {
  int epoch = 0;
  double train_loss = 0;      // mean batch loss over the epoch
  double val_snr_imp_db = 0;  // after the epoch
  int steps = 0;
  int clipped_steps = 0;
  double max_grad_norm = 0;
};

void to_json(nlohmann::json& j, const EpochRecord& r);

struct TrainResult {
  nn::ModelParams best;  // highest validation SNR improvement, epoch 0 included
  nn::ModelParams last;
  std::vector<EpochRecord> log;
  double initial_val_snr_imp_db = 0;
  int best_epoch = 0;
  bool stopped_early = false;
};

using EpochCallback = std::function<void(const EpochRecord&, const nn::ModelParams&)>;

/// Mean snr_improvement of the model over the pairs (whole-pair inference).
double validation_snr_imp(const nn::ModelParams& params, const std::vector<data::NoisyPair>& pairs);

TrainResult train(const std::vector<data::NoisyPair>& train_set, const std::vector<data::NoisyPair>& val_set,
                  const nn::ModelParams& init, const TrainConfig& config, const EpochCallback& on_epoch = {});

/// One JSON object per line.
std::string log_jsonl(const std::vector<EpochRecord>& log);

}  // namespace msemg::train
