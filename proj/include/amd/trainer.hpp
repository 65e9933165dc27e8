#pragma once

#include "amd/conditioning.hpp"
#include "amd/corpus.hpp"
#include "amd/denoiser.hpp"
#include "amd/evaluator.hpp"
#include "amd/losses.hpp"

#include <cstdint>
#include <string>
#include <vector>

namespace amd {

// Flat training configuration; the on-disk form is a key = value text file
// where every field below has a key and unknown keys are rejected.
struct TrainConfig {
  int steps = 1000;
  double learning_rate = 1e-4;
  int batch_size = 16;
  std::string optimizer = "adamw";  // the only supported choice
  double weight_decay = 0.01;
  std::uint64_t seed = 1;
  LossWeights weights;
  double p_mask = 0.1;  // classifier-free text dropout probability
  int timesteps = 100;
  double beta_start = 1e-4;
  double beta_end = 0.02;
  std::string preset = "desk";  // "desk" (64/2/4) or "paper" (512/6/6)
};

// Model dimensions behind a preset name.
DenoiserConfig preset_config(const std::string& preset);

void validate_train_config(const TrainConfig& config);

// Strict parser: every key exactly once, no unknown keys, '#' comments.
TrainConfig parse_train_config(const std::string& text, const std::string& origin);
TrainConfig load_train_config(const std::string& path);
std::string train_config_to_text(const TrainConfig& config);

// ---------------------------------------------------------------------------
// training loops. All loops are deterministic given (corpus, ids, config):
// step s draws its records, timesteps, noise, and masks from a dedicated
// seeded stream, so histories from identical runs match exactly. steps = 0
// returns the freshly initialized parameters untouched.

struct DenoiserTrainResult {
  MotionModel model;
  std::vector<double> loss_history;  // mean batch loss per step
};

DenoiserTrainResult train_denoiser(const Corpus& corpus, const std::vector<std::string>& train_ids,
                                   const TrainConfig& config);

struct DurationTrainResult {
  DurationParams params;
  std::vector<double> loss_history;
  std::vector<double> accuracy_history;  // full-split argmax accuracy per step
};

DurationTrainResult train_duration(const Corpus& corpus, const std::vector<std::string>& train_ids,
                                   const TrainConfig& config);

struct EvaluatorTrainResult {
  EvaluatorParams params;
  std::vector<double> loss_history;
  std::vector<double> accuracy_history;  // in-batch retrieval accuracy per step
  // Set when the split has a single motif class: the contrastive signal is
  // degenerate, which is reported rather than treated as an error.
  bool degenerate_single_class = false;
};

EvaluatorTrainResult train_evaluator(const Corpus& corpus,
                                     const std::vector<std::string>& train_ids,
                                     const TrainConfig& config);

// In-batch retrieval accuracy of a frozen evaluator over seeded batches of the
// given split; the untrained baseline sits near 1 / batch_size.
double evaluate_retrieval(const EvaluatorParams& params, const Corpus& corpus,
                          const std::vector<std::string>& ids, int batch_size,
                          std::uint64_t seed);

}  // namespace amd
