#pragma once

#include "amd/conditioning.hpp"
#include "amd/corpus.hpp"
#include "amd/denoiser.hpp"
#include "amd/evaluator.hpp"

#include <cstdint>
#include <string>

namespace amd {

inline constexpr std::uint32_t kCheckpointVersion = 1;

// Trained-artifact container. Components are optional so training commands
// can write a partial checkpoint per component and merge later.
struct Checkpoint {
  DenoiserConfig model_config;
  EvaluatorConfig eval_config;
  int timesteps = 100;
  double beta_start = 1e-4;
  double beta_end = 0.02;
  std::uint64_t fingerprint = 0;  // corpus the components were trained on

  bool has_model = false;
  MotionModel model;
  bool has_duration = false;
  DurationParams duration;
  bool has_evaluator = false;
  EvaluatorParams evaluator;
};

// Order-independent digest of a corpus' ids, texts, links, and frame bytes.
std::uint64_t corpus_fingerprint(const Corpus& corpus);

std::string encode_checkpoint(const Checkpoint& ckpt);
Checkpoint decode_checkpoint(const std::string& data, const std::string& origin);

void save_checkpoint(const Checkpoint& ckpt, const std::string& path);
Checkpoint load_checkpoint(const std::string& path);

// Throws when the checkpoint was trained on a different corpus.
void check_fingerprint(const Checkpoint& ckpt, const Corpus& corpus, const std::string& origin);

}  // namespace amd
