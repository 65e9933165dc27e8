#pragma once

#include "amd/motion.hpp"

#include <array>
#include <cstdint>
#include <string>
#include <vector>

namespace amd {

// One motion archetype the generator can author analytically.
struct MotifSpec {
  std::string name;
  int duration_frames = 48;           // base length, multiple of 4, in [40, 200]
  double amplitude = 0.3;             // meters (stride, kick reach, dip depth, ...)
  double frequency = 1.0;             // cycles per second
  std::vector<int> affected_joints;   // joints the motif animates
};

std::vector<MotifSpec> default_motifs();

struct CorpusConfig {
  int n_records = 64;
  std::vector<MotifSpec> motif_set = default_motifs();
  std::uint64_t seed = 1;
  double fps = 20.0;
  // Fraction of records that carry a prev_id link. Chains of length 2-4 are
  // laid out until the quota is met; the remainder are standalone records.
  double pair_fraction = 0.5;
  int duration_jitter = 2;  // +/- duration classes (4 frames each)
};

struct CorpusRecord {
  std::string id;
  std::string text;
  std::string motif;
  std::string prev_id;  // empty for sequence heads and standalone records
  double amplitude = 0.0;
  double frequency = 0.0;
  MotionClip clip;
};

struct Corpus {
  double fps = 20.0;
  std::vector<CorpusRecord> records;

  const CorpusRecord* find(const std::string& id) const;
  int index_of(const std::string& id) const;  // -1 when absent
};

struct CorpusSplit {
  std::vector<std::string> train;
  std::vector<std::string> test;
  std::vector<std::string> validation;
};

// Deterministic synthetic corpus: analytic per-motif trajectories encoded in
// the 263-channel layout, template prompts with a duration phrase, and
// coherence chains built by splitting one continuous multi-motif trajectory
// on shared standing frames.
Corpus generate_corpus(const CorpusConfig& config);

// Directory layout: corpus.meta (JSON lines; first line is a header record)
// plus clips/<id>.amdm.
void save_corpus(const Corpus& corpus, const std::string& dir);
Corpus load_corpus(const std::string& dir);

// Deterministic split that never separates a coherence chain. Targets follow
// largest-remainder rounding of n * ratio.
CorpusSplit split_corpus(const Corpus& corpus, const std::array<double, 3>& ratios,
                         std::uint64_t seed);

// Prompt vocabulary helpers. Every generated text names its motif through a
// class-unique keyword and carries "for <k> counts" with k = frames/4.
std::string motif_from_text(const std::string& text);  // "" when unrecognized
int counts_from_text(const std::string& text);         // -1 when absent

}  // namespace amd
