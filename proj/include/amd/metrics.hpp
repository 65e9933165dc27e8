#pragma once

#include "amd/evaluator.hpp"
#include "amd/motion.hpp"
#include "amd/types.hpp"

#include <cstdint>
#include <map>
#include <string>
#include <utility>
#include <vector>

namespace amd {

enum class FeatureMode { deterministic, learned };

inline constexpr int kDeterministicFeatureDim = 32;

// Seed of the fixed projection behind deterministic features. Part of the
// metric definition: reports produced with different seeds are not comparable.
inline constexpr std::uint64_t kFeatureProjectionSeed = 0x64657466656174ULL;

// Deterministic mode projects (temporal mean, temporal std, mean |delta|) of
// the 263 channels through a fixed seeded random matrix; learned mode runs the
// evaluator's motion encoder.
Vecd extract_motion_features(const MotionClip& clip, FeatureMode mode,
                             const EvaluatorParams* evaluator = nullptr);

// Frechet distance between Gaussians fitted to the two feature sets (rows are
// samples). Symmetric matrix square root with eigenvalue clipping.
double fid(const Matd& real_feats, const Matd& gen_feats);

// Mean L2 distance over `pairs` disjoint random pairs.
double diversity(const Matd& feats, int pairs, std::uint64_t seed);

// Mean over texts of the mean pairwise L2 distance between that text's
// generations (exhaustive over pairs; every text needs at least two rows).
double multimodality(const std::map<std::string, Matd>& per_text_feats, std::uint64_t seed);

struct RetrievalResult {
  double r_precision_top3 = 0.0;
  double multimodal_dist = 0.0;
};

// Core retrieval metric over precomputed features: motion i is matched against
// its true text text_ids[i] plus pool_size - 1 sampled mismatched texts.
RetrievalResult r_precision_core(const Matd& motion_feats, const std::vector<int>& text_ids,
                                 const Matd& text_feats, int pool_size, std::uint64_t seed);

RetrievalResult r_precision_and_mmdist(
    const std::vector<std::pair<std::string, const MotionClip*>>& pairs,
    const EvaluatorParams& evaluator, int pool_size, std::uint64_t seed);

struct MetricReport {
  double fid = 0.0;
  double r_precision_top3 = 0.0;
  double multimodal_dist = 0.0;
  double diversity = 0.0;
  double multimodality = 0.0;
  // Half-width of the 95% interval over repetitions, keyed like the metrics.
  std::map<std::string, double> intervals;
  int real_count = 0;
  int generated_count = 0;
  int repetitions = 0;
  std::uint64_t seed = 0;
};

struct SuiteInputs {
  // Ground-truth side: (text, clip) drawn from the corpus test split.
  std::vector<std::pair<std::string, const MotionClip*>> real;
  // Generated side: (prompt, clip); repeated prompts feed multimodality.
  std::vector<std::pair<std::string, const MotionClip*>> generated;
};

struct SuiteOptions {
  int pool_size = 32;
  int diversity_pairs = 50;
  int repetitions = 5;
};

MetricReport evaluate_suite(const SuiteInputs& inputs, const EvaluatorParams& evaluator,
                            std::uint64_t seed, const SuiteOptions& options = {});

// JSON serialization; the "metrics" object carries exactly the five keys
// fid, r_precision_top3, multimodal_dist, diversity, multimodality.
std::string report_to_json(const MetricReport& report);
MetricReport report_from_json(const std::string& text, const std::string& origin);
void save_report(const MetricReport& report, const std::string& path);

}  // namespace amd
