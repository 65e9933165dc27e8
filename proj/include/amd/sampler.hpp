#pragma once

#include "amd/conditioning.hpp"
#include "amd/denoiser.hpp"
#include "amd/motion.hpp"
#include "amd/schedule.hpp"

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

namespace amd {

struct PromptSequence {
  std::vector<std::string> prompts;
  // Optional per-prompt frame counts; 0 defers to the duration predictor,
  // anything else must be a multiple of 4 in [40, 200]. Empty means all
  // predicted.
  std::vector<int> frame_overrides;
};

struct GeneratedSegment {
  MotionClip clip;
  std::string prompt;
  int frames = 0;
  std::uint64_t seed = 0;
};

struct GeneratedSequence {
  std::vector<GeneratedSegment> segments;
  float fps = 20.0f;
  std::uint64_t master_seed = 0;

  Eigen::Index total_frames() const {
    Eigen::Index total = 0;
    for (const auto& s : segments) total += s.clip.frame_count();
    return total;
  }
};

// Denoiser plugged into the reverse loop: (x_t, t) -> clean-motion estimate.
using DenoisePredictor = std::function<Mat(const Mat& x_t, int t)>;

// Reverse diffusion with an arbitrary predictor; the model-bound overloads
// below wrap this. Output contact channels are clamped to [0, 1].
MotionClip sample_segment_with(const DenoisePredictor& predict, int F, const NoiseSchedule& sched,
                               std::uint64_t seed, float fps = 20.0f);

MotionClip sample_segment(const MotionModel& model, const NoiseSchedule& sched,
                          const MotionClip* prev_motion, const std::string* prev_prompt,
                          const std::string& prompt, int F, std::uint64_t seed,
                          float guidance_scale = 1.0f, float fps = 20.0f);

GeneratedSequence sample_long(const PromptSequence& prompts, const MotionModel& model,
                              const NoiseSchedule& sched, const DurationParams& duration,
                              std::uint64_t seed, float guidance_scale = 1.0f, float fps = 20.0f);

MotionClip sample_joint(const std::string& prompt_a, const std::string& prompt_b, int f_total,
                        const MotionModel& model, const NoiseSchedule& sched, std::uint64_t seed,
                        float guidance_scale = 1.0f, float fps = 20.0f);

// ---------------------------------------------------------------------------
// baseline stitchers

// Cross-fades the last `window` frames of a into the first `window` of b with
// weights (k+1)/(window+1); window 0 is plain concatenation.
MotionClip stitch_interp(const MotionClip& a, const MotionClip& b, int window);

// Window size used by infill stitching: 10% of the combined frame count.
int infill_window(int f_total);

// Diffusion infilling around the junction: frames outside the centered window
// are re-noised from the inputs at every step and restored bit-exactly at the
// end; only the window is synthesized.
MotionClip infill_stitch_with(const DenoisePredictor& predict, const MotionClip& a,
                              const MotionClip& b, const NoiseSchedule& sched, std::uint64_t seed);

MotionClip infill_stitch(const MotionClip& a, const MotionClip& b, const MotionModel& model,
                         const NoiseSchedule& sched, std::uint64_t seed);

// ---------------------------------------------------------------------------
// sequence files

void save_sequence(const GeneratedSequence& seq, const std::string& path);
GeneratedSequence load_sequence(const std::string& path);

}  // namespace amd
