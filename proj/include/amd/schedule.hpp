#pragma once

#include "amd/motion.hpp"
#include "amd/types.hpp"

namespace amd {

// Forward-process tables. Timesteps are 1-indexed (t = 1..T); t = 0 means
// "clean". Storage is 0-based internally, so beta_t(1) reads beta[0].
struct NoiseSchedule {
  int T = 0;
  Vecd beta;       // beta_t
  Vecd alpha;      // 1 - beta_t
  Vecd alpha_bar;  // running product of alpha

  double beta_t(int t) const { return beta(t - 1); }
  double alpha_t(int t) const { return alpha(t - 1); }
  double alpha_bar_t(int t) const { return alpha_bar(t - 1); }
  double sqrt_alpha_bar(int t) const;
  double sqrt_one_minus_alpha_bar(int t) const;
};

// beta rises linearly from beta_start (t=1) to beta_end (t=T).
NoiseSchedule build_linear_schedule(int T, double beta_start, double beta_end);

// Closed-form forward marginal: sqrt(abar_t)*x0 + sqrt(1-abar_t)*noise.
Mat q_sample(const Mat& x0, int t, const Mat& noise, const NoiseSchedule& sched);
MotionClip q_sample(const MotionClip& x0, int t, const Mat& noise, const NoiseSchedule& sched);

// Reverse-process renoising: pushes a clean prediction back to noise scale s.
// s = 0 returns the prediction unchanged (the terminal step of sampling).
Mat renoise_step(const Mat& x0_hat, int s, const Mat& noise, const NoiseSchedule& sched);
MotionClip renoise_step(const MotionClip& x0_hat, int s, const Mat& noise,
                        const NoiseSchedule& sched);

}  // namespace amd
