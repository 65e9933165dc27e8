#include "amd/schedule.hpp"

#include <cmath>
#include <stdexcept>
#include <string>

namespace amd {

double NoiseSchedule::sqrt_alpha_bar(int t) const { return std::sqrt(alpha_bar_t(t)); }

double NoiseSchedule::sqrt_one_minus_alpha_bar(int t) const {
  return std::sqrt(1.0 - alpha_bar_t(t));
}

NoiseSchedule build_linear_schedule(int T, double beta_start, double beta_end) {
  if (T < 1) throw std::invalid_argument("build_linear_schedule: T must be >= 1");
  if (!(beta_start > 0.0 && beta_start <= beta_end && beta_end < 1.0)) {
    throw std::invalid_argument("build_linear_schedule: need 0 < beta_start <= beta_end < 1");
  }
  NoiseSchedule s;
  s.T = T;
  s.beta.resize(T);
  s.alpha.resize(T);
  s.alpha_bar.resize(T);
  double running = 1.0;
  for (int t = 1; t <= T; ++t) {
    const double frac = (T > 1) ? double(t - 1) / double(T - 1) : 0.0;
    const double b = beta_start + (beta_end - beta_start) * frac;
    s.beta(t - 1) = b;
    s.alpha(t - 1) = 1.0 - b;
    running *= 1.0 - b;
    s.alpha_bar(t - 1) = running;
  }
  return s;
}

namespace {

void check_t(int t, const NoiseSchedule& sched, int lo, const char* op) {
  if (t < lo || t > sched.T) {
    throw std::invalid_argument(std::string(op) + ": timestep " + std::to_string(t) +
                                " outside [" + std::to_string(lo) + ", " +
                                std::to_string(sched.T) + "]");
  }
}

void check_shape(const Mat& a, const Mat& b, const char* op) {
  if (a.rows() != b.rows() || a.cols() != b.cols()) {
    throw std::invalid_argument(std::string(op) + ": noise shape (" + std::to_string(b.rows()) +
                                "x" + std::to_string(b.cols()) + ") != signal shape (" +
                                std::to_string(a.rows()) + "x" + std::to_string(a.cols()) + ")");
  }
}

}  // namespace

Mat q_sample(const Mat& x0, int t, const Mat& noise, const NoiseSchedule& sched) {
  check_t(t, sched, 1, "q_sample");
  check_shape(x0, noise, "q_sample");
  const float a = float(sched.sqrt_alpha_bar(t));
  const float b = float(sched.sqrt_one_minus_alpha_bar(t));
  return a * x0 + b * noise;
}

MotionClip q_sample(const MotionClip& x0, int t, const Mat& noise, const NoiseSchedule& sched) {
  MotionClip out;
  out.frames = q_sample(x0.frames, t, noise, sched);
  out.fps = x0.fps;
  return out;
}

Mat renoise_step(const Mat& x0_hat, int s, const Mat& noise, const NoiseSchedule& sched) {
  check_t(s, sched, 0, "renoise_step");
  if (s == 0) return x0_hat;
  return q_sample(x0_hat, s, noise, sched);
}

MotionClip renoise_step(const MotionClip& x0_hat, int s, const Mat& noise,
                        const NoiseSchedule& sched) {
  MotionClip out;
  out.frames = renoise_step(x0_hat.frames, s, noise, sched);
  out.fps = x0_hat.fps;
  return out;
}

}  // namespace amd
