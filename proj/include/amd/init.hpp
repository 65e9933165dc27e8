#pragma once

#include "amd/rng.hpp"
#include "amd/types.hpp"

#include <cmath>
#include <cstdint>

namespace amd {

// Xavier/Glorot uniform: weights in +-sqrt(6 / (fan_in + fan_out)).
inline Mat xavier_uniform(Eigen::Index fan_in, Eigen::Index fan_out, std::uint64_t seed) {
  Rng rng(seed);
  const float a = std::sqrt(6.0f / static_cast<float>(fan_in + fan_out));
  return rng.uniform_mat<float>(fan_in, fan_out, -a, a);
}

inline Mat zeros_row(Eigen::Index n) { return Mat::Zero(1, n); }

}  // namespace amd
