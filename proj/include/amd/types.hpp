#pragma once

#include <Eigen/Dense>

#include <cstdint>

namespace amd {

// Dense row-major matrices; motion data is frame-major so rows are frames.
template <class Scalar>
using MatT = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <class Scalar>
using VecT = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;

using Mat = MatT<float>;
using Matd = MatT<double>;
using Vec = VecT<float>;
using Vecd = VecT<double>;

// Per-frame feature layout (HumanML3D ordering).
inline constexpr int kFeatureDim = 263;
inline constexpr int kJointCount = 22;

inline constexpr int kChRootYawVel = 0;   // rad/frame
inline constexpr int kChRootVelX = 1;     // m/frame, root-local
inline constexpr int kChRootVelZ = 2;     // m/frame, root-local
inline constexpr int kChRootHeight = 3;   // m
inline constexpr int kChPosStart = 4;     // 21 joints x 3, root-relative
inline constexpr int kChRotStart = 67;    // 21 joints x 6D rotation
inline constexpr int kChVelStart = 193;   // 22 joints x 3, root-local
inline constexpr int kChContactStart = 259;  // 4 foot-contact labels
inline constexpr int kContactCount = 4;

inline constexpr int pos_channel(int joint) { return kChPosStart + 3 * (joint - 1); }
inline constexpr int rot_channel(int joint) { return kChRotStart + 6 * (joint - 1); }
inline constexpr int vel_channel(int joint) { return kChVelStart + 3 * joint; }

}  // namespace amd
