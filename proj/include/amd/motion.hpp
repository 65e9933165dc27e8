#pragma once

#include "amd/skeleton.hpp"
#include "amd/types.hpp"

#include <string>

namespace amd {

// One motion segment: F frames by 263 feature channels (see types.hpp for the
// channel map). Velocities are per-frame; fps is carried as metadata.
struct MotionClip {
  Mat frames;        // F x 263
  float fps = 20.0f;

  Eigen::Index frame_count() const { return frames.rows(); }
};

// World-space joint trajectory. positions packs joint j of frame f at
// (row f, cols 3j..3j+2); heading is the integrated root yaw per frame.
struct GlobalPose {
  Matd positions;  // F x (3 * joint_count)
  Vecd heading;    // F

  Eigen::Index frame_count() const { return positions.rows(); }
  Eigen::Vector3d joint(Eigen::Index frame, int j) const {
    return positions.block<1, 3>(frame, 3 * j).transpose();
  }
};

struct ValidationResult {
  bool ok = true;
  std::string message;  // first violated invariant when !ok
};

// Checks the MotionClip invariants: 263 channels, at least one frame, all
// values finite, contact channels within [0,1]. Reports the first violation.
ValidationResult validate_clip(const MotionClip& clip);

// Integrates root yaw and local root velocity into a world trajectory, then
// places each non-root joint at its heading-rotated (root-relative offset +
// rest-pose position) translated by the root's ground position. Root height
// comes from channel 3.
GlobalPose recover_positions(const MotionClip& clip, const SkeletonSpec& skel);

// Contact label per (frame, foot joint): 1 when the joint moves less than
// vel_thresh between this frame and the next AND sits below height_thresh
// (both strict). The last frame copies the previous frame's labels; a
// single-frame pose gets all zeros.
Mat detect_foot_contacts(const GlobalPose& pose, const SkeletonSpec& skel, double vel_thresh,
                         double height_thresh);

inline double default_vel_thresh(double fps) { return 0.002 * (20.0 / fps); }
inline constexpr double kDefaultHeightThresh = 0.05;

// Worst-joint world distance between a's final pose and b's initial pose once
// b's trajectory is re-rooted to continue a's (b rotated by a's final heading
// and translated to a's final ground position).
double junction_gap(const MotionClip& a, const MotionClip& b, const SkeletonSpec& skel);

// Binary clip file: magic "AMDM", u32 version (1), u32 F, u32 D (263), then
// F*D little-endian f32 values, frame-major.
std::string encode_clip(const MotionClip& clip);
MotionClip decode_clip(const std::string& data, const std::string& origin);
void save_clip(const MotionClip& clip, const std::string& path);
MotionClip load_clip(const std::string& path);

// Yaw rotation about +Y: maps local +Z toward the heading direction.
Eigen::Matrix3d yaw_rotation(double theta);

}  // namespace amd
