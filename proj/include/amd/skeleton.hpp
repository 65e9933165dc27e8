#pragma once

#include "amd/types.hpp"

#include <array>

namespace amd {

// 22-joint skeleton in the HumanML3D joint order. rest_offsets are local
// offsets from the parent joint, in meters.
struct SkeletonSpec {
  int joint_count = kJointCount;
  std::array<int, kJointCount> parent_index{};
  std::array<int, 4> foot_joint_indices{};  // left ankle, left toe, right ankle, right toe
  Matd rest_offsets;                        // joint_count x 3
};

SkeletonSpec default_skeleton();

// Rest-pose joint positions with the root at the origin: local offsets
// accumulated along each kinematic chain. joint_count x 3.
Matd rest_pose(const SkeletonSpec& skel);

}  // namespace amd
