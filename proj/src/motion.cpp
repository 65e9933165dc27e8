#include "amd/motion.hpp"

#include "amd/binio.hpp"
#include "amd/errors.hpp"

#include <cmath>
#include <string>

namespace amd {

SkeletonSpec default_skeleton() {
  SkeletonSpec s;
  s.parent_index = {-1, 0, 0, 0, 1, 2, 3, 4, 5, 6, 7, 8, 9, 9, 9, 12, 13, 14, 16, 17, 18, 19};
  s.foot_joint_indices = {7, 10, 8, 11};
  s.rest_offsets.setZero(kJointCount, 3);
  auto set = [&](int j, double x, double y, double z) { s.rest_offsets.row(j) << x, y, z; };
  // Proportions of a ~1.7 m figure; left/right mirrored in x.
  set(1, 0.09, -0.07, 0.0);    // l_hip
  set(2, -0.09, -0.07, 0.0);   // r_hip
  set(3, 0.0, 0.11, 0.0);      // spine1
  set(4, 0.0, -0.38, 0.0);     // l_knee
  set(5, 0.0, -0.38, 0.0);     // r_knee
  set(6, 0.0, 0.13, 0.0);      // spine2
  set(7, 0.0, -0.40, 0.0);     // l_ankle
  set(8, 0.0, -0.40, 0.0);     // r_ankle
  set(9, 0.0, 0.06, 0.0);      // spine3
  set(10, 0.0, -0.06, 0.12);   // l_toe
  set(11, 0.0, -0.06, 0.12);   // r_toe
  set(12, 0.0, 0.23, 0.0);     // neck
  set(13, 0.07, 0.15, 0.0);    // l_collar
  set(14, -0.07, 0.15, 0.0);   // r_collar
  set(15, 0.0, 0.12, 0.0);     // head
  set(16, 0.11, 0.0, 0.0);     // l_shoulder
  set(17, -0.11, 0.0, 0.0);    // r_shoulder
  set(18, 0.0, -0.27, 0.0);    // l_elbow
  set(19, 0.0, -0.27, 0.0);    // r_elbow
  set(20, 0.0, -0.25, 0.0);    // l_wrist
  set(21, 0.0, -0.25, 0.0);    // r_wrist
  return s;
}

Matd rest_pose(const SkeletonSpec& skel) {
  Matd pose = Matd::Zero(skel.joint_count, 3);
  for (int j = 0; j < skel.joint_count; ++j) {
    const int p = skel.parent_index[j];
    if (p < 0) {
      pose.row(j) = skel.rest_offsets.row(j);
    } else {
      pose.row(j) = pose.row(p) + skel.rest_offsets.row(j);
    }
  }
  return pose;
}

Eigen::Matrix3d yaw_rotation(double theta) {
  const double c = std::cos(theta), s = std::sin(theta);
  Eigen::Matrix3d r;
  r << c, 0, s, 0, 1, 0, -s, 0, c;
  return r;
}

ValidationResult validate_clip(const MotionClip& clip) {
  if (clip.frames.cols() != kFeatureDim) {
    return {false, "feature dimension " + std::to_string(clip.frames.cols()) + " != " +
                       std::to_string(kFeatureDim)};
  }
  if (clip.frames.rows() < 1) return {false, "clip has no frames"};
  if (!clip.frames.allFinite()) return {false, "non-finite value in frames"};
  for (Eigen::Index f = 0; f < clip.frames.rows(); ++f) {
    for (int c = 0; c < kContactCount; ++c) {
      const float v = clip.frames(f, kChContactStart + c);
      if (v < 0.0f || v > 1.0f) {
        return {false, "contact out of range at frame " + std::to_string(f) + " channel " +
                           std::to_string(c) + " (" + std::to_string(v) + ")"};
      }
    }
  }
  return {true, ""};
}

GlobalPose recover_positions(const MotionClip& clip, const SkeletonSpec& skel) {
  const ValidationResult v = validate_clip(clip);
  if (!v.ok) throw std::invalid_argument("recover_positions: " + v.message);

  const Eigen::Index f_count = clip.frames.rows();
  const Matd rest = rest_pose(skel);

  GlobalPose pose;
  pose.heading.setZero(f_count);
  pose.positions.setZero(f_count, 3 * skel.joint_count);

  // heading[k] and root ground position integrate the per-frame velocities of
  // all frames before k, so frame 0 always starts at the identity root.
  double heading = 0.0;
  Eigen::Vector3d root(0.0, 0.0, 0.0);
  for (Eigen::Index f = 0; f < f_count; ++f) {
    pose.heading(f) = heading;
    const Eigen::Matrix3d rot = yaw_rotation(heading);

    root.y() = clip.frames(f, kChRootHeight);
    Eigen::Vector3d ground(root.x(), 0.0, root.z());

    pose.positions.block<1, 3>(f, 0) = root.transpose();
    for (int j = 1; j < skel.joint_count; ++j) {
      Eigen::Vector3d rel;
      const int ch = pos_channel(j);
      rel << clip.frames(f, ch), clip.frames(f, ch + 1), clip.frames(f, ch + 2);
      const Eigen::Vector3d world = rot * (rel + rest.row(j).transpose()) + ground;
      pose.positions.block<1, 3>(f, 3 * j) = world.transpose();
    }

    const Eigen::Vector3d vel(clip.frames(f, kChRootVelX), 0.0, clip.frames(f, kChRootVelZ));
    const Eigen::Vector3d step = rot * vel;
    root.x() += step.x();
    root.z() += step.z();
    heading += clip.frames(f, kChRootYawVel);
  }
  return pose;
}

Mat detect_foot_contacts(const GlobalPose& pose, const SkeletonSpec& skel, double vel_thresh,
                         double height_thresh) {
  if (vel_thresh <= 0.0 || height_thresh <= 0.0) {
    throw std::invalid_argument("detect_foot_contacts: thresholds must be positive");
  }
  const Eigen::Index f_count = pose.frame_count();
  Mat labels = Mat::Zero(f_count, 4);
  if (f_count < 2) return labels;
  for (Eigen::Index f = 0; f + 1 < f_count; ++f) {
    for (int k = 0; k < 4; ++k) {
      const int j = skel.foot_joint_indices[k];
      const double disp = (pose.joint(f + 1, j) - pose.joint(f, j)).norm();
      const double height = pose.joint(f, j).y();
      labels(f, k) = (disp < vel_thresh && height < height_thresh) ? 1.0f : 0.0f;
    }
  }
  labels.row(f_count - 1) = labels.row(f_count - 2);
  return labels;
}

double junction_gap(const MotionClip& a, const MotionClip& b, const SkeletonSpec& skel) {
  const GlobalPose pa = recover_positions(a, skel);
  const GlobalPose pb = recover_positions(b, skel);

  const Eigen::Index last = pa.frame_count() - 1;
  const double theta = pa.heading(last);
  const Eigen::Matrix3d rot = yaw_rotation(theta);
  const Eigen::Vector3d shift(pa.joint(last, 0).x(), 0.0, pa.joint(last, 0).z());

  double gap = 0.0;
  for (int j = 0; j < skel.joint_count; ++j) {
    const Eigen::Vector3d b0 = rot * pb.joint(0, j) + shift;
    gap = std::max(gap, (pa.joint(last, j) - b0).norm());
  }
  return gap;
}

std::string encode_clip(const MotionClip& clip) {
  const ValidationResult v = validate_clip(clip);
  if (!v.ok) throw std::invalid_argument("encode_clip: " + v.message);

  std::string out;
  out.reserve(16 + std::size_t(clip.frames.size()) * 4);
  out += "AMDM";
  binio::put_u32(out, 1);
  binio::put_u32(out, std::uint32_t(clip.frames.rows()));
  binio::put_u32(out, std::uint32_t(clip.frames.cols()));
  for (Eigen::Index f = 0; f < clip.frames.rows(); ++f) {
    for (Eigen::Index c = 0; c < clip.frames.cols(); ++c) binio::put_f32(out, clip.frames(f, c));
  }
  return out;
}

MotionClip decode_clip(const std::string& data, const std::string& origin) {
  binio::Reader r(data, origin);
  if (r.bytes(4) != "AMDM") throw IoError(origin + ": bad magic (not a clip file)");
  const std::uint32_t version = r.u32();
  if (version != 1) throw IoError(origin + ": unsupported clip version " + std::to_string(version));
  const std::uint32_t f_count = r.u32();
  const std::uint32_t dim = r.u32();
  if (dim != std::uint32_t(kFeatureDim)) {
    throw IoError(origin + ": feature dimension " + std::to_string(dim) + " != " +
                  std::to_string(kFeatureDim));
  }
  if (f_count < 1) throw IoError(origin + ": clip has no frames");

  MotionClip clip;
  clip.frames.resize(f_count, dim);
  for (std::uint32_t f = 0; f < f_count; ++f) {
    for (std::uint32_t c = 0; c < dim; ++c) clip.frames(f, c) = r.f32();
  }
  if (!r.at_end()) throw IoError(origin + ": trailing bytes after clip payload");
  return clip;
}

void save_clip(const MotionClip& clip, const std::string& path) {
  binio::write_file_atomic(path, encode_clip(clip));
}

MotionClip load_clip(const std::string& path) { return decode_clip(binio::read_file(path), path); }

}  // namespace amd
