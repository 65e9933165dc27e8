#pragma once

#include "amd/autodiff.hpp"
#include "amd/motion.hpp"
#include "amd/types.hpp"

#include <stdexcept>
#include <utility>
#include <vector>

namespace amd {

struct LossWeights {
  double lambda_h = 1.0;
  double lambda_p = 1.0;
  double lambda_r = 1.0;
  double lambda_v = 1.0;
  double lambda_f = 0.5;
};

void validate_weights(const LossWeights& w);

struct LossBreakdown {
  double height = 0.0;
  double position = 0.0;
  double rotation = 0.0;
  double velocity = 0.0;
  double foot_slide = 0.0;
  double total = 0.0;
};

// Five-term geometric loss between a predicted and a ground-truth clip.
LossBreakdown geometric_losses(const MotionClip& pred, const MotionClip& gt,
                               const SkeletonSpec& skel, const LossWeights& weights);

// Same breakdown plus d(total)/d(pred), the gradient the trainer consumes.
std::pair<LossBreakdown, Matd> geometric_losses_grad(const MotionClip& pred, const MotionClip& gt,
                                                     const SkeletonSpec& skel,
                                                     const LossWeights& weights);

// ---------------------------------------------------------------------------
// tape graph

namespace lossdetail {

// Exclusive prefix sum over rows: out[0] = 0, out[k] = sum of rows before k.
template <class S>
ad::Var<S> exclusive_cumsum(ad::Tape<S>& tape, ad::Var<S> column) {
  const int F = int(column.rows());
  auto zero = tape.constant(MatT<S>::Zero(1, 1));
  if (F == 1) return zero;
  return ad::cumsum_rows(ad::vcat<S>({zero, ad::rows(column, 0, F - 1)}));
}

}  // namespace lossdetail

// Differentiable twin of recover_positions: returns world joint positions as
// an F x (3 * joint_count) matrix laid out joint-major, matching
// GlobalPose::positions.
template <class S>
ad::Var<S> recover_positions_graph(ad::Tape<S>& tape, ad::Var<S> pred, const SkeletonSpec& skel) {
  const int F = int(pred.rows());
  if (F < 1 || pred.cols() != kFeatureDim) {
    throw std::invalid_argument("recover_positions_graph: expected F x 263 input");
  }
  const Matd rest = rest_pose(skel);

  auto heading = lossdetail::exclusive_cumsum(tape, ad::cols(pred, kChRootYawVel, 1));
  auto c = ad::cos(heading);
  auto s = ad::sin(heading);

  auto vx = ad::cols(pred, kChRootVelX, 1);
  auto vz = ad::cols(pred, kChRootVelZ, 1);
  auto root_x = lossdetail::exclusive_cumsum(tape, ad::add(ad::mul(c, vx), ad::mul(s, vz)));
  auto root_z = lossdetail::exclusive_cumsum(tape, ad::sub(ad::mul(c, vz), ad::mul(s, vx)));

  std::vector<ad::Var<S>> columns;
  columns.reserve(std::size_t(3 * skel.joint_count));
  columns.push_back(root_x);
  columns.push_back(ad::cols(pred, kChRootHeight, 1));
  columns.push_back(root_z);
  for (int j = 1; j < skel.joint_count; ++j) {
    const int ch = pos_channel(j);
    auto px = ad::add_scalar(ad::cols(pred, ch, 1), S(rest(j, 0)));
    auto py = ad::add_scalar(ad::cols(pred, ch + 1, 1), S(rest(j, 1)));
    auto pz = ad::add_scalar(ad::cols(pred, ch + 2, 1), S(rest(j, 2)));
    columns.push_back(ad::add(ad::add(ad::mul(c, px), ad::mul(s, pz)), root_x));
    columns.push_back(py);
    columns.push_back(ad::add(ad::sub(ad::mul(c, pz), ad::mul(s, px)), root_z));
  }
  return ad::hcat<S>(columns);
}

template <class S>
struct LossVars {
  ad::Var<S> height, position, rotation, velocity, foot_slide, total;
};

template <class S>
LossVars<S> geometric_losses_graph(ad::Tape<S>& tape, ad::Var<S> pred, ad::Var<S> gt,
                                   const SkeletonSpec& skel, const LossWeights& weights) {
  validate_weights(weights);
  const int F = int(pred.rows());
  if (pred.rows() != gt.rows() || pred.cols() != gt.cols() || pred.cols() != kFeatureDim) {
    throw std::invalid_argument("geometric_losses: prediction and ground truth shapes differ");
  }

  auto mse = [&](ad::Var<S> a, ad::Var<S> b) { return ad::mean_all(ad::square(ad::sub(a, b))); };

  auto height = mse(ad::cols(pred, kChRootHeight, 1), ad::cols(gt, kChRootHeight, 1));
  auto world_pred = recover_positions_graph(tape, pred, skel);
  auto world_gt = recover_positions_graph(tape, gt, skel);
  auto position = mse(world_pred, world_gt);
  auto rotation = mse(ad::cols(pred, kChRotStart, 6 * (kJointCount - 1)),
                      ad::cols(gt, kChRotStart, 6 * (kJointCount - 1)));
  auto velocity = mse(ad::cols(pred, kChVelStart, 3 * kJointCount),
                      ad::cols(gt, kChVelStart, 3 * kJointCount));

  // Foot-skate term: squared world velocity of predicted feet on frames where
  // the ground truth marks the foot planted.
  ad::Var<S> foot = tape.constant(MatT<S>::Zero(1, 1));
  if (F >= 2) {
    const MatT<S>& gt_value = gt.value();
    for (std::size_t f = 0; f < skel.foot_joint_indices.size(); ++f) {
      const int joint = skel.foot_joint_indices[f];
      MatT<S> mask(F - 1, 3);
      for (int k = 0; k < F - 1; ++k) {
        mask.row(k).setConstant(gt_value(k, kChContactStart + int(f)));
      }
      auto foot_world = ad::cols(world_pred, 3 * joint, 3);
      auto vel = ad::sub(ad::rows(foot_world, 1, F - 1), ad::rows(foot_world, 0, F - 1));
      foot = ad::add(foot, ad::sum_all(ad::mul(ad::square(vel), tape.constant(mask))));
    }
    foot = ad::scale(foot, S(1) / S((F - 1) * int(skel.foot_joint_indices.size())));
  }

  auto total = ad::add(
      ad::add(ad::add(ad::scale(height, S(weights.lambda_h)), ad::scale(position, S(weights.lambda_p))),
              ad::add(ad::scale(rotation, S(weights.lambda_r)), ad::scale(velocity, S(weights.lambda_v)))),
      ad::scale(foot, S(weights.lambda_f)));
  return LossVars<S>{height, position, rotation, velocity, foot, total};
}

}  // namespace amd
