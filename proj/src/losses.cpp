#include "amd/losses.hpp"

#include <cmath>

namespace amd {

void validate_weights(const LossWeights& w) {
  for (double v : {w.lambda_h, w.lambda_p, w.lambda_r, w.lambda_v, w.lambda_f}) {
    if (!std::isfinite(v) || v < 0.0) {
      throw std::invalid_argument("loss weights must be finite and non-negative");
    }
  }
}

namespace {

LossBreakdown breakdown_from(const LossVars<double>& vars) {
  LossBreakdown out;
  out.height = vars.height.value()(0, 0);
  out.position = vars.position.value()(0, 0);
  out.rotation = vars.rotation.value()(0, 0);
  out.velocity = vars.velocity.value()(0, 0);
  out.foot_slide = vars.foot_slide.value()(0, 0);
  out.total = vars.total.value()(0, 0);
  return out;
}

}  // namespace

LossBreakdown geometric_losses(const MotionClip& pred, const MotionClip& gt,
                               const SkeletonSpec& skel, const LossWeights& weights) {
  ad::Tape<double> tape;
  auto p = tape.constant(pred.frames.cast<double>());
  auto g = tape.constant(gt.frames.cast<double>());
  return breakdown_from(geometric_losses_graph(tape, p, g, skel, weights));
}

std::pair<LossBreakdown, Matd> geometric_losses_grad(const MotionClip& pred, const MotionClip& gt,
                                                     const SkeletonSpec& skel,
                                                     const LossWeights& weights) {
  ad::Tape<double> tape;
  auto p = tape.leaf(pred.frames.cast<double>());
  auto g = tape.constant(gt.frames.cast<double>());
  auto vars = geometric_losses_graph(tape, p, g, skel, weights);
  tape.backward(vars.total);
  return {breakdown_from(vars), tape.grad(p.id)};
}

}  // namespace amd
