#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <amd/corpus.hpp>
#include <amd/losses.hpp>
#include <amd/motion.hpp>
#include <amd/rng.hpp>

#include <cmath>
#include <vector>

using namespace amd;

namespace {

MotionClip random_valid_clip(int frames, std::uint64_t seed) {
  Rng rng(seed);
  MotionClip clip;
  clip.frames = rng.normal_mat<float>(frames, kFeatureDim) * 0.1f;
  for (int k = 0; k < frames; ++k) {
    for (int c = 0; c < kContactCount; ++c) {
      clip.frames(k, kChContactStart + c) = float(rng.uniform());
    }
  }
  return clip;
}

// Independent loop-based restatement of the five definitions.
struct BruteTerms {
  double h = 0, p = 0, r = 0, v = 0, f = 0;
};

BruteTerms brute_force_terms(const MotionClip& pred, const MotionClip& gt,
                             const SkeletonSpec& skel) {
  const int F = int(pred.frames.rows());
  const GlobalPose wp = recover_positions(pred, skel);
  const GlobalPose wg = recover_positions(gt, skel);
  BruteTerms t;
  for (int k = 0; k < F; ++k) {
    const double dh = double(pred.frames(k, kChRootHeight)) - double(gt.frames(k, kChRootHeight));
    t.h += dh * dh;
    for (int j = 0; j < skel.joint_count; ++j) {
      t.p += (wp.joint(k, j) - wg.joint(k, j)).squaredNorm();
    }
    for (int c = 0; c < 6 * (kJointCount - 1); ++c) {
      const double d =
          double(pred.frames(k, kChRotStart + c)) - double(gt.frames(k, kChRotStart + c));
      t.r += d * d;
    }
    for (int c = 0; c < 3 * kJointCount; ++c) {
      const double d =
          double(pred.frames(k, kChVelStart + c)) - double(gt.frames(k, kChVelStart + c));
      t.v += d * d;
    }
  }
  t.h /= double(F);
  t.p /= double(F) * double(skel.joint_count) * 3.0;
  t.r /= double(F) * double(6 * (kJointCount - 1));
  t.v /= double(F) * double(3 * kJointCount);
  if (F >= 2) {
    for (int k = 0; k + 1 < F; ++k) {
      for (std::size_t ft = 0; ft < skel.foot_joint_indices.size(); ++ft) {
        const int j = skel.foot_joint_indices[ft];
        const double mask = double(gt.frames(k, kChContactStart + int(ft)));
        t.f += mask * (wp.joint(k + 1, j) - wp.joint(k, j)).squaredNorm();
      }
    }
    t.f /= double(F - 1) * double(skel.foot_joint_indices.size());
  }
  return t;
}

Corpus tiny_corpus() {
  CorpusConfig cfg;
  cfg.n_records = 4;
  cfg.seed = 77;
  cfg.pair_fraction = 0.0;
  return generate_corpus(cfg);
}

const CorpusRecord& record_with(const Corpus& corpus, const std::string& motif) {
  for (const auto& rec : corpus.records) {
    if (rec.motif == motif) return rec;
  }
  throw std::runtime_error("missing motif " + motif);
}

}  // namespace

TEST_CASE("all terms vanish when prediction equals self-consistent ground truth") {
  const SkeletonSpec skel = default_skeleton();
  const Corpus corpus = tiny_corpus();
  for (const auto& rec : corpus.records) {
    const LossBreakdown b = geometric_losses(rec.clip, rec.clip, skel, LossWeights{});
    CHECK(b.height == 0.0);
    CHECK(b.position == 0.0);
    CHECK(b.rotation == 0.0);
    CHECK(b.velocity == 0.0);
    if (rec.motif == "wave" || rec.motif == "squat") {
      // These motifs keep planted feet bit-for-bit stationary.
      CHECK(b.foot_slide == 0.0);
      CHECK(b.total == 0.0);
    } else {
      // Gait contacts admit sub-threshold drift, so the slide term keeps a
      // tiny data-dependent floor even at the optimum.
      CHECK(b.foot_slide >= 0.0);
      CHECK(b.foot_slide < 1e-8);
    }
  }
}

TEST_CASE("zero weights zero the total while terms remain") {
  const SkeletonSpec skel = default_skeleton();
  const MotionClip pred = random_valid_clip(12, 1);
  const MotionClip gt = random_valid_clip(12, 2);
  LossWeights w;
  w.lambda_h = w.lambda_p = w.lambda_r = w.lambda_v = w.lambda_f = 0.0;
  const LossBreakdown b = geometric_losses(pred, gt, skel, w);
  CHECK(b.total == 0.0);
  CHECK(b.height > 0.0);
  CHECK(b.position > 0.0);
}

TEST_CASE("weights are validated") {
  const SkeletonSpec skel = default_skeleton();
  const MotionClip clip = random_valid_clip(4, 3);
  LossWeights w;
  w.lambda_r = -0.25;
  CHECK_THROWS_AS(geometric_losses(clip, clip, skel, w), std::invalid_argument);
  w.lambda_r = std::numeric_limits<double>::quiet_NaN();
  CHECK_THROWS_AS(geometric_losses(clip, clip, skel, w), std::invalid_argument);
}

TEST_CASE("shape mismatches are rejected") {
  const SkeletonSpec skel = default_skeleton();
  const MotionClip a = random_valid_clip(6, 4);
  const MotionClip b = random_valid_clip(7, 5);
  CHECK_THROWS_AS(geometric_losses(a, b, skel, LossWeights{}), std::invalid_argument);
}

TEST_CASE("root-height perturbation isolates the height term") {
  const SkeletonSpec skel = default_skeleton();
  const Corpus corpus = tiny_corpus();
  const MotionClip& gt = record_with(corpus, "wave").clip;
  const double delta = 0.03;

  MotionClip pred = gt;
  pred.frames.col(kChRootHeight).array() += float(delta);
  const double actual_delta = double(pred.frames(0, kChRootHeight)) - double(gt.frames(0, kChRootHeight));

  const LossBreakdown b = geometric_losses(pred, gt, skel, LossWeights{});
  CHECK(b.height == doctest::Approx(actual_delta * actual_delta).epsilon(1e-9));
  // Root height feeds exactly one of the 66 world coordinates per frame.
  CHECK(b.position == doctest::Approx(actual_delta * actual_delta / 66.0).epsilon(1e-9));
  CHECK(b.rotation == 0.0);
  CHECK(b.velocity == 0.0);
  CHECK(b.foot_slide == 0.0);

  const BruteTerms t = brute_force_terms(pred, gt, skel);
  CHECK(b.height == doctest::Approx(t.h).epsilon(1e-12));
  CHECK(b.position == doctest::Approx(t.p).epsilon(1e-12));
}

TEST_CASE("terms match a brute-force restatement on random pairs") {
  const SkeletonSpec skel = default_skeleton();
  for (std::uint64_t seed = 10; seed < 16; ++seed) {
    const int frames = 3 + int(seed % 5);
    const MotionClip pred = random_valid_clip(frames, seed);
    const MotionClip gt = random_valid_clip(frames, seed + 100);
    const LossBreakdown b = geometric_losses(pred, gt, skel, LossWeights{});
    const BruteTerms t = brute_force_terms(pred, gt, skel);
    CHECK(b.height == doctest::Approx(t.h).epsilon(1e-9));
    CHECK(b.position == doctest::Approx(t.p).epsilon(1e-9));
    CHECK(b.rotation == doctest::Approx(t.r).epsilon(1e-9));
    CHECK(b.velocity == doctest::Approx(t.v).epsilon(1e-9));
    CHECK(b.foot_slide == doctest::Approx(t.f).epsilon(1e-9));
    const double expected_total = 1.0 * t.h + 1.0 * t.p + 1.0 * t.r + 1.0 * t.v + 0.5 * t.f;
    CHECK(b.total == doctest::Approx(expected_total).epsilon(1e-9));
  }
}

TEST_CASE("total is linear in each weight") {
  const SkeletonSpec skel = default_skeleton();
  const MotionClip pred = random_valid_clip(9, 20);
  const MotionClip gt = random_valid_clip(9, 21);

  LossWeights w;
  const LossBreakdown base = geometric_losses(pred, gt, skel, w);
  w.lambda_p = 3.0;
  const LossBreakdown scaled = geometric_losses(pred, gt, skel, w);
  CHECK(scaled.total - base.total == doctest::Approx(2.0 * base.position).epsilon(1e-12));
  CHECK(scaled.position == base.position);  // the term itself is weight-free

  w = LossWeights{};
  w.lambda_f = 0.0;
  const LossBreakdown no_foot = geometric_losses(pred, gt, skel, w);
  CHECK(base.total - no_foot.total == doctest::Approx(0.5 * base.foot_slide).epsilon(1e-12));
}

TEST_CASE("foot slide charges planted feet that move") {
  const SkeletonSpec skel = default_skeleton();
  const Corpus corpus = tiny_corpus();
  // Waving keeps every foot channel constant: toes planted, ankles airborne.
  const MotionClip& gt = record_with(corpus, "wave").clip;
  const int F = int(gt.frames.rows());
  REQUIRE(gt.frames(0, kChContactStart + 1) == 1.0f);  // left toe planted
  REQUIRE(gt.frames(0, kChContactStart + 3) == 1.0f);  // right toe planted
  REQUIRE(gt.frames(0, kChContactStart + 0) == 0.0f);  // ankles ride higher

  CHECK(geometric_losses(gt, gt, skel, LossWeights{}).foot_slide == 0.0);

  // Slide the left toe 0.01 per frame along x while the label says planted.
  MotionClip pred = gt;
  const int toe_x = pos_channel(skel.foot_joint_indices[1]);
  for (int k = 0; k < F; ++k) pred.frames(k, toe_x) = 0.01f * float(k);

  const LossBreakdown b = geometric_losses(pred, gt, skel, LossWeights{});
  // One of four feet slides with squared speed ~1e-4 on every masked frame;
  // heading and root stay fixed, so channel motion is world motion.
  const double per_frame = double(pred.frames(1, toe_x)) - double(pred.frames(0, toe_x));
  CHECK(b.foot_slide == doctest::Approx(per_frame * per_frame / 4.0).epsilon(1e-5));

  const BruteTerms t = brute_force_terms(pred, gt, skel);
  CHECK(b.foot_slide == doctest::Approx(t.f).epsilon(1e-9));
}

TEST_CASE("single-frame clips have zero foot slide") {
  const SkeletonSpec skel = default_skeleton();
  const MotionClip pred = random_valid_clip(1, 30);
  const MotionClip gt = random_valid_clip(1, 31);
  const LossBreakdown b = geometric_losses(pred, gt, skel, LossWeights{});
  CHECK(b.foot_slide == 0.0);
  CHECK(b.height > 0.0);
}

TEST_CASE("graph recovery agrees with recover_positions") {
  const SkeletonSpec skel = default_skeleton();
  const Corpus corpus = tiny_corpus();
  for (const auto& rec : corpus.records) {
    const GlobalPose pose = recover_positions(rec.clip, skel);
    ad::Tape<double> tape;
    auto world = recover_positions_graph(tape, tape.constant(rec.clip.frames.cast<double>()), skel);
    REQUIRE(world.rows() == pose.positions.rows());
    REQUIRE(world.cols() == pose.positions.cols());
    CHECK((world.value() - pose.positions).cwiseAbs().maxCoeff() < 1e-12);
  }
}

TEST_CASE("analytic gradient matches central finite differences") {
  const SkeletonSpec skel = default_skeleton();
  const MotionClip gt = random_valid_clip(7, 40);
  MotionClip pred = random_valid_clip(7, 41);
  const LossWeights w;

  const auto [breakdown, grad] = geometric_losses_grad(pred, gt, skel, w);
  CHECK(grad.rows() == 7);
  CHECK(grad.cols() == kFeatureDim);
  CHECK(breakdown.total > 0.0);

  auto total_at = [&](const Matd& frames) {
    ad::Tape<double> tape;
    auto p = tape.constant(frames);
    auto g = tape.constant(gt.frames.cast<double>());
    return geometric_losses_graph(tape, p, g, skel, w).total.value()(0, 0);
  };

  const Matd base = pred.frames.cast<double>();
  Rng rng(99);
  const double step = 1e-4;
  for (int probe = 0; probe < 50; ++probe) {
    const int r = int(rng.uniform_int(0, 6));
    const int c = int(rng.uniform_int(0, kFeatureDim - 1));
    Matd hi = base, lo = base;
    hi(r, c) += step;
    lo(r, c) -= step;
    const double fd = (total_at(hi) - total_at(lo)) / (2.0 * step);
    const double an = grad(r, c);
    CHECK(std::abs(an - fd) <= 1e-3 * std::max(std::abs(fd), 1e-8));
  }
}

TEST_CASE("gradient is zero at the optimum and descends the loss") {
  const SkeletonSpec skel = default_skeleton();
  const Corpus corpus = tiny_corpus();
  const MotionClip& gt = record_with(corpus, "squat").clip;

  const auto [at_opt, grad_opt] = geometric_losses_grad(gt, gt, skel, LossWeights{});
  CHECK(at_opt.total == 0.0);
  CHECK(grad_opt.cwiseAbs().maxCoeff() == 0.0);

  MotionClip pred = gt;
  pred.frames.array() += 0.05f;
  const auto [before, grad] = geometric_losses_grad(pred, gt, skel, LossWeights{});
  MotionClip moved = pred;
  moved.frames = (pred.frames.cast<double>() - 1e-3 * grad).cast<float>();
  const LossBreakdown after = geometric_losses(moved, gt, skel, LossWeights{});
  CHECK(after.total < before.total);
}
