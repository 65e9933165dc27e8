#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <amd/conditioning.hpp>
#include <amd/denoiser.hpp>
#include <amd/rng.hpp>

#include <cmath>
#include <set>
#include <string>
#include <vector>

using namespace amd;

namespace {

MotionClip noise_clip(int frames, std::uint64_t seed) {
  MotionClip clip;
  clip.frames = Rng(seed).normal_mat<float>(frames, kFeatureDim);
  return clip;
}

ConditionBundle make_bundle(int d_model, int F, std::uint64_t seed, bool mask = false) {
  const auto cparams = init_condition(d_model, derive_seed(seed, "cond"));
  const auto text = embed_text("a person walks forward", d_model);
  return build_condition(nullptr, nullptr, text, 5, F, noise_clip(F, derive_seed(seed, "noise")),
                         mask, cparams);
}

// Independent re-derivation of the forward pass with plain Eigen block math.
Mat reference_forward(const ConditionBundle& bundle, const DenoiserParams& p,
                      const DenoiserConfig& cfg) {
  const int F = int(bundle.frame_tokens.rows());
  const int N = F + 2;
  const int d = cfg.d_model;
  Mat z(N, d);
  z.row(0) = bundle.ctx_token;
  z.row(1) = bundle.time_token;
  z.bottomRows(F) = bundle.frame_tokens;

  auto layer_norm = [](const Mat& x, const Mat& g, const Mat& b) {
    Mat out(x.rows(), x.cols());
    for (Eigen::Index r = 0; r < x.rows(); ++r) {
      const float mu = x.row(r).mean();
      const float var = (x.row(r).array() - mu).square().mean();
      out.row(r) =
          (((x.row(r).array() - mu) / std::sqrt(var + 1e-5f)) * g.row(0).array()).matrix() +
          b.row(0);
    }
    return out;
  };
  auto gelu_mat = [](Mat x) {
    for (Eigen::Index i = 0; i < x.size(); ++i) {
      x(i) = 0.5f * x(i) * (1.0f + std::erf(x(i) * 0.70710678f));
    }
    return x;
  };

  const int dh = d / cfg.n_heads;
  for (const BlockParams& blk : p.blocks) {
    const Mat a = layer_norm(z, blk.ln1_g, blk.ln1_b);
    const Mat q = (a * blk.wq).rowwise() + blk.bq.row(0);
    const Mat k = (a * blk.wk).rowwise() + blk.bk.row(0);
    const Mat v = (a * blk.wv).rowwise() + blk.bv.row(0);
    Mat heads(N, d);
    for (int h = 0; h < cfg.n_heads; ++h) {
      const Mat qh = q.middleCols(h * dh, dh);
      const Mat kh = k.middleCols(h * dh, dh);
      const Mat vh = v.middleCols(h * dh, dh);
      Mat scores = qh * kh.transpose() / std::sqrt(float(dh));
      for (Eigen::Index r = 0; r < scores.rows(); ++r) {
        const float mx = scores.row(r).maxCoeff();
        Eigen::ArrayXf e = (scores.row(r).array() - mx).exp();
        scores.row(r) = (e / e.sum()).matrix();
      }
      heads.middleCols(h * dh, dh) = scores * vh;
    }
    z += (heads * blk.wo).rowwise() + blk.bo.row(0);
    const Mat f = layer_norm(z, blk.ln2_g, blk.ln2_b);
    const Mat hidden = gelu_mat((f * blk.ff_w1).rowwise() + blk.ff_b1.row(0));
    z += (hidden * blk.ff_w2).rowwise() + blk.ff_b2.row(0);
  }
  const Mat zf = layer_norm(z, p.final_ln_g, p.final_ln_b);
  return (zf.bottomRows(F) * p.head_w).rowwise() + p.head_b.row(0);
}

}  // namespace

TEST_CASE("config validation rejects inconsistent settings") {
  DenoiserConfig cfg;
  cfg.n_heads = 5;  // 64 % 5 != 0
  CHECK_THROWS_AS(validate_config(cfg), std::invalid_argument);
  cfg = DenoiserConfig{};
  cfg.d_model = 63;
  CHECK_THROWS_AS(validate_config(cfg), std::invalid_argument);
  cfg = DenoiserConfig{};
  cfg.n_layers = 0;
  CHECK_THROWS_AS(validate_config(cfg), std::invalid_argument);
  cfg = DenoiserConfig{};
  cfg.max_frames = 0;
  CHECK_THROWS_AS(validate_config(cfg), std::invalid_argument);
  CHECK_NOTHROW(validate_config(DenoiserConfig{}));
  CHECK_THROWS_AS(init_denoiser(DenoiserConfig{64, 2, 5, 4, 200}, 1), std::invalid_argument);
}

TEST_CASE("init_denoiser is deterministic with unique parameter names") {
  const DenoiserConfig cfg{32, 2, 4, 4, 200};
  const auto a = init_denoiser(cfg, 3);
  const auto b = init_denoiser(cfg, 3);
  const auto c = init_denoiser(cfg, 4);
  CHECK(a.blocks.size() == 2);
  CHECK(a.blocks[0].ff_w1.cols() == 128);
  CHECK(a.blocks[0].wq == b.blocks[0].wq);
  CHECK(a.blocks[0].wq != c.blocks[0].wq);
  CHECK(a.blocks[0].wq != a.blocks[1].wq);
  CHECK(a.head_w.rows() == 32);
  CHECK(a.head_w.cols() == kFeatureDim);

  std::set<std::string> names;
  int count = 0;
  a.for_each([&](const auto& name, const Mat& m) {
    names.insert(std::string(name));
    CHECK(m.size() > 0);
    ++count;
  });
  CHECK(count == 2 * 16 + 4);
  CHECK(int(names.size()) == count);
}

TEST_CASE("predict_x0 returns a deterministic F x 263 estimate") {
  const DenoiserConfig cfg{32, 2, 4, 4, 200};
  const auto params = init_denoiser(cfg, 7);
  const auto bundle = make_bundle(32, 14, 100);
  const MotionClip out1 = predict_x0(bundle, params, cfg);
  const MotionClip out2 = predict_x0(bundle, params, cfg);
  CHECK(out1.frames.rows() == 14);
  CHECK(out1.frames.cols() == kFeatureDim);
  CHECK(out1.frames == out2.frames);
  CHECK(out1.frames.allFinite());
}

TEST_CASE("output stays finite across random inputs") {
  const DenoiserConfig cfg{16, 2, 2, 2, 200};
  const auto params = init_denoiser(cfg, 11);
  Rng rng(55);
  for (int i = 0; i < 100; ++i) {
    const int F = int(rng.uniform_int(1, 20));
    ConditionBundle bundle;
    bundle.ctx_token = rng.normal_mat<float>(1, 16) * 3.0f;
    bundle.time_token = rng.normal_mat<float>(1, 16) * 3.0f;
    bundle.frame_tokens = rng.normal_mat<float>(F, 16) * 3.0f;
    const MotionClip out = predict_x0(bundle, params, cfg);
    CHECK(out.frames.rows() == F);
    CHECK(out.frames.allFinite());
  }
}

TEST_CASE("every conditioning token influences the output") {
  const DenoiserConfig cfg{32, 2, 4, 4, 200};
  const auto params = init_denoiser(cfg, 13);
  const auto base = make_bundle(32, 10, 200);
  const MotionClip ref = predict_x0(base, params, cfg);

  ConditionBundle ctx_bumped = base;
  ctx_bumped.ctx_token.array() += 0.5f;
  CHECK(predict_x0(ctx_bumped, params, cfg).frames != ref.frames);

  ConditionBundle time_bumped = base;
  time_bumped.time_token.array() += 0.5f;
  CHECK(predict_x0(time_bumped, params, cfg).frames != ref.frames);

  ConditionBundle frame_bumped = base;
  frame_bumped.frame_tokens(3, 5) += 0.5f;
  const MotionClip moved = predict_x0(frame_bumped, params, cfg);
  CHECK(moved.frames != ref.frames);
  // Attention mixes tokens, so even other rows shift.
  CHECK(moved.frames.row(0) != ref.frames.row(0));
}

TEST_CASE("frame tokens are processed permutation equivariantly") {
  const DenoiserConfig cfg{16, 2, 4, 2, 200};
  const auto params = init_denoiser(cfg, 17);
  const auto base = make_bundle(16, 8, 300);

  const std::vector<int> perm = {5, 2, 7, 0, 3, 6, 1, 4};
  ConditionBundle shuffled = base;
  for (int k = 0; k < 8; ++k) shuffled.frame_tokens.row(k) = base.frame_tokens.row(perm[k]);

  const MotionClip out_base = predict_x0(base, params, cfg);
  const MotionClip out_shuf = predict_x0(shuffled, params, cfg);
  for (int k = 0; k < 8; ++k) {
    const float diff = (out_shuf.frames.row(k) - out_base.frames.row(perm[k])).cwiseAbs().maxCoeff();
    CHECK(diff < 1e-4f);
  }
}

TEST_CASE("zeroed blocks reduce to layernorm plus linear head") {
  const DenoiserConfig cfg{16, 2, 2, 2, 200};
  auto params = init_denoiser(cfg, 19);
  for (BlockParams& b : params.blocks) {
    b.wq.setZero();
    b.bq.setZero();
    b.wk.setZero();
    b.bk.setZero();
    b.wv.setZero();
    b.bv.setZero();
    b.wo.setZero();
    b.bo.setZero();
    b.ff_w1.setZero();
    b.ff_b1.setZero();
    b.ff_w2.setZero();
    b.ff_b2.setZero();
  }
  const auto bundle = make_bundle(16, 6, 400);
  const MotionClip out = predict_x0(bundle, params, cfg);

  // With every block contribution silenced the tokens pass through untouched.
  Mat tokens(8, 16);
  tokens.row(0) = bundle.ctx_token;
  tokens.row(1) = bundle.time_token;
  tokens.bottomRows(6) = bundle.frame_tokens;
  Mat expected(6, kFeatureDim);
  for (int r = 0; r < 6; ++r) {
    const auto row = tokens.row(r + 2);
    const float mu = row.mean();
    const float var = (row.array() - mu).square().mean();
    const Mat normed = ((row.array() - mu) / std::sqrt(var + 1e-5f)).matrix();
    expected.row(r) = normed * params.head_w + params.head_b.row(0);
  }
  CHECK((out.frames - expected).cwiseAbs().maxCoeff() < 1e-5f);
}

TEST_CASE("forward pass matches an independent implementation") {
  const DenoiserConfig cfg{8, 2, 2, 2, 200};
  const auto params = init_denoiser(cfg, 23);
  ConditionBundle bundle;
  Rng rng(500);
  bundle.ctx_token = rng.normal_mat<float>(1, 8);
  bundle.time_token = rng.normal_mat<float>(1, 8);
  bundle.frame_tokens = rng.normal_mat<float>(5, 8);

  const MotionClip out = predict_x0(bundle, params, cfg);
  const Mat expected = reference_forward(bundle, params, cfg);
  CHECK(out.frames.rows() == expected.rows());
  CHECK((out.frames - expected).cwiseAbs().maxCoeff() < 1e-4f);
}

TEST_CASE("guidance interpolates between masked and conditional predictions") {
  const DenoiserConfig cfg{32, 2, 4, 4, 200};
  const auto params = init_denoiser(cfg, 29);
  const auto cparams = init_condition(32, 31);
  const auto text = embed_text("a person kicks", 32);
  const MotionClip noisy = noise_clip(9, 600);
  const auto cond = build_condition(nullptr, nullptr, text, 4, 9, noisy, false, cparams);
  const auto masked = build_condition(nullptr, nullptr, text, 4, 9, noisy, true, cparams);

  const MotionClip pc = predict_x0(cond, params, cfg);
  const MotionClip pm = predict_x0(masked, params, cfg);
  CHECK(pc.frames != pm.frames);

  CHECK(guided_predict_x0(cond, masked, params, cfg, 0.0f).frames == pm.frames);
  CHECK(guided_predict_x0(cond, masked, params, cfg, 1.0f).frames == pc.frames);

  const MotionClip extrapolated = guided_predict_x0(cond, masked, params, cfg, 2.5f);
  const Mat manual = pm.frames + 2.5f * (pc.frames - pm.frames);
  CHECK((extrapolated.frames - manual).cwiseAbs().maxCoeff() < 1e-6f);

  ConditionBundle short_masked = masked;
  short_masked.frame_tokens = masked.frame_tokens.topRows(5);
  CHECK_THROWS_AS(guided_predict_x0(cond, short_masked, params, cfg, 1.5f),
                  std::invalid_argument);
}

TEST_CASE("shape errors are rejected") {
  const DenoiserConfig cfg{32, 2, 4, 4, 10};
  const auto params = init_denoiser(cfg, 37);
  const auto narrow = make_bundle(16, 5, 700);
  CHECK_THROWS_AS(predict_x0(narrow, params, cfg), std::invalid_argument);

  const auto too_long = make_bundle(32, 11, 800);  // max_frames = 10
  CHECK_THROWS_AS(predict_x0(too_long, params, cfg), std::invalid_argument);

  DenoiserConfig three = cfg;
  three.n_layers = 3;  // params only carry two blocks
  const auto ok_bundle = make_bundle(32, 5, 900);
  CHECK_THROWS_AS(predict_x0(ok_bundle, params, three), std::invalid_argument);

  ConditionBundle empty = ok_bundle;
  empty.frame_tokens = Mat(0, 32);
  CHECK_THROWS_AS(predict_x0(empty, params, cfg), std::invalid_argument);
}

TEST_CASE("graph gradients match finite differences") {
  const DenoiserConfig cfg{8, 1, 2, 2, 200};
  DenoiserParams params = init_denoiser(cfg, 41);
  ConditionBundle bundle;
  Rng rng(1000);
  bundle.ctx_token = rng.normal_mat<float>(1, 8);
  bundle.time_token = rng.normal_mat<float>(1, 8);
  bundle.frame_tokens = rng.normal_mat<float>(3, 8);

  auto loss_value = [&](const DenoiserParams& p) {
    ad::Tape<double> tape;
    auto vars = make_denoiser_vars(tape, p, false);
    CondTokens<double> tok{tape.constant(bundle.ctx_token.cast<double>()),
                           tape.constant(bundle.time_token.cast<double>()),
                           tape.constant(bundle.frame_tokens.cast<double>())};
    auto out = predict_x0_graph(tape, vars, tok, cfg);
    return ad::sum_all(ad::square(out)).value()(0, 0);
  };

  ad::Tape<double> tape;
  auto vars = make_denoiser_vars(tape, params, true);
  CondTokens<double> tok{tape.constant(bundle.ctx_token.cast<double>()),
                         tape.constant(bundle.time_token.cast<double>()),
                         tape.constant(bundle.frame_tokens.cast<double>())};
  auto out = predict_x0_graph(tape, vars, tok, cfg);
  tape.backward(ad::sum_all(ad::square(out)));

  struct Probe {
    Mat* field;
    int var_id;
    Eigen::Index r, c;
  };
  BlockParams& blk = params.blocks[0];
  const std::vector<Probe> probes = {
      {&blk.wq, vars.blocks[0].wq.id, 3, 5},     {&blk.wv, vars.blocks[0].wv.id, 7, 1},
      {&blk.ff_w1, vars.blocks[0].ff_w1.id, 2, 9}, {&blk.ln1_g, vars.blocks[0].ln1_g.id, 0, 4},
      {&params.head_w, vars.head_w.id, 6, 100},  {&blk.bo, vars.blocks[0].bo.id, 0, 2},
  };
  const double h = 1e-5;
  for (const auto& probe : probes) {
    const float saved = (*probe.field)(probe.r, probe.c);
    (*probe.field)(probe.r, probe.c) = float(double(saved) + h);
    const double hi_val = double((*probe.field)(probe.r, probe.c));
    const double hi = loss_value(params);
    (*probe.field)(probe.r, probe.c) = float(double(saved) - h);
    const double lo_val = double((*probe.field)(probe.r, probe.c));
    const double lo = loss_value(params);
    (*probe.field)(probe.r, probe.c) = saved;
    const double fd = (hi - lo) / (hi_val - lo_val);
    const double an = tape.grad(probe.var_id)(probe.r, probe.c);
    CHECK(an == doctest::Approx(fd).epsilon(2e-3));
  }
}
