#pragma once

#include "amd/autodiff.hpp"
#include "amd/conditioning.hpp"
#include "amd/motion.hpp"
#include "amd/types.hpp"

#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

namespace amd {

struct DenoiserConfig {
  int d_model = 64;
  int n_layers = 2;
  int n_heads = 4;
  int ff_multiplier = 4;
  int max_frames = 200;
};

void validate_config(const DenoiserConfig& config);

struct BlockParams {
  Mat ln1_g, ln1_b;      // pre-attention layernorm
  Mat wq, bq, wk, bk, wv, bv, wo, bo;
  Mat ln2_g, ln2_b;      // pre-feedforward layernorm
  Mat ff_w1, ff_b1, ff_w2, ff_b2;
};

struct DenoiserParams {
  std::vector<BlockParams> blocks;
  Mat final_ln_g, final_ln_b;
  Mat head_w, head_b;  // d_model -> kFeatureDim, applied to frame tokens only

  template <class F>
  void for_each(F&& f) {
    for (std::size_t i = 0; i < blocks.size(); ++i) {
      const std::string p = "denoiser.block" + std::to_string(i) + ".";
      BlockParams& b = blocks[i];
      f(p + "ln1_g", b.ln1_g);
      f(p + "ln1_b", b.ln1_b);
      f(p + "wq", b.wq);
      f(p + "bq", b.bq);
      f(p + "wk", b.wk);
      f(p + "bk", b.bk);
      f(p + "wv", b.wv);
      f(p + "bv", b.bv);
      f(p + "wo", b.wo);
      f(p + "bo", b.bo);
      f(p + "ln2_g", b.ln2_g);
      f(p + "ln2_b", b.ln2_b);
      f(p + "ff_w1", b.ff_w1);
      f(p + "ff_b1", b.ff_b1);
      f(p + "ff_w2", b.ff_w2);
      f(p + "ff_b2", b.ff_b2);
    }
    f(std::string("denoiser.final_ln_g"), final_ln_g);
    f(std::string("denoiser.final_ln_b"), final_ln_b);
    f(std::string("denoiser.head_w"), head_w);
    f(std::string("denoiser.head_b"), head_b);
  }
  template <class F>
  void for_each(F&& f) const {
    const_cast<DenoiserParams*>(this)->for_each(
        [&](const auto& name, Mat& m) { f(name, static_cast<const Mat&>(m)); });
  }
};

DenoiserParams init_denoiser(const DenoiserConfig& config, std::uint64_t seed);

MotionClip predict_x0(const ConditionBundle& bundle, const DenoiserParams& params,
                      const DenoiserConfig& config);

// Classifier-free guidance: masked + s * (cond - masked). s = 0 reproduces the
// masked prediction, s = 1 the conditional one.
MotionClip guided_predict_x0(const ConditionBundle& cond, const ConditionBundle& masked,
                             const DenoiserParams& params, const DenoiserConfig& config, float s);

// The conditioning projections and the transformer form one network; they are
// trained, checkpointed and sampled from together.
struct MotionModel {
  DenoiserConfig config;
  ConditionParams cond;
  DenoiserParams denoiser;

  template <class F>
  void for_each(F&& f) {
    cond.for_each(f);
    denoiser.for_each(f);
  }
  template <class F>
  void for_each(F&& f) const {
    cond.for_each(f);
    denoiser.for_each(f);
  }
};

MotionModel init_model(const DenoiserConfig& config, std::uint64_t seed);

// ---------------------------------------------------------------------------
// tape graph

template <class S>
struct BlockVars {
  ad::Var<S> ln1_g, ln1_b, wq, bq, wk, bk, wv, bv, wo, bo, ln2_g, ln2_b, ff_w1, ff_b1, ff_w2,
      ff_b2;
};

template <class S>
struct DenoiserVars {
  std::vector<BlockVars<S>> blocks;
  ad::Var<S> final_ln_g, final_ln_b, head_w, head_b;
};

template <class S>
DenoiserVars<S> make_denoiser_vars(ad::Tape<S>& tape, const DenoiserParams& p, bool trainable) {
  auto put = [&](const Mat& m) {
    return trainable ? tape.leaf(detail::to_scalar<S>(m)) : tape.constant(detail::to_scalar<S>(m));
  };
  DenoiserVars<S> v;
  v.blocks.reserve(p.blocks.size());
  for (const BlockParams& b : p.blocks) {
    v.blocks.push_back(BlockVars<S>{put(b.ln1_g), put(b.ln1_b), put(b.wq), put(b.bq), put(b.wk),
                                    put(b.bk), put(b.wv), put(b.bv), put(b.wo), put(b.bo),
                                    put(b.ln2_g), put(b.ln2_b), put(b.ff_w1), put(b.ff_b1),
                                    put(b.ff_w2), put(b.ff_b2)});
  }
  v.final_ln_g = put(p.final_ln_g);
  v.final_ln_b = put(p.final_ln_b);
  v.head_w = put(p.head_w);
  v.head_b = put(p.head_b);
  return v;
}

// Pre-norm transformer over [ctx, time, frame...] tokens; returns the clean
// motion estimate (F x 263) read off the frame tokens.
template <class S>
ad::Var<S> predict_x0_graph(ad::Tape<S>& tape, const DenoiserVars<S>& v,
                            const CondTokens<S>& tokens, const DenoiserConfig& config) {
  validate_config(config);
  const int d = config.d_model;
  if (tokens.ctx.cols() != d || tokens.time.cols() != d || tokens.frames.cols() != d) {
    throw std::invalid_argument("predict_x0: token width does not match d_model " +
                                std::to_string(d));
  }
  const int F = int(tokens.frames.rows());
  if (F < 1) throw std::invalid_argument("predict_x0: need at least one frame token");
  if (F > config.max_frames) {
    throw std::invalid_argument("predict_x0: " + std::to_string(F) + " frames exceeds max_frames " +
                                std::to_string(config.max_frames));
  }
  if (int(v.blocks.size()) != config.n_layers) {
    throw std::invalid_argument("predict_x0: parameter block count does not match n_layers");
  }

  const int dh = d / config.n_heads;
  const S inv_sqrt_dh = S(1) / std::sqrt(S(dh));

  ad::Var<S> z = ad::vcat<S>({tokens.ctx, tokens.time, tokens.frames});
  for (const BlockVars<S>& b : v.blocks) {
    auto a = ad::layernorm_rows(z, b.ln1_g, b.ln1_b);
    auto q = ad::affine(a, b.wq, b.bq);
    auto k = ad::affine(a, b.wk, b.bk);
    auto val = ad::affine(a, b.wv, b.bv);
    std::vector<ad::Var<S>> heads;
    heads.reserve(std::size_t(config.n_heads));
    for (int h = 0; h < config.n_heads; ++h) {
      auto qh = ad::cols(q, h * dh, dh);
      auto kh = ad::cols(k, h * dh, dh);
      auto vh = ad::cols(val, h * dh, dh);
      auto attn = ad::softmax_rows(ad::scale(ad::matmul(qh, ad::transpose(kh)), inv_sqrt_dh));
      heads.push_back(ad::matmul(attn, vh));
    }
    z = ad::add(z, ad::affine(ad::hcat<S>(heads), b.wo, b.bo));
    auto f = ad::layernorm_rows(z, b.ln2_g, b.ln2_b);
    z = ad::add(z, ad::affine(ad::gelu(ad::affine(f, b.ff_w1, b.ff_b1)), b.ff_w2, b.ff_b2));
  }
  auto zf = ad::layernorm_rows(z, v.final_ln_g, v.final_ln_b);
  return ad::affine(ad::rows(zf, 2, F), v.head_w, v.head_b);
}

}  // namespace amd
