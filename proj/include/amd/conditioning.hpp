#pragma once

#include "amd/autodiff.hpp"
#include "amd/motion.hpp"
#include "amd/rng.hpp"
#include "amd/types.hpp"

#include <cstdint>
#include <string>
#include <vector>

namespace amd {

// ---------------------------------------------------------------------------
// text embedding

struct TextEmbedding {
  Mat vector;  // 1 x d_model
};

// Deterministic bag-of-words embedder: every token hashes to a fixed unit
// vector, tokens are averaged and the result L2-normalized. Empty text maps
// to the zero vector.
TextEmbedding embed_text(const std::string& text, int d_model);

// ---------------------------------------------------------------------------
// duration prediction

inline constexpr int kDurationLMin = 10;
inline constexpr int kDurationLMax = 50;
inline constexpr int kDurationClasses = kDurationLMax - kDurationLMin + 1;  // 41

inline int duration_class_frames(int k) { return 4 * k; }

struct DurationDistribution {
  Vec logits;  // kDurationClasses, class k = kDurationLMin + index

  Vec probabilities() const;   // softmax over logits
  int argmax_class() const;    // k in [L_min, L_max]; ties break to the lowest
  int argmax_frames() const;   // 4 * argmax_class()
};

struct DurationParams {
  Mat w1, b1;  // d_model -> hidden
  Mat w2, b2;  // hidden -> kDurationClasses

  template <class F>
  void for_each(F&& f) {
    f("duration.w1", w1);
    f("duration.b1", b1);
    f("duration.w2", w2);
    f("duration.b2", b2);
  }
  template <class F>
  void for_each(F&& f) const {
    const_cast<DurationParams*>(this)->for_each(
        [&](const char* name, Mat& m) { f(name, static_cast<const Mat&>(m)); });
  }
};

DurationParams init_duration(int d_model, int hidden, std::uint64_t seed);
DurationDistribution predict_duration(const TextEmbedding& emb, const DurationParams& params);

// ---------------------------------------------------------------------------
// condition assembly (the z of the conditioning equation)

struct ConditionParams {
  Mat motion_w, motion_b;  // 263 -> d; shared by frame tokens and prev pooling
  Mat text_w, text_b;      // d -> d projection of the current text
  Mat pair_w, pair_b;      // 2d -> d projection of (prev motion ++ prev text)
  Mat null_motion;         // 1 x d learned stand-in when no previous motion
  Mat null_text;           // 1 x d learned stand-in when no previous text
  Mat time_w1, time_b1;    // sinusoidal timestep embedding -> d
  Mat time_w2, time_b2;    // d -> d

  template <class F>
  void for_each(F&& f) {
    f("cond.motion_w", motion_w);
    f("cond.motion_b", motion_b);
    f("cond.text_w", text_w);
    f("cond.text_b", text_b);
    f("cond.pair_w", pair_w);
    f("cond.pair_b", pair_b);
    f("cond.null_motion", null_motion);
    f("cond.null_text", null_text);
    f("cond.time_w1", time_w1);
    f("cond.time_b1", time_b1);
    f("cond.time_w2", time_w2);
    f("cond.time_b2", time_b2);
  }
  template <class F>
  void for_each(F&& f) const {
    const_cast<ConditionParams*>(this)->for_each(
        [&](const char* name, Mat& m) { f(name, static_cast<const Mat&>(m)); });
  }
};

ConditionParams init_condition(int d_model, std::uint64_t seed);

struct ConditionBundle {
  Mat ctx_token;     // 1 x d: fused previous context plus (unmasked) current text
  Mat time_token;    // 1 x d
  Mat frame_tokens;  // F x d: projected noisy motion plus positional embedding
  bool masked = false;

  Eigen::Index token_count() const { return 2 + frame_tokens.rows(); }
};

// Fixed sinusoidal tables (non-trainable).
Mat sinusoidal_embedding(double position, int d_model);  // 1 x d
Mat positional_embedding(int frames, int d_model);       // frames x d

ConditionBundle build_condition(const MotionClip* prev_motion, const TextEmbedding* prev_text,
                                const TextEmbedding& cur_text, int t, int F,
                                const MotionClip& noisy_motion, bool mask,
                                const ConditionParams& params);

// ---------------------------------------------------------------------------
// tape graph (single source of truth for the math; the plain build_condition
// runs this graph with constant parameters)

namespace detail {
template <class S>
MatT<S> to_scalar(const Mat& m) {
  if constexpr (std::is_same_v<S, float>) {
    return m;
  } else {
    return m.template cast<S>();
  }
}
}  // namespace detail

template <class S>
struct ConditionVars {
  ad::Var<S> motion_w, motion_b, text_w, text_b, pair_w, pair_b;
  ad::Var<S> null_motion, null_text, time_w1, time_b1, time_w2, time_b2;
};

template <class S>
ConditionVars<S> make_condition_vars(ad::Tape<S>& tape, const ConditionParams& p, bool trainable) {
  auto put = [&](const Mat& m) {
    return trainable ? tape.leaf(detail::to_scalar<S>(m)) : tape.constant(detail::to_scalar<S>(m));
  };
  return ConditionVars<S>{put(p.motion_w),    put(p.motion_b), put(p.text_w),   put(p.text_b),
                          put(p.pair_w),      put(p.pair_b),   put(p.null_motion),
                          put(p.null_text),   put(p.time_w1),  put(p.time_b1),
                          put(p.time_w2),     put(p.time_b2)};
}

template <class S>
struct CondTokens {
  ad::Var<S> ctx;     // 1 x d
  ad::Var<S> time;    // 1 x d
  ad::Var<S> frames;  // F x d
};

template <class S>
CondTokens<S> build_condition_graph(ad::Tape<S>& tape, const ConditionVars<S>& v,
                                    const MotionClip* prev_motion,
                                    const TextEmbedding* prev_text, const TextEmbedding& cur_text,
                                    int t, int F, ad::Var<S> noisy_frames, bool mask) {
  if (t < 1) throw std::invalid_argument("build_condition: timestep must be >= 1");
  if (noisy_frames.rows() != F) {
    throw std::invalid_argument("build_condition: noisy motion has " +
                                std::to_string(noisy_frames.rows()) + " frames, expected " +
                                std::to_string(F));
  }
  if (noisy_frames.cols() != v.motion_w.rows() || cur_text.vector.cols() != v.text_w.rows()) {
    throw std::invalid_argument("build_condition: feature widths do not match the parameters");
  }
  const int d = int(v.motion_w.cols());

  // Previous-segment summary: pooled motion token ++ text embedding, projected
  // back to d. Learned null tokens stand in for an absent first segment.
  ad::Var<S> zm_prev = v.null_motion;
  if (prev_motion != nullptr) {
    auto prev = tape.constant(detail::to_scalar<S>(prev_motion->frames));
    zm_prev = ad::mean_pool_rows(ad::affine(prev, v.motion_w, v.motion_b));
  }
  ad::Var<S> zc_prev = v.null_text;
  if (prev_text != nullptr) zc_prev = tape.constant(detail::to_scalar<S>(prev_text->vector));

  ad::Var<S> ctx = ad::affine(ad::hcat<S>({zm_prev, zc_prev}), v.pair_w, v.pair_b);
  if (!mask) {
    auto cur = tape.constant(detail::to_scalar<S>(cur_text.vector));
    ctx = ad::add(ctx, ad::affine(cur, v.text_w, v.text_b));
  }

  auto t_embed = tape.constant(detail::to_scalar<S>(sinusoidal_embedding(double(t), d)));
  auto time_tok = ad::affine(ad::gelu(ad::affine(t_embed, v.time_w1, v.time_b1)), v.time_w2,
                             v.time_b2);

  auto pe = tape.constant(detail::to_scalar<S>(positional_embedding(F, d)));
  auto frame_toks = ad::add(ad::affine(noisy_frames, v.motion_w, v.motion_b), pe);

  return CondTokens<S>{ctx, time_tok, frame_toks};
}

}  // namespace amd
