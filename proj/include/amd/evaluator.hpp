#pragma once

#include "amd/autodiff.hpp"
#include "amd/conditioning.hpp"
#include "amd/motion.hpp"
#include "amd/types.hpp"

#include <cstdint>
#include <string>

namespace amd {

// Joint text-motion feature space used by the evaluation metrics. Both
// encoders map into the unit sphere in d_feat dimensions.
struct EvaluatorConfig {
  int d_feat = 32;
  int d_hidden = 64;
  int d_text = 64;  // width of the bag-of-words text embedding fed in
};

struct EvaluatorParams {
  EvaluatorConfig config;
  // motion: 263 -> hidden, mean-pooled, then (pooled ++ normalized duration)
  // -> d_feat. The duration scalar keeps clips of one motif but different
  // lengths separable, matching the "for k counts" phrase on the text side.
  Mat m_w1, m_b1, m_w2, m_b2;
  Mat t_w1, t_b1, t_w2, t_b2;  // text: d_text -> hidden -> d_feat

  template <class F>
  void for_each(F&& f) {
    f("evaluator.m_w1", m_w1);
    f("evaluator.m_b1", m_b1);
    f("evaluator.m_w2", m_w2);
    f("evaluator.m_b2", m_b2);
    f("evaluator.t_w1", t_w1);
    f("evaluator.t_b1", t_b1);
    f("evaluator.t_w2", t_w2);
    f("evaluator.t_b2", t_b2);
  }
  template <class F>
  void for_each(F&& f) const {
    const_cast<EvaluatorParams*>(this)->for_each(
        [&](const char* name, Mat& m) { f(name, static_cast<const Mat&>(m)); });
  }
};

EvaluatorParams init_evaluator(const EvaluatorConfig& config, std::uint64_t seed);

// Unit-norm feature of a motion clip / a text prompt.
Vecd motion_feature(const MotionClip& clip, const EvaluatorParams& params);
Vecd text_feature(const std::string& text, const EvaluatorParams& params);

// ---------------------------------------------------------------------------
// tape graph (used by the contrastive trainer)

template <class S>
struct EvaluatorVars {
  ad::Var<S> m_w1, m_b1, m_w2, m_b2, t_w1, t_b1, t_w2, t_b2;
};

template <class S>
EvaluatorVars<S> make_evaluator_vars(ad::Tape<S>& tape, const EvaluatorParams& p, bool trainable) {
  auto put = [&](const Mat& m) {
    return trainable ? tape.leaf(detail::to_scalar<S>(m)) : tape.constant(detail::to_scalar<S>(m));
  };
  return EvaluatorVars<S>{put(p.m_w1), put(p.m_b1), put(p.m_w2), put(p.m_b2),
                          put(p.t_w1), put(p.t_b1), put(p.t_w2), put(p.t_b2)};
}

// Frame count normalizer for the duration input channel.
inline constexpr double kEvaluatorMaxFrames = 200.0;

// frames: F x 263 -> 1 x d_feat on the unit sphere.
template <class S>
ad::Var<S> motion_feature_graph(ad::Tape<S>& tape, const EvaluatorVars<S>& v,
                                ad::Var<S> frames) {
  if (frames.cols() != v.m_w1.rows()) {
    throw std::invalid_argument("motion_feature: frame width does not match the encoder");
  }
  auto pooled = ad::mean_pool_rows(ad::gelu(ad::affine(frames, v.m_w1, v.m_b1)));
  MatT<S> dur(1, 1);
  dur(0, 0) = S(double(frames.rows()) / kEvaluatorMaxFrames);
  auto with_dur = ad::hcat<S>({pooled, tape.constant(dur)});
  return ad::l2_normalize_rows(ad::affine(with_dur, v.m_w2, v.m_b2));
}

// embedding: 1 x d_text -> 1 x d_feat on the unit sphere.
template <class S>
ad::Var<S> text_feature_graph(ad::Tape<S>& tape, const EvaluatorVars<S>& v,
                              ad::Var<S> embedding) {
  if (embedding.cols() != v.t_w1.rows()) {
    throw std::invalid_argument("text_feature: embedding width does not match the encoder");
  }
  (void)tape;
  return ad::l2_normalize_rows(
      ad::affine(ad::gelu(ad::affine(embedding, v.t_w1, v.t_b1)), v.t_w2, v.t_b2));
}

}  // namespace amd
