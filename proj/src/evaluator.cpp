#include "amd/evaluator.hpp"

#include "amd/init.hpp"

#include <stdexcept>

namespace amd {

EvaluatorParams init_evaluator(const EvaluatorConfig& config, std::uint64_t seed) {
  if (config.d_feat < 1 || config.d_hidden < 1 || config.d_text < 1) {
    throw std::invalid_argument("init_evaluator: dimensions must be positive");
  }
  EvaluatorParams p;
  p.config = config;
  p.m_w1 = xavier_uniform(kFeatureDim, config.d_hidden, derive_seed(seed, "evaluator.m_w1"));
  p.m_b1 = zeros_row(config.d_hidden);
  p.m_w2 =
      xavier_uniform(config.d_hidden + 1, config.d_feat, derive_seed(seed, "evaluator.m_w2"));
  p.m_b2 = zeros_row(config.d_feat);
  p.t_w1 = xavier_uniform(config.d_text, config.d_hidden, derive_seed(seed, "evaluator.t_w1"));
  p.t_b1 = zeros_row(config.d_hidden);
  p.t_w2 = xavier_uniform(config.d_hidden, config.d_feat, derive_seed(seed, "evaluator.t_w2"));
  p.t_b2 = zeros_row(config.d_feat);
  return p;
}

Vecd motion_feature(const MotionClip& clip, const EvaluatorParams& params) {
  if (clip.frames.rows() < 1) throw std::invalid_argument("motion_feature: empty clip");
  ad::Tape<double> tape;
  auto vars = make_evaluator_vars<double>(tape, params, /*trainable=*/false);
  auto out = motion_feature_graph(tape, vars, tape.constant(clip.frames.cast<double>()));
  return out.value().row(0).transpose();
}

Vecd text_feature(const std::string& text, const EvaluatorParams& params) {
  const TextEmbedding emb = embed_text(text, params.config.d_text);
  ad::Tape<double> tape;
  auto vars = make_evaluator_vars<double>(tape, params, /*trainable=*/false);
  auto out = text_feature_graph(tape, vars, tape.constant(emb.vector.cast<double>()));
  return out.value().row(0).transpose();
}

}  // namespace amd
