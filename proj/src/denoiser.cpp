#include "amd/denoiser.hpp"

#include "amd/init.hpp"

#include <stdexcept>

namespace amd {

void validate_config(const DenoiserConfig& config) {
  if (config.d_model < 2 || config.d_model % 2 != 0) {
    throw std::invalid_argument("denoiser: d_model must be a positive even number");
  }
  if (config.n_heads < 1 || config.d_model % config.n_heads != 0) {
    throw std::invalid_argument("denoiser: d_model (" + std::to_string(config.d_model) +
                                ") must be divisible by n_heads (" +
                                std::to_string(config.n_heads) + ")");
  }
  if (config.n_layers < 1) throw std::invalid_argument("denoiser: n_layers must be positive");
  if (config.ff_multiplier < 1) {
    throw std::invalid_argument("denoiser: ff_multiplier must be positive");
  }
  if (config.max_frames < 1) throw std::invalid_argument("denoiser: max_frames must be positive");
}

DenoiserParams init_denoiser(const DenoiserConfig& config, std::uint64_t seed) {
  validate_config(config);
  const int d = config.d_model;
  const int ff = d * config.ff_multiplier;
  DenoiserParams p;
  p.blocks.resize(std::size_t(config.n_layers));
  for (int i = 0; i < config.n_layers; ++i) {
    BlockParams& b = p.blocks[std::size_t(i)];
    const std::string prefix = "denoiser.block" + std::to_string(i) + ".";
    auto mat = [&](const char* name, int in, int out) {
      return xavier_uniform(in, out, derive_seed(seed, prefix + name));
    };
    b.ln1_g = Mat::Ones(1, d);
    b.ln1_b = zeros_row(d);
    b.wq = mat("wq", d, d);
    b.bq = zeros_row(d);
    b.wk = mat("wk", d, d);
    b.bk = zeros_row(d);
    b.wv = mat("wv", d, d);
    b.bv = zeros_row(d);
    b.wo = mat("wo", d, d);
    b.bo = zeros_row(d);
    b.ln2_g = Mat::Ones(1, d);
    b.ln2_b = zeros_row(d);
    b.ff_w1 = mat("ff_w1", d, ff);
    b.ff_b1 = zeros_row(ff);
    b.ff_w2 = mat("ff_w2", ff, d);
    b.ff_b2 = zeros_row(d);
  }
  p.final_ln_g = Mat::Ones(1, d);
  p.final_ln_b = zeros_row(d);
  p.head_w = xavier_uniform(d, kFeatureDim, derive_seed(seed, "denoiser.head_w"));
  p.head_b = zeros_row(kFeatureDim);
  return p;
}

MotionModel init_model(const DenoiserConfig& config, std::uint64_t seed) {
  validate_config(config);
  MotionModel model;
  model.config = config;
  model.cond = init_condition(config.d_model, derive_seed(seed, "model.cond"));
  model.denoiser = init_denoiser(config, derive_seed(seed, "model.denoiser"));
  return model;
}

MotionClip predict_x0(const ConditionBundle& bundle, const DenoiserParams& params,
                      const DenoiserConfig& config) {
  ad::Tape<float> tape;
  auto vars = make_denoiser_vars(tape, params, /*trainable=*/false);
  CondTokens<float> tokens{tape.constant(bundle.ctx_token), tape.constant(bundle.time_token),
                           tape.constant(bundle.frame_tokens)};
  auto out = predict_x0_graph(tape, vars, tokens, config);
  MotionClip clip;
  clip.frames = out.value();
  return clip;
}

MotionClip guided_predict_x0(const ConditionBundle& cond, const ConditionBundle& masked,
                             const DenoiserParams& params, const DenoiserConfig& config, float s) {
  if (cond.frame_tokens.rows() != masked.frame_tokens.rows()) {
    throw std::invalid_argument("guided_predict_x0: conditional and masked bundles disagree on F");
  }
  if (s == 0.0f) return predict_x0(masked, params, config);
  if (s == 1.0f) return predict_x0(cond, params, config);
  const MotionClip with_cond = predict_x0(cond, params, config);
  const MotionClip without = predict_x0(masked, params, config);
  MotionClip out;
  out.frames = without.frames + s * (with_cond.frames - without.frames);
  out.fps = with_cond.fps;
  return out;
}

}  // namespace amd
