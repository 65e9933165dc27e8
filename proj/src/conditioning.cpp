#include "amd/conditioning.hpp"

#include "amd/init.hpp"

#include <cctype>
#include <cmath>
#include <stdexcept>

namespace amd {

namespace {

std::vector<std::string> tokenize(const std::string& text) {
  std::vector<std::string> out;
  std::string cur;
  for (char c : text) {
    if (std::isalnum(static_cast<unsigned char>(c))) {
      cur.push_back(static_cast<char>(std::tolower(static_cast<unsigned char>(c))));
    } else if (!cur.empty()) {
      out.push_back(cur);
      cur.clear();
    }
  }
  if (!cur.empty()) out.push_back(cur);
  return out;
}

}  // namespace

TextEmbedding embed_text(const std::string& text, int d_model) {
  if (d_model < 1) throw std::invalid_argument("embed_text: d_model must be positive");
  Mat sum = Mat::Zero(1, d_model);
  for (const std::string& token : tokenize(text)) {
    Rng rng(fnv1a64(token));
    Mat v = rng.normal_mat<float>(1, d_model);
    const float norm = v.norm();
    if (norm > 0.0f) v /= norm;
    sum += v;
  }
  const float norm = sum.norm();
  if (norm > 0.0f) sum /= norm;
  return TextEmbedding{std::move(sum)};
}

Vec DurationDistribution::probabilities() const {
  const float mx = logits.maxCoeff();
  Vec p = (logits.array() - mx).exp().matrix();
  p /= p.sum();
  return p;
}

int DurationDistribution::argmax_class() const {
  int best = 0;
  for (int i = 1; i < int(logits.size()); ++i) {
    if (logits[i] > logits[best]) best = i;  // strict: ties keep the lowest class
  }
  return kDurationLMin + best;
}

int DurationDistribution::argmax_frames() const { return duration_class_frames(argmax_class()); }

DurationParams init_duration(int d_model, int hidden, std::uint64_t seed) {
  if (d_model < 1 || hidden < 1) {
    throw std::invalid_argument("init_duration: d_model and hidden must be positive");
  }
  DurationParams p;
  p.w1 = xavier_uniform(d_model, hidden, derive_seed(seed, "duration.w1"));
  p.b1 = zeros_row(hidden);
  p.w2 = xavier_uniform(hidden, kDurationClasses, derive_seed(seed, "duration.w2"));
  p.b2 = zeros_row(kDurationClasses);
  return p;
}

DurationDistribution predict_duration(const TextEmbedding& emb, const DurationParams& params) {
  if (emb.vector.cols() != params.w1.rows()) {
    throw std::invalid_argument("predict_duration: embedding width " +
                                std::to_string(emb.vector.cols()) + " does not match network (" +
                                std::to_string(params.w1.rows()) + ")");
  }
  Mat h = emb.vector * params.w1 + params.b1;
  // Exact GELU, matching the tape op.
  for (Eigen::Index i = 0; i < h.size(); ++i) {
    const float x = h(i);
    h(i) = 0.5f * x * (1.0f + std::erf(x * 0.70710678118654752440f));
  }
  Mat logits = h * params.w2 + params.b2;
  return DurationDistribution{logits.row(0).transpose()};
}

ConditionParams init_condition(int d_model, std::uint64_t seed) {
  if (d_model < 2 || d_model % 2 != 0) {
    throw std::invalid_argument("init_condition: d_model must be a positive even number");
  }
  ConditionParams p;
  p.motion_w = xavier_uniform(kFeatureDim, d_model, derive_seed(seed, "cond.motion_w"));
  p.motion_b = zeros_row(d_model);
  p.text_w = xavier_uniform(d_model, d_model, derive_seed(seed, "cond.text_w"));
  p.text_b = zeros_row(d_model);
  p.pair_w = xavier_uniform(2 * d_model, d_model, derive_seed(seed, "cond.pair_w"));
  p.pair_b = zeros_row(d_model);
  Rng null_rng(derive_seed(seed, "cond.null"));
  p.null_motion = 0.02f * null_rng.normal_mat<float>(1, d_model);
  p.null_text = 0.02f * null_rng.normal_mat<float>(1, d_model);
  p.time_w1 = xavier_uniform(d_model, d_model, derive_seed(seed, "cond.time_w1"));
  p.time_b1 = zeros_row(d_model);
  p.time_w2 = xavier_uniform(d_model, d_model, derive_seed(seed, "cond.time_w2"));
  p.time_b2 = zeros_row(d_model);
  return p;
}

Mat sinusoidal_embedding(double position, int d_model) {
  if (d_model < 2 || d_model % 2 != 0) {
    throw std::invalid_argument("sinusoidal_embedding: d_model must be a positive even number");
  }
  Mat out(1, d_model);
  const int half = d_model / 2;
  for (int i = 0; i < half; ++i) {
    const double rate = std::pow(10000.0, -2.0 * double(i) / double(d_model));
    out(0, 2 * i) = static_cast<float>(std::sin(position * rate));
    out(0, 2 * i + 1) = static_cast<float>(std::cos(position * rate));
  }
  return out;
}

Mat positional_embedding(int frames, int d_model) {
  if (frames < 0) throw std::invalid_argument("positional_embedding: negative frame count");
  Mat out(frames, d_model);
  for (int k = 0; k < frames; ++k) out.row(k) = sinusoidal_embedding(double(k), d_model);
  return out;
}

ConditionBundle build_condition(const MotionClip* prev_motion, const TextEmbedding* prev_text,
                                const TextEmbedding& cur_text, int t, int F,
                                const MotionClip& noisy_motion, bool mask,
                                const ConditionParams& params) {
  ad::Tape<float> tape;
  auto vars = make_condition_vars(tape, params, /*trainable=*/false);
  auto noisy = tape.constant(noisy_motion.frames);
  auto tokens = build_condition_graph(tape, vars, prev_motion, prev_text, cur_text, t, F, noisy,
                                      mask);
  ConditionBundle bundle;
  bundle.ctx_token = tokens.ctx.value();
  bundle.time_token = tokens.time.value();
  bundle.frame_tokens = tokens.frames.value();
  bundle.masked = mask;
  return bundle;
}

}  // namespace amd
