#include "amd/trainer.hpp"

#include "amd/binio.hpp"
#include "amd/rng.hpp"
#include "amd/schedule.hpp"
#include "amd/skeleton.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <numeric>
#include <set>
#include <sstream>
#include <stdexcept>

namespace amd {

namespace {

constexpr double kGradClipNorm = 1.0;
constexpr double kContrastiveTemperature = 0.07;

// Decoupled-weight-decay adaptive-moment optimizer over a flat parameter list.
class AdamW {
 public:
  AdamW(std::vector<Mat*> params, double lr, double weight_decay)
      : params_(std::move(params)), lr_(lr), weight_decay_(weight_decay) {
    m_.reserve(params_.size());
    v_.reserve(params_.size());
    for (const Mat* p : params_) {
      m_.push_back(Mat::Zero(p->rows(), p->cols()));
      v_.push_back(Mat::Zero(p->rows(), p->cols()));
    }
  }

  void step(std::vector<Mat>& grads) {
    double sq = 0.0;
    for (const Mat& g : grads) sq += double(g.squaredNorm());
    const double norm = std::sqrt(sq);
    if (norm > kGradClipNorm) {
      const float scale = float(kGradClipNorm / norm);
      for (Mat& g : grads) g *= scale;
    }

    ++t_;
    const double bias1 = 1.0 - std::pow(kBeta1, t_);
    const double bias2 = 1.0 - std::pow(kBeta2, t_);
    for (std::size_t i = 0; i < params_.size(); ++i) {
      Mat& p = *params_[i];
      m_[i] = float(kBeta1) * m_[i] + float(1.0 - kBeta1) * grads[i];
      v_[i] = float(kBeta2) * v_[i] +
              float(1.0 - kBeta2) * Mat(grads[i].cwiseProduct(grads[i]));
      const Mat m_hat = m_[i] / float(bias1);
      const Mat v_hat = v_[i] / float(bias2);
      p -= float(lr_) * Mat(m_hat.array() / (v_hat.array().sqrt() + float(kEps))).matrix();
      p -= float(lr_ * weight_decay_) * p;
    }
  }

 private:
  static constexpr double kBeta1 = 0.9;
  static constexpr double kBeta2 = 0.999;
  static constexpr double kEps = 1e-8;

  std::vector<Mat*> params_;
  double lr_;
  double weight_decay_;
  std::vector<Mat> m_, v_;
  int t_ = 0;
};

std::vector<Mat*> collect_params(MotionModel& model) {
  std::vector<Mat*> out;
  model.for_each([&](const auto&, Mat& m) { out.push_back(&m); });
  return out;
}

// Var lists mirroring the for_each orders, so grads line up with params.
std::vector<ad::Var<float>> model_var_list(const ConditionVars<float>& c,
                                           const DenoiserVars<float>& d) {
  std::vector<ad::Var<float>> vars = {c.motion_w,   c.motion_b, c.text_w,   c.text_b,
                                      c.pair_w,     c.pair_b,   c.null_motion, c.null_text,
                                      c.time_w1,    c.time_b1,  c.time_w2,  c.time_b2};
  for (const BlockVars<float>& b : d.blocks) {
    vars.insert(vars.end(), {b.ln1_g, b.ln1_b, b.wq, b.bq, b.wk, b.bk, b.wv, b.bv, b.wo, b.bo,
                             b.ln2_g, b.ln2_b, b.ff_w1, b.ff_b1, b.ff_w2, b.ff_b2});
  }
  vars.insert(vars.end(), {d.final_ln_g, d.final_ln_b, d.head_w, d.head_b});
  return vars;
}

std::vector<const CorpusRecord*> resolve_split(const Corpus& corpus,
                                               const std::vector<std::string>& ids,
                                               const char* who) {
  if (ids.empty()) throw std::invalid_argument(std::string(who) + ": empty train split");
  std::vector<const CorpusRecord*> records;
  records.reserve(ids.size());
  for (const std::string& id : ids) {
    const CorpusRecord* rec = corpus.find(id);
    if (rec == nullptr) {
      throw std::invalid_argument(std::string(who) + ": id \"" + id + "\" not in corpus");
    }
    records.push_back(rec);
  }
  return records;
}

bool parse_double(const std::string& s, double& out) {
  try {
    std::size_t pos = 0;
    out = std::stod(s, &pos);
    return pos == s.size();
  } catch (const std::exception&) {
    return false;
  }
}

bool parse_int(const std::string& s, int& out) {
  try {
    std::size_t pos = 0;
    const long v = std::stol(s, &pos);
    if (pos != s.size()) return false;
    out = int(v);
    return long(out) == v;
  } catch (const std::exception&) {
    return false;
  }
}

std::string trim(const std::string& s) {
  std::size_t a = s.find_first_not_of(" \t\r");
  if (a == std::string::npos) return "";
  std::size_t b = s.find_last_not_of(" \t\r");
  return s.substr(a, b - a + 1);
}

}  // namespace

DenoiserConfig preset_config(const std::string& preset) {
  if (preset == "desk") return DenoiserConfig{64, 2, 4, 4, 200};
  if (preset == "paper") return DenoiserConfig{512, 6, 6, 4, 200};
  throw std::invalid_argument("unknown preset \"" + preset + "\" (expected desk or paper)");
}

void validate_train_config(const TrainConfig& config) {
  if (config.steps < 1) throw std::invalid_argument("train config: steps must be >= 1");
  if (!(config.learning_rate > 0.0)) {
    throw std::invalid_argument("train config: learning_rate must be > 0");
  }
  if (config.batch_size < 1) throw std::invalid_argument("train config: batch_size must be >= 1");
  if (config.optimizer != "adamw") {
    throw std::invalid_argument("train config: optimizer must be adamw, got \"" +
                                config.optimizer + "\"");
  }
  if (!(config.weight_decay >= 0.0)) {
    throw std::invalid_argument("train config: weight_decay must be >= 0");
  }
  validate_weights(config.weights);
  if (!(config.p_mask >= 0.0 && config.p_mask < 1.0)) {
    throw std::invalid_argument("train config: p_mask must lie in [0, 1)");
  }
  if (config.timesteps < 1) throw std::invalid_argument("train config: timesteps must be >= 1");
  if (!(config.beta_start > 0.0 && config.beta_end < 1.0 &&
        config.beta_start <= config.beta_end)) {
    throw std::invalid_argument("train config: need 0 < beta_start <= beta_end < 1");
  }
  (void)preset_config(config.preset);
}

TrainConfig parse_train_config(const std::string& text, const std::string& origin) {
  std::map<std::string, std::string> kv;
  std::istringstream in(text);
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    const std::size_t hash = line.find('#');
    if (hash != std::string::npos) line = line.substr(0, hash);
    line = trim(line);
    if (line.empty()) continue;
    const std::size_t eq = line.find('=');
    if (eq == std::string::npos) {
      throw IoError(origin + ":" + std::to_string(line_no) + ": expected key = value");
    }
    const std::string key = trim(line.substr(0, eq));
    const std::string value = trim(line.substr(eq + 1));
    if (key.empty() || value.empty()) {
      throw IoError(origin + ":" + std::to_string(line_no) + ": expected key = value");
    }
    if (!kv.emplace(key, value).second) {
      throw IoError(origin + ": duplicate key \"" + key + "\"");
    }
  }

  TrainConfig config;
  std::set<std::string> known;
  auto take = [&](const std::string& key) {
    known.insert(key);
    const auto it = kv.find(key);
    if (it == kv.end()) throw IoError(origin + ": missing required key \"" + key + "\"");
    return it->second;
  };
  auto take_int = [&](const std::string& key, int& out) {
    const std::string v = take(key);
    if (!parse_int(v, out)) throw IoError(origin + ": key \"" + key + "\" is not an integer");
  };
  auto take_double = [&](const std::string& key, double& out) {
    const std::string v = take(key);
    if (!parse_double(v, out)) throw IoError(origin + ": key \"" + key + "\" is not a number");
  };

  take_int("steps", config.steps);
  take_double("learning_rate", config.learning_rate);
  take_int("batch_size", config.batch_size);
  config.optimizer = take("optimizer");
  take_double("weight_decay", config.weight_decay);
  {
    const std::string v = take("seed");
    try {
      std::size_t pos = 0;
      config.seed = std::stoull(v, &pos);
      if (pos != v.size()) throw std::invalid_argument(v);
    } catch (const std::exception&) {
      throw IoError(origin + ": key \"seed\" is not an unsigned integer");
    }
  }
  take_double("lambda_height", config.weights.lambda_h);
  take_double("lambda_position", config.weights.lambda_p);
  take_double("lambda_rotation", config.weights.lambda_r);
  take_double("lambda_velocity", config.weights.lambda_v);
  take_double("lambda_foot", config.weights.lambda_f);
  take_double("p_mask", config.p_mask);
  take_int("timesteps", config.timesteps);
  take_double("beta_start", config.beta_start);
  take_double("beta_end", config.beta_end);
  config.preset = take("preset");

  for (const auto& [key, value] : kv) {
    (void)value;
    if (!known.count(key)) throw IoError(origin + ": unknown key \"" + key + "\"");
  }
  validate_train_config(config);
  return config;
}

TrainConfig load_train_config(const std::string& path) {
  return parse_train_config(binio::read_file(path), path);
}

std::string train_config_to_text(const TrainConfig& config) {
  std::ostringstream out;
  out << "steps = " << config.steps << "\n";
  out << "learning_rate = " << config.learning_rate << "\n";
  out << "batch_size = " << config.batch_size << "\n";
  out << "optimizer = " << config.optimizer << "\n";
  out << "weight_decay = " << config.weight_decay << "\n";
  out << "seed = " << config.seed << "\n";
  out << "lambda_height = " << config.weights.lambda_h << "\n";
  out << "lambda_position = " << config.weights.lambda_p << "\n";
  out << "lambda_rotation = " << config.weights.lambda_r << "\n";
  out << "lambda_velocity = " << config.weights.lambda_v << "\n";
  out << "lambda_foot = " << config.weights.lambda_f << "\n";
  out << "p_mask = " << config.p_mask << "\n";
  out << "timesteps = " << config.timesteps << "\n";
  out << "beta_start = " << config.beta_start << "\n";
  out << "beta_end = " << config.beta_end << "\n";
  out << "preset = " << config.preset << "\n";
  return out.str();
}

// ---------------------------------------------------------------------------
// denoiser

DenoiserTrainResult train_denoiser(const Corpus& corpus, const std::vector<std::string>& train_ids,
                                   const TrainConfig& config) {
  const auto records = resolve_split(corpus, train_ids, "train_denoiser");
  const DenoiserConfig model_config = preset_config(config.preset);
  const NoiseSchedule sched =
      build_linear_schedule(config.timesteps, config.beta_start, config.beta_end);
  const SkeletonSpec skel = default_skeleton();

  DenoiserTrainResult result;
  result.model = init_model(model_config, derive_seed(config.seed, "model.init"));

  // Cache per-record embeddings and previous-record links once.
  std::vector<TextEmbedding> embeds;
  std::vector<const CorpusRecord*> prevs;
  for (const CorpusRecord* rec : records) {
    embeds.push_back(embed_text(rec->text, model_config.d_model));
    prevs.push_back(rec->prev_id.empty() ? nullptr : corpus.find(rec->prev_id));
    if (!rec->prev_id.empty() && prevs.back() == nullptr) {
      throw std::invalid_argument("train_denoiser: record " + rec->id +
                                  " links to missing prev " + rec->prev_id);
    }
  }
  std::map<const CorpusRecord*, TextEmbedding> prev_embeds;
  for (const CorpusRecord* prev : prevs) {
    if (prev != nullptr && !prev_embeds.count(prev)) {
      prev_embeds.emplace(prev, embed_text(prev->text, model_config.d_model));
    }
  }

  std::vector<Mat*> params = collect_params(result.model);
  AdamW opt(params, config.learning_rate, config.weight_decay);
  const std::uint64_t loop_seed = derive_seed(config.seed, "denoiser.step");

  for (int step = 0; step < config.steps; ++step) {
    Rng rng(derive_seed(loop_seed, std::uint64_t(step)));
    std::vector<Mat> grads;
    for (const Mat* p : params) grads.push_back(Mat::Zero(p->rows(), p->cols()));
    double loss_sum = 0.0;

    for (int b = 0; b < config.batch_size; ++b) {
      const int idx = int(rng.uniform_int(0, int(records.size()) - 1));
      const CorpusRecord* rec = records[std::size_t(idx)];
      const int F = int(rec->clip.frame_count());
      const int t = int(rng.uniform_int(1, sched.T));
      const Mat noise = rng.normal_mat<float>(F, kFeatureDim);
      const bool mask = rng.bernoulli(config.p_mask);
      const Mat x_t = q_sample(rec->clip.frames, t, noise, sched);

      const CorpusRecord* prev = prevs[std::size_t(idx)];
      const TextEmbedding* prev_emb = prev ? &prev_embeds.at(prev) : nullptr;
      const MotionClip* prev_motion = prev ? &prev->clip : nullptr;

      ad::Tape<float> tape;
      auto cv = make_condition_vars(tape, result.model.cond, true);
      auto dv = make_denoiser_vars(tape, result.model.denoiser, true);
      auto noisy = tape.constant(x_t);
      auto tokens = build_condition_graph(tape, cv, prev_motion, prev_emb,
                                          embeds[std::size_t(idx)], t, F, noisy, mask);
      auto pred = predict_x0_graph(tape, dv, tokens, model_config);
      auto gt = tape.constant(rec->clip.frames);
      auto losses = geometric_losses_graph(tape, pred, gt, skel, config.weights);

      const double loss = double(losses.total.value()(0, 0));
      if (!std::isfinite(loss)) {
        throw std::runtime_error("train_denoiser: non-finite loss at step " +
                                 std::to_string(step) + ", record " + rec->id);
      }
      loss_sum += loss;

      tape.backward(losses.total);
      const auto vars = model_var_list(cv, dv);
      for (std::size_t i = 0; i < vars.size(); ++i) grads[i] += tape.grad(vars[i].id);
    }

    for (Mat& g : grads) g /= float(config.batch_size);
    opt.step(grads);
    result.loss_history.push_back(loss_sum / config.batch_size);
  }
  return result;
}

// ---------------------------------------------------------------------------
// duration predictor

DurationTrainResult train_duration(const Corpus& corpus, const std::vector<std::string>& train_ids,
                                   const TrainConfig& config) {
  const auto records = resolve_split(corpus, train_ids, "train_duration");
  const DenoiserConfig model_config = preset_config(config.preset);

  std::vector<TextEmbedding> embeds;
  std::vector<int> classes;  // 0-based class index
  for (const CorpusRecord* rec : records) {
    const int F = int(rec->clip.frame_count());
    if (F % 4 != 0) {
      throw std::invalid_argument("train_duration: record " + rec->id + " has " +
                                  std::to_string(F) + " frames, not a multiple of 4");
    }
    const int k = F / 4;
    if (k < kDurationLMin || k > kDurationLMax) {
      throw std::invalid_argument("train_duration: record " + rec->id + " duration class " +
                                  std::to_string(k) + " outside [" +
                                  std::to_string(kDurationLMin) + ", " +
                                  std::to_string(kDurationLMax) + "]");
    }
    embeds.push_back(embed_text(rec->text, model_config.d_model));
    classes.push_back(k - kDurationLMin);
  }

  DurationTrainResult result;
  result.params = init_duration(model_config.d_model, 2 * model_config.d_model,
                                derive_seed(config.seed, "duration.init"));
  std::vector<Mat*> params = {&result.params.w1, &result.params.b1, &result.params.w2,
                              &result.params.b2};
  AdamW opt(params, config.learning_rate, config.weight_decay);
  const std::uint64_t loop_seed = derive_seed(config.seed, "duration.step");

  auto split_accuracy = [&] {
    int hits = 0;
    for (std::size_t i = 0; i < records.size(); ++i) {
      const DurationDistribution dist = predict_duration(embeds[i], result.params);
      if (dist.argmax_frames() == int(records[i]->clip.frame_count())) ++hits;
    }
    return double(hits) / double(records.size());
  };

  for (int step = 0; step < config.steps; ++step) {
    Rng rng(derive_seed(loop_seed, std::uint64_t(step)));
    const int n = int(records.size());
    Mat batch_emb(config.batch_size, model_config.d_model);
    Mat onehot = Mat::Zero(config.batch_size, kDurationClasses);
    for (int b = 0; b < config.batch_size; ++b) {
      const int idx = int(rng.uniform_int(0, n - 1));
      batch_emb.row(b) = embeds[std::size_t(idx)].vector;
      onehot(b, classes[std::size_t(idx)]) = 1.0f;
    }

    ad::Tape<float> tape;
    auto w1 = tape.leaf(result.params.w1);
    auto b1 = tape.leaf(result.params.b1);
    auto w2 = tape.leaf(result.params.w2);
    auto b2 = tape.leaf(result.params.b2);
    auto x = tape.constant(batch_emb);
    auto logits = ad::affine(ad::gelu(ad::affine(x, w1, b1)), w2, b2);
    auto picked = ad::mul(ad::log_softmax_rows(logits), tape.constant(onehot));
    auto loss = ad::scale(ad::sum_all(picked), -1.0f / float(config.batch_size));

    const double loss_value = double(loss.value()(0, 0));
    if (!std::isfinite(loss_value)) {
      throw std::runtime_error("train_duration: non-finite loss at step " + std::to_string(step));
    }
    tape.backward(loss);
    std::vector<Mat> grads = {tape.grad(w1.id), tape.grad(b1.id), tape.grad(w2.id),
                              tape.grad(b2.id)};
    opt.step(grads);

    result.loss_history.push_back(loss_value);
    result.accuracy_history.push_back(split_accuracy());
  }
  return result;
}

// ---------------------------------------------------------------------------
// contrastive evaluator

namespace {

// Symmetric cross-entropy over in-batch pairs; also reports row-wise argmax
// retrieval accuracy of the similarity matrix.
struct ContrastiveStep {
  double loss = 0.0;
  double accuracy = 0.0;
  std::vector<Mat> grads;
};

ContrastiveStep contrastive_step(const EvaluatorParams& eval,
                                 const std::vector<const CorpusRecord*>& batch,
                                 const std::vector<TextEmbedding>& text_embeds, bool with_grads) {
  const int B = int(batch.size());
  ad::Tape<float> tape;
  auto v = make_evaluator_vars(tape, eval, with_grads);

  std::vector<ad::Var<float>> motion_rows, text_rows;
  for (int b = 0; b < B; ++b) {
    auto frames = tape.constant(batch[std::size_t(b)]->clip.frames);
    motion_rows.push_back(motion_feature_graph(tape, v, frames));
    auto emb = tape.constant(text_embeds[std::size_t(b)].vector);
    text_rows.push_back(text_feature_graph(tape, v, emb));
  }
  auto m = ad::vcat<float>(motion_rows);
  auto t = ad::vcat<float>(text_rows);
  auto sim = ad::scale(ad::matmul(m, ad::transpose(t)), float(1.0 / kContrastiveTemperature));

  Mat eye = Mat::Zero(B, B);
  for (int i = 0; i < B; ++i) eye(i, i) = 1.0f;
  auto diag = tape.constant(eye);
  auto loss_m = ad::scale(ad::sum_all(ad::mul(ad::log_softmax_rows(sim), diag)), -1.0f / B);
  auto loss_t = ad::scale(
      ad::sum_all(ad::mul(ad::log_softmax_rows(ad::transpose(sim)), diag)), -1.0f / B);
  auto loss = ad::scale(ad::add(loss_m, loss_t), 0.5f);

  ContrastiveStep out;
  out.loss = double(loss.value()(0, 0));
  const Mat& s = sim.value();
  int hits = 0;
  for (int i = 0; i < B; ++i) {
    int best = 0;
    for (int j = 1; j < B; ++j) {
      if (s(i, j) > s(i, best)) best = j;
    }
    if (best == i) ++hits;
  }
  out.accuracy = double(hits) / B;

  if (with_grads) {
    tape.backward(loss);
    const std::vector<ad::Var<float>> vars = {v.m_w1, v.m_b1, v.m_w2, v.m_b2,
                                              v.t_w1, v.t_b1, v.t_w2, v.t_b2};
    for (const auto& var : vars) out.grads.push_back(tape.grad(var.id));
  }
  return out;
}

std::vector<const CorpusRecord*> draw_batch(const std::vector<const CorpusRecord*>& records,
                                            int batch_size, Rng& rng) {
  const int n = int(records.size());
  const int B = std::min(batch_size, n);
  std::vector<int> idx(static_cast<std::size_t>(n));
  std::iota(idx.begin(), idx.end(), 0);
  for (int i = 0; i < B; ++i) {
    std::swap(idx[std::size_t(i)], idx[std::size_t(rng.uniform_int(i, n - 1))]);
  }
  std::vector<const CorpusRecord*> batch;
  for (int i = 0; i < B; ++i) batch.push_back(records[std::size_t(idx[std::size_t(i)])]);
  return batch;
}

}  // namespace

EvaluatorTrainResult train_evaluator(const Corpus& corpus,
                                     const std::vector<std::string>& train_ids,
                                     const TrainConfig& config) {
  const auto records = resolve_split(corpus, train_ids, "train_evaluator");
  const EvaluatorConfig eval_config;

  std::set<std::string> motifs;
  for (const CorpusRecord* rec : records) motifs.insert(rec->motif);

  EvaluatorTrainResult result;
  result.degenerate_single_class = motifs.size() < 2;
  result.params = init_evaluator(eval_config, derive_seed(config.seed, "evaluator.init"));

  std::map<const CorpusRecord*, TextEmbedding> embed_cache;
  for (const CorpusRecord* rec : records) {
    embed_cache.emplace(rec, embed_text(rec->text, eval_config.d_text));
  }

  std::vector<Mat*> params;
  result.params.for_each([&](const char*, Mat& m) { params.push_back(&m); });
  AdamW opt(params, config.learning_rate, config.weight_decay);
  const std::uint64_t loop_seed = derive_seed(config.seed, "evaluator.step");

  for (int step = 0; step < config.steps; ++step) {
    Rng rng(derive_seed(loop_seed, std::uint64_t(step)));
    const auto batch = draw_batch(records, config.batch_size, rng);
    std::vector<TextEmbedding> text_embeds;
    for (const CorpusRecord* rec : batch) text_embeds.push_back(embed_cache.at(rec));

    ContrastiveStep res = contrastive_step(result.params, batch, text_embeds, true);
    if (!std::isfinite(res.loss)) {
      throw std::runtime_error("train_evaluator: non-finite loss at step " +
                               std::to_string(step));
    }
    opt.step(res.grads);
    result.loss_history.push_back(res.loss);
    result.accuracy_history.push_back(res.accuracy);
  }
  return result;
}

double evaluate_retrieval(const EvaluatorParams& params, const Corpus& corpus,
                          const std::vector<std::string>& ids, int batch_size,
                          std::uint64_t seed) {
  const auto records = resolve_split(corpus, ids, "evaluate_retrieval");
  if (batch_size < 2) throw std::invalid_argument("evaluate_retrieval: batch_size must be >= 2");

  Rng rng(derive_seed(seed, "retrieval.eval"));
  std::vector<int> order(records.size());
  std::iota(order.begin(), order.end(), 0);
  for (std::size_t i = 0; i + 1 < order.size(); ++i) {
    std::swap(order[i], order[std::size_t(rng.uniform_int(std::int64_t(i),
                                                          std::int64_t(order.size()) - 1))]);
  }

  double weighted = 0.0;
  int counted = 0;
  for (std::size_t start = 0; start < order.size(); start += std::size_t(batch_size)) {
    const std::size_t end = std::min(order.size(), start + std::size_t(batch_size));
    if (end - start < 2) break;  // a singleton tail has no distractors
    std::vector<const CorpusRecord*> batch;
    std::vector<TextEmbedding> embeds;
    for (std::size_t k = start; k < end; ++k) {
      batch.push_back(records[std::size_t(order[k])]);
      embeds.push_back(embed_text(batch.back()->text, params.config.d_text));
    }
    const ContrastiveStep res = contrastive_step(params, batch, embeds, false);
    weighted += res.accuracy * double(batch.size());
    counted += int(batch.size());
  }
  if (counted == 0) throw std::invalid_argument("evaluate_retrieval: split too small");
  return weighted / counted;
}

}  // namespace amd
