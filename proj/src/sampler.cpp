#include "amd/sampler.hpp"

#include "amd/binio.hpp"
#include "amd/errors.hpp"
#include "amd/rng.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace amd {

namespace {

void clamp_contacts(Mat& frames) {
  for (Eigen::Index f = 0; f < frames.rows(); ++f) {
    for (int c = 0; c < kContactCount; ++c) {
      float& v = frames(f, kChContactStart + c);
      v = std::clamp(v, 0.0f, 1.0f);
    }
  }
}

MotionClip finalize_output(Mat frames, float fps, const char* who) {
  clamp_contacts(frames);
  MotionClip clip;
  clip.frames = std::move(frames);
  clip.fps = fps;
  const ValidationResult v = validate_clip(clip);
  if (!v.ok) throw std::runtime_error(std::string(who) + ": produced an invalid clip: " + v.message);
  return clip;
}

// Shared conditional prediction for the model-bound sampling paths.
Mat model_predict(const MotionModel& model, const MotionClip* prev_motion,
                  const TextEmbedding* prev_text, const TextEmbedding& cur_text, int t,
                  const Mat& x_t, float guidance_scale) {
  MotionClip noisy;
  noisy.frames = x_t;
  const int F = int(x_t.rows());
  const auto cond = build_condition(prev_motion, prev_text, cur_text, t, F, noisy,
                                    /*mask=*/false, model.cond);
  if (guidance_scale == 1.0f) return predict_x0(cond, model.denoiser, model.config).frames;
  const auto masked = build_condition(prev_motion, prev_text, cur_text, t, F, noisy,
                                      /*mask=*/true, model.cond);
  return guided_predict_x0(cond, masked, model.denoiser, model.config, guidance_scale).frames;
}

}  // namespace

MotionClip sample_segment_with(const DenoisePredictor& predict, int F, const NoiseSchedule& sched,
                               std::uint64_t seed, float fps) {
  if (F < 1) throw std::invalid_argument("sample_segment: frame count must be positive");
  Rng rng(seed);
  Mat x = rng.normal_mat<float>(F, kFeatureDim);
  for (int t = sched.T; t >= 1; --t) {
    Mat x0_hat = predict(x, t);
    if (x0_hat.rows() != F || x0_hat.cols() != kFeatureDim) {
      throw std::runtime_error("sample_segment: predictor returned wrong shape");
    }
    if (t == 1) {
      x = std::move(x0_hat);
    } else {
      const Mat noise = rng.normal_mat<float>(F, kFeatureDim);
      x = renoise_step(x0_hat, t - 1, noise, sched);
    }
  }
  return finalize_output(std::move(x), fps, "sample_segment");
}

MotionClip sample_segment(const MotionModel& model, const NoiseSchedule& sched,
                          const MotionClip* prev_motion, const std::string* prev_prompt,
                          const std::string& prompt, int F, std::uint64_t seed,
                          float guidance_scale, float fps) {
  if (F < 1 || F > model.config.max_frames) {
    throw std::invalid_argument("sample_segment: frame count " + std::to_string(F) +
                                " outside [1, " + std::to_string(model.config.max_frames) + "]");
  }
  const TextEmbedding cur = embed_text(prompt, model.config.d_model);
  TextEmbedding prev_emb;
  const TextEmbedding* prev_text = nullptr;
  if (prev_prompt != nullptr) {
    prev_emb = embed_text(*prev_prompt, model.config.d_model);
    prev_text = &prev_emb;
  }
  auto predict = [&](const Mat& x_t, int t) {
    return model_predict(model, prev_motion, prev_text, cur, t, x_t, guidance_scale);
  };
  return sample_segment_with(predict, F, sched, seed, fps);
}

GeneratedSequence sample_long(const PromptSequence& prompts, const MotionModel& model,
                              const NoiseSchedule& sched, const DurationParams& duration,
                              std::uint64_t seed, float guidance_scale, float fps) {
  const std::size_t n = prompts.prompts.size();
  if (n < 1) throw std::invalid_argument("sample_long: need at least one prompt");
  if (!prompts.frame_overrides.empty() && prompts.frame_overrides.size() != n) {
    throw std::invalid_argument("sample_long: overrides must be empty or match the prompt count");
  }
  for (int f : prompts.frame_overrides) {
    if (f != 0 && (f < 40 || f > 200 || f % 4 != 0)) {
      throw std::invalid_argument("sample_long: frame override " + std::to_string(f) +
                                  " must be a multiple of 4 in [40, 200]");
    }
  }

  GeneratedSequence seq;
  seq.fps = fps;
  seq.master_seed = seed;
  seq.segments.reserve(n);
  for (std::size_t i = 0; i < n; ++i) {
    const std::string& prompt = prompts.prompts[i];
    int frames = prompts.frame_overrides.empty() ? 0 : prompts.frame_overrides[i];
    if (frames == 0) {
      const auto dist = predict_duration(embed_text(prompt, model.config.d_model), duration);
      frames = dist.argmax_frames();
    }
    const std::uint64_t child = derive_seed(seed, std::uint64_t(i));
    const MotionClip* prev_motion = i > 0 ? &seq.segments[i - 1].clip : nullptr;
    const std::string* prev_prompt = i > 0 ? &prompts.prompts[i - 1] : nullptr;
    MotionClip clip = sample_segment(model, sched, prev_motion, prev_prompt, prompt, frames, child,
                                     guidance_scale, fps);
    seq.segments.push_back(GeneratedSegment{std::move(clip), prompt, frames, child});
  }
  return seq;
}

MotionClip sample_joint(const std::string& prompt_a, const std::string& prompt_b, int f_total,
                        const MotionModel& model, const NoiseSchedule& sched, std::uint64_t seed,
                        float guidance_scale, float fps) {
  if (f_total < 40 || f_total > 400) {
    throw std::invalid_argument("sample_joint: total frame count " + std::to_string(f_total) +
                                " outside [40, 400]");
  }
  const std::string joint_prompt = prompt_a + " " + prompt_b;
  return sample_segment(model, sched, nullptr, nullptr, joint_prompt, f_total, seed,
                        guidance_scale, fps);
}

MotionClip stitch_interp(const MotionClip& a, const MotionClip& b, int window) {
  for (const MotionClip* clip : {&a, &b}) {
    const ValidationResult v = validate_clip(*clip);
    if (!v.ok) throw std::invalid_argument("stitch_interp: " + v.message);
  }
  if (a.fps != b.fps) throw std::invalid_argument("stitch_interp: clips disagree on fps");
  const int fa = int(a.frames.rows());
  const int fb = int(b.frames.rows());
  if (window < 0 || window > std::min(fa, fb)) {
    throw std::invalid_argument("stitch_interp: window " + std::to_string(window) +
                                " outside [0, min(" + std::to_string(fa) + ", " +
                                std::to_string(fb) + ")]");
  }

  MotionClip out;
  out.fps = a.fps;
  out.frames.resize(fa + fb - window, kFeatureDim);
  out.frames.topRows(fa - window) = a.frames.topRows(fa - window);
  for (int k = 0; k < window; ++k) {
    const double w = double(k + 1) / double(window + 1);
    out.frames.row(fa - window + k) =
        ((1.0 - w) * a.frames.row(fa - window + k).cast<double>() +
         w * b.frames.row(k).cast<double>())
            .cast<float>();
  }
  out.frames.bottomRows(fb - window) = b.frames.bottomRows(fb - window);
  return out;
}

int infill_window(int f_total) { return int(std::lround(0.1 * double(f_total))); }

MotionClip infill_stitch_with(const DenoisePredictor& predict, const MotionClip& a,
                              const MotionClip& b, const NoiseSchedule& sched,
                              std::uint64_t seed) {
  for (const MotionClip* clip : {&a, &b}) {
    const ValidationResult v = validate_clip(*clip);
    if (!v.ok) throw std::invalid_argument("infill_stitch: " + v.message);
  }
  if (a.fps != b.fps) throw std::invalid_argument("infill_stitch: clips disagree on fps");
  const int fa = int(a.frames.rows());
  const int fb = int(b.frames.rows());
  const int total = fa + fb;
  const int window = infill_window(total);
  const int start = fa - window / 2;
  if (window < 1 || start < 0 || start + window > total) {
    throw std::invalid_argument("infill_stitch: clips too short for a centered junction window");
  }

  Mat gt(total, kFeatureDim);
  gt.topRows(fa) = a.frames;
  gt.bottomRows(fb) = b.frames;

  auto overwrite_outside = [&](Mat& x, const Mat& replacement) {
    x.topRows(start) = replacement.topRows(start);
    x.bottomRows(total - start - window) = replacement.bottomRows(total - start - window);
  };

  Rng rng(seed);
  Mat x = rng.normal_mat<float>(total, kFeatureDim);
  for (int t = sched.T; t >= 1; --t) {
    // Clamp the context to the ground truth diffused to the current level so
    // the window is denoised against consistent surroundings.
    const Mat ctx_noise = rng.normal_mat<float>(total, kFeatureDim);
    overwrite_outside(x, q_sample(gt, t, ctx_noise, sched));

    Mat x0_hat = predict(x, t);
    if (x0_hat.rows() != total || x0_hat.cols() != kFeatureDim) {
      throw std::runtime_error("infill_stitch: predictor returned wrong shape");
    }
    if (t == 1) {
      x = std::move(x0_hat);
    } else {
      const Mat noise = rng.normal_mat<float>(total, kFeatureDim);
      x = renoise_step(x0_hat, t - 1, noise, sched);
    }
  }
  overwrite_outside(x, gt);  // bit-exact restore of everything but the window
  return finalize_output(std::move(x), a.fps, "infill_stitch");
}

MotionClip infill_stitch(const MotionClip& a, const MotionClip& b, const MotionModel& model,
                         const NoiseSchedule& sched, std::uint64_t seed) {
  // No prompt accompanies the stitch, so the model runs unconditionally.
  const TextEmbedding empty = embed_text("", model.config.d_model);
  auto predict = [&](const Mat& x_t, int t) {
    MotionClip noisy;
    noisy.frames = x_t;
    const auto masked = build_condition(nullptr, nullptr, empty, t, int(x_t.rows()), noisy,
                                        /*mask=*/true, model.cond);
    return predict_x0(masked, model.denoiser, model.config).frames;
  };
  return infill_stitch_with(predict, a, b, sched, seed);
}

void save_sequence(const GeneratedSequence& seq, const std::string& path) {
  if (seq.segments.empty()) throw std::invalid_argument("save_sequence: empty sequence");
  std::string out;
  out += "AMDS";
  binio::put_u32(out, 1);
  binio::put_u32(out, std::uint32_t(seq.segments.size()));
  binio::put_f32(out, seq.fps);
  binio::put_u64(out, seq.master_seed);
  for (const GeneratedSegment& seg : seq.segments) {
    binio::put_u32(out, std::uint32_t(seg.prompt.size()));
    out += seg.prompt;
    binio::put_u64(out, seg.seed);
    const std::string blob = encode_clip(seg.clip);
    binio::put_u32(out, std::uint32_t(blob.size()));
    out += blob;
  }
  binio::write_file_atomic(path, out);
}

GeneratedSequence load_sequence(const std::string& path) {
  const std::string data = binio::read_file(path);
  binio::Reader r(data, path);
  if (r.bytes(4) != "AMDS") throw IoError(path + ": bad magic (not a sequence file)");
  const std::uint32_t version = r.u32();
  if (version != 1) {
    throw IoError(path + ": unsupported sequence version " + std::to_string(version));
  }
  const std::uint32_t count = r.u32();
  if (count < 1) throw IoError(path + ": sequence has no segments");
  GeneratedSequence seq;
  seq.fps = r.f32();
  seq.master_seed = r.u64();
  seq.segments.reserve(count);
  for (std::uint32_t i = 0; i < count; ++i) {
    GeneratedSegment seg;
    const std::uint32_t prompt_len = r.u32();
    seg.prompt = r.bytes(prompt_len);
    seg.seed = r.u64();
    const std::uint32_t blob_len = r.u32();
    seg.clip = decode_clip(r.bytes(blob_len), path + " (segment " + std::to_string(i) + ")");
    seg.clip.fps = seq.fps;
    seg.frames = int(seg.clip.frame_count());
    seq.segments.push_back(std::move(seg));
  }
  if (!r.at_end()) throw IoError(path + ": trailing bytes after sequence payload");
  return seq;
}

}  // namespace amd
