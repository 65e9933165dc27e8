#include "amd/binio.hpp"
#include "amd/checkpoint.hpp"
#include "amd/corpus.hpp"
#include "amd/log.hpp"
#include "amd/metrics.hpp"
#include "amd/motion.hpp"
#include "amd/sampler.hpp"
#include "amd/schedule.hpp"
#include "amd/trainer.hpp"

#include <CLI11.hpp>

#include <cstdint>
#include <cstdio>
#include <cstdlib>
#include <iostream>
#include <set>
#include <string>
#include <vector>

namespace {

using namespace amd;

// Exit codes: 0 success, 1 usage error, 2 runtime error. UsageError marks
// problems with the invocation itself (flags, config contents, prompt files);
// everything else that throws is a runtime failure.

// The library treats an unrecognized AMD_LOG as "info"; the CLI is stricter
// so typos do not silently change verbosity.
void validate_log_env() {
  const char* env = std::getenv("AMD_LOG");
  if (env == nullptr) return;
  const std::string value(env);
  if (value != "error" && value != "info" && value != "debug") {
    throw UsageError("AMD_LOG must be one of error, info, debug (got \"" + value + "\")");
  }
}

std::string hex64(std::uint64_t v) {
  char buf[19];
  std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(v));
  return buf;
}

std::string num(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.9g", v);
  return buf;
}

// One prompt per line; blank lines and trailing carriage returns are dropped.
std::vector<std::string> read_prompts(const std::string& path) {
  const std::string text = binio::read_file(path);
  std::vector<std::string> prompts;
  std::string line;
  for (std::size_t i = 0; i <= text.size(); ++i) {
    if (i == text.size() || text[i] == '\n') {
      if (!line.empty() && line.back() == '\r') line.pop_back();
      if (!line.empty()) prompts.push_back(line);
      line.clear();
    } else {
      line += text[i];
    }
  }
  if (prompts.empty()) throw UsageError(path + ": no prompts (expected one per line)");
  return prompts;
}

// ---------------------------------------------------------------------------
// gen-corpus

struct GenCorpusArgs {
  std::string out;
  int clips = 0;
  std::uint64_t seed = 0;
  double fps = 20.0;
};

void run_gen_corpus(const GenCorpusArgs& args) {
  CorpusConfig config;
  config.n_records = args.clips;
  config.seed = args.seed;
  config.fps = args.fps;
  log_debug("generating %d clips, seed %llu", args.clips,
            static_cast<unsigned long long>(args.seed));
  const Corpus corpus = generate_corpus(config);
  save_corpus(corpus, args.out);
  std::cout << "wrote " << corpus.records.size() << " clips to " << args.out << " (fingerprint "
            << hex64(corpus_fingerprint(corpus)) << ")\n";
}

// ---------------------------------------------------------------------------
// train

struct TrainArgs {
  std::string corpus_dir;
  std::string config_path;
  std::string out;
  std::string component = "all";
};

TrainConfig load_config_or_usage(const std::string& path) {
  const std::string text = binio::read_file(path);  // missing file is a runtime error
  try {
    return parse_train_config(text, path);
  } catch (const IoError& e) {
    // Malformed config contents (missing/unknown/duplicate keys) are the
    // caller's mistake, not an environment failure.
    throw UsageError(e.what());
  }
}

void run_train(const TrainArgs& args) {
  const TrainConfig config = load_config_or_usage(args.config_path);
  const Corpus corpus = load_corpus(args.corpus_dir);
  std::vector<std::string> ids;
  ids.reserve(corpus.records.size());
  for (const auto& r : corpus.records) ids.push_back(r.id);

  Checkpoint ckpt;
  ckpt.model_config = preset_config(config.preset);
  ckpt.timesteps = config.timesteps;
  ckpt.beta_start = config.beta_start;
  ckpt.beta_end = config.beta_end;
  ckpt.fingerprint = corpus_fingerprint(corpus);

  const bool all = args.component == "all";
  if (all || args.component == "denoiser") {
    log_info("training denoiser for %d steps", config.steps);
    auto res = train_denoiser(corpus, ids, config);
    ckpt.model = std::move(res.model);
    ckpt.has_model = true;
    if (!res.loss_history.empty()) {
      std::cout << "denoiser: " << config.steps << " steps, loss " << num(res.loss_history.front())
                << " -> " << num(res.loss_history.back()) << "\n";
    }
  }
  if (all || args.component == "duration") {
    log_info("training duration predictor");
    auto res = train_duration(corpus, ids, config);
    ckpt.duration = std::move(res.params);
    ckpt.has_duration = true;
    if (!res.accuracy_history.empty()) {
      std::cout << "duration: " << config.steps << " steps, accuracy "
                << num(res.accuracy_history.back()) << "\n";
    }
  }
  if (all || args.component == "evaluator") {
    log_info("training evaluator");
    auto res = train_evaluator(corpus, ids, config);
    ckpt.evaluator = std::move(res.params);
    ckpt.has_evaluator = true;
    if (res.degenerate_single_class) {
      std::cerr << "[warn] corpus has a single motif class; contrastive training is degenerate\n";
    }
    if (!res.accuracy_history.empty()) {
      std::cout << "evaluator: " << config.steps << " steps, in-batch retrieval "
                << num(res.accuracy_history.back()) << "\n";
    }
  }

  save_checkpoint(ckpt, args.out);
  std::cout << "wrote checkpoint " << args.out << " (corpus fingerprint "
            << hex64(ckpt.fingerprint) << ")\n";
}

// ---------------------------------------------------------------------------
// sample

struct SampleArgs {
  std::string ckpt_path;
  std::string prompts_path;
  std::string out;
  std::uint64_t seed = 0;
  double guidance = 1.0;
};

void run_sample(const SampleArgs& args) {
  const Checkpoint ckpt = load_checkpoint(args.ckpt_path);
  if (!ckpt.has_model || !ckpt.has_duration) {
    throw std::runtime_error(args.ckpt_path +
                             ": sampling needs both the denoiser and the duration predictor");
  }
  PromptSequence prompts;
  prompts.prompts = read_prompts(args.prompts_path);
  const NoiseSchedule sched = build_linear_schedule(ckpt.timesteps, ckpt.beta_start, ckpt.beta_end);
  log_info("sampling %zu segments, T=%d, guidance %g", prompts.prompts.size(), ckpt.timesteps,
           args.guidance);
  const GeneratedSequence seq = sample_long(prompts, ckpt.model, sched, ckpt.duration, args.seed,
                                            float(args.guidance));
  save_sequence(seq, args.out);
  std::cout << "sampled " << seq.segments.size() << " segments (" << seq.total_frames()
            << " frames) to " << args.out << "\n";
}

// ---------------------------------------------------------------------------
// stitch

struct StitchArgs {
  std::string ckpt_path;
  std::string mode;
  std::string prompts_path;
  std::string out;
  std::uint64_t seed = 0;
};

// The post-hoc baselines generate both segments independently (no previous-
// segment conditioning) and join them afterwards; mode auto is the full
// autoregressive sampler.
void run_stitch(const StitchArgs& args) {
  const Checkpoint ckpt = load_checkpoint(args.ckpt_path);
  if (!ckpt.has_model || !ckpt.has_duration) {
    throw std::runtime_error(args.ckpt_path +
                             ": stitching needs both the denoiser and the duration predictor");
  }
  const std::vector<std::string> prompts = read_prompts(args.prompts_path);
  const NoiseSchedule sched = build_linear_schedule(ckpt.timesteps, ckpt.beta_start, ckpt.beta_end);

  if (args.mode == "auto") {
    const GeneratedSequence seq = sample_long(PromptSequence{prompts, {}}, ckpt.model, sched,
                                              ckpt.duration, args.seed);
    save_sequence(seq, args.out);
    std::cout << "stitched (auto) " << seq.segments.size() << " segments ("
              << seq.total_frames() << " frames) to " << args.out << "\n";
    return;
  }

  if (prompts.size() != 2) {
    throw UsageError("mode " + args.mode + " joins exactly two prompts; got " +
                     std::to_string(prompts.size()));
  }
  const int d_model = ckpt.model_config.d_model;
  const int f_a = predict_duration(embed_text(prompts[0], d_model), ckpt.duration).argmax_frames();
  const int f_b = predict_duration(embed_text(prompts[1], d_model), ckpt.duration).argmax_frames();
  log_debug("predicted durations %d + %d", f_a, f_b);

  MotionClip joined;
  if (args.mode == "joint") {
    joined = sample_joint(prompts[0], prompts[1], f_a + f_b, ckpt.model, sched, args.seed);
  } else {
    const MotionClip a = sample_segment(ckpt.model, sched, nullptr, nullptr, prompts[0], f_a,
                                        derive_seed(args.seed, std::uint64_t(0)));
    const MotionClip b = sample_segment(ckpt.model, sched, nullptr, nullptr, prompts[1], f_b,
                                        derive_seed(args.seed, std::uint64_t(1)));
    const double gap = junction_gap(a, b, default_skeleton());
    log_info("raw junction gap %g", gap);
    if (args.mode == "interp") {
      joined = stitch_interp(a, b, infill_window(f_a + f_b));
    } else {
      joined = infill_stitch(a, b, ckpt.model, sched, derive_seed(args.seed, "stitch.infill"));
    }
  }

  GeneratedSequence seq;
  seq.fps = joined.fps;
  seq.master_seed = args.seed;
  GeneratedSegment seg;
  seg.prompt = prompts[0] + " then " + prompts[1];
  seg.frames = int(joined.frame_count());
  seg.seed = args.seed;
  seg.clip = std::move(joined);
  seq.segments.push_back(std::move(seg));
  save_sequence(seq, args.out);
  std::cout << "stitched (" << args.mode << ") " << seq.total_frames() << " frames to "
            << args.out << "\n";
}

// ---------------------------------------------------------------------------
// eval

struct EvalArgs {
  std::string ckpt_path;
  std::string corpus_dir;
  std::vector<std::string> generated;
  std::string out;
  int reps = 5;
  int pool = 0;  // 0: min(32, distinct generated prompts)
  std::uint64_t seed = 0;
};

void run_eval(const EvalArgs& args) {
  const Checkpoint ckpt = load_checkpoint(args.ckpt_path);
  if (!ckpt.has_evaluator) {
    throw std::runtime_error(args.ckpt_path + ": evaluation needs the evaluator component");
  }
  const Corpus corpus = load_corpus(args.corpus_dir);
  check_fingerprint(ckpt, corpus, args.corpus_dir);

  SuiteInputs inputs;
  for (const auto& r : corpus.records) inputs.real.emplace_back(r.text, &r.clip);

  std::vector<GeneratedSequence> sequences;
  sequences.reserve(args.generated.size());
  for (const auto& path : args.generated) sequences.push_back(load_sequence(path));
  std::set<std::string> distinct;
  for (const auto& seq : sequences) {
    for (const auto& seg : seq.segments) {
      inputs.generated.emplace_back(seg.prompt, &seg.clip);
      distinct.insert(seg.prompt);
    }
  }
  log_info("evaluating %zu generated clips against %zu real clips", inputs.generated.size(),
           inputs.real.size());

  SuiteOptions options;
  options.repetitions = args.reps;
  options.pool_size = args.pool > 0 ? args.pool : int(std::min<std::size_t>(32, distinct.size()));
  if (options.pool_size < 2) {
    throw std::runtime_error("retrieval needs at least two distinct generated prompts");
  }
  const MetricReport report = evaluate_suite(inputs, ckpt.evaluator, args.seed, options);
  save_report(report, args.out);

  auto line = [&](const char* name, double value) {
    std::cout << name << " " << num(value);
    auto it = report.intervals.find(name);
    if (it != report.intervals.end() && it->second > 0.0) std::cout << " +/- " << num(it->second);
    std::cout << "\n";
  };
  line("fid", report.fid);
  line("r_precision_top3", report.r_precision_top3);
  line("multimodal_dist", report.multimodal_dist);
  line("diversity", report.diversity);
  line("multimodality", report.multimodality);
  std::cout << "wrote report " << args.out << "\n";
}

// ---------------------------------------------------------------------------
// export

struct ExportArgs {
  std::string in;
  std::string out;
  std::string format = "positions";
};

// Segments are generated in their own local frames; chaining re-roots each one
// to continue the previous segment's final heading and ground position, the
// same convention junction_gap measures.
void run_export(const ExportArgs& args) {
  if (args.format != "positions") {
    throw UsageError("unsupported --format \"" + args.format + "\" (expected positions)");
  }
  const GeneratedSequence seq = load_sequence(args.in);
  const SkeletonSpec skel = default_skeleton();

  std::string text;
  text += "amd-positions v1\n";
  text += "segments " + std::to_string(seq.segments.size()) + " joints " +
          std::to_string(skel.joint_count) + " fps " + num(double(seq.fps)) + " total_frames " +
          std::to_string(seq.total_frames()) + "\n";

  double theta = 0.0;
  Eigen::Vector3d origin = Eigen::Vector3d::Zero();
  for (std::size_t s = 0; s < seq.segments.size(); ++s) {
    const GeneratedSegment& seg = seq.segments[s];
    const GlobalPose pose = recover_positions(seg.clip, skel);
    const Eigen::Matrix3d rot = yaw_rotation(theta);
    text += "segment " + std::to_string(s) + " frames " + std::to_string(pose.frame_count()) +
            " prompt " + seg.prompt + "\n";
    for (Eigen::Index f = 0; f < pose.frame_count(); ++f) {
      for (int j = 0; j < skel.joint_count; ++j) {
        const Eigen::Vector3d p = rot * pose.joint(f, j) + origin;
        if (j > 0) text += ' ';
        text += num(p.x()) + " " + num(p.y()) + " " + num(p.z());
      }
      text += '\n';
    }
    const Eigen::Index last = pose.frame_count() - 1;
    const Eigen::Vector3d root = rot * pose.joint(last, 0) + origin;
    origin.x() = root.x();
    origin.z() = root.z();
    theta += pose.heading(last);
  }
  binio::write_file_atomic(args.out, text);
  std::cout << "exported " << seq.total_frames() << " frames (" << seq.segments.size()
            << " segments) to " << args.out << "\n";
}

}  // namespace

int main(int argc, char** argv) {
  try {
    validate_log_env();

    CLI::App app{"desk-scale text-to-motion diffusion toolkit"};
    app.require_subcommand(1);

    GenCorpusArgs gen_args;
    auto* gen = app.add_subcommand("gen-corpus", "generate a synthetic motion corpus");
    gen->add_option("--out", gen_args.out, "output directory")->required();
    gen->add_option("--clips", gen_args.clips, "number of clips")->required();
    gen->add_option("--seed", gen_args.seed, "generator seed")->required();
    gen->add_option("--fps", gen_args.fps, "frames per second")->capture_default_str();
    gen->callback([&] { run_gen_corpus(gen_args); });

    TrainArgs train_args;
    auto* train = app.add_subcommand("train", "train model components on a corpus");
    train->add_option("--corpus", train_args.corpus_dir, "corpus directory")->required();
    train->add_option("--config", train_args.config_path, "key-value training config")->required();
    train->add_option("--out", train_args.out, "checkpoint path")->required();
    train->add_option("--component", train_args.component, "component to train")
        ->capture_default_str()
        ->check(CLI::IsMember({"denoiser", "duration", "evaluator", "all"}));
    train->callback([&] { run_train(train_args); });

    SampleArgs sample_args;
    auto* sample = app.add_subcommand("sample", "generate a motion sequence from prompts");
    sample->add_option("--ckpt", sample_args.ckpt_path, "checkpoint path")->required();
    sample->add_option("--prompts", sample_args.prompts_path, "prompt file, one per line")
        ->required();
    sample->add_option("--seed", sample_args.seed, "sampling seed")->required();
    sample->add_option("--out", sample_args.out, "output sequence file")->required();
    sample->add_option("--guidance", sample_args.guidance, "classifier-free guidance scale")
        ->capture_default_str();
    sample->callback([&] { run_sample(sample_args); });

    StitchArgs stitch_args;
    auto* stitch = app.add_subcommand("stitch", "join segments: autoregressive or baselines");
    stitch->add_option("--ckpt", stitch_args.ckpt_path, "checkpoint path")->required();
    stitch->add_option("--mode", stitch_args.mode, "stitching mode")
        ->required()
        ->check(CLI::IsMember({"auto", "joint", "interp", "infill"}));
    stitch->add_option("--prompts", stitch_args.prompts_path, "prompt file, one per line")
        ->required();
    stitch->add_option("--seed", stitch_args.seed, "sampling seed")->required();
    stitch->add_option("--out", stitch_args.out, "output sequence file")->required();
    stitch->callback([&] { run_stitch(stitch_args); });

    EvalArgs eval_args;
    auto* eval = app.add_subcommand("eval", "score generated sequences against a corpus");
    eval->add_option("--ckpt", eval_args.ckpt_path, "checkpoint path")->required();
    eval->add_option("--corpus", eval_args.corpus_dir, "reference corpus directory")->required();
    eval->add_option("--generated", eval_args.generated, "generated sequence files")->required();
    eval->add_option("--out", eval_args.out, "report path")->required();
    eval->add_option("--reps", eval_args.reps, "metric repetitions")->capture_default_str();
    eval->add_option("--pool", eval_args.pool, "retrieval pool size (0 = auto)")
        ->capture_default_str();
    eval->add_option("--seed", eval_args.seed, "evaluation seed")->required();
    eval->callback([&] { run_eval(eval_args); });

    ExportArgs export_args;
    auto* exp = app.add_subcommand("export", "export a sequence as world joint positions");
    exp->add_option("--in", export_args.in, "sequence file")->required();
    exp->add_option("--out", export_args.out, "output text file")->required();
    exp->add_option("--format", export_args.format, "export format")
        ->capture_default_str()
        ->check(CLI::IsMember({"positions"}));
    exp->callback([&] { run_export(export_args); });

    try {
      app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
      return app.exit(e);
    } catch (const CLI::ParseError& e) {
      app.exit(e);
      return 1;
    }
    return 0;
  } catch (const UsageError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }
}
