#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "amd/binio.hpp"
#include "amd/checkpoint.hpp"
#include "amd/corpus.hpp"
#include "amd/metrics.hpp"
#include "amd/motion.hpp"
#include "amd/sampler.hpp"
#include "amd/types.hpp"

#include <sys/wait.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <set>
#include <sstream>
#include <string>
#include <vector>

using namespace amd;

namespace fs = std::filesystem;

namespace {

struct RunResult {
  int exit_code = -1;
  std::string out;
  std::string err;
};

std::string slurp(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

// Drives the installed binary exactly as a user would; stdout/stderr are
// captured through temporary files so assertions can inspect them.
RunResult run_cli(const std::string& args, const std::string& env = "") {
  static int counter = 0;
  const fs::path dir = fs::path("cli_io");
  fs::create_directories(dir);
  const fs::path out_path = dir / ("out" + std::to_string(counter));
  const fs::path err_path = dir / ("err" + std::to_string(counter));
  ++counter;
  std::string cmd = env.empty() ? std::string() : env + " ";
  cmd += std::string(AMD_CLI_PATH) + " " + args + " > " + out_path.string() + " 2> " +
         err_path.string();
  const int status = std::system(cmd.c_str());
  RunResult result;
  result.exit_code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
  result.out = slurp(out_path);
  result.err = slurp(err_path);
  return result;
}

std::vector<std::string> split_lines(const std::string& text) {
  std::vector<std::string> lines;
  std::string line;
  std::istringstream in(text);
  while (std::getline(in, line)) lines.push_back(line);
  return lines;
}

// Shared fixture: a small corpus, a briefly trained checkpoint, and one
// sampled sequence. Built once; training length is plumbing-scale only.
struct Pipeline {
  fs::path dir = "cli_work";
  std::string corpus_dir, config_path, ckpt_path, prompts3, prompts2, sampled;
  Corpus corpus;

  Pipeline() {
    fs::remove_all(dir);
    fs::create_directories(dir);
    corpus_dir = (dir / "corpus").string();
    config_path = (dir / "train.cfg").string();
    ckpt_path = (dir / "model.ckpt").string();
    prompts3 = (dir / "three.txt").string();
    prompts2 = (dir / "two.txt").string();
    sampled = (dir / "sampled.amds").string();

    REQUIRE(run_cli("gen-corpus --out " + corpus_dir + " --clips 8 --seed 1").exit_code == 0);
    corpus = load_corpus(corpus_dir);

    binio::write_file_atomic(config_path,
                             "steps = 6\nlearning_rate = 1e-3\nbatch_size = 4\n"
                             "optimizer = adamw\nweight_decay = 0.0\nseed = 7\n"
                             "lambda_height = 1.0\nlambda_position = 1.0\nlambda_rotation = 1.0\n"
                             "lambda_velocity = 1.0\nlambda_foot = 0.5\np_mask = 0.1\n"
                             "timesteps = 20\nbeta_start = 1e-4\nbeta_end = 0.02\npreset = desk\n");
    REQUIRE(run_cli("train --corpus " + corpus_dir + " --config " + config_path + " --out " +
                    ckpt_path)
                .exit_code == 0);

    std::vector<std::string> texts;
    std::set<std::string> seen;
    for (const auto& rec : corpus.records) {
      if (seen.insert(rec.text).second) texts.push_back(rec.text);
      if (texts.size() == 3) break;
    }
    REQUIRE(texts.size() == 3);
    binio::write_file_atomic(prompts3, texts[0] + "\n" + texts[1] + "\n" + texts[2] + "\n");
    binio::write_file_atomic(prompts2, texts[0] + "\n" + texts[1] + "\n");

    REQUIRE(run_cli("sample --ckpt " + ckpt_path + " --prompts " + prompts3 +
                    " --seed 42 --out " + sampled)
                .exit_code == 0);
  }
};

const Pipeline& pipeline() {
  static Pipeline p;
  return p;
}

// Frame block with constant root height/velocity channels; everything else
// stays zero so exported world positions are easy to predict.
MotionClip const_clip(int frames, double vel_z, double height) {
  MotionClip clip;
  clip.frames = Mat::Zero(frames, kFeatureDim);
  clip.frames.col(kChRootVelZ).setConstant(float(vel_z));
  clip.frames.col(kChRootHeight).setConstant(float(height));
  return clip;
}

std::vector<double> parse_row(const std::string& line) {
  std::vector<double> values;
  std::istringstream in(line);
  double v = 0.0;
  while (in >> v) values.push_back(v);
  return values;
}

}  // namespace

TEST_CASE("gen-corpus writes the meta file and one clip per record") {
  const auto& p = pipeline();
  CHECK(fs::exists(fs::path(p.corpus_dir) / "corpus.meta"));
  int clips = 0;
  for (const auto& entry : fs::directory_iterator(fs::path(p.corpus_dir) / "clips")) {
    CHECK(entry.path().extension() == ".amdm");
    ++clips;
  }
  CHECK(clips == 8);
  CHECK(p.corpus.records.size() == 8);
}

TEST_CASE("gen-corpus is byte-identical across reruns and tracks the seed") {
  const auto& p = pipeline();
  const std::string again = (p.dir / "corpus_again").string();
  const std::string other = (p.dir / "corpus_other").string();
  REQUIRE(run_cli("gen-corpus --out " + again + " --clips 8 --seed 1").exit_code == 0);
  REQUIRE(run_cli("gen-corpus --out " + other + " --clips 8 --seed 2").exit_code == 0);

  CHECK(slurp(fs::path(again) / "corpus.meta") == slurp(fs::path(p.corpus_dir) / "corpus.meta"));
  for (const auto& rec : p.corpus.records) {
    const std::string name = "clips/" + rec.id + ".amdm";
    CHECK(slurp(fs::path(again) / name) == slurp(fs::path(p.corpus_dir) / name));
  }
  CHECK(slurp(fs::path(other) / "corpus.meta") != slurp(fs::path(p.corpus_dir) / "corpus.meta"));
}

TEST_CASE("train writes a checkpoint carrying all components and the corpus fingerprint") {
  const auto& p = pipeline();
  const Checkpoint ckpt = load_checkpoint(p.ckpt_path);
  CHECK(ckpt.has_model);
  CHECK(ckpt.has_duration);
  CHECK(ckpt.has_evaluator);
  CHECK(ckpt.fingerprint == corpus_fingerprint(p.corpus));
  CHECK(ckpt.timesteps == 20);
}

TEST_CASE("train --component writes a partial checkpoint") {
  const auto& p = pipeline();
  const std::string out = (p.dir / "duration_only.ckpt").string();
  REQUIRE(run_cli("train --corpus " + p.corpus_dir + " --config " + p.config_path + " --out " +
                  out + " --component duration")
              .exit_code == 0);
  const Checkpoint ckpt = load_checkpoint(out);
  CHECK_FALSE(ckpt.has_model);
  CHECK(ckpt.has_duration);
  CHECK_FALSE(ckpt.has_evaluator);

  // Sampling needs the denoiser as well, which this checkpoint lacks.
  const auto res = run_cli("sample --ckpt " + out + " --prompts " + p.prompts3 +
                           " --seed 1 --out " + (p.dir / "nope.amds").string());
  CHECK(res.exit_code == 2);
}

TEST_CASE("train with a missing config key exits 1 naming the key") {
  const auto& p = pipeline();
  std::string text = binio::read_file(p.config_path);
  const auto pos = text.find("p_mask = 0.1\n");
  REQUIRE(pos != std::string::npos);
  text.erase(pos, std::string("p_mask = 0.1\n").size());
  const std::string broken = (p.dir / "broken.cfg").string();
  binio::write_file_atomic(broken, text);

  const auto res = run_cli("train --corpus " + p.corpus_dir + " --config " + broken + " --out " +
                           (p.dir / "x.ckpt").string() + " --component denoiser");
  CHECK(res.exit_code == 1);
  CHECK(res.err.find("p_mask") != std::string::npos);

  // A key outside the schema is also the caller's mistake.
  binio::write_file_atomic(broken, binio::read_file(p.config_path) + "warp_drive = 9\n");
  const auto res2 = run_cli("train --corpus " + p.corpus_dir + " --config " + broken + " --out " +
                            (p.dir / "x.ckpt").string());
  CHECK(res2.exit_code == 1);
  CHECK(res2.err.find("warp_drive") != std::string::npos);
}

TEST_CASE("sample with a three-line prompt file yields three segments") {
  const auto& p = pipeline();
  const GeneratedSequence seq = load_sequence(p.sampled);
  REQUIRE(seq.segments.size() == 3);
  Eigen::Index total = 0;
  for (const auto& seg : seq.segments) {
    CHECK(seg.clip.frame_count() == seg.frames);
    CHECK(seg.clip.frame_count() % 4 == 0);
    total += seg.clip.frame_count();
  }
  CHECK(seq.total_frames() == total);
  CHECK(seq.master_seed == 42);
}

TEST_CASE("sample reruns are byte-identical and seeds change the artifact") {
  const auto& p = pipeline();
  const std::string again = (p.dir / "sampled_again.amds").string();
  const std::string other = (p.dir / "sampled_other.amds").string();
  REQUIRE(run_cli("sample --ckpt " + p.ckpt_path + " --prompts " + p.prompts3 +
                  " --seed 42 --out " + again)
              .exit_code == 0);
  REQUIRE(run_cli("sample --ckpt " + p.ckpt_path + " --prompts " + p.prompts3 +
                  " --seed 43 --out " + other)
              .exit_code == 0);
  CHECK(slurp(again) == slurp(p.sampled));
  CHECK(slurp(other) != slurp(p.sampled));
}

TEST_CASE("stitch produces a loadable sequence in every mode") {
  const auto& p = pipeline();
  for (const std::string mode : {"auto", "joint", "interp", "infill"}) {
    CAPTURE(mode);
    const std::string out = (p.dir / ("stitch_" + mode + ".amds")).string();
    REQUIRE(run_cli("stitch --ckpt " + p.ckpt_path + " --mode " + mode + " --prompts " +
                    p.prompts2 + " --seed 5 --out " + out)
                .exit_code == 0);
    const GeneratedSequence seq = load_sequence(out);
    if (mode == "auto") {
      CHECK(seq.segments.size() == 2);
    } else {
      REQUIRE(seq.segments.size() == 1);
      CHECK(seq.segments[0].clip.frame_count() >= 72);  // two predicted segments joined
    }
    CHECK(seq.total_frames() > 0);
  }

  // The post-hoc modes join exactly two prompts.
  const auto res = run_cli("stitch --ckpt " + p.ckpt_path + " --mode joint --prompts " +
                           p.prompts3 + " --seed 5 --out " + (p.dir / "bad.amds").string());
  CHECK(res.exit_code == 1);
}

TEST_CASE("eval writes a five-metric report and reruns byte-identically") {
  const auto& p = pipeline();
  const std::string report_path = (p.dir / "report.json").string();
  const std::string again = (p.dir / "report_again.json").string();
  const std::string auto_stitched = (p.dir / "stitch_auto.amds").string();
  if (!fs::exists(auto_stitched)) {
    REQUIRE(run_cli("stitch --ckpt " + p.ckpt_path + " --mode auto --prompts " + p.prompts2 +
                    " --seed 5 --out " + auto_stitched)
                .exit_code == 0);
  }
  const std::string args = "eval --ckpt " + p.ckpt_path + " --corpus " + p.corpus_dir +
                           " --generated " + p.sampled + " " + auto_stitched +
                           " --reps 3 --seed 11 --out ";
  REQUIRE(run_cli(args + report_path).exit_code == 0);
  REQUIRE(run_cli(args + again).exit_code == 0);
  CHECK(slurp(report_path) == slurp(again));

  const MetricReport report = report_from_json(binio::read_file(report_path), report_path);
  CHECK(report.repetitions == 3);
  CHECK(report.real_count == 8);
  CHECK(report.generated_count == 5);
  CHECK(report.seed == 11);
  CHECK(std::isfinite(report.fid));
  CHECK(report.fid >= 0.0);
  CHECK(report.r_precision_top3 >= 0.0);
  CHECK(report.r_precision_top3 <= 1.0);
  CHECK(report.diversity >= 0.0);
}

TEST_CASE("eval refuses a corpus the checkpoint was not trained on") {
  const auto& p = pipeline();
  const std::string other = (p.dir / "corpus_mismatch").string();
  REQUIRE(run_cli("gen-corpus --out " + other + " --clips 6 --seed 9").exit_code == 0);
  const auto res = run_cli("eval --ckpt " + p.ckpt_path + " --corpus " + other + " --generated " +
                           p.sampled + " --seed 11 --out " + (p.dir / "r.json").string());
  CHECK(res.exit_code == 2);
  CHECK(res.err.find("different corpus") != std::string::npos);
}

TEST_CASE("export writes the positions text format") {
  const auto& p = pipeline();
  const std::string out = (p.dir / "positions.txt").string();
  const std::string again = (p.dir / "positions_again.txt").string();
  REQUIRE(run_cli("export --in " + p.sampled + " --out " + out).exit_code == 0);
  REQUIRE(run_cli("export --in " + p.sampled + " --out " + again).exit_code == 0);
  CHECK(slurp(out) == slurp(again));

  const GeneratedSequence seq = load_sequence(p.sampled);
  const auto lines = split_lines(slurp(out));
  REQUIRE(lines.size() == 2 + seq.segments.size() + std::size_t(seq.total_frames()));
  CHECK(lines[0] == "amd-positions v1");
  CHECK(lines[1] == "segments 3 joints 22 fps 20 total_frames " +
                        std::to_string(seq.total_frames()));
  CHECK(lines[2].rfind("segment 0 frames ", 0) == 0);

  const auto row = parse_row(lines[3]);
  REQUIRE(row.size() == std::size_t(3 * kJointCount));
  for (double v : row) CHECK(std::isfinite(v));

  const auto res = run_cli("export --in " + p.sampled + " --out " + out + " --format animation");
  CHECK(res.exit_code == 1);
}

TEST_CASE("export chains segments through the previous world pose") {
  const auto& p = pipeline();
  // Two constant-velocity clips: the first walks 39 steps of 0.05 m, so the
  // second segment must start exactly where the first ended.
  GeneratedSequence seq;
  seq.fps = 20.0f;
  GeneratedSegment a;
  a.clip = const_clip(40, 0.05, 0.9);
  a.prompt = "first";
  a.frames = 40;
  GeneratedSegment b;
  b.clip = const_clip(40, 0.05, 0.8);
  b.prompt = "second";
  b.frames = 40;
  seq.segments.push_back(a);
  seq.segments.push_back(b);
  const std::string seq_path = (p.dir / "chain.amds").string();
  const std::string out = (p.dir / "chain.txt").string();
  save_sequence(seq, seq_path);
  REQUIRE(run_cli("export --in " + seq_path + " --out " + out).exit_code == 0);

  const auto lines = split_lines(slurp(out));
  REQUIRE(lines.size() == 2 + 2 + 80);
  const auto a_last = parse_row(lines[2 + 40]);       // final frame of segment a
  const auto b_first = parse_row(lines[2 + 40 + 2]);  // first frame of segment b

  const GlobalPose pose_a = recover_positions(a.clip, default_skeleton());
  const Eigen::Vector3d expect_a = pose_a.joint(39, 0);
  CHECK(a_last[0] == doctest::Approx(expect_a.x()).epsilon(1e-6));
  CHECK(a_last[1] == doctest::Approx(0.9).epsilon(1e-6));
  CHECK(a_last[2] == doctest::Approx(expect_a.z()).epsilon(1e-6));

  // Segment b's local root starts at the origin, so its exported root picks
  // up exactly a's final ground position; the height channel is its own.
  CHECK(b_first[0] == doctest::Approx(a_last[0]).epsilon(1e-6));
  CHECK(b_first[1] == doctest::Approx(0.8).epsilon(1e-6));
  CHECK(b_first[2] == doctest::Approx(a_last[2]).epsilon(1e-6));
}

TEST_CASE("usage errors exit 1 and runtime errors exit 2") {
  const auto& p = pipeline();
  CHECK(run_cli("frobnicate").exit_code == 1);
  CHECK(run_cli("").exit_code == 1);
  CHECK(run_cli("gen-corpus --out d --clips 4 --seed 1 --bogus").exit_code == 1);
  CHECK(run_cli("gen-corpus --clips 4 --seed 1").exit_code == 1);  // --out is required
  CHECK(run_cli("stitch --ckpt " + p.ckpt_path + " --mode sideways --prompts " + p.prompts2 +
                " --seed 1 --out x.amds")
            .exit_code == 1);

  CHECK(run_cli("sample --ckpt missing.ckpt --prompts " + p.prompts3 + " --seed 1 --out x.amds")
            .exit_code == 2);
  CHECK(run_cli("sample --ckpt " + p.ckpt_path + " --prompts missing.txt --seed 1 --out x.amds")
            .exit_code == 2);
  CHECK(run_cli("export --in missing.amds --out x.txt").exit_code == 2);
}

TEST_CASE("--help exits 0 and lists every flag") {
  auto res = run_cli("--help");
  CHECK(res.exit_code == 0);
  for (const char* sub : {"gen-corpus", "train", "sample", "stitch", "eval", "export"}) {
    CHECK(res.out.find(sub) != std::string::npos);
  }

  res = run_cli("sample --help");
  CHECK(res.exit_code == 0);
  for (const char* flag : {"--ckpt", "--prompts", "--seed", "--out", "--guidance"}) {
    CHECK(res.out.find(flag) != std::string::npos);
  }

  res = run_cli("eval --help");
  CHECK(res.exit_code == 0);
  for (const char* flag : {"--ckpt", "--corpus", "--generated", "--out", "--reps", "--pool",
                           "--seed"}) {
    CHECK(res.out.find(flag) != std::string::npos);
  }
}

TEST_CASE("AMD_LOG gates verbosity and rejects unknown levels") {
  const auto& p = pipeline();
  const std::string out = (p.dir / "log_probe").string();

  auto res = run_cli("gen-corpus --out " + out + " --clips 4 --seed 3", "AMD_LOG=error");
  CHECK(res.exit_code == 0);
  CHECK(res.err.empty());

  res = run_cli("gen-corpus --out " + out + " --clips 4 --seed 3", "AMD_LOG=debug");
  CHECK(res.exit_code == 0);
  CHECK(res.err.find("[debug]") != std::string::npos);

  res = run_cli("gen-corpus --out " + out + " --clips 4 --seed 3", "AMD_LOG=loud");
  CHECK(res.exit_code == 1);
  CHECK(res.err.find("AMD_LOG") != std::string::npos);
}

TEST_CASE("failed commands leave no partial output files") {
  const auto& p = pipeline();
  const auto res = run_cli("eval --ckpt " + p.ckpt_path + " --corpus " + p.corpus_dir +
                           " --generated " + p.sampled + " --seed 1 --out no_such_dir/report.json");
  CHECK(res.exit_code == 2);
  CHECK_FALSE(fs::exists("no_such_dir"));

  // Successful writers clean up their temporaries as well.
  for (const auto& entry : fs::directory_iterator(p.dir)) {
    CHECK(entry.path().extension() != ".tmp");
  }
}
