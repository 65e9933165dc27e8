#include "amd/corpus.hpp"

#include "amd/binio.hpp"
#include "amd/errors.hpp"
#include "amd/rng.hpp"

#include <json.hpp>

#include <algorithm>
#include <cctype>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <map>
#include <regex>
#include <sstream>
#include <stdexcept>

namespace amd {

namespace {

constexpr double kStandHeight = 0.92;  // pelvis height of the neutral pose
constexpr double kPi = 3.14159265358979323846;

const std::map<std::string, std::vector<std::string>>& template_table() {
  static const std::map<std::string, std::vector<std::string>> table = {
      {"walk",
       {"a person walks forward", "someone strides ahead at a steady pace",
        "the figure paces forward across the floor"}},
      {"kick_left",
       {"a person kicks with the left leg", "someone snaps a sharp left kick",
        "the figure throws a left footed kick"}},
      {"wave",
       {"a person waves one hand", "someone waves in friendly greeting",
        "the figure raises an arm and waves"}},
      {"squat",
       {"a person squats down and rises", "someone performs a deep squat",
        "the figure crouches into a low squat"}},
  };
  return table;
}

const std::map<std::string, std::vector<std::string>>& keyword_table() {
  static const std::map<std::string, std::vector<std::string>> table = {
      {"walk", {"walks", "strides", "paces"}},
      {"kick_left", {"kick", "kicks"}},
      {"wave", {"waves"}},
      {"squat", {"squat", "squats", "crouches"}},
  };
  return table;
}

// Smoothstep used for swing-foot advancement: zero velocity at both ends.
double swing_smooth(double u) { return u - std::sin(2.0 * kPi * u) / (2.0 * kPi); }

double sin2(double x) {
  const double s = std::sin(x);
  return s * s;
}

struct SegmentPlan {
  const MotifSpec* motif = nullptr;
  int frames = 0;
  double amplitude = 0.0;
  double frequency = 0.0;
  int template_idx = 0;
};

// Per-joint deviation from the standing pose, accumulated into dev (rows =
// parent frames, cols = 3 per non-root joint), plus root height dips and root
// forward velocity. All deviations vanish at the segment's first and last
// frame so chain segments meet on an exact shared standing frame.
void author_segment(const SegmentPlan& seg, double fps, int start, Matd& dev, Vecd& root_h,
                    Vecd& root_vz) {
  const int F = seg.frames;
  const double A = seg.amplitude;
  const double span = double(F - 1);
  auto add = [&](int tau, int joint, double dx, double dy, double dz) {
    dev(start + tau, 3 * (joint - 1) + 0) += dx;
    dev(start + tau, 3 * (joint - 1) + 1) += dy;
    dev(start + tau, 3 * (joint - 1) + 2) += dz;
  };

  const std::string& name = seg.motif->name;
  if (name == "walk") {
    // Alternating stance/swing steps; the planted toe is world-fixed during
    // stance, so contact labels fall out of the detection rule exactly.
    const int n_steps = 2 * std::max<int>(1, llround(seg.frequency * span / fps));
    const double cs = span / n_steps;  // frames per step
    const double v = A / cs;           // root advance per frame
    for (int tau = 0; tau + 1 < F; ++tau) root_vz(start + tau) += v;

    const double lift = 0.07;
    for (int tau = 0; tau < F; ++tau) {
      int k = std::min<int>(int(tau / cs), n_steps - 1);
      double u = tau / cs - k;
      if (tau == F - 1) u = 1.0;

      // Left foot swings on even steps, right on odd.
      double lz, ly, rz, ry;
      if (k % 2 == 0) {
        lz = 2.0 * A * swing_smooth(u) - A * u;
        ly = lift * sin2(kPi * u);
        rz = -A * u;
        ry = 0.0;
      } else {
        lz = A * (1.0 - u);
        ly = 0.0;
        rz = 2.0 * A * swing_smooth(u) - A * (1.0 + u);
        ry = lift * sin2(kPi * u);
      }
      add(tau, 10, 0, ly, lz);             // l_toe
      add(tau, 7, 0, ly, lz);              // l_ankle rides rigidly above the toe
      add(tau, 4, 0, 0.5 * ly, 0.5 * lz);  // l_knee
      add(tau, 11, 0, ry, rz);
      add(tau, 8, 0, ry, rz);
      add(tau, 5, 0, 0.5 * ry, 0.5 * rz);

      const double arm = 0.3 * A * std::sin(kPi * (k + u));
      add(tau, 20, 0, 0, -arm);
      add(tau, 18, 0, 0, -0.5 * arm);
      add(tau, 21, 0, 0, arm);
      add(tau, 19, 0, 0, 0.5 * arm);
    }
  } else if (name == "kick_left") {
    // Single burst: e(tau) = sin^2(pi (tau - t0) / w) inside [t0, t0 + w].
    const double t0 = span / 4.0;
    const double w = span / 2.0;
    for (int tau = 0; tau < F; ++tau) {
      const double local = tau - t0;
      if (local < 0.0 || local > w) continue;
      const double e = sin2(kPi * local / w);
      add(tau, 10, 0, 0.35 * A * e, A * e);
      add(tau, 7, 0, 0.35 * A * e, A * e);
      add(tau, 4, 0, 0.21 * A * e, 0.6 * A * e);
    }
  } else if (name == "wave") {
    for (int tau = 0; tau < F; ++tau) {
      const double env = sin2(kPi * tau / span);
      const double osc = std::sin(2.0 * kPi * seg.frequency * tau / fps);
      add(tau, 21, A * osc * env, 0.55 * env, 0.0);
      add(tau, 19, 0.5 * A * osc * env, 0.25 * env, 0.0);
      add(tau, 17, 0.15 * A * osc * env, 0.05 * env, 0.0);
    }
  } else if (name == "squat") {
    const int dips = std::max<int>(1, llround(seg.frequency * span / fps));
    static const int upper[] = {1, 2, 3, 6, 9, 12, 13, 14, 15, 16, 17, 18, 19, 20, 21};
    for (int tau = 0; tau < F; ++tau) {
      const double d = A * sin2(kPi * dips * tau / span);
      root_h(start + tau) -= d;
      for (int j : upper) add(tau, j, 0, -d, 0);
      add(tau, 4, 0, 0.55 * d, 0.8 * d);  // knees: lower less, jut forward
      add(tau, 5, 0, 0.55 * d, 0.8 * d);
    }
  } else {
    throw std::invalid_argument("generate_corpus: unknown motif '" + name + "'");
  }
}

// Encodes the authored chain trajectory into 263-channel rows. Rotation
// channels carry identity 6D plus a small deviation-coupled wobble so they
// hold motif signal without affecting position recovery.
Mat encode_chain(const std::vector<SegmentPlan>& segs, double fps) {
  int total = 1;
  for (const auto& s : segs) total += s.frames - 1;

  Matd dev = Matd::Zero(total, 3 * (kJointCount - 1));
  Vecd root_h = Vecd::Constant(total, kStandHeight);
  Vecd root_vz = Vecd::Zero(total);
  int start = 0;
  for (const auto& s : segs) {
    author_segment(s, fps, start, dev, root_h, root_vz);
    start += s.frames - 1;
  }

  // Root ground trajectory (heading stays zero for authored motion).
  Vecd root_z = Vecd::Zero(total);
  for (int t = 0; t + 1 < total; ++t) root_z(t + 1) = root_z(t) + root_vz(t);

  const Matd rest = rest_pose(default_skeleton());
  Matd world(total, 3 * kJointCount);
  for (int t = 0; t < total; ++t) {
    world.block<1, 3>(t, 0) << 0.0, root_h(t), root_z(t);
    for (int j = 1; j < kJointCount; ++j) {
      world(t, 3 * j + 0) = rest(j, 0) + dev(t, 3 * (j - 1) + 0);
      world(t, 3 * j + 1) = rest(j, 1) + kStandHeight + dev(t, 3 * (j - 1) + 1);
      world(t, 3 * j + 2) = rest(j, 2) + dev(t, 3 * (j - 1) + 2) + root_z(t);
    }
  }

  Mat frames = Mat::Zero(total, kFeatureDim);
  for (int t = 0; t < total; ++t) {
    frames(t, kChRootVelZ) = float(root_vz(t));
    frames(t, kChRootHeight) = float(root_h(t));
    for (int j = 1; j < kJointCount; ++j) {
      const int ch = pos_channel(j);
      frames(t, ch + 0) = float(dev(t, 3 * (j - 1) + 0));
      frames(t, ch + 1) = float(kStandHeight + dev(t, 3 * (j - 1) + 1));
      frames(t, ch + 2) = float(dev(t, 3 * (j - 1) + 2));

      const int rc = rot_channel(j);
      frames(t, rc + 0) = 1.0f;
      frames(t, rc + 4) = 1.0f;
      frames(t, rc + 1) = float(0.5 * dev(t, 3 * (j - 1) + 2));
      frames(t, rc + 4) -= float(0.5 * dev(t, 3 * (j - 1) + 1));
    }
    if (t + 1 < total) {
      for (int j = 0; j < kJointCount; ++j) {
        const int vc = vel_channel(j);
        frames(t, vc + 0) = float(world(t + 1, 3 * j + 0) - world(t, 3 * j + 0));
        frames(t, vc + 1) = float(world(t + 1, 3 * j + 1) - world(t, 3 * j + 1));
        frames(t, vc + 2) = float(world(t + 1, 3 * j + 2) - world(t, 3 * j + 2));
      }
    }
  }
  // Last frame copies the previous frame's derived velocities (and the root
  // velocity channels, which have no successor frame to point at).
  if (total >= 2) {
    frames.row(total - 1).segment(kChVelStart, 3 * kJointCount) =
        frames.row(total - 2).segment(kChVelStart, 3 * kJointCount);
    frames(total - 1, kChRootYawVel) = frames(total - 2, kChRootYawVel);
    frames(total - 1, kChRootVelX) = frames(total - 2, kChRootVelX);
    frames(total - 1, kChRootVelZ) = frames(total - 2, kChRootVelZ);
  }
  return frames;
}

void check_motif(const MotifSpec& m) {
  if (m.name.empty()) throw std::invalid_argument("generate_corpus: motif with empty name");
  if (m.duration_frames < 40 || m.duration_frames > 200 || m.duration_frames % 4 != 0) {
    throw std::invalid_argument("generate_corpus: motif '" + m.name +
                                "' duration must be a multiple of 4 in [40, 200]");
  }
  if (!(m.amplitude > 0.0)) {
    throw std::invalid_argument("generate_corpus: motif '" + m.name + "' amplitude must be > 0");
  }
  if (m.affected_joints.empty()) {
    throw std::invalid_argument("generate_corpus: motif '" + m.name + "' has no affected joints");
  }
  for (int j : m.affected_joints) {
    if (j < 0 || j >= kJointCount) {
      throw std::invalid_argument("generate_corpus: motif '" + m.name + "' joint out of range");
    }
  }
}

std::vector<std::string> lower_tokens(const std::string& text) {
  std::vector<std::string> out;
  std::string cur;
  for (char c : text) {
    if (std::isalnum(static_cast<unsigned char>(c))) {
      cur.push_back(char(std::tolower(static_cast<unsigned char>(c))));
    } else if (!cur.empty()) {
      out.push_back(cur);
      cur.clear();
    }
  }
  if (!cur.empty()) out.push_back(cur);
  return out;
}

}  // namespace

std::vector<MotifSpec> default_motifs() {
  return {
      {"walk", 48, 0.35, 0.9, {1, 2, 4, 5, 7, 8, 10, 11, 18, 19, 20, 21}},
      {"kick_left", 40, 0.40, 0.5, {4, 7, 10}},
      {"wave", 44, 0.25, 1.5, {17, 19, 21}},
      {"squat", 52, 0.22, 0.5, {1, 2, 4, 5, 7, 8, 10, 11}},
  };
}

const CorpusRecord* Corpus::find(const std::string& id) const {
  const int i = index_of(id);
  return i < 0 ? nullptr : &records[std::size_t(i)];
}

int Corpus::index_of(const std::string& id) const {
  for (std::size_t i = 0; i < records.size(); ++i) {
    if (records[i].id == id) return int(i);
  }
  return -1;
}

Corpus generate_corpus(const CorpusConfig& config) {
  if (config.motif_set.empty()) throw std::invalid_argument("generate_corpus: empty motif set");
  if (config.n_records < 2) throw std::invalid_argument("generate_corpus: n_records must be >= 2");
  if (config.fps <= 0.0) throw std::invalid_argument("generate_corpus: fps must be positive");
  for (const auto& m : config.motif_set) check_motif(m);

  // Chain layout: chains of length 2-4 until enough records carry prev_id.
  const int n = config.n_records;
  const int target = int(llround(config.pair_fraction * n));
  std::vector<int> chain_lens;
  int rem = n, deficit = target;
  while (deficit > 0 && rem >= 2) {
    int len = std::min({deficit + 1, rem, 3});
    if (rem - len == 1 && deficit - (len - 1) >= 1) ++len;  // never strand one record
    chain_lens.push_back(len);
    rem -= len;
    deficit -= len - 1;
  }
  for (int i = 0; i < rem; ++i) chain_lens.push_back(1);

  const std::uint64_t rec_stream = derive_seed(config.seed, "record");
  const int n_motifs = int(config.motif_set.size());
  const SkeletonSpec skel = default_skeleton();

  Corpus corpus;
  corpus.fps = config.fps;
  corpus.records.reserve(std::size_t(n));

  int next_index = 0;
  for (int len : chain_lens) {
    std::vector<SegmentPlan> segs(static_cast<std::size_t>(len));
    std::vector<CorpusRecord> recs(static_cast<std::size_t>(len));
    for (int s = 0; s < len; ++s) {
      const int idx = next_index + s;
      const MotifSpec& motif = config.motif_set[std::size_t(idx % n_motifs)];
      Rng rng(derive_seed(rec_stream, std::uint64_t(idx)));

      const int jitter = config.duration_jitter > 0
                             ? rng.uniform_int(-config.duration_jitter, config.duration_jitter)
                             : 0;
      const int frames = std::clamp(motif.duration_frames + 4 * jitter, 40, 200);

      SegmentPlan& seg = segs[std::size_t(s)];
      seg.motif = &motif;
      seg.frames = frames;
      seg.amplitude = motif.amplitude * (0.8 + 0.4 * rng.uniform());
      seg.frequency = motif.frequency * (0.8 + 0.4 * rng.uniform());
      const auto& templates = template_table().at(motif.name);
      seg.template_idx = rng.uniform_int(0, int(templates.size()) - 1);

      char id[16];
      std::snprintf(id, sizeof id, "r%04d", idx);
      CorpusRecord& rec = recs[std::size_t(s)];
      rec.id = id;
      rec.motif = motif.name;
      rec.amplitude = seg.amplitude;
      rec.frequency = seg.frequency;
      rec.text = templates[std::size_t(seg.template_idx)] + " for " +
                 std::to_string(frames / 4) + " counts";
      if (s > 0) rec.prev_id = recs[std::size_t(s - 1)].id;
    }

    const Mat chain_frames = encode_chain(segs, config.fps);
    int start = 0;
    for (int s = 0; s < len; ++s) {
      CorpusRecord& rec = recs[std::size_t(s)];
      rec.clip.fps = float(config.fps);
      rec.clip.frames = chain_frames.middleRows(start, segs[std::size_t(s)].frames);
      // Contacts come from each record's own recovered trajectory so that the
      // stored labels equal detect(recover(clip)) bit-for-bit.
      const GlobalPose pose = recover_positions(rec.clip, skel);
      rec.clip.frames.middleCols(kChContactStart, kContactCount) =
          detect_foot_contacts(pose, skel, default_vel_thresh(config.fps), kDefaultHeightThresh);
      const ValidationResult v = validate_clip(rec.clip);
      if (!v.ok) throw std::logic_error("generate_corpus: invalid clip " + rec.id + ": " + v.message);
      start += segs[std::size_t(s)].frames - 1;
      corpus.records.push_back(std::move(rec));
    }
    next_index += len;
  }
  return corpus;
}

void save_corpus(const Corpus& corpus, const std::string& dir) {
  namespace fs = std::filesystem;
  std::error_code ec;
  fs::create_directories(fs::path(dir) / "clips", ec);
  if (ec) throw IoError("save_corpus: cannot create " + dir + ": " + ec.message());

  std::string meta;
  nlohmann::json header = {{"version", 1}, {"fps", corpus.fps}, {"count", corpus.records.size()}};
  meta += header.dump();
  meta += '\n';
  for (const auto& rec : corpus.records) {
    nlohmann::json line = {{"id", rec.id},
                           {"text", rec.text},
                           {"motif", rec.motif},
                           {"frames", rec.clip.frames.rows()},
                           {"amplitude", rec.amplitude},
                           {"frequency", rec.frequency}};
    if (!rec.prev_id.empty()) line["prev_id"] = rec.prev_id;
    meta += line.dump();
    meta += '\n';
    save_clip(rec.clip, (fs::path(dir) / "clips" / (rec.id + ".amdm")).string());
  }
  binio::write_file_atomic((fs::path(dir) / "corpus.meta").string(), meta);
}

Corpus load_corpus(const std::string& dir) {
  namespace fs = std::filesystem;
  const std::string meta_path = (fs::path(dir) / "corpus.meta").string();
  std::ifstream in(meta_path);
  if (!in) throw IoError("load_corpus: cannot open " + meta_path);

  std::string line;
  if (!std::getline(in, line)) throw IoError("load_corpus: empty meta file " + meta_path);

  Corpus corpus;
  std::size_t expected = 0;
  try {
    const auto header = nlohmann::json::parse(line);
    if (header.at("version").get<int>() != 1) {
      throw IoError("load_corpus: unsupported meta version");
    }
    corpus.fps = header.at("fps").get<double>();
    expected = header.at("count").get<std::size_t>();
  } catch (const nlohmann::json::exception& e) {
    throw IoError("load_corpus: malformed header in " + meta_path + ": " + e.what());
  }

  int line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    CorpusRecord rec;
    Eigen::Index frames = 0;
    try {
      const auto j = nlohmann::json::parse(line);
      rec.id = j.at("id").get<std::string>();
      rec.text = j.at("text").get<std::string>();
      rec.motif = j.at("motif").get<std::string>();
      rec.amplitude = j.at("amplitude").get<double>();
      rec.frequency = j.at("frequency").get<double>();
      frames = j.at("frames").get<Eigen::Index>();
      if (j.contains("prev_id")) rec.prev_id = j.at("prev_id").get<std::string>();
    } catch (const nlohmann::json::exception& e) {
      throw IoError("load_corpus: malformed record at " + meta_path + ":" +
                    std::to_string(line_no) + ": " + e.what());
    }
    if (corpus.index_of(rec.id) >= 0) throw IoError("load_corpus: duplicate id " + rec.id);

    rec.clip = load_clip((fs::path(dir) / "clips" / (rec.id + ".amdm")).string());
    rec.clip.fps = float(corpus.fps);
    if (rec.clip.frames.rows() != frames) {
      throw IoError("load_corpus: clip header mismatch for " + rec.id + " (meta says " +
                    std::to_string(frames) + " frames, clip has " +
                    std::to_string(rec.clip.frames.rows()) + ")");
    }
    corpus.records.push_back(std::move(rec));
  }
  if (corpus.records.size() != expected) {
    throw IoError("load_corpus: header count " + std::to_string(expected) + " != " +
                  std::to_string(corpus.records.size()) + " records in " + meta_path);
  }
  for (const auto& rec : corpus.records) {
    if (!rec.prev_id.empty() && corpus.index_of(rec.prev_id) < 0) {
      throw IoError("load_corpus: " + rec.id + " references missing prev_id " + rec.prev_id);
    }
  }
  return corpus;
}

CorpusSplit split_corpus(const Corpus& corpus, const std::array<double, 3>& ratios,
                         std::uint64_t seed) {
  double sum = 0.0;
  for (double r : ratios) {
    if (!(r > 0.0)) throw std::invalid_argument("split_corpus: ratios must be positive");
    sum += r;
  }
  if (std::abs(sum - 1.0) > 1e-9) {
    throw std::invalid_argument("split_corpus: ratios must sum to 1");
  }

  const int n = int(corpus.records.size());
  // Largest-remainder apportionment of n records into the three targets.
  std::array<int, 3> targets{};
  std::array<double, 3> frac{};
  int assigned = 0;
  for (int i = 0; i < 3; ++i) {
    const double exact = ratios[std::size_t(i)] * n;
    targets[std::size_t(i)] = int(std::floor(exact));
    frac[std::size_t(i)] = exact - std::floor(exact);
    assigned += targets[std::size_t(i)];
  }
  while (assigned < n) {
    int best = 0;
    for (int i = 1; i < 3; ++i) {
      if (frac[std::size_t(i)] > frac[std::size_t(best)] + 1e-12) best = i;
    }
    targets[std::size_t(best)]++;
    frac[std::size_t(best)] = -1.0;
    ++assigned;
  }
  for (int t : targets) {
    if (t == 0) throw std::invalid_argument("split_corpus: corpus too small to honor all splits");
  }

  // Group records into coherence chains (groups never straddle splits).
  std::vector<std::vector<std::string>> groups;
  std::vector<int> group_of(std::size_t(n), -1);
  for (int i = 0; i < n; ++i) {
    const CorpusRecord& rec = corpus.records[std::size_t(i)];
    if (rec.prev_id.empty()) {
      group_of[std::size_t(i)] = int(groups.size());
      groups.push_back({rec.id});
    } else {
      const int p = corpus.index_of(rec.prev_id);
      if (p < 0 || group_of[std::size_t(p)] < 0) {
        throw std::invalid_argument("split_corpus: dangling prev_id for " + rec.id);
      }
      group_of[std::size_t(i)] = group_of[std::size_t(p)];
      groups[std::size_t(group_of[std::size_t(p)])].push_back(rec.id);
    }
  }

  // Seeded shuffle, then big groups first into the emptiest split.
  Rng rng(derive_seed(seed, "split"));
  for (int i = int(groups.size()) - 1; i > 0; --i) {
    std::swap(groups[std::size_t(i)], groups[std::size_t(rng.uniform_int(0, i))]);
  }
  std::stable_sort(groups.begin(), groups.end(),
                   [](const auto& a, const auto& b) { return a.size() > b.size(); });

  CorpusSplit split;
  std::array<std::vector<std::string>*, 3> out = {&split.train, &split.test, &split.validation};
  std::array<int, 3> cap = targets;
  for (const auto& g : groups) {
    int best = 0;
    for (int i = 1; i < 3; ++i) {
      if (cap[std::size_t(i)] > cap[std::size_t(best)]) best = i;
    }
    for (const auto& id : g) out[std::size_t(best)]->push_back(id);
    cap[std::size_t(best)] -= int(g.size());
  }
  for (auto* list : out) std::sort(list->begin(), list->end());
  return split;
}

std::string motif_from_text(const std::string& text) {
  const auto tokens = lower_tokens(text);
  for (const auto& [motif, keys] : keyword_table()) {
    for (const auto& key : keys) {
      for (const auto& tok : tokens) {
        if (tok == key) return motif;
      }
    }
  }
  return "";
}

int counts_from_text(const std::string& text) {
  static const std::regex pattern("for ([0-9]+) counts");
  std::smatch m;
  if (std::regex_search(text, m, pattern)) return std::stoi(m[1].str());
  return -1;
}

}  // namespace amd
