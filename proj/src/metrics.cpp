#include "amd/metrics.hpp"

#include "amd/binio.hpp"
#include "amd/errors.hpp"
#include "amd/rng.hpp"

#include <json.hpp>

#include <Eigen/Eigenvalues>

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>

namespace amd {

namespace {

Vecd deterministic_stats(const MotionClip& clip) {
  const Matd x = clip.frames.cast<double>();
  const int F = int(x.rows());
  Vecd stats(3 * kFeatureDim);
  const Vecd mean = x.colwise().mean().transpose();
  stats.segment(0, kFeatureDim) = mean;
  const Matd centered = x.rowwise() - mean.transpose();
  stats.segment(kFeatureDim, kFeatureDim) =
      (centered.array().square().colwise().mean()).sqrt().matrix().transpose();
  if (F > 1) {
    const Matd deltas = x.bottomRows(F - 1) - x.topRows(F - 1);
    stats.segment(2 * kFeatureDim, kFeatureDim) =
        deltas.cwiseAbs().colwise().mean().transpose();
  } else {
    stats.segment(2 * kFeatureDim, kFeatureDim).setZero();
  }
  return stats;
}

const Matd& deterministic_projection() {
  static const Matd projection = [] {
    Rng rng(kFeatureProjectionSeed);
    return Matd(rng.normal_mat<double>(kDeterministicFeatureDim, 3 * kFeatureDim) /
                std::sqrt(double(3 * kFeatureDim)));
  }();
  return projection;
}

// Symmetric PSD square root; eigenvalues below the clip threshold become 0.
Matd psd_sqrt(const Matd& m, double clip) {
  const Matd sym = 0.5 * (m + m.transpose());
  Eigen::SelfAdjointEigenSolver<Matd> solver(sym);
  if (solver.info() != Eigen::Success) throw std::runtime_error("fid: eigendecomposition failed");
  Vecd vals = solver.eigenvalues();
  for (Eigen::Index i = 0; i < vals.size(); ++i) {
    vals[i] = vals[i] < clip ? 0.0 : std::sqrt(vals[i]);
  }
  return solver.eigenvectors() * vals.asDiagonal() * solver.eigenvectors().transpose();
}

std::pair<Vecd, Matd> moments(const Matd& feats) {
  const Vecd mu = feats.colwise().mean().transpose();
  const Matd centered = feats.rowwise() - mu.transpose();
  const Matd cov = centered.transpose() * centered / double(feats.rows() - 1);
  return {mu, cov};
}

}  // namespace

Vecd extract_motion_features(const MotionClip& clip, FeatureMode mode,
                             const EvaluatorParams* evaluator) {
  if (clip.frames.rows() < 1 || clip.frames.cols() != kFeatureDim) {
    throw std::invalid_argument("extract_motion_features: malformed clip");
  }
  if (mode == FeatureMode::learned) {
    if (evaluator == nullptr) {
      throw std::invalid_argument("extract_motion_features: learned mode needs an evaluator");
    }
    return motion_feature(clip, *evaluator);
  }
  return deterministic_projection() * deterministic_stats(clip);
}

double fid(const Matd& real_feats, const Matd& gen_feats) {
  if (real_feats.rows() < 2 || gen_feats.rows() < 2) {
    throw std::invalid_argument("fid: each feature set needs at least two samples");
  }
  if (real_feats.cols() != gen_feats.cols()) {
    throw std::invalid_argument("fid: feature dimensions differ");
  }
  const auto [mu_r, cov_r] = moments(real_feats);
  const auto [mu_g, cov_g] = moments(gen_feats);

  // The product's eigenvalues are variances squared, so its clip threshold is
  // the square of the covariance-level one; a flat 1e-8 there would silently
  // drop directions with variance in (1e-8, 1e-4) from the trace.
  const Matd root_r = psd_sqrt(cov_r, 1e-8);
  const Matd cross = psd_sqrt(root_r * cov_g * root_r, 1e-16);
  return (mu_r - mu_g).squaredNorm() + cov_r.trace() + cov_g.trace() - 2.0 * cross.trace();
}

double diversity(const Matd& feats, int pairs, std::uint64_t seed) {
  if (pairs < 1) throw std::invalid_argument("diversity: need at least one pair");
  const int n = int(feats.rows());
  if (n < 2 * pairs) {
    throw std::invalid_argument("diversity: " + std::to_string(n) + " features cannot form " +
                                std::to_string(pairs) + " disjoint pairs");
  }
  std::vector<int> idx(static_cast<std::size_t>(n));
  std::iota(idx.begin(), idx.end(), 0);
  Rng rng(seed);
  for (int i = 0; i < n - 1; ++i) {
    std::swap(idx[std::size_t(i)], idx[std::size_t(rng.uniform_int(i, n - 1))]);
  }
  double sum = 0.0;
  for (int k = 0; k < pairs; ++k) {
    sum += (feats.row(idx[std::size_t(2 * k)]) - feats.row(idx[std::size_t(2 * k + 1)])).norm();
  }
  return sum / double(pairs);
}

double multimodality(const std::map<std::string, Matd>& per_text_feats,
                     [[maybe_unused]] std::uint64_t seed) {
  if (per_text_feats.empty()) return 0.0;
  double text_sum = 0.0;
  for (const auto& [text, feats] : per_text_feats) {
    const int r = int(feats.rows());
    if (r < 2) {
      throw std::invalid_argument("multimodality: text \"" + text +
                                  "\" has fewer than two generations");
    }
    double pair_sum = 0.0;
    int count = 0;
    for (int i = 0; i < r; ++i) {
      for (int j = i + 1; j < r; ++j) {
        pair_sum += (feats.row(i) - feats.row(j)).norm();
        ++count;
      }
    }
    text_sum += pair_sum / double(count);
  }
  return text_sum / double(per_text_feats.size());
}

RetrievalResult r_precision_core(const Matd& motion_feats, const std::vector<int>& text_ids,
                                 const Matd& text_feats, int pool_size, std::uint64_t seed) {
  const int n = int(motion_feats.rows());
  const int m = int(text_feats.rows());
  if (n < 1) throw std::invalid_argument("r_precision: no motions");
  if (int(text_ids.size()) != n) {
    throw std::invalid_argument("r_precision: text_ids length does not match motions");
  }
  if (pool_size < 2) throw std::invalid_argument("r_precision: pool must hold at least two texts");
  if (m < pool_size) {
    throw std::invalid_argument("r_precision: only " + std::to_string(m) +
                                " distinct texts for a pool of " + std::to_string(pool_size));
  }

  Rng rng(seed);
  int hits = 0;
  double dist_sum = 0.0;
  std::vector<int> others;
  others.reserve(std::size_t(m - 1));
  for (int i = 0; i < n; ++i) {
    const int true_id = text_ids[std::size_t(i)];
    if (true_id < 0 || true_id >= m) throw std::invalid_argument("r_precision: text id out of range");
    const double true_dist = (motion_feats.row(i) - text_feats.row(true_id)).norm();
    dist_sum += true_dist;

    others.clear();
    for (int id = 0; id < m; ++id) {
      if (id != true_id) others.push_back(id);
    }
    // Partial shuffle: the first pool_size - 1 entries become the distractors.
    const int draws = pool_size - 1;
    for (int k = 0; k < draws; ++k) {
      std::swap(others[std::size_t(k)],
                others[std::size_t(rng.uniform_int(k, int(others.size()) - 1))]);
    }
    int closer = 0;
    for (int k = 0; k < draws; ++k) {
      const double d = (motion_feats.row(i) - text_feats.row(others[std::size_t(k)])).norm();
      if (d < true_dist) ++closer;
    }
    if (closer <= 2) ++hits;  // true text ranked in the top 3
  }
  return RetrievalResult{double(hits) / double(n), dist_sum / double(n)};
}

RetrievalResult r_precision_and_mmdist(
    const std::vector<std::pair<std::string, const MotionClip*>>& pairs,
    const EvaluatorParams& evaluator, int pool_size, std::uint64_t seed) {
  if (pairs.empty()) throw std::invalid_argument("r_precision: no evaluation pairs");
  std::map<std::string, int> text_index;
  for (const auto& [text, clip] : pairs) {
    (void)clip;
    text_index.emplace(text, 0);
  }
  int next = 0;
  for (auto& [text, id] : text_index) id = next++;

  Matd text_feats(next, evaluator.config.d_feat);
  for (const auto& [text, id] : text_index) {
    text_feats.row(id) = text_feature(text, evaluator).transpose();
  }

  Matd motion_feats(int(pairs.size()), evaluator.config.d_feat);
  std::vector<int> ids;
  ids.reserve(pairs.size());
  for (std::size_t i = 0; i < pairs.size(); ++i) {
    motion_feats.row(int(i)) = motion_feature(*pairs[i].second, evaluator).transpose();
    ids.push_back(text_index.at(pairs[i].first));
  }
  return r_precision_core(motion_feats, ids, text_feats, pool_size, seed);
}

MetricReport evaluate_suite(const SuiteInputs& inputs, const EvaluatorParams& evaluator,
                            std::uint64_t seed, const SuiteOptions& options) {
  if (inputs.real.size() < 2 || inputs.generated.size() < 2) {
    throw std::invalid_argument("evaluate_suite: need at least two real and two generated clips");
  }
  if (options.repetitions < 1) throw std::invalid_argument("evaluate_suite: repetitions must be >= 1");

  auto features_of = [&](const std::vector<std::pair<std::string, const MotionClip*>>& set) {
    Matd feats(int(set.size()), evaluator.config.d_feat);
    for (std::size_t i = 0; i < set.size(); ++i) {
      feats.row(int(i)) = motion_feature(*set[i].second, evaluator).transpose();
    }
    return feats;
  };
  const Matd real_feats = features_of(inputs.real);
  const Matd gen_feats = features_of(inputs.generated);

  // Texts with repeated generations feed the multimodality metric.
  std::map<std::string, std::vector<int>> by_text;
  for (std::size_t i = 0; i < inputs.generated.size(); ++i) {
    by_text[inputs.generated[i].first].push_back(int(i));
  }
  std::map<std::string, Matd> mm_groups;
  for (const auto& [text, rows] : by_text) {
    if (rows.size() < 2) continue;
    Matd group(int(rows.size()), evaluator.config.d_feat);
    for (std::size_t k = 0; k < rows.size(); ++k) group.row(int(k)) = gen_feats.row(rows[k]);
    mm_groups.emplace(text, std::move(group));
  }

  const int div_pairs = std::max(1, std::min(options.diversity_pairs, int(gen_feats.rows()) / 2));

  const double fid_value = fid(real_feats, gen_feats);
  std::vector<double> rp, mmd, div, mm;
  for (int rep = 0; rep < options.repetitions; ++rep) {
    const std::uint64_t rep_seed = derive_seed(seed, std::uint64_t(rep));
    const RetrievalResult rr = r_precision_and_mmdist(inputs.generated, evaluator,
                                                      options.pool_size,
                                                      derive_seed(rep_seed, "retrieval"));
    rp.push_back(rr.r_precision_top3);
    mmd.push_back(rr.multimodal_dist);
    div.push_back(diversity(gen_feats, div_pairs, derive_seed(rep_seed, "diversity")));
    mm.push_back(multimodality(mm_groups, derive_seed(rep_seed, "multimodality")));
  }

  auto mean_of = [](const std::vector<double>& xs) {
    return std::accumulate(xs.begin(), xs.end(), 0.0) / double(xs.size());
  };
  auto interval_of = [&](const std::vector<double>& xs) {
    if (xs.size() < 2) return 0.0;
    const double mu = mean_of(xs);
    double var = 0.0;
    for (double x : xs) var += (x - mu) * (x - mu);
    var /= double(xs.size() - 1);
    return 1.96 * std::sqrt(var / double(xs.size()));
  };

  MetricReport report;
  report.fid = fid_value;
  report.r_precision_top3 = mean_of(rp);
  report.multimodal_dist = mean_of(mmd);
  report.diversity = mean_of(div);
  report.multimodality = mean_of(mm);
  report.intervals = {{"fid", 0.0},
                      {"r_precision_top3", interval_of(rp)},
                      {"multimodal_dist", interval_of(mmd)},
                      {"diversity", interval_of(div)},
                      {"multimodality", interval_of(mm)}};
  report.real_count = int(inputs.real.size());
  report.generated_count = int(inputs.generated.size());
  report.repetitions = options.repetitions;
  report.seed = seed;
  return report;
}

std::string report_to_json(const MetricReport& report) {
  nlohmann::json j;
  j["metrics"] = {{"fid", report.fid},
                  {"r_precision_top3", report.r_precision_top3},
                  {"multimodal_dist", report.multimodal_dist},
                  {"diversity", report.diversity},
                  {"multimodality", report.multimodality}};
  j["intervals"] = report.intervals;
  j["counts"] = {{"real", report.real_count},
                 {"generated", report.generated_count},
                 {"repetitions", report.repetitions}};
  j["seed"] = report.seed;
  return j.dump(2) + "\n";
}

MetricReport report_from_json(const std::string& text, const std::string& origin) {
  try {
    const auto j = nlohmann::json::parse(text);
    const auto& metrics = j.at("metrics");
    static const std::vector<std::string> keys = {"fid", "r_precision_top3", "multimodal_dist",
                                                  "diversity", "multimodality"};
    if (metrics.size() != keys.size()) {
      throw IoError(origin + ": metrics object must hold exactly the five metric keys");
    }
    MetricReport report;
    report.fid = metrics.at("fid").get<double>();
    report.r_precision_top3 = metrics.at("r_precision_top3").get<double>();
    report.multimodal_dist = metrics.at("multimodal_dist").get<double>();
    report.diversity = metrics.at("diversity").get<double>();
    report.multimodality = metrics.at("multimodality").get<double>();
    if (j.contains("intervals")) {
      report.intervals = j.at("intervals").get<std::map<std::string, double>>();
    }
    if (j.contains("counts")) {
      report.real_count = j.at("counts").value("real", 0);
      report.generated_count = j.at("counts").value("generated", 0);
      report.repetitions = j.at("counts").value("repetitions", 0);
    }
    report.seed = j.value("seed", std::uint64_t(0));
    return report;
  } catch (const nlohmann::json::exception& e) {
    throw IoError(origin + ": malformed metric report: " + e.what());
  }
}

void save_report(const MetricReport& report, const std::string& path) {
  binio::write_file_atomic(path, report_to_json(report));
}

}  // namespace amd
