#include "amd/checkpoint.hpp"

#include "amd/binio.hpp"
#include "amd/errors.hpp"
#include "amd/rng.hpp"

#include <json.hpp>

#include <stdexcept>
#include <vector>

namespace amd {

namespace {

constexpr char kMagic[4] = {'A', 'M', 'D', 'C'};

constexpr std::uint32_t kFlagModel = 1u << 0;
constexpr std::uint32_t kFlagDuration = 1u << 1;
constexpr std::uint32_t kFlagEvaluator = 1u << 2;

template <class Params>
void put_sections(std::string& out, const Params& params) {
  std::uint32_t count = 0;
  params.for_each([&](const auto&, const Mat&) { ++count; });
  binio::put_u32(out, count);
  params.for_each([&](const auto& name, const Mat& m) {
    const std::string n(name);
    binio::put_u32(out, std::uint32_t(n.size()));
    out.append(n);
    binio::put_u32(out, std::uint32_t(m.rows()));
    binio::put_u32(out, std::uint32_t(m.cols()));
    for (Eigen::Index i = 0; i < m.rows(); ++i) {
      for (Eigen::Index j = 0; j < m.cols(); ++j) binio::put_f32(out, m(i, j));
    }
  });
}

template <class Params>
void read_sections(binio::Reader& in, Params& params, const std::string& origin) {
  const std::uint32_t count = in.u32();
  std::uint32_t expected = 0;
  params.for_each([&](const auto&, Mat&) { ++expected; });
  if (count != expected) {
    throw IoError(origin + ": component has " + std::to_string(count) + " sections, expected " +
                  std::to_string(expected));
  }
  params.for_each([&](const auto& name, Mat& m) {
    const std::uint32_t name_len = in.u32();
    const std::string got = in.bytes(name_len);
    if (got != std::string(name)) {
      throw IoError(origin + ": section \"" + got + "\" out of order, expected \"" +
                    std::string(name) + "\"");
    }
    const std::uint32_t rows = in.u32();
    const std::uint32_t cols = in.u32();
    m.resize(rows, cols);
    for (std::uint32_t i = 0; i < rows; ++i) {
      for (std::uint32_t j = 0; j < cols; ++j) m(i, j) = in.f32();
    }
  });
}

}  // namespace

std::uint64_t corpus_fingerprint(const Corpus& corpus) {
  std::string digest;
  digest.reserve(1 << 20);
  binio::put_f32(digest, float(corpus.fps));
  binio::put_u32(digest, std::uint32_t(corpus.records.size()));
  for (const CorpusRecord& rec : corpus.records) {
    for (const std::string* s : {&rec.id, &rec.text, &rec.motif, &rec.prev_id}) {
      binio::put_u32(digest, std::uint32_t(s->size()));
      digest.append(*s);
    }
    const Mat& m = rec.clip.frames;
    binio::put_u32(digest, std::uint32_t(m.rows()));
    binio::put_u32(digest, std::uint32_t(m.cols()));
    for (Eigen::Index i = 0; i < m.rows(); ++i) {
      for (Eigen::Index j = 0; j < m.cols(); ++j) binio::put_f32(digest, m(i, j));
    }
  }
  return fnv1a64(digest);
}

std::string encode_checkpoint(const Checkpoint& ckpt) {
  validate_config(ckpt.model_config);
  if (ckpt.has_model && ckpt.model.denoiser.blocks.size() != std::size_t(ckpt.model_config.n_layers)) {
    throw std::invalid_argument("checkpoint: model block count does not match the config");
  }

  std::string payload;
  binio::put_u64(payload, ckpt.fingerprint);

  nlohmann::json j;
  j["model"] = {{"d_model", ckpt.model_config.d_model},
                {"n_layers", ckpt.model_config.n_layers},
                {"n_heads", ckpt.model_config.n_heads},
                {"ff_multiplier", ckpt.model_config.ff_multiplier},
                {"max_frames", ckpt.model_config.max_frames}};
  j["evaluator"] = {{"d_feat", ckpt.eval_config.d_feat},
                    {"d_hidden", ckpt.eval_config.d_hidden},
                    {"d_text", ckpt.eval_config.d_text}};
  j["schedule"] = {{"timesteps", ckpt.timesteps},
                   {"beta_start", ckpt.beta_start},
                   {"beta_end", ckpt.beta_end}};
  const std::string config_json = j.dump();
  binio::put_u32(payload, std::uint32_t(config_json.size()));
  payload.append(config_json);

  std::uint32_t flags = 0;
  if (ckpt.has_model) flags |= kFlagModel;
  if (ckpt.has_duration) flags |= kFlagDuration;
  if (ckpt.has_evaluator) flags |= kFlagEvaluator;
  binio::put_u32(payload, flags);

  if (ckpt.has_model) put_sections(payload, ckpt.model);
  if (ckpt.has_duration) put_sections(payload, ckpt.duration);
  if (ckpt.has_evaluator) put_sections(payload, ckpt.evaluator);

  std::string out;
  out.append(kMagic, 4);
  binio::put_u32(out, kCheckpointVersion);
  binio::put_u64(out, fnv1a64(payload));
  out.append(payload);
  return out;
}

Checkpoint decode_checkpoint(const std::string& data, const std::string& origin) {
  binio::Reader header(data, origin);
  if (header.bytes(4) != std::string(kMagic, 4)) {
    throw IoError(origin + ": not a checkpoint file (bad magic)");
  }
  const std::uint32_t version = header.u32();
  if (version != kCheckpointVersion) {
    throw IoError(origin + ": checkpoint version " + std::to_string(version) +
                  " unsupported (reader supports version " + std::to_string(kCheckpointVersion) +
                  ")");
  }
  const std::uint64_t checksum = header.u64();
  const std::string payload = header.bytes(header.remaining());
  if (fnv1a64(payload) != checksum) {
    throw IoError(origin + ": checksum mismatch (corrupt checkpoint)");
  }

  binio::Reader in(payload, origin);
  Checkpoint ckpt;
  ckpt.fingerprint = in.u64();

  const std::uint32_t json_len = in.u32();
  const std::string config_json = in.bytes(json_len);
  try {
    const auto j = nlohmann::json::parse(config_json);
    const auto& m = j.at("model");
    ckpt.model_config = DenoiserConfig{m.at("d_model").get<int>(), m.at("n_layers").get<int>(),
                                       m.at("n_heads").get<int>(),
                                       m.at("ff_multiplier").get<int>(),
                                       m.at("max_frames").get<int>()};
    const auto& e = j.at("evaluator");
    ckpt.eval_config = EvaluatorConfig{e.at("d_feat").get<int>(), e.at("d_hidden").get<int>(),
                                       e.at("d_text").get<int>()};
    const auto& s = j.at("schedule");
    ckpt.timesteps = s.at("timesteps").get<int>();
    ckpt.beta_start = s.at("beta_start").get<double>();
    ckpt.beta_end = s.at("beta_end").get<double>();
  } catch (const nlohmann::json::exception& e) {
    throw IoError(origin + ": malformed checkpoint config: " + e.what());
  }
  validate_config(ckpt.model_config);

  const std::uint32_t flags = in.u32();
  if (flags & kFlagModel) {
    ckpt.has_model = true;
    ckpt.model.config = ckpt.model_config;
    ckpt.model.denoiser.blocks.resize(std::size_t(ckpt.model_config.n_layers));
    read_sections(in, ckpt.model, origin);
  }
  if (flags & kFlagDuration) {
    ckpt.has_duration = true;
    read_sections(in, ckpt.duration, origin);
  }
  if (flags & kFlagEvaluator) {
    ckpt.has_evaluator = true;
    ckpt.evaluator.config = ckpt.eval_config;
    read_sections(in, ckpt.evaluator, origin);
  }
  if (!in.at_end()) throw IoError(origin + ": trailing bytes after checkpoint payload");
  return ckpt;
}

void save_checkpoint(const Checkpoint& ckpt, const std::string& path) {
  binio::write_file_atomic(path, encode_checkpoint(ckpt));
}

Checkpoint load_checkpoint(const std::string& path) {
  return decode_checkpoint(binio::read_file(path), path);
}

void check_fingerprint(const Checkpoint& ckpt, const Corpus& corpus, const std::string& origin) {
  const std::uint64_t actual = corpus_fingerprint(corpus);
  if (ckpt.fingerprint != actual) {
    throw IoError(origin + ": checkpoint was trained on a different corpus (fingerprint " +
                  std::to_string(ckpt.fingerprint) + " vs " + std::to_string(actual) + ")");
  }
}

}  // namespace amd
