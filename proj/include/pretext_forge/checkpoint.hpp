#pragma once

#include <bit>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

#include "json.hpp"
#include "pretext_forge/io.hpp"
#include "pretext_forge/models.hpp"

namespace pforge {

static_assert(std::endian::native == std::endian::little, "checkpoint I/O assumes a little-endian host");

inline constexpr std::string_view kCheckpointMagic = "PFORGECK";
inline constexpr std::uint32_t kCheckpointVersion = 1;

/// Everything besides weights that a checkpoint records.
struct CheckpointMeta {
  std::string stage = "init";  ///< init, pretext, finetune
  std::uint64_t step = 0;
  std::uint64_t epoch = 0;
  nlohmann::json extra = nlohmann::json::object();  ///< free-form provenance (config, weights, ...)
};

inline nlohmann::json model_config_to_json(const ModelConfig& c) {
  return {{"resolution", c.resolution},
          {"tile", c.tile},
          {"stem_patch", c.stem_patch},
          {"encoder_widths", c.encoder_widths},
          {"decoder_widths", c.decoder_widths},
          {"discriminator_widths", c.discriminator_widths},
          {"summarizer_embed", c.summarizer_embed},
          {"summarizer_context", c.summarizer_context},
          {"summarizer_hidden", c.summarizer_hidden}};
}

inline ModelConfig model_config_from_json(const nlohmann::json& j) {
  ModelConfig c;
  c.resolution = j.at("resolution");
  c.tile = j.at("tile");
  c.stem_patch = j.at("stem_patch");
  c.encoder_widths = j.at("encoder_widths").get<std::vector<int>>();
  c.decoder_widths = j.at("decoder_widths").get<std::vector<int>>();
  c.discriminator_widths = j.at("discriminator_widths").get<std::vector<int>>();
  c.summarizer_embed = j.at("summarizer_embed");
  c.summarizer_context = j.at("summarizer_context");
  c.summarizer_hidden = j.at("summarizer_hidden");
  return c;
}

namespace detail {

template <class V>
void put(std::string& out, V v) {
  char buf[sizeof(V)];
  std::memcpy(buf, &v, sizeof(V));
  out.append(buf, sizeof(V));
}

class Reader {
 public:
  explicit Reader(std::string_view b) : bytes_(b) {}

  template <class V>
  V get() {
    need(sizeof(V));
    V v;
    std::memcpy(&v, bytes_.data() + pos_, sizeof(V));
    pos_ += sizeof(V);
    return v;
  }

  std::string_view take(std::size_t n) {
    need(n);
    auto s = bytes_.substr(pos_, n);
    pos_ += n;
    return s;
  }

  bool done() const { return pos_ == bytes_.size(); }

 private:
  void need(std::size_t n) const {
    if (pos_ + n > bytes_.size()) throw Error(ErrorCode::CheckpointFormat, "truncated checkpoint");
  }
  std::string_view bytes_;
  std::size_t pos_ = 0;
};

}  // namespace detail

/// Layout: magic, u32 version, u64 manifest length, manifest JSON, u32 tensor count,
/// then per tensor: u32 name length, name, u32 rank, i32 dims, float32 values.
inline std::string serialize_checkpoint(const ChartModel<float>& model, const CheckpointMeta& meta) {
  nlohmann::json manifest;
  manifest["format_version"] = kCheckpointVersion;
  manifest["model"] = model_config_to_json(model.cfg);
  manifest["seed"] = model.seed;
  manifest["puzzle_classes"] = model.puzzle_head.classes;
  manifest["stage"] = meta.stage;
  manifest["step"] = meta.step;
  manifest["epoch"] = meta.epoch;
  manifest["extra"] = meta.extra;
  if (model.summarizer) manifest["summarizer_vocab"] = model.summarizer->vocab.chars;
  const std::string m = manifest.dump();

  std::string out(kCheckpointMagic);
  detail::put<std::uint32_t>(out, kCheckpointVersion);
  detail::put<std::uint64_t>(out, m.size());
  out += m;
  const auto params = model.parameters();
  detail::put<std::uint32_t>(out, static_cast<std::uint32_t>(params.size()));
  for (const auto& [name, t] : params) {
    detail::put<std::uint32_t>(out, static_cast<std::uint32_t>(name.size()));
    out += name;
    detail::put<std::uint32_t>(out, static_cast<std::uint32_t>(t.ndim()));
    for (int d : t.shape()) detail::put<std::int32_t>(out, d);
    out.append(reinterpret_cast<const char*>(t.values().data()), t.size() * sizeof(float));
  }
  return out;
}

struct LoadedCheckpoint {
  ChartModel<float> model;
  CheckpointMeta meta;
};

inline LoadedCheckpoint deserialize_checkpoint(std::string_view bytes) {
  detail::Reader rd(bytes);
  if (bytes.size() < kCheckpointMagic.size() || rd.take(kCheckpointMagic.size()) != kCheckpointMagic)
    throw Error(ErrorCode::CheckpointFormat, "not a checkpoint (bad magic)");
  const auto version = rd.get<std::uint32_t>();
  if (version != kCheckpointVersion)
    throw Error(ErrorCode::CheckpointVersionMismatch,
                "checkpoint version " + std::to_string(version) + ", expected " + std::to_string(kCheckpointVersion));
  const auto mlen = rd.get<std::uint64_t>();
  nlohmann::json manifest;
  try {
    manifest = nlohmann::json::parse(rd.take(mlen));
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::CheckpointFormat, std::string("manifest: ") + e.what());
  }

  LoadedCheckpoint out;
  try {
    const ModelConfig cfg = model_config_from_json(manifest.at("model"));
    out.model = ChartModel<float>(cfg, manifest.at("seed").get<std::uint64_t>(), manifest.at("puzzle_classes").get<int>());
    if (manifest.contains("summarizer_vocab")) {
      CharVocab v;
      v.chars = manifest["summarizer_vocab"].get<std::string>();
      out.model.attach_summarizer(v);
    }
    out.meta.stage = manifest.at("stage").get<std::string>();
    out.meta.step = manifest.at("step").get<std::uint64_t>();
    out.meta.epoch = manifest.at("epoch").get<std::uint64_t>();
    out.meta.extra = manifest.value("extra", nlohmann::json::object());
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::CheckpointFormat, std::string("manifest: ") + e.what());
  }

  auto params = out.model.parameters();
  const auto count = rd.get<std::uint32_t>();
  if (count != params.size())
    throw Error(ErrorCode::CheckpointFormat, "checkpoint holds " + std::to_string(count) + " tensors, model expects " +
                                                 std::to_string(params.size()));
  for (auto& [name, t] : params) {
    const auto nlen = rd.get<std::uint32_t>();
    const auto stored = rd.take(nlen);
    if (stored != name) throw Error(ErrorCode::CheckpointFormat, "expected tensor " + name + ", found " + std::string(stored));
    const auto rank = rd.get<std::uint32_t>();
    nn::Shape shape(rank);
    for (auto& d : shape) d = rd.get<std::int32_t>();
    if (shape != t.shape()) throw Error(ErrorCode::CheckpointFormat, "shape mismatch for " + name);
    const auto raw = rd.take(t.size() * sizeof(float));
    std::memcpy(t.values().data(), raw.data(), raw.size());
  }
  if (!rd.done()) throw Error(ErrorCode::CheckpointFormat, "trailing bytes after last tensor");
  return out;
}

inline void save_checkpoint(const std::filesystem::path& path, const ChartModel<float>& model, const CheckpointMeta& meta) {
  write_file_atomic(path, serialize_checkpoint(model, meta));
}

inline LoadedCheckpoint load_checkpoint(const std::filesystem::path& path) {
  return deserialize_checkpoint(read_text_file(path));
}

/// Bitwise equality of all parameters (names, shapes, values).
inline bool same_parameters(const ChartModel<float>& a, const ChartModel<float>& b) {
  const auto pa = a.parameters(), pb = b.parameters();
  if (pa.size() != pb.size()) return false;
  for (std::size_t i = 0; i < pa.size(); ++i) {
    if (pa[i].first != pb[i].first || pa[i].second.shape() != pb[i].second.shape()) return false;
    if (std::memcmp(pa[i].second.values().data(), pb[i].second.values().data(), pa[i].second.size() * sizeof(float)) != 0)
      return false;
  }
  return true;
}

}  // namespace pforge
