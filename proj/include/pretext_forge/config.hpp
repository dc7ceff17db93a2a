#pragma once

#include <map>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include "pretext_forge/io.hpp"
#include "pretext_forge/trainer.hpp"

namespace pforge {

using ConfigMap = std::map<std::string, std::string>;

/// `key = value` lines; '#' starts a comment; later lines override earlier ones.
inline ConfigMap parse_config_text(std::string_view text) {
  ConfigMap out;
  std::istringstream in{std::string(text)};
  std::string line;
  std::size_t lineno = 0;
  auto trim = [](std::string s) {
    const auto b = s.find_first_not_of(" \t\r");
    if (b == std::string::npos) return std::string{};
    return s.substr(b, s.find_last_not_of(" \t\r") + 1 - b);
  };
  while (std::getline(in, line)) {
    ++lineno;
    if (const auto hash = line.find('#'); hash != std::string::npos) line.resize(hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos)
      throw Error(ErrorCode::InvalidArgument, "config line " + std::to_string(lineno) + ": expected key=value");
    const std::string key = trim(line.substr(0, eq));
    if (key.empty()) throw Error(ErrorCode::InvalidArgument, "config line " + std::to_string(lineno) + ": empty key");
    out[key] = trim(line.substr(eq + 1));
  }
  return out;
}

namespace detail {

inline std::vector<std::string> split_list(const std::string& s) {
  std::vector<std::string> out;
  std::string cur;
  std::istringstream in(s);
  while (std::getline(in, cur, ',')) {
    const auto b = cur.find_first_not_of(' ');
    out.push_back(b == std::string::npos ? "" : cur.substr(b, cur.find_last_not_of(' ') + 1 - b));
  }
  return out;
}

inline double to_real(const std::string& key, const std::string& v) {
  try {
    std::size_t used = 0;
    const double d = std::stod(v, &used);
    if (used != v.size()) throw std::invalid_argument(v);
    return d;
  } catch (const std::exception&) {
    throw Error(ErrorCode::InvalidArgument, "config key " + key + ": '" + v + "' is not a number");
  }
}

inline long long to_integer(const std::string& key, const std::string& v) {
  try {
    std::size_t used = 0;
    const long long d = std::stoll(v, &used);
    if (used != v.size()) throw std::invalid_argument(v);
    return d;
  } catch (const std::exception&) {
    throw Error(ErrorCode::InvalidArgument, "config key " + key + ": '" + v + "' is not an integer");
  }
}

inline std::vector<int> to_int_list(const std::string& key, const std::string& v) {
  std::vector<int> out;
  for (const auto& p : split_list(v)) out.push_back(static_cast<int>(to_integer(key, p)));
  return out;
}

}  // namespace detail

/// Every key accepted in a config file, in documentation order.
inline const std::vector<std::string>& config_keys() {
  static const std::vector<std::string> keys{
      "batch_size", "pretext_epochs", "finetune_epochs", "learning_rate", "finetune_learning_rate",
      "seed", "alpha", "gamma", "checkpoint_dir", "stage", "optimizer", "momentum", "generator_objective",
      "codebook_size", "max_steps", "max_summary_len", "resolution", "stem_patch", "encoder_widths",
      "decoder_widths", "discriminator_widths", "summarizer_embed", "summarizer_context", "summarizer_hidden"};
  return keys;
}

inline void apply_config(TrainConfig& cfg, const ConfigMap& kv) {
  using detail::to_integer, detail::to_real, detail::to_int_list;
  for (const auto& [k, v] : kv) {
    if (k == "batch_size") cfg.batch_size = static_cast<int>(to_integer(k, v));
    else if (k == "pretext_epochs") cfg.pretext_epochs = static_cast<int>(to_integer(k, v));
    else if (k == "finetune_epochs") cfg.finetune_epochs = static_cast<int>(to_integer(k, v));
    else if (k == "learning_rate") cfg.learning_rate = to_real(k, v);
    else if (k == "finetune_learning_rate") cfg.finetune_learning_rate = to_real(k, v);
    else if (k == "seed") cfg.seed = static_cast<std::uint64_t>(to_integer(k, v));
    else if (k == "alpha") cfg.weights.alpha = to_real(k, v);
    else if (k == "gamma") {
      const auto parts = detail::split_list(v);
      if (parts.size() != 4) throw Error(ErrorCode::InvalidArgument, "gamma needs four comma-separated values");
      for (int i = 0; i < 4; ++i) cfg.weights.gamma[i] = to_real(k, parts[i]);
    } else if (k == "checkpoint_dir") cfg.checkpoint_dir = v;
    else if (k == "stage") {
      if (v == "pretext") cfg.stage = Stage::pretext;
      else if (v == "finetune") cfg.stage = Stage::finetune;
      else throw Error(ErrorCode::InvalidArgument, "stage must be pretext or finetune");
    } else if (k == "optimizer") cfg.optimizer = nn::parse_optimizer(v);
    else if (k == "momentum") cfg.momentum = to_real(k, v);
    else if (k == "generator_objective") {
      if (v == "non_saturating") cfg.generator_objective = GeneratorObjective::non_saturating;
      else if (v == "saturating") cfg.generator_objective = GeneratorObjective::saturating;
      else throw Error(ErrorCode::InvalidArgument, "generator_objective must be non_saturating or saturating");
    } else if (k == "codebook_size") cfg.codebook_size = static_cast<std::size_t>(to_integer(k, v));
    else if (k == "max_steps") cfg.max_steps = static_cast<long>(to_integer(k, v));
    else if (k == "max_summary_len") cfg.max_summary_len = static_cast<int>(to_integer(k, v));
    else if (k == "resolution") cfg.model.resolution = static_cast<int>(to_integer(k, v));
    else if (k == "stem_patch") cfg.model.stem_patch = static_cast<int>(to_integer(k, v));
    else if (k == "encoder_widths") cfg.model.encoder_widths = to_int_list(k, v);
    else if (k == "decoder_widths") cfg.model.decoder_widths = to_int_list(k, v);
    else if (k == "discriminator_widths") cfg.model.discriminator_widths = to_int_list(k, v);
    else if (k == "summarizer_embed") cfg.model.summarizer_embed = static_cast<int>(to_integer(k, v));
    else if (k == "summarizer_context") cfg.model.summarizer_context = static_cast<int>(to_integer(k, v));
    else if (k == "summarizer_hidden") cfg.model.summarizer_hidden = static_cast<int>(to_integer(k, v));
    else throw Error(ErrorCode::InvalidArgument, "unknown config key '" + k + "'");
  }
  cfg.validate();
}

inline TrainConfig load_config(const std::filesystem::path& path) {
  TrainConfig cfg;
  apply_config(cfg, parse_config_text(read_text_file(path)));
  return cfg;
}

/// Canonical text form; hashing it identifies a configuration.
inline std::string format_config(const TrainConfig& c) {
  auto list = [](const std::vector<int>& v) {
    std::string s;
    for (std::size_t i = 0; i < v.size(); ++i) s += (i ? "," : "") + std::to_string(v[i]);
    return s;
  };
  std::ostringstream out;
  out.precision(17);
  out << "batch_size=" << c.batch_size << "\n"
      << "pretext_epochs=" << c.pretext_epochs << "\n"
      << "finetune_epochs=" << c.finetune_epochs << "\n"
      << "learning_rate=" << c.learning_rate << "\n"
      << "finetune_learning_rate=" << c.finetune_learning_rate << "\n"
      << "seed=" << c.seed << "\n"
      << "alpha=" << c.weights.alpha << "\n"
      << "gamma=" << c.weights.gamma[0] << "," << c.weights.gamma[1] << "," << c.weights.gamma[2] << ","
      << c.weights.gamma[3] << "\n"
      << "checkpoint_dir=" << c.checkpoint_dir.generic_string() << "\n"
      << "stage=" << (c.stage == Stage::pretext ? "pretext" : "finetune") << "\n"
      << "optimizer=" << nn::to_string(c.optimizer) << "\n"
      << "momentum=" << c.momentum << "\n"
      << "generator_objective="
      << (c.generator_objective == GeneratorObjective::non_saturating ? "non_saturating" : "saturating") << "\n"
      << "codebook_size=" << c.codebook_size << "\n"
      << "max_steps=" << c.max_steps << "\n"
      << "max_summary_len=" << c.max_summary_len << "\n"
      << "resolution=" << c.model.resolution << "\n"
      << "stem_patch=" << c.model.stem_patch << "\n"
      << "encoder_widths=" << list(c.model.encoder_widths) << "\n"
      << "decoder_widths=" << list(c.model.decoder_widths) << "\n"
      << "discriminator_widths=" << list(c.model.discriminator_widths) << "\n"
      << "summarizer_embed=" << c.model.summarizer_embed << "\n"
      << "summarizer_context=" << c.model.summarizer_context << "\n"
      << "summarizer_hidden=" << c.model.summarizer_hidden << "\n";
  return out.str();
}

/// Hash of everything that influences training results (the output directory is excluded).
inline std::string config_hash(TrainConfig c) {
  c.checkpoint_dir.clear();
  return hex64(fnv1a(format_config(c)));
}

}  // namespace pforge
