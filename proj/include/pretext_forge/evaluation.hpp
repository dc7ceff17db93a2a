#pragma once

#include <algorithm>
#include <array>
#include <charconv>
#include <cmath>
#include <filesystem>
#include <functional>
#include <map>
#include <optional>
#include <span>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include "pretext_forge/corpus.hpp"
#include "pretext_forge/io.hpp"
#include "pretext_forge/models.hpp"
#include "pretext_forge/pretext.hpp"

namespace pforge {

// ---------------------------------------------------------------------------
// BLEU

inline constexpr int kBleuMaxOrder = 4;
/// Numerator used for an n-gram order (n >= 2) with no matches anywhere in the corpus.
inline constexpr double kBleuEpsilon = 0.1;
inline constexpr std::string_view kBleuVersion = "corpus-4gram-bp-eps0.1-v1";

/// Every ASCII punctuation character is a token of its own; whitespace separates the rest. Case is kept.
inline std::vector<std::string> bleu_tokenize(std::string_view s) {
  std::vector<std::string> out;
  std::string cur;
  auto flush = [&] {
    if (!cur.empty()) out.push_back(std::move(cur));
    cur.clear();
  };
  for (char c : s) {
    const auto u = static_cast<unsigned char>(c);
    if (std::isspace(u)) {
      flush();
    } else if (u < 128 && std::ispunct(u)) {
      flush();
      out.emplace_back(1, c);
    } else {
      cur.push_back(c);
    }
  }
  flush();
  return out;
}

struct BleuStats {
  std::array<std::size_t, kBleuMaxOrder> matches{};
  std::array<std::size_t, kBleuMaxOrder> totals{};
  std::size_t hyp_length = 0;
  std::size_t ref_length = 0;
};

inline void accumulate_bleu(BleuStats& st, const std::vector<std::string>& hyp, const std::vector<std::string>& ref) {
  st.hyp_length += hyp.size();
  st.ref_length += ref.size();
  for (int n = 1; n <= kBleuMaxOrder; ++n) {
    std::map<std::vector<std::string>, std::size_t> ref_counts, hyp_counts;
    for (std::size_t i = 0; i + n <= ref.size(); ++i) ++ref_counts[{ref.begin() + i, ref.begin() + i + n}];
    for (std::size_t i = 0; i + n <= hyp.size(); ++i) ++hyp_counts[{hyp.begin() + i, hyp.begin() + i + n}];
    for (const auto& [gram, c] : hyp_counts) {
      const auto it = ref_counts.find(gram);
      if (it != ref_counts.end()) st.matches[n - 1] += std::min(c, it->second);
      st.totals[n - 1] += c;
    }
  }
}

/// Geometric mean of clipped n-gram precisions (n = 1..4) times the brevity penalty, on a 0-100 scale.
/// No unigram match scores 0; a higher order with no match uses kBleuEpsilon as its numerator.
inline double bleu_from_stats(const BleuStats& st) {
  if (st.hyp_length == 0 || st.matches[0] == 0) return 0.0;
  double log_p = 0;
  for (int n = 0; n < kBleuMaxOrder; ++n) {
    const double num = st.matches[n] > 0 ? static_cast<double>(st.matches[n]) : kBleuEpsilon;
    const double den = static_cast<double>(std::max<std::size_t>(st.totals[n], 1));
    log_p += std::log(num / den) / kBleuMaxOrder;
  }
  const double c = static_cast<double>(st.hyp_length), r = static_cast<double>(st.ref_length);
  const double bp = c > r ? 1.0 : std::exp(1.0 - r / c);
  return 100.0 * bp * std::exp(log_p);
}

inline double corpus_bleu(const std::vector<std::string>& hypotheses, const std::vector<std::string>& references) {
  if (hypotheses.size() != references.size())
    throw Error(ErrorCode::LengthMismatch, std::to_string(hypotheses.size()) + " hypotheses for " +
                                               std::to_string(references.size()) + " references");
  if (hypotheses.empty()) throw Error(ErrorCode::EmptyInput, "corpus_bleu needs at least one pair");
  BleuStats st;
  for (std::size_t i = 0; i < hypotheses.size(); ++i)
    accumulate_bleu(st, bleu_tokenize(hypotheses[i]), bleu_tokenize(references[i]));
  return bleu_from_stats(st);
}

// ---------------------------------------------------------------------------
// Level-split evaluation

enum class LevelMode {
  conditioned,  ///< one generation per level, steered by the level control token
  filtered,     ///< one unconditioned summary scored against each level's reference sentences
};

inline LevelMode parse_level_mode(std::string_view s) {
  if (s == "conditioned") return LevelMode::conditioned;
  if (s == "filtered") return LevelMode::filtered;
  throw Error(ErrorCode::InvalidArgument, "unknown level mode '" + std::string(s) + "'");
}

inline std::string_view to_string(LevelMode m) { return m == LevelMode::conditioned ? "conditioned" : "filtered"; }

/// Produces a summary for a record; std::nullopt asks for an unconditioned summary.
using SummaryGenerator = std::function<std::string(const ChartRecord&, std::optional<SemanticLevel>)>;

struct LevelScores {
  double bleu_l1 = 0;
  double bleu_l2l3 = 0;
  std::size_t l1_pairs = 0;
  std::size_t l2l3_pairs = 0;
  std::vector<std::pair<std::string, std::array<std::string, 2>>> outputs;  ///< id, (L1, L2L3) hypotheses
};

inline LevelScores level_split_eval(const SummaryGenerator& gen, const std::vector<ChartRecord>& records,
                                    LevelMode mode = LevelMode::conditioned) {
  std::vector<std::string> h1, r1, h2, r2;
  LevelScores out;
  for (const auto& rec : records) {
    const std::string ref1 = level_text(rec.summary, SemanticLevel::L1);
    const std::string ref2 = level_text(rec.summary, SemanticLevel::L2L3);
    std::array<std::string, 2> hyp;
    try {
      if (mode == LevelMode::filtered) {
        hyp[0] = hyp[1] = gen(rec, std::nullopt);
      } else {
        if (!ref1.empty()) hyp[0] = gen(rec, SemanticLevel::L1);
        if (!ref2.empty()) hyp[1] = gen(rec, SemanticLevel::L2L3);
      }
    } catch (const Error& e) {
      throw Error(e.code(), "record " + rec.id + ": " + e.message());
    }
    if (!ref1.empty()) {
      h1.push_back(hyp[0]);
      r1.push_back(ref1);
    }
    if (!ref2.empty()) {
      h2.push_back(hyp[1]);
      r2.push_back(ref2);
    }
    out.outputs.push_back({rec.id, hyp});
  }
  if (h1.empty() || h2.empty()) throw Error(ErrorCode::EmptyInput, "level evaluation needs references at both levels");
  out.bleu_l1 = corpus_bleu(h1, r1);
  out.bleu_l2l3 = corpus_bleu(h2, r2);
  out.l1_pairs = h1.size();
  out.l2l3_pairs = h2.size();
  return out;
}

/// Adapts a trained model: conditioned generation uses the level token; an unconditioned request
/// concatenates the L1 and L2L3 generations.
inline SummaryGenerator model_generator(const ChartModel<float>& m, const std::filesystem::path& root, int max_len) {
  return [&m, root, max_len](const ChartRecord& r, std::optional<SemanticLevel> level) {
    const RgbImage img = load_image(r, root);
    if (level) return m.summarize(img, *level, max_len);
    const std::string a = m.summarize(img, SemanticLevel::L1, max_len);
    const std::string b = m.summarize(img, SemanticLevel::L2L3, max_len);
    return a.empty() ? b : b.empty() ? a : a + " " + b;
  };
}

// ---------------------------------------------------------------------------
// Pretext accuracy

inline double accuracy(std::span<const int> predictions, std::span<const int> labels) {
  if (predictions.size() != labels.size()) throw Error(ErrorCode::LengthMismatch, "prediction and label counts differ");
  if (labels.empty()) throw Error(ErrorCode::EmptyInput, "accuracy of an empty set");
  std::size_t ok = 0;
  for (std::size_t i = 0; i < labels.size(); ++i) ok += predictions[i] == labels[i];
  return static_cast<double>(ok) / static_cast<double>(labels.size());
}

inline constexpr std::array<std::string_view, 3> kAccuracyTasks{"rotation", "puzzle", "categ"};

/// Per-task accuracy; a task with no samples is absent from the map.
using TaskAccuracy = std::map<std::string, double>;

inline TaskAccuracy pretext_accuracy(const ChartModel<float>& m, const std::vector<PretextSample>& samples,
                                     std::size_t chunk = 16) {
  nn::NoGradGuard guard;
  std::vector<const RgbImage*> rot, cat, tiles;
  std::vector<int> rot_y, cat_y, puz_y;
  for (const auto& s : samples) {
    if (const auto* r = std::get_if<RotationSample>(&s.data)) {
      rot.push_back(&r->image);
      rot_y.push_back(r->label);
    } else if (const auto* j = std::get_if<JigsawSample>(&s.data)) {
      for (const auto& t : j->tiles) tiles.push_back(&t);
      puz_y.push_back(j->label);
    } else if (const auto* c = std::get_if<CategorySample>(&s.data)) {
      cat.push_back(&c->image);
      cat_y.push_back(c->label);
    }
  }
  auto predict = [&](HeadTask task, const std::vector<const RgbImage*>& imgs, std::size_t per_sample) {
    std::vector<int> pred;
    const std::size_t step = chunk * per_sample;
    for (std::size_t b = 0; b < imgs.size(); b += step) {
      std::vector<const RgbImage*> part(imgs.begin() + b, imgs.begin() + std::min(imgs.size(), b + step));
      const auto p = nn::argmax_rows(m.head_forward(task, m.encoder.encode(rgb_batch<float>(part))));
      pred.insert(pred.end(), p.begin(), p.end());
    }
    return pred;
  };
  TaskAccuracy out;
  if (!rot_y.empty()) out["rotation"] = accuracy(predict(HeadTask::rotation, rot, 1), rot_y);
  if (!puz_y.empty()) out["puzzle"] = accuracy(predict(HeadTask::puzzle, tiles, kJigsawGrid), puz_y);
  if (!cat_y.empty()) out["categ"] = accuracy(predict(HeadTask::categ, cat, 1), cat_y);
  if (out.empty()) throw Error(ErrorCode::EmptyInput, "no classification samples to score");
  return out;
}

// ---------------------------------------------------------------------------
// Report

/// Validated at construction; avg is always the arithmetic mean of the two level scores.
class EvalReport {
 public:
  struct Fields {
    std::optional<double> bleu_l1, bleu_l2l3;
    TaskAccuracy pretext_accuracy;
    std::optional<std::size_t> sample_count;
    std::string checkpoint_id, corpus_id, config_hash;
    std::string level_mode = "conditioned";
  };

  explicit EvalReport(const Fields& f) {
    auto need = [](bool ok, const std::string& what) {
      if (!ok) throw Error(ErrorCode::MissingField, "report field " + what + " is missing or invalid");
    };
    need(f.bleu_l1 && *f.bleu_l1 >= 0 && *f.bleu_l1 <= 100, "bleu_l1");
    need(f.bleu_l2l3 && *f.bleu_l2l3 >= 0 && *f.bleu_l2l3 <= 100, "bleu_l2l3");
    need(f.sample_count.has_value(), "sample_count");
    need(!f.checkpoint_id.empty(), "checkpoint_id");
    need(!f.corpus_id.empty(), "corpus_id");
    need(!f.config_hash.empty(), "config_hash");
    need(!f.level_mode.empty(), "level_mode");
    for (const auto& [task, acc] : f.pretext_accuracy) need(acc >= 0 && acc <= 1, "accuracy_" + task);
    for (const auto& v : {f.checkpoint_id, f.corpus_id, f.config_hash, f.level_mode})
      need(v.find_first_of(" \t\r\n=") == std::string::npos, "metadata (no whitespace or '=')");
    f_ = f;
  }

  double bleu_l1() const { return *f_.bleu_l1; }
  double bleu_l2l3() const { return *f_.bleu_l2l3; }
  double bleu_avg() const { return (*f_.bleu_l1 + *f_.bleu_l2l3) / 2.0; }
  const TaskAccuracy& pretext_accuracy() const { return f_.pretext_accuracy; }
  std::size_t sample_count() const { return *f_.sample_count; }
  const std::string& checkpoint_id() const { return f_.checkpoint_id; }
  const std::string& corpus_id() const { return f_.corpus_id; }
  const std::string& config_hash() const { return f_.config_hash; }
  const std::string& level_mode() const { return f_.level_mode; }
  const Fields& fields() const { return f_; }

  friend bool operator==(const EvalReport& a, const EvalReport& b) {
    return a.f_.bleu_l1 == b.f_.bleu_l1 && a.f_.bleu_l2l3 == b.f_.bleu_l2l3 &&
           a.f_.pretext_accuracy == b.f_.pretext_accuracy && a.f_.sample_count == b.f_.sample_count &&
           a.f_.checkpoint_id == b.f_.checkpoint_id && a.f_.corpus_id == b.f_.corpus_id &&
           a.f_.config_hash == b.f_.config_hash && a.f_.level_mode == b.f_.level_mode;
  }

 private:
  Fields f_;
};

/// Shortest decimal that reads back to the same double.
inline std::string exact_double(double v) {
  char buf[64];
  const auto res = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, res.ptr);
}

inline double parse_double(std::string_view s) {
  double v = 0;
  const auto res = std::from_chars(s.data(), s.data() + s.size(), v);
  if (res.ec != std::errc() || res.ptr != s.data() + s.size())
    throw Error(ErrorCode::InvalidArgument, "not a number: '" + std::string(s) + "'");
  return v;
}

/// One `key=value` per line, fixed key order.
inline std::string format_report_records(const EvalReport& r) {
  std::ostringstream out;
  out << "bleu_version=" << kBleuVersion << "\n";
  out << "checkpoint_id=" << r.checkpoint_id() << "\n";
  out << "corpus_id=" << r.corpus_id() << "\n";
  out << "config_hash=" << r.config_hash() << "\n";
  out << "level_mode=" << r.level_mode() << "\n";
  out << "sample_count=" << r.sample_count() << "\n";
  out << "bleu_l1=" << exact_double(r.bleu_l1()) << "\n";
  out << "bleu_l2l3=" << exact_double(r.bleu_l2l3()) << "\n";
  out << "bleu_avg=" << exact_double(r.bleu_avg()) << "\n";
  for (const auto& [task, acc] : r.pretext_accuracy()) out << "accuracy_" << task << "=" << exact_double(acc) << "\n";
  return out.str();
}

inline std::string format_report_table(const EvalReport& r) {
  char line[160];
  std::ostringstream out;
  out << "checkpoint " << r.checkpoint_id() << "  corpus " << r.corpus_id() << "  config " << r.config_hash() << "\n";
  out << "level mode " << r.level_mode() << "  samples " << r.sample_count() << "\n\n";
  std::snprintf(line, sizeof line, "%-10s | %8s | %8s | %8s\n", "BLEU", "L1", "L2/L3", "avg.");
  out << line << std::string(10, '-') << "-+-" << std::string(8, '-') << "-+-" << std::string(8, '-') << "-+-"
      << std::string(8, '-') << "\n";
  std::snprintf(line, sizeof line, "%-10s | %8.2f | %8.2f | %8.2f\n", "", r.bleu_l1(), r.bleu_l2l3(), r.bleu_avg());
  out << line;
  if (!r.pretext_accuracy().empty()) {
    out << "\npretext accuracy\n";
    for (const auto& [task, acc] : r.pretext_accuracy()) {
      std::snprintf(line, sizeof line, "  %-10s %.4f\n", task.c_str(), acc);
      out << line;
    }
  }
  return out.str();
}

inline EvalReport parse_report_records(std::string_view content) {
  EvalReport::Fields f;
  f.level_mode.clear();
  std::istringstream in{std::string(content)};
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) throw Error(ErrorCode::InvalidArgument, "malformed report line '" + line + "'");
    const std::string key = line.substr(0, eq), val = line.substr(eq + 1);
    if (key == "checkpoint_id") f.checkpoint_id = val;
    else if (key == "corpus_id") f.corpus_id = val;
    else if (key == "config_hash") f.config_hash = val;
    else if (key == "level_mode") f.level_mode = val;
    else if (key == "sample_count") f.sample_count = static_cast<std::size_t>(std::stoull(val));
    else if (key == "bleu_l1") f.bleu_l1 = parse_double(val);
    else if (key == "bleu_l2l3") f.bleu_l2l3 = parse_double(val);
    else if (key.rfind("accuracy_", 0) == 0) f.pretext_accuracy[key.substr(9)] = parse_double(val);
  }
  return EvalReport(f);
}

/// Writes `<prefix>.txt` and `<prefix>.records`.
inline void emit_report(const EvalReport& r, const std::filesystem::path& prefix) {
  auto txt = prefix, rec = prefix;
  txt += ".txt";
  rec += ".records";
  write_file_atomic(txt, format_report_table(r));
  write_file_atomic(rec, format_report_records(r));
}

inline EvalReport load_report(const std::filesystem::path& prefix) {
  auto rec = prefix;
  rec += ".records";
  return parse_report_records(read_text_file(rec));
}

}  // namespace pforge
