#pragma once

#include <algorithm>
#include <array>
#include <cctype>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include "json.hpp"
#include "pretext_forge/error.hpp"
#include "pretext_forge/image.hpp"
#include "pretext_forge/io.hpp"
#include "pretext_forge/png_io.hpp"
#include "pretext_forge/rng.hpp"

namespace pforge {

// ---------------------------------------------------------------------------
// Enumerations

/// Closed set of chart types. The enumerator value is the classification label.
enum class ChartCategory : int { line = 0, bar, area, scatter, multivariate, panel, pie, box };
inline constexpr int kChartCategoryCount = 8;
inline constexpr std::array<std::string_view, kChartCategoryCount> kChartCategoryNames{
    "line", "bar", "area", "scatter", "multivariate", "panel", "pie", "box"};

inline std::string_view to_string(ChartCategory c) { return kChartCategoryNames[static_cast<int>(c)]; }

inline ChartCategory parse_chart_category(std::string_view s) {
  for (int i = 0; i < kChartCategoryCount; ++i)
    if (kChartCategoryNames[i] == s) return static_cast<ChartCategory>(i);
  throw Error(ErrorCode::BadRecord, "unknown chart_type '" + std::string(s) + "'");
}

enum class SemanticLevel { L1, L2L3 };

inline std::string_view to_string(SemanticLevel l) { return l == SemanticLevel::L1 ? "L1" : "L2L3"; }

inline SemanticLevel parse_level(std::string_view s) {
  if (s == "L1") return SemanticLevel::L1;
  if (s == "L2L3") return SemanticLevel::L2L3;
  throw Error(ErrorCode::BadRecord, "unknown sentence level '" + std::string(s) + "'");
}

enum class Split { train, val, test, unassigned };

inline std::string_view to_string(Split s) {
  switch (s) {
    case Split::train: return "train";
    case Split::val: return "val";
    case Split::test: return "test";
    case Split::unassigned: return "unassigned";
  }
  return "unassigned";
}

inline Split parse_split(std::string_view s) {
  if (s == "train") return Split::train;
  if (s == "val") return Split::val;
  if (s == "test") return Split::test;
  if (s == "unassigned" || s.empty()) return Split::unassigned;
  throw Error(ErrorCode::BadRecord, "unknown split '" + std::string(s) + "'");
}

// ---------------------------------------------------------------------------
// Tagged summaries

struct SemanticSpan {
  std::string tag;
  std::size_t start = 0;
  std::size_t end = 0;
  friend bool operator==(const SemanticSpan&, const SemanticSpan&) = default;
};

struct SentenceAnnotation {
  std::size_t start = 0;
  std::size_t end = 0;
  SemanticLevel level = SemanticLevel::L2L3;
  friend bool operator==(const SentenceAnnotation&, const SentenceAnnotation&) = default;
};

struct TaggedSummary {
  std::string text;
  std::vector<SemanticSpan> spans;
  std::vector<SentenceAnnotation> sentences;

  std::string_view sentence_text(std::size_t i) const {
    return std::string_view(text).substr(sentences[i].start, sentences[i].end - sentences[i].start);
  }
  friend bool operator==(const TaggedSummary&, const TaggedSummary&) = default;
};

/// Active tag names plus the subset that marks a sentence as L1 when levels are not given explicitly.
struct Vocabulary {
  std::vector<std::string> tags;
  std::set<std::string> l1_tags;

  bool contains(std::string_view tag) const { return std::find(tags.begin(), tags.end(), tag) != tags.end(); }

  static Vocabulary from_names(std::vector<std::string> names) { return Vocabulary{std::move(names), {}}; }
};

/// One tag per line; an "L1:" prefix adds the tag to the L1 set. Blank lines and '#' comments are skipped.
inline Vocabulary parse_vocabulary(std::string_view content) {
  Vocabulary v;
  std::istringstream in{std::string(content)};
  std::string line;
  while (std::getline(in, line)) {
    while (!line.empty() && std::isspace(static_cast<unsigned char>(line.back()))) line.pop_back();
    std::size_t b = 0;
    while (b < line.size() && std::isspace(static_cast<unsigned char>(line[b]))) ++b;
    line = line.substr(b);
    if (line.empty() || line[0] == '#') continue;
    bool l1 = false;
    if (line.rfind("L1:", 0) == 0) {
      l1 = true;
      line = line.substr(3);
    }
    if (v.contains(line)) throw Error(ErrorCode::BadRecord, "duplicate tag '" + line + "' in vocabulary");
    v.tags.push_back(line);
    if (l1) v.l1_tags.insert(line);
  }
  return v;
}

inline Vocabulary load_vocabulary(const std::filesystem::path& path) { return parse_vocabulary(read_text_file(path)); }

struct SegmenterOptions {
  /// Tokens ending in '.' that never close a sentence. Matched case-sensitively against the
  /// whitespace-delimited word that carries the period.
  std::vector<std::string> abbreviations{"e.g.", "i.e.", "vs.", "etc.", "Fig.", "fig.", "approx.", "cf.", "al.",
                                         "Dr.", "Mr.", "Ms.", "No.", "St."};
};

/// Splits on '.', '!' or '?' followed by whitespace or end of text. Trailing whitespace belongs to the
/// sentence it follows, so the ranges tile [0, text.size()). Text with no visible characters has no sentences.
inline std::vector<std::pair<std::size_t, std::size_t>> segment_sentences(std::string_view text,
                                                                         const SegmenterOptions& opts = {}) {
  std::vector<std::pair<std::size_t, std::size_t>> out;
  const auto is_space = [](char c) { return std::isspace(static_cast<unsigned char>(c)) != 0; };
  if (std::all_of(text.begin(), text.end(), is_space)) return out;

  std::size_t start = 0;
  for (std::size_t i = 0; i < text.size(); ++i) {
    const char c = text[i];
    if (c != '.' && c != '!' && c != '?') continue;
    if (i + 1 < text.size() && !is_space(text[i + 1])) continue;
    if (c == '.') {
      std::size_t w = i;
      while (w > start && !is_space(text[w - 1])) --w;
      const std::string_view word = text.substr(w, i + 1 - w);
      if (std::find(opts.abbreviations.begin(), opts.abbreviations.end(), word) != opts.abbreviations.end())
        continue;
    }
    std::size_t end = i + 1;
    while (end < text.size() && is_space(text[end])) ++end;
    out.emplace_back(start, end);
    start = end;
    i = end - 1;
  }
  if (start < text.size()) {
    const bool visible = !std::all_of(text.begin() + start, text.end(), is_space);
    if (visible || out.empty())
      out.emplace_back(start, text.size());
    else
      out.back().second = text.size();
  }
  return out;
}

namespace detail {

inline bool is_tag_name_start(char c) { return std::isalpha(static_cast<unsigned char>(c)) != 0; }
inline bool is_tag_name_char(char c) {
  return std::isalnum(static_cast<unsigned char>(c)) != 0 || c == '_' || c == '-';
}

struct TagToken {
  bool closing = false;
  std::string name;
  std::size_t length = 0;
};

/// Recognises `<name>` or `</name>` at position i; anything else is literal text.
inline std::optional<TagToken> match_tag(std::string_view s, std::size_t i) {
  if (s[i] != '<') return std::nullopt;
  std::size_t j = i + 1;
  TagToken t;
  if (j < s.size() && s[j] == '/') {
    t.closing = true;
    ++j;
  }
  if (j >= s.size() || !is_tag_name_start(s[j])) return std::nullopt;
  const std::size_t name_begin = j;
  while (j < s.size() && is_tag_name_char(s[j])) ++j;
  if (j >= s.size() || s[j] != '>') return std::nullopt;
  t.name = std::string(s.substr(name_begin, j - name_begin));
  t.length = j + 1 - i;
  return t;
}

}  // namespace detail

/// Assigns each sentence L1 when any span starting inside it carries an L1 tag.
inline void derive_levels(TaggedSummary& s, const Vocabulary& vocab) {
  for (auto& sent : s.sentences) {
    sent.level = SemanticLevel::L2L3;
    for (const auto& sp : s.spans)
      if (sp.start >= sent.start && sp.start < sent.end && vocab.l1_tags.count(sp.tag)) {
        sent.level = SemanticLevel::L1;
        break;
      }
  }
}

inline TaggedSummary parse_tagged(std::string_view markup, const Vocabulary& vocab, const SegmenterOptions& seg = {}) {
  TaggedSummary out;
  out.text.reserve(markup.size());
  std::optional<SemanticSpan> open;
  for (std::size_t i = 0; i < markup.size();) {
    auto tok = detail::match_tag(markup, i);
    if (!tok) {
      out.text.push_back(markup[i++]);
      continue;
    }
    if (tok->closing) {
      if (!open) throw Error(ErrorCode::UnbalancedTag, "closing </" + tok->name + "> without an open tag");
      if (open->tag != tok->name)
        throw Error(ErrorCode::UnbalancedTag, "<" + open->tag + "> closed by </" + tok->name + ">");
      open->end = out.text.size();
      out.spans.push_back(*open);
      open.reset();
    } else {
      if (!vocab.contains(tok->name)) throw Error(ErrorCode::UnknownTag, "tag <" + tok->name + "> not in vocabulary");
      if (open) throw Error(ErrorCode::NestedTag, "<" + tok->name + "> opened inside <" + open->tag + ">");
      open = SemanticSpan{tok->name, out.text.size(), 0};
    }
    i += tok->length;
  }
  if (open) throw Error(ErrorCode::UnbalancedTag, "<" + open->tag + "> never closed");

  for (auto [b, e] : segment_sentences(out.text, seg)) out.sentences.push_back({b, e, SemanticLevel::L2L3});
  derive_levels(out, vocab);
  return out;
}

inline TaggedSummary parse_tagged(std::string_view markup, const std::vector<std::string>& tags) {
  return parse_tagged(markup, Vocabulary::from_names(tags));
}

/// Re-inserts span markup into the stripped text.
inline std::string serialize_tagged(const TaggedSummary& s) {
  std::string out;
  out.reserve(s.text.size() + s.spans.size() * 16);
  std::size_t pos = 0;
  for (const auto& sp : s.spans) {
    out.append(s.text, pos, sp.start - pos);
    out += "<" + sp.tag + ">";
    out.append(s.text, sp.start, sp.end - sp.start);
    out += "</" + sp.tag + ">";
    pos = sp.end;
  }
  out.append(s.text, pos, std::string::npos);
  return out;
}

/// Removes every well-formed tag token without validating vocabulary or balance.
inline std::string strip_tags(std::string_view markup) {
  std::string out;
  for (std::size_t i = 0; i < markup.size();) {
    if (auto tok = detail::match_tag(markup, i)) {
      i += tok->length;
    } else {
      out.push_back(markup[i++]);
    }
  }
  return out;
}

inline std::size_t word_count(std::string_view text) {
  std::size_t n = 0;
  bool in_word = false;
  for (char c : text) {
    const bool space = std::isspace(static_cast<unsigned char>(c)) != 0;
    if (!space && !in_word) ++n;
    in_word = !space;
  }
  return n;
}

/// Concatenation of the sentences at one level, in order, trimmed at both ends.
inline std::string level_text(const TaggedSummary& s, SemanticLevel level) {
  std::string out;
  for (std::size_t i = 0; i < s.sentences.size(); ++i)
    if (s.sentences[i].level == level) out += s.sentence_text(i);
  const auto b = out.find_first_not_of(" \t\r\n");
  if (b == std::string::npos) return {};
  const auto e = out.find_last_not_of(" \t\r\n");
  return out.substr(b, e + 1 - b);
}

// ---------------------------------------------------------------------------
// Records

struct ChartRecord {
  std::string id;
  std::string doi;
  int figure_number = 1;
  std::filesystem::path image_path;  ///< relative to the corpus directory
  std::optional<RgbImage> image;     ///< in-memory payload; takes precedence over image_path
  std::string caption;
  TaggedSummary summary;
  ChartCategory chart_type = ChartCategory::line;
  Split split = Split::unassigned;
  bool explicit_levels = false;  ///< sentence levels came from the index rather than tag derivation

  std::size_t count_level(SemanticLevel l) const {
    return static_cast<std::size_t>(std::count_if(summary.sentences.begin(), summary.sentences.end(),
                                                  [l](const auto& s) { return s.level == l; }));
  }
};

struct Corpus {
  std::filesystem::path root;  ///< directory image paths are relative to
  std::vector<ChartRecord> records;
};

enum class RejectReason { TooFewSentences, MissingL1, MissingL2L3 };

inline std::string_view to_string(RejectReason r) {
  switch (r) {
    case RejectReason::TooFewSentences: return "TooFewSentences";
    case RejectReason::MissingL1: return "MissingL1";
    case RejectReason::MissingL2L3: return "MissingL2L3";
  }
  return "";
}

struct Verdict {
  bool accepted = true;
  std::vector<RejectReason> reasons;
};

inline constexpr std::size_t kMinSentences = 3;

inline Verdict accept_record(const ChartRecord& r) {
  Verdict v;
  if (r.summary.sentences.size() < kMinSentences) v.reasons.push_back(RejectReason::TooFewSentences);
  if (r.count_level(SemanticLevel::L1) == 0) v.reasons.push_back(RejectReason::MissingL1);
  if (r.count_level(SemanticLevel::L2L3) == 0) v.reasons.push_back(RejectReason::MissingL2L3);
  v.accepted = v.reasons.empty();
  return v;
}

inline RgbImage load_image(const ChartRecord& r, const std::filesystem::path& root) {
  if (r.image) return *r.image;
  try {
    return read_png(root / r.image_path);
  } catch (const Error& e) {
    throw Error(e.code(), "record " + r.id + ": " + e.message());
  }
}

// ---------------------------------------------------------------------------
// Split

struct SplitSizes {
  std::size_t train = 0, val = 0, test = 0;
  friend bool operator==(const SplitSizes&, const SplitSizes&) = default;
};

inline SplitSizes split_sizes(std::size_t n) { return {8 * n / 10, n / 10, n - 8 * n / 10 - n / 10}; }

/// Shuffles the sorted ids with the seed and cuts floor(0.8n) / floor(0.1n) / remainder.
/// The result depends only on the id set and the seed, not on input order.
inline std::map<std::string, Split> split_corpus(std::vector<std::string> ids, std::uint64_t seed) {
  if (ids.empty()) throw Error(ErrorCode::EmptyCorpus, "cannot split an empty corpus");
  std::sort(ids.begin(), ids.end());
  if (std::adjacent_find(ids.begin(), ids.end()) != ids.end())
    throw Error(ErrorCode::DuplicateId, "split ids are not unique");
  Rng rng(seed);
  rng.shuffle(ids);
  const auto sizes = split_sizes(ids.size());
  std::map<std::string, Split> out;
  for (std::size_t i = 0; i < ids.size(); ++i)
    out[ids[i]] = i < sizes.train ? Split::train : i < sizes.train + sizes.val ? Split::val : Split::test;
  return out;
}

// ---------------------------------------------------------------------------
// Statistics

struct CorpusStats {
  double avg_sentence_count = 0;
  double avg_word_count = 0;
  double l1_ratio = 0;
  double l2l3_ratio = 0;
  std::size_t record_count = 0;
  std::size_t sentence_count = 0;
};

inline CorpusStats corpus_stats(const std::vector<ChartRecord>& records) {
  if (records.empty()) throw Error(ErrorCode::EmptyCorpus, "no records for statistics");
  std::size_t sentences = 0, words = 0, l1 = 0;
  for (const auto& r : records) {
    sentences += r.summary.sentences.size();
    words += word_count(r.summary.text);
    l1 += r.count_level(SemanticLevel::L1);
  }
  CorpusStats s;
  s.record_count = records.size();
  s.sentence_count = sentences;
  s.avg_sentence_count = static_cast<double>(sentences) / records.size();
  s.avg_word_count = static_cast<double>(words) / records.size();
  if (sentences > 0) {
    s.l1_ratio = static_cast<double>(l1) / sentences;
    s.l2l3_ratio = static_cast<double>(sentences - l1) / sentences;
  }
  return s;
}

// ---------------------------------------------------------------------------
// Index I/O: one JSON object per line.

inline ChartRecord record_from_json(const nlohmann::json& j, const Vocabulary& vocab, const SegmenterOptions& seg = {}) {
  ChartRecord r;
  std::string id = j.value("id", std::string{});
  try {
    if (id.empty()) throw Error(ErrorCode::BadRecord, "missing id");
    r.id = id;
    r.doi = j.value("doi", std::string{});
    r.figure_number = j.value("figure_number", 1);
    if (r.figure_number < 1) throw Error(ErrorCode::BadRecord, "figure_number must be positive");
    r.image_path = j.at("image_path").get<std::string>();
    r.caption = j.value("caption", std::string{});
    r.summary = parse_tagged(j.at("summary_markup").get<std::string>(), vocab, seg);
    r.chart_type = parse_chart_category(j.at("chart_type").get<std::string>());
    r.split = parse_split(j.value("split", std::string{"unassigned"}));
    if (j.contains("sentence_levels") && !j["sentence_levels"].is_null()) {
      const auto& levels = j["sentence_levels"];
      if (levels.size() != r.summary.sentences.size())
        throw Error(ErrorCode::BadRecord, "sentence_levels has " + std::to_string(levels.size()) + " entries for " +
                                              std::to_string(r.summary.sentences.size()) + " sentences");
      for (std::size_t i = 0; i < levels.size(); ++i) r.summary.sentences[i].level = parse_level(levels[i].get<std::string>());
      r.explicit_levels = true;
    }
  } catch (const Error& e) {
    throw Error(e.code(), "record " + (id.empty() ? std::string("<no id>") : id) + ": " + e.message());
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::BadRecord, "record " + (id.empty() ? std::string("<no id>") : id) + ": " + e.what());
  }
  return r;
}

inline nlohmann::ordered_json record_to_json(const ChartRecord& r) {
  nlohmann::ordered_json j;
  j["id"] = r.id;
  j["doi"] = r.doi;
  j["figure_number"] = r.figure_number;
  j["image_path"] = r.image_path.generic_string();
  j["caption"] = r.caption;
  j["summary_markup"] = serialize_tagged(r.summary);
  j["chart_type"] = std::string(to_string(r.chart_type));
  j["split"] = std::string(to_string(r.split));
  if (r.explicit_levels) {
    auto levels = nlohmann::ordered_json::array();
    for (const auto& s : r.summary.sentences) levels.push_back(std::string(to_string(s.level)));
    j["sentence_levels"] = levels;
  }
  return j;
}

inline std::vector<ChartRecord> parse_index(std::string_view content, const Vocabulary& vocab,
                                            const SegmenterOptions& seg = {}) {
  std::vector<ChartRecord> out;
  std::set<std::string> seen;
  std::istringstream in{std::string(content)};
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    nlohmann::json j;
    try {
      j = nlohmann::json::parse(line);
    } catch (const nlohmann::json::exception& e) {
      throw Error(ErrorCode::BadRecord, "index line " + std::to_string(lineno) + ": " + e.what());
    }
    auto r = record_from_json(j, vocab, seg);
    if (!seen.insert(r.id).second) throw Error(ErrorCode::DuplicateId, "record id '" + r.id + "' appears twice");
    out.push_back(std::move(r));
  }
  return out;
}

inline std::string format_index(const std::vector<ChartRecord>& records) {
  std::string out;
  for (const auto& r : records) out += record_to_json(r).dump() + "\n";
  return out;
}

inline constexpr std::string_view kIndexFileName = "index.jsonl";
inline constexpr std::string_view kVocabularyFileName = "vocabulary.txt";

/// Accepts either an index file or a directory holding index.jsonl.
inline std::filesystem::path resolve_index_path(const std::filesystem::path& p) {
  return std::filesystem::is_directory(p) ? p / kIndexFileName : p;
}

inline Corpus load_corpus(const std::filesystem::path& path, const Vocabulary& vocab, const SegmenterOptions& seg = {}) {
  const auto index = resolve_index_path(path);
  if (!std::filesystem::exists(index)) throw Error(ErrorCode::BadRecord, "corpus index not found: " + index.string());
  Corpus c;
  c.root = index.parent_path();
  c.records = parse_index(read_text_file(index), vocab, seg);
  return c;
}

inline std::vector<ChartRecord> records_in(const Corpus& c, Split s) {
  std::vector<ChartRecord> out;
  for (const auto& r : c.records)
    if (r.split == s) out.push_back(r);
  return out;
}

}  // namespace pforge
