#include <gtest/gtest.h>

#include <set>

#include "json.hpp"
#include "pretext_forge/corpus.hpp"
#include "support.hpp"

using namespace pforge;

namespace {

Vocabulary vocab() { return test::default_vocab(); }

ChartRecord record_with_levels(const std::vector<SemanticLevel>& levels) {
  ChartRecord r;
  r.id = "r";
  std::string text;
  for (std::size_t i = 0; i < levels.size(); ++i) text += "Sentence " + std::to_string(i) + ". ";
  r.summary = parse_tagged(text, vocab());
  for (std::size_t i = 0; i < levels.size(); ++i) r.summary.sentences[i].level = levels[i];
  return r;
}

/// Random well-formed flat markup over the default vocabulary.
std::string random_markup(Rng& rng) {
  static const std::vector<std::string> words{"sales", "rose", "x<3", "a", "peak", "in", "2020", "vs.", "e.g.",
                                              "chart", "the", "values", "fell", "<", ">", "low"};
  const auto v = vocab();
  std::string out;
  const int sentences = static_cast<int>(rng.uniform_int(6));
  for (int s = 0; s < sentences; ++s) {
    const int n = 1 + static_cast<int>(rng.uniform_int(7));
    for (int w = 0; w < n; ++w) {
      std::string word = words[rng.uniform_int(words.size())];
      if (rng.uniform() < 0.25) {
        const auto& tag = v.tags[rng.uniform_int(v.tags.size())];
        word = "<" + tag + ">" + word + "</" + tag + ">";
      }
      out += word;
      out += w + 1 < n ? " " : "";
    }
    const char* ends[] = {".", "!", "?", ""};
    out += ends[rng.uniform_int(4)];
    if (s + 1 < sentences) out += rng.uniform() < 0.2 ? "\n" : " ";
  }
  return out;
}

}  // namespace

TEST(ParseTagged, TitleExample) {
  const auto s = parse_tagged("<title>Sales chart</title>. Values rose.", vocab());
  EXPECT_EQ(s.text, "Sales chart. Values rose.");
  ASSERT_EQ(s.spans.size(), 1u);
  EXPECT_EQ(s.spans[0], (SemanticSpan{"title", 0, 11}));
  ASSERT_EQ(s.sentences.size(), 2u);
  EXPECT_EQ(s.sentences[0].level, SemanticLevel::L1);
  EXPECT_EQ(s.sentences[1].level, SemanticLevel::L2L3);
}

TEST(ParseTagged, PlainTextUnchanged) {
  const auto s = parse_tagged("plain text, no tags.", vocab());
  EXPECT_EQ(s.text, "plain text, no tags.");
  EXPECT_TRUE(s.spans.empty());
}

TEST(ParseTagged, Errors) {
  auto code = [](const std::string& m) {
    try {
      parse_tagged(m, vocab());
    } catch (const Error& e) {
      return e.code();
    }
    return ErrorCode::Io;
  };
  EXPECT_EQ(code("<title>A</badtag>"), ErrorCode::UnbalancedTag);
  EXPECT_EQ(code("<title>A"), ErrorCode::UnbalancedTag);
  EXPECT_EQ(code("A</title>"), ErrorCode::UnbalancedTag);
  EXPECT_EQ(code("<badtag>A</badtag>"), ErrorCode::UnknownTag);
  EXPECT_EQ(code("<title>A <trend>B</trend></title>"), ErrorCode::NestedTag);
}

TEST(ParseTagged, VocabularyListOverload) {
  const auto s = parse_tagged("<x>a</x> b.", std::vector<std::string>{"x"});
  EXPECT_EQ(s.spans.size(), 1u);
  EXPECT_EQ(s.sentences[0].level, SemanticLevel::L2L3);
}

TEST(ParseTagged, RoundTripProperty) {
  Rng rng(17);
  for (int i = 0; i < 2000; ++i) {
    const std::string m = random_markup(rng);
    const auto s = parse_tagged(m, vocab());
    ASSERT_EQ(serialize_tagged(s), m) << m;
  }
}

TEST(ParseTagged, StripTagsProperty) {
  Rng rng(18);
  for (int i = 0; i < 2000; ++i) {
    const std::string m = random_markup(rng);
    const auto tagged = parse_tagged(m, vocab());
    const auto plain = parse_tagged(strip_tags(m), vocab());
    ASSERT_TRUE(plain.spans.empty());
    ASSERT_EQ(plain.text, tagged.text);
  }
}

TEST(Segmenter, RulesAndAbbreviations) {
  auto count = [](std::string_view t) { return segment_sentences(t).size(); };
  EXPECT_EQ(count("One. Two! Three?"), 3u);
  EXPECT_EQ(count("Values e.g. sales rose. Then fell."), 2u);
  EXPECT_EQ(count("Version 2.5 shipped."), 1u);
  EXPECT_EQ(count("No terminator"), 1u);
  EXPECT_EQ(count(""), 0u);
  EXPECT_EQ(count("   \n "), 0u);
  EXPECT_EQ(count("Trailing space.   "), 1u);
}

TEST(Segmenter, RangesTileText) {
  Rng rng(5);
  for (int i = 0; i < 500; ++i) {
    const auto s = parse_tagged(random_markup(rng), vocab());
    std::size_t pos = 0;
    for (const auto& sent : s.sentences) {
      ASSERT_EQ(sent.start, pos);
      ASSERT_LT(sent.start, sent.end);
      pos = sent.end;
    }
    if (!s.sentences.empty()) ASSERT_EQ(pos, s.text.size());
  }
}

TEST(Vocabulary, ParsesL1Prefix) {
  const auto v = parse_vocabulary("# comment\nL1:title\n\ntrend\n");
  EXPECT_EQ(v.tags, (std::vector<std::string>{"title", "trend"}));
  EXPECT_EQ(v.l1_tags, (std::set<std::string>{"title"}));
  EXPECT_THROW(parse_vocabulary("a\na\n"), Error);
}

TEST(Accept, Examples) {
  using L = SemanticLevel;
  auto ok = accept_record(record_with_levels({L::L1, L::L1, L::L2L3, L::L2L3, L::L2L3}));
  EXPECT_TRUE(ok.accepted);
  EXPECT_TRUE(ok.reasons.empty());

  auto two = accept_record(record_with_levels({L::L1, L::L2L3}));
  EXPECT_FALSE(two.accepted);
  EXPECT_EQ(two.reasons, (std::vector<RejectReason>{RejectReason::TooFewSentences}));

  auto no_l1 = accept_record(record_with_levels({L::L2L3, L::L2L3, L::L2L3, L::L2L3}));
  EXPECT_EQ(no_l1.reasons, (std::vector<RejectReason>{RejectReason::MissingL1}));

  auto all_fail = accept_record(record_with_levels({}));
  EXPECT_EQ(all_fail.reasons.size(), 3u);
}

TEST(Accept, MonotoneUnderAddedL1) {
  Rng rng(3);
  for (int i = 0; i < 1000; ++i) {
    std::vector<SemanticLevel> levels(rng.uniform_int(7));
    for (auto& l : levels) l = rng.uniform() < 0.5 ? SemanticLevel::L1 : SemanticLevel::L2L3;
    const bool before = accept_record(record_with_levels(levels)).accepted;
    levels.insert(levels.begin() + static_cast<std::ptrdiff_t>(rng.uniform_int(levels.size() + 1)), SemanticLevel::L1);
    const bool after = accept_record(record_with_levels(levels)).accepted;
    ASSERT_TRUE(!before || after);
  }
}

TEST(Split, SizesAndExamples) {
  EXPECT_EQ(split_sizes(100), (SplitSizes{80, 10, 10}));
  EXPECT_EQ(split_sizes(1), (SplitSizes{0, 0, 1}));
  EXPECT_THROW(split_corpus({}, 0), Error);
  EXPECT_THROW(split_corpus({"a", "a"}, 0), Error);
}

TEST(Split, PartitionPropertyForAllSizes) {
  for (std::size_t n = 1; n <= 1000; ++n) {
    std::vector<std::string> ids;
    for (std::size_t i = 0; i < n; ++i) ids.push_back("id" + std::to_string(i));
    const auto a = split_corpus(ids, n);
    ASSERT_EQ(a.size(), n);
    std::size_t counts[3] = {0, 0, 0};
    for (const auto& id : ids) {
      const auto it = a.find(id);
      ASSERT_NE(it, a.end());
      ASSERT_NE(it->second, Split::unassigned);
      ++counts[static_cast<int>(it->second)];
    }
    const auto want = split_sizes(n);
    ASSERT_EQ(counts[0], want.train);
    ASSERT_EQ(counts[1], want.val);
    ASSERT_EQ(counts[2], want.test);
  }
}

TEST(Split, DeterministicAndOrderIndependent) {
  std::vector<std::string> ids;
  for (int i = 0; i < 57; ++i) ids.push_back("rec" + std::to_string(i));
  const auto a = split_corpus(ids, 9);
  std::reverse(ids.begin(), ids.end());
  EXPECT_EQ(split_corpus(ids, 9), a);
  EXPECT_NE(split_corpus(ids, 10), a);
}

TEST(Stats, SingleRecordExample) {
  ChartRecord r;
  r.summary = parse_tagged(
      "<title>One two three four five six seven eight</title>. <axis>w w w w w w w w</axis>. "
      "<legend>w w w w w w w w</legend>. w w w w w w w w. w w w w w w w w.",
      vocab());
  const auto s = corpus_stats({r});
  EXPECT_EQ(s.avg_sentence_count, 5.0);
  EXPECT_EQ(s.avg_word_count, 40.0);
  EXPECT_DOUBLE_EQ(s.l1_ratio, 0.6);
  EXPECT_DOUBLE_EQ(s.l2l3_ratio, 0.4);
  EXPECT_THROW(corpus_stats({}), Error);
}

TEST(Stats, ConcatenationIsWeightedMean) {
  const auto a = test::synthetic_corpus(13, 1).records;
  const auto b = test::synthetic_corpus(29, 2).records;
  auto ab = a;
  ab.insert(ab.end(), b.begin(), b.end());
  const auto sa = corpus_stats(a), sb = corpus_stats(b), sab = corpus_stats(ab);
  const double na = static_cast<double>(a.size()), nb = static_cast<double>(b.size());
  EXPECT_NEAR(sab.avg_sentence_count, (na * sa.avg_sentence_count + nb * sb.avg_sentence_count) / (na + nb), 1e-12);
  EXPECT_NEAR(sab.avg_word_count, (na * sa.avg_word_count + nb * sb.avg_word_count) / (na + nb), 1e-12);
  const double ma = static_cast<double>(sa.sentence_count), mb = static_cast<double>(sb.sentence_count);
  EXPECT_NEAR(sab.l1_ratio, (ma * sa.l1_ratio + mb * sb.l1_ratio) / (ma + mb), 1e-12);
}

TEST(Fixture, StatsMatchOracleSheet) {
  const auto root = test::fixture_dir();
  const Corpus c = load_corpus(root, load_vocabulary(root / "vocabulary.txt"));
  const auto sheet = nlohmann::json::parse(read_text_file(root / "stats_oracle.json"));
  const auto s = corpus_stats(c.records);
  auto frac = [&](const char* key) {
    const std::string v = sheet["stats"][key];
    const auto slash = v.find('/');
    return std::stod(v.substr(0, slash)) / std::stod(v.substr(slash + 1));
  };
  EXPECT_EQ(s.record_count, sheet["totals"]["record_count"].get<std::size_t>());
  EXPECT_EQ(s.sentence_count, sheet["totals"]["sentence_count"].get<std::size_t>());
  EXPECT_EQ(s.avg_sentence_count, frac("avg_sentence_count"));
  EXPECT_EQ(s.avg_word_count, frac("avg_word_count"));
  EXPECT_EQ(s.l1_ratio, frac("l1_ratio"));
  EXPECT_EQ(s.l2l3_ratio, frac("l2l3_ratio"));

  ASSERT_EQ(c.records.size(), sheet["records"].size());
  for (std::size_t i = 0; i < c.records.size(); ++i) {
    const auto& want = sheet["records"][i];
    const auto& r = c.records[i];
    EXPECT_EQ(r.id, want["id"].get<std::string>());
    EXPECT_EQ(r.summary.sentences.size(), want["sentences"].get<std::size_t>()) << r.id;
    EXPECT_EQ(word_count(r.summary.text), want["words"].get<std::size_t>()) << r.id;
    EXPECT_EQ(r.count_level(SemanticLevel::L1), want["l1"].get<std::size_t>()) << r.id;
    std::vector<std::string> reasons;
    for (auto reason : accept_record(r).reasons) reasons.emplace_back(to_string(reason));
    EXPECT_EQ(reasons, want["reasons"].get<std::vector<std::string>>()) << r.id;
  }
}

TEST(Index, RoundTripAndErrors) {
  const auto recs = test::synthetic_corpus(6, 4, 1).records;
  const auto text = format_index(recs);
  const auto back = parse_index(text, vocab());
  ASSERT_EQ(back.size(), recs.size());
  for (std::size_t i = 0; i < recs.size(); ++i) {
    EXPECT_EQ(back[i].id, recs[i].id);
    EXPECT_EQ(back[i].summary, recs[i].summary);
    EXPECT_EQ(back[i].split, recs[i].split);
    EXPECT_EQ(back[i].chart_type, recs[i].chart_type);
  }
  EXPECT_EQ(format_index(back), text);

  const std::string line = text.substr(0, text.find('\n') + 1);
  try {
    parse_index(line + line, vocab());
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::DuplicateId);
  }
  EXPECT_THROW(parse_index("{not json\n", vocab()), Error);
  EXPECT_THROW(parse_index(R"({"id":"a","image_path":"a.png","summary_markup":"x.","chart_type":"donut"})", vocab()),
               Error);
  EXPECT_THROW(
      parse_index(R"({"id":"a","image_path":"a.png","summary_markup":"x. y.","chart_type":"bar","sentence_levels":["L1"]})",
                  vocab()),
      Error);
}

TEST(Index, ExplicitLevelsOverrideTags) {
  const auto recs = parse_index(
      R"({"id":"a","image_path":"a.png","summary_markup":"<title>T</title>. b. c.","chart_type":"bar","sentence_levels":["L2L3","L1","L1"]})",
      vocab());
  EXPECT_EQ(recs[0].count_level(SemanticLevel::L1), 2u);
  EXPECT_EQ(recs[0].summary.sentences[0].level, SemanticLevel::L2L3);
  EXPECT_NE(format_index(recs).find("sentence_levels"), std::string::npos);
}

TEST(LevelText, ConcatenatesInOrder) {
  const auto s = parse_tagged("<title>A</title>. b. <axis>C</axis>. d.", vocab());
  EXPECT_EQ(level_text(s, SemanticLevel::L1), "A. C.");
  EXPECT_EQ(level_text(s, SemanticLevel::L2L3), "b. d.");
}
