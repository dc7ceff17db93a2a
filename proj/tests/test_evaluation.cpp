#include <gtest/gtest.h>

#include <cmath>

#include "pretext_forge/evaluation.hpp"
#include "pretext_forge/rng.hpp"
#include "support.hpp"

using namespace pforge;

TEST(Bleu, IdentityScoresHundred) {
  EXPECT_DOUBLE_EQ(corpus_bleu({"the cat sat on the mat"}, {"the cat sat on the mat"}), 100.0);
  EXPECT_NEAR(corpus_bleu({"a b c d e", "x y"}, {"a b c d e", "x y"}), 100.0, 1e-12);
}

TEST(Bleu, DisjointScoresZero) {
  EXPECT_EQ(corpus_bleu({"alpha beta gamma delta"}, {"one two three four"}), 0.0);
}

TEST(Bleu, GoldenPair) {
  const double expected = std::pow(1.0 / 12.0, 0.25) * 100.0;
  EXPECT_NEAR(expected, 53.7285, 1e-4);
  EXPECT_NEAR(corpus_bleu({"the cat sat on the mat"}, {"the cat sat on a mat"}), expected, 1e-6);
}

TEST(Bleu, BrevityPenaltyAndEpsilon) {
  // 2 of 2 unigrams, 1 of 1 bigram, no trigram or 4-gram positions
  const double short_hyp = corpus_bleu({"the cat"}, {"the cat sat on"});
  const double p = std::exp((std::log(1.0) + std::log(1.0) + std::log(0.1) + std::log(0.1)) / 4);
  EXPECT_NEAR(short_hyp, 100 * std::exp(1 - 4.0 / 2.0) * p, 1e-9);
}

TEST(Bleu, InRangeForRandomText) {
  Rng rng(5);
  const std::vector<std::string> words{"a", "b", "c", "d", "e", "f"};
  for (int i = 0; i < 200; ++i) {
    std::vector<std::string> h, r;
    for (int k = 0; k < 3; ++k) {
      std::string a, b;
      for (std::size_t j = 0, n = 1 + rng.uniform_int(8); j < n; ++j) a += words[rng.uniform_int(words.size())] + " ";
      for (std::size_t j = 0, n = 1 + rng.uniform_int(8); j < n; ++j) b += words[rng.uniform_int(words.size())] + " ";
      h.push_back(a);
      r.push_back(b);
    }
    const double s = corpus_bleu(h, r);
    ASSERT_GE(s, 0.0);
    ASSERT_LE(s, 100.0 + 1e-9);
  }
}

TEST(Bleu, Tokenizer) {
  EXPECT_EQ(bleu_tokenize("Sales rise, then fall."),
            (std::vector<std::string>{"Sales", "rise", ",", "then", "fall", "."}));
  EXPECT_EQ(bleu_tokenize("  a\tb\n"), (std::vector<std::string>{"a", "b"}));
  EXPECT_TRUE(bleu_tokenize("").empty());
}

TEST(Bleu, Errors) {
  try {
    corpus_bleu({"a", "b"}, {"a"});
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::LengthMismatch);
  }
  try {
    corpus_bleu({}, {});
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::EmptyInput);
  }
  EXPECT_EQ(corpus_bleu({""}, {"a b"}), 0.0);
}

namespace {

EvalReport::Fields sample_fields() {
  EvalReport::Fields f;
  f.bleu_l1 = 44.1;
  f.bleu_l2l3 = 14.6;
  f.sample_count = 12;
  f.checkpoint_id = "abc123";
  f.corpus_id = "def456";
  f.config_hash = "0011223344556677";
  f.pretext_accuracy = {{"rotation", 0.75}, {"puzzle", 0.125}};
  return f;
}

}  // namespace

TEST(Report, AverageIsMeanOfLevels) {
  EXPECT_NEAR(EvalReport(sample_fields()).bleu_avg(), 29.35, 1e-12);
  Rng rng(3);
  for (int i = 0; i < 1000; ++i) {
    auto f = sample_fields();
    f.bleu_l1 = rng.uniform() * 100;
    f.bleu_l2l3 = rng.uniform() * 100;
    const EvalReport r(f);
    ASSERT_DOUBLE_EQ(r.bleu_avg(), (*f.bleu_l1 + *f.bleu_l2l3) / 2);
    ASSERT_GE(r.bleu_avg(), std::min(*f.bleu_l1, *f.bleu_l2l3));
    ASSERT_LE(r.bleu_avg(), std::max(*f.bleu_l1, *f.bleu_l2l3));
  }
}

TEST(Report, RecordsRoundTrip) {
  Rng rng(4);
  for (int i = 0; i < 200; ++i) {
    auto f = sample_fields();
    f.bleu_l1 = rng.uniform() * 100;
    f.bleu_l2l3 = rng.uniform() * 100;
    f.pretext_accuracy["categ"] = rng.uniform();
    const EvalReport r(f);
    const auto back = parse_report_records(format_report_records(r));
    ASSERT_TRUE(back == r);
  }
  test::TempDir dir;
  const EvalReport r(sample_fields());
  emit_report(r, dir / "report");
  EXPECT_TRUE(std::filesystem::exists(dir / "report.txt"));
  EXPECT_TRUE(load_report(dir / "report") == r);
  EXPECT_NE(read_text_file(dir / "report.records").find("bleu_avg=29.35"), std::string::npos);
}

TEST(Report, MissingFields) {
  auto expect_missing = [](EvalReport::Fields f) {
    try {
      EvalReport r(f);
      FAIL();
    } catch (const Error& e) {
      EXPECT_EQ(e.code(), ErrorCode::MissingField);
    }
  };
  auto f = sample_fields();
  f.bleu_l1.reset();
  expect_missing(f);
  f = sample_fields();
  f.sample_count.reset();
  expect_missing(f);
  f = sample_fields();
  f.checkpoint_id.clear();
  expect_missing(f);
  f = sample_fields();
  f.bleu_l2l3 = 120;
  expect_missing(f);
  f = sample_fields();
  f.pretext_accuracy["rotation"] = 1.5;
  expect_missing(f);
  f = sample_fields();
  f.corpus_id = "a b";
  expect_missing(f);

  std::string text = format_report_records(EvalReport(sample_fields()));
  text.erase(text.find("bleu_l2l3="), text.find('\n', text.find("bleu_l2l3=")) + 1 - text.find("bleu_l2l3="));
  try {
    parse_report_records(text);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::MissingField);
  }
}

TEST(Report, ExactDoubles) {
  Rng rng(6);
  for (int i = 0; i < 1000; ++i) {
    const double v = rng.uniform() * 100;
    ASSERT_EQ(parse_double(exact_double(v)), v);
  }
  EXPECT_THROW(parse_double("1.5x"), Error);
}

TEST(Accuracy, Fraction) {
  const std::vector<int> p{1, 2, 3, 4, 5, 6, 7, 8, 9, 10}, y{1, 2, 3, 4, 5, 6, 7, 0, 0, 0};
  EXPECT_DOUBLE_EQ(accuracy(p, y), 0.7);
  EXPECT_THROW(accuracy(std::vector<int>{1}, std::vector<int>{}), Error);
  EXPECT_THROW(accuracy(std::vector<int>{}, std::vector<int>{}), Error);
}

TEST(Accuracy, InvariantUnderJointPermutation) {
  Rng rng(7);
  for (int i = 0; i < 500; ++i) {
    std::vector<int> p(1 + rng.uniform_int(30)), y(p.size());
    for (std::size_t k = 0; k < p.size(); ++k) {
      p[k] = static_cast<int>(rng.uniform_int(4));
      y[k] = static_cast<int>(rng.uniform_int(4));
    }
    const double a = accuracy(p, y);
    std::vector<std::size_t> idx(p.size());
    std::iota(idx.begin(), idx.end(), std::size_t{0});
    rng.shuffle(idx);
    std::vector<int> p2, y2;
    for (auto k : idx) {
      p2.push_back(p[k]);
      y2.push_back(y[k]);
    }
    ASSERT_EQ(accuracy(p2, y2), a);
    ASSERT_GE(a, 0.0);
    ASSERT_LE(a, 1.0);
  }
}

TEST(LevelEval, ReferenceEchoScoresHundred) {
  const auto c = test::synthetic_corpus(10, 2);
  const SummaryGenerator echo = [](const ChartRecord& r, std::optional<SemanticLevel> level) {
    return level_text(r.summary, *level);
  };
  const auto s = level_split_eval(echo, c.records);
  EXPECT_DOUBLE_EQ(s.bleu_l1, 100.0);
  EXPECT_DOUBLE_EQ(s.bleu_l2l3, 100.0);
  EXPECT_EQ(s.outputs.size(), 10u);
  EXPECT_EQ(s.l1_pairs, 10u);
}

TEST(LevelEval, FilteredModeScoresOneSummaryAgainstBothLevels) {
  const auto c = test::synthetic_corpus(6, 3);
  int calls = 0;
  const SummaryGenerator whole = [&](const ChartRecord& r, std::optional<SemanticLevel> level) {
    EXPECT_FALSE(level.has_value());
    ++calls;
    return r.summary.text;
  };
  const auto s = level_split_eval(whole, c.records, LevelMode::filtered);
  EXPECT_EQ(calls, 6);
  EXPECT_GT(s.bleu_l1, 0.0);
  EXPECT_LT(s.bleu_l1, 100.0);
  EXPECT_EQ(parse_level_mode("filtered"), LevelMode::filtered);
  EXPECT_THROW(parse_level_mode("both"), Error);
}

TEST(PretextAccuracy, ReportsEveryTask) {
  const auto c = test::synthetic_corpus(4, 4);
  const auto cb = build_codebook(100);
  ModelConfig mc;
  mc.resolution = 64;
  ChartModel<float> m(mc, 1, cb.size());
  const auto acc = pretext_accuracy(m, make_batch(c.records, c.root, cb, 9, {64}));
  for (auto task : kAccuracyTasks) {
    ASSERT_TRUE(acc.count(std::string(task)));
    EXPECT_GE(acc.at(std::string(task)), 0.0);
    EXPECT_LE(acc.at(std::string(task)), 1.0);
  }
}
