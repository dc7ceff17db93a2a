#include <gtest/gtest.h>

#include "pretext_forge/pretext.hpp"
#include "support.hpp"

using namespace pforge;

namespace {

RgbImage random_image(Rng& rng, int w, int h) {
  RgbImage img(w, h);
  for (auto& p : img.pixels) p = static_cast<std::uint8_t>(rng.uniform_int(256));
  return img;
}

const PermutationCodebook& cb() {
  static const PermutationCodebook c = build_codebook(100);
  return c;
}

}  // namespace

TEST(Rotation, QuarterTurnMapping) {
  Rng rng(1);
  const auto img = random_image(rng, 5, 5);
  const auto r = rotate_image(img, 1);
  for (int y = 0; y < 5; ++y)
    for (int x = 0; x < 5; ++x) ASSERT_EQ(r.pixel(y, x), img.pixel(x, 4 - y));
}

TEST(Rotation, GroupIdentities) {
  Rng rng(2);
  for (int i = 0; i < 1000; ++i) {
    const int n = 1 + static_cast<int>(rng.uniform_int(6));
    const auto img = random_image(rng, n, n);
    const int a = static_cast<int>(rng.uniform_int(4)), b = static_cast<int>(rng.uniform_int(4));
    ASSERT_EQ(rotate_image(rotate_image(img, a), b), rotate_image(img, (a + b) % 4));
    ASSERT_EQ(rotate_image(rotate_image(img, a), 4 - a), img);
    ASSERT_EQ(rotate_image(img, 4), img);
  }
}

TEST(Rotation, LabelRange) {
  RgbImage img(4, 4);
  EXPECT_EQ(rotate(img, 3).label, 3);
  EXPECT_THROW(rotate(img, 4), Error);
  EXPECT_THROW(rotate(img, -1), Error);
}

TEST(Jigsaw, InverseReassemblyRestoresCanonicalOrder) {
  Rng rng(3);
  const auto img = random_image(rng, 90, 70);
  for (int i = 0; i < 1000; ++i) {
    const int perm = static_cast<int>(rng.uniform_int(cb().size()));
    const std::uint64_t seed = rng.next();
    const auto s = jigsaw(img, perm, seed, cb());
    EXPECT_EQ(s.label, perm);
    ASSERT_EQ(reassemble(s, cb()), canonical_tiles(img, seed));
  }
}

TEST(Jigsaw, ZeroJitterIdentityIsCentredCrops) {
  Rng rng(4);
  for (int i = 0; i < 50; ++i) {
    const auto img = random_image(rng, 40 + static_cast<int>(rng.uniform_int(300)), 40 + static_cast<int>(rng.uniform_int(300)));
    const auto s = jigsaw(img, 0, rng.next(), cb(), {true});
    const auto canvas = resize_bilinear(img, kJigsawCanvas, kJigsawCanvas);
    for (int t = 0; t < kJigsawGrid; ++t)
      ASSERT_EQ(s.tiles[t], crop(canvas, (t % 3) * kJigsawCell + 7, (t / 3) * kJigsawCell + 7, kJigsawTile, kJigsawTile));
  }
}

TEST(Jigsaw, TilesStayInsideTheirCell) {
  Rng rng(5);
  RgbImage img(kJigsawCanvas, kJigsawCanvas);
  for (int y = 0; y < kJigsawCanvas; ++y)
    for (int x = 0; x < kJigsawCanvas; ++x)
      img.set(y, x, {static_cast<std::uint8_t>(x / kJigsawCell), static_cast<std::uint8_t>(y / kJigsawCell), 0});
  for (int i = 0; i < 100; ++i) {
    const auto tiles = canonical_tiles(img, rng.next());
    for (int t = 0; t < kJigsawGrid; ++t)
      for (const auto v : {tiles[t].pixel(0, 0), tiles[t].pixel(63, 63)}) {
        ASSERT_EQ(v[0], t % 3);
        ASSERT_EQ(v[1], t / 3);
      }
  }
}

TEST(Jigsaw, Errors) {
  RgbImage img(50, 50);
  EXPECT_THROW(jigsaw(img, 100, 0, cb()), Error);
  EXPECT_THROW(jigsaw(img, -1, 0, cb()), Error);
}

TEST(Colorization, GrayInputAndNormalisedTarget) {
  Rng rng(6);
  const auto img = random_image(rng, 16, 16);
  const auto s = colorization_pair(img);
  EXPECT_EQ(s.input, color::to_grayscale(img));
  for (double v : s.target.pixels) {
    ASSERT_GE(v, -1.0);
    ASSERT_LE(v, 127.0 / 128.0);
  }
  const auto lab = color::srgb_to_lab(img);
  EXPECT_DOUBLE_EQ(s.target.pixels[0] * color::kAbScale, lab.ab.pixels[0]);
}

TEST(Batch, DeterministicAndRecordLocal) {
  const auto c = test::synthetic_corpus(6, 9);
  const auto a = make_batch(c.records, c.root, cb(), 77, {64});
  const auto b = make_batch(c.records, c.root, cb(), 77, {64});
  ASSERT_EQ(a.size(), 24u);
  for (std::size_t i = 0; i < a.size(); ++i) {
    EXPECT_EQ(a[i].kind(), static_cast<TaskKind>(i % 4));
    EXPECT_EQ(a[i].seed, b[i].seed);
    EXPECT_EQ(a[i].source_id, c.records[i / 4].id);
  }
  const auto& r0 = std::get<RotationSample>(a[0].data);
  EXPECT_EQ(r0.image.width, 64);
  EXPECT_EQ(r0.image, std::get<RotationSample>(b[0].data).image);
  EXPECT_EQ(std::get<CategorySample>(a[3].data).label, static_cast<int>(c.records[0].chart_type));
  const auto sub = make_batch(std::span(c.records).subspan(0, 2), c.root, cb(), 77, {64});
  EXPECT_EQ(std::get<JigsawSample>(sub[5].data).tiles, std::get<JigsawSample>(a[5].data).tiles);
}
