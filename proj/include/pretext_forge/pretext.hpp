#pragma once

#include <array>
#include <cstdint>
#include <span>
#include <string>
#include <variant>
#include <vector>

#include "pretext_forge/codebook.hpp"
#include "pretext_forge/colorspace.hpp"
#include "pretext_forge/corpus.hpp"
#include "pretext_forge/image.hpp"
#include "pretext_forge/rng.hpp"

namespace pforge {

// Jigsaw geometry: a 234x234 canvas gives 78x78 cells, each holding a 64x64 tile with 7 px of slack per side.
inline constexpr int kJigsawCanvas = 234;
inline constexpr int kJigsawCell = 78;
inline constexpr int kJigsawTile = 64;
inline constexpr int kJigsawMaxJitter = 7;
inline constexpr int kDefaultResolution = 224;
inline constexpr int kRotationClasses = 4;

struct RotationSample {
  RgbImage image;
  int label = 0;  ///< number of 90 degree counter-clockwise turns
};

struct JigsawSample {
  std::array<RgbImage, kJigsawGrid> tiles;  ///< in presentation (slot) order
  int label = 0;                            ///< codebook index
};

/// Target chroma is normalised: Lab a/b divided by color::kAbScale.
struct ColorizationSample {
  GrayImage input;
  AbImage target;
};

struct CategorySample {
  RgbImage image;
  int label = 0;
};

enum class TaskKind { rotation = 0, puzzle = 1, colorization = 2, category = 3 };

inline std::string_view to_string(TaskKind k) {
  switch (k) {
    case TaskKind::rotation: return "rotation";
    case TaskKind::puzzle: return "puzzle";
    case TaskKind::colorization: return "colorization";
    case TaskKind::category: return "category";
  }
  return "";
}

struct PretextSample {
  std::string source_id;
  std::uint64_t seed = 0;
  std::variant<RotationSample, JigsawSample, ColorizationSample, CategorySample> data;

  TaskKind kind() const { return static_cast<TaskKind>(data.index()); }
};

/// Counter-clockwise rotation by k quarter turns: for k = 1, out(y, x) = in(x, W-1-y).
inline RgbImage rotate_image(const RgbImage& img, int k) {
  k = ((k % 4) + 4) % 4;
  if (k == 0) return img;
  RgbImage cur = img;
  for (int t = 0; t < k; ++t) {
    RgbImage out(cur.height, cur.width);
    for (int y = 0; y < out.height; ++y)
      for (int x = 0; x < out.width; ++x)
        for (int c = 0; c < 3; ++c) out.at(y, x, c) = cur.at(x, cur.width - 1 - y, c);
    cur = std::move(out);
  }
  return cur;
}

inline RotationSample rotate(const RgbImage& img, int k) {
  if (k < 0 || k >= kRotationClasses) throw Error(ErrorCode::InvalidArgument, "rotation label must be in [0, 4)");
  return {rotate_image(img, k), k};
}

struct JigsawOptions {
  bool zero_jitter = false;  ///< test hook: cut every tile at the centred anchor
};

/// Cuts the nine jittered tiles from the resized canvas in canonical (row-major cell) order.
inline std::array<RgbImage, kJigsawGrid> canonical_tiles(const RgbImage& img, std::uint64_t rng_seed,
                                                         JigsawOptions opts = {}) {
  const RgbImage canvas = resize_bilinear(img, kJigsawCanvas, kJigsawCanvas);
  Rng rng(rng_seed);
  std::array<RgbImage, kJigsawGrid> tiles;
  const int anchor = (kJigsawCell - kJigsawTile) / 2;
  for (int cell = 0; cell < kJigsawGrid; ++cell) {
    int jx = static_cast<int>(rng.uniform_range(-kJigsawMaxJitter, kJigsawMaxJitter));
    int jy = static_cast<int>(rng.uniform_range(-kJigsawMaxJitter, kJigsawMaxJitter));
    if (opts.zero_jitter) jx = jy = 0;
    const int x0 = (cell % 3) * kJigsawCell + anchor + jx;
    const int y0 = (cell / 3) * kJigsawCell + anchor + jy;
    tiles[cell] = crop(canvas, x0, y0, kJigsawTile, kJigsawTile);
  }
  return tiles;
}

inline JigsawSample jigsaw(const RgbImage& img, int perm_index, std::uint64_t rng_seed, const PermutationCodebook& cb,
                           JigsawOptions opts = {}) {
  if (perm_index < 0 || static_cast<std::size_t>(perm_index) >= cb.size())
    throw Error(ErrorCode::InvalidArgument, "permutation index out of range");
  auto canon = canonical_tiles(img, rng_seed, opts);
  JigsawSample s;
  const auto& perm = cb[perm_index];
  for (int slot = 0; slot < kJigsawGrid; ++slot) s.tiles[slot] = canon[perm[slot]];
  s.label = perm_index;
  return s;
}

/// Undo the codebook permutation: returns tiles in canonical order.
inline std::array<RgbImage, kJigsawGrid> reassemble(const JigsawSample& s, const PermutationCodebook& cb) {
  const auto inv = inverse(cb[s.label]);
  std::array<RgbImage, kJigsawGrid> out;
  for (int t = 0; t < kJigsawGrid; ++t) out[t] = s.tiles[inv[t]];
  return out;
}

inline ColorizationSample colorization_pair(const RgbImage& img) {
  ColorizationSample s;
  s.input = color::to_grayscale(img);
  s.target = color::srgb_to_lab(img).ab;
  for (auto& v : s.target.pixels) v /= color::kAbScale;
  return s;
}

inline CategorySample category_sample(const RgbImage& img, ChartCategory c) { return {img, static_cast<int>(c)}; }

struct BatchOptions {
  int resolution = kDefaultResolution;
  JigsawOptions jigsaw{};
};

/// Four samples per record, in record order: rotation, puzzle, colorization, category.
/// Per-record randomness is drawn from mix_seed(seed, position), so the batch depends only on
/// (records, seed) and records may be processed in any order.
inline std::vector<PretextSample> make_batch(std::span<const ChartRecord> records, const std::filesystem::path& root,
                                             const PermutationCodebook& cb, std::uint64_t seed,
                                             const BatchOptions& opts = {}) {
  std::vector<PretextSample> out;
  out.reserve(records.size() * 4);
  for (std::size_t i = 0; i < records.size(); ++i) {
    const auto& r = records[i];
    const RgbImage source = load_image(r, root);
    const RgbImage img = resize_bilinear(source, opts.resolution, opts.resolution);
    const std::uint64_t rec_seed = mix_seed(seed, i);
    Rng rng(rec_seed);
    const int k = static_cast<int>(rng.uniform_int(kRotationClasses));
    const int perm = static_cast<int>(rng.uniform_int(cb.size()));
    const std::uint64_t jitter_seed = rng.next();

    out.push_back({r.id, rec_seed, rotate(img, k)});
    out.push_back({r.id, jitter_seed, jigsaw(source, perm, jitter_seed, cb, opts.jigsaw)});
    out.push_back({r.id, rec_seed, colorization_pair(img)});
    out.push_back({r.id, rec_seed, category_sample(img, r.chart_type)});
  }
  return out;
}

}  // namespace pforge
