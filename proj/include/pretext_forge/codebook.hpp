#pragma once

#include <algorithm>
#include <array>
#include <cstdint>
#include <filesystem>
#include <numeric>
#include <sstream>
#include <string>
#include <vector>

#include "pretext_forge/error.hpp"
#include "pretext_forge/io.hpp"

namespace pforge {

inline constexpr int kJigsawGrid = 9;
inline constexpr std::size_t kPermutationSpace = 362880;  // 9!
inline constexpr std::string_view kCodebookAlgorithm = "greedy-maxmin-hamming-lex";

/// perm[slot] is the canonical tile index shown in that slot.
using Permutation = std::array<std::uint8_t, kJigsawGrid>;

inline int hamming(const Permutation& a, const Permutation& b) {
  int d = 0;
  for (int i = 0; i < kJigsawGrid; ++i) d += a[i] != b[i];
  return d;
}

inline Permutation inverse(const Permutation& p) {
  Permutation inv{};
  for (int i = 0; i < kJigsawGrid; ++i) inv[p[i]] = static_cast<std::uint8_t>(i);
  return inv;
}

inline bool is_permutation_of_grid(const Permutation& p) {
  std::array<bool, kJigsawGrid> seen{};
  for (auto v : p) {
    if (v >= kJigsawGrid || seen[v]) return false;
    seen[v] = true;
  }
  return true;
}

struct PermutationCodebook {
  std::vector<Permutation> entries;
  int grid = kJigsawGrid;
  int min_distance = kJigsawGrid;  ///< smallest pairwise Hamming distance among entries

  std::size_t size() const { return entries.size(); }
  const Permutation& operator[](std::size_t i) const { return entries[i]; }
  friend bool operator==(const PermutationCodebook&, const PermutationCodebook&) = default;
};

/// Greedy max-min Hamming selection over all of S9. Entry 0 is the identity; every later entry is the
/// permutation whose minimum distance to the chosen set is largest, ties going to the lexicographically
/// smallest. No randomness.
inline PermutationCodebook build_codebook(std::size_t count = 100) {
  if (count > kPermutationSpace)
    throw Error(ErrorCode::CountTooLarge, "codebook count " + std::to_string(count) + " exceeds 9!");
  if (count < 1) throw Error(ErrorCode::InvalidArgument, "codebook count must be at least 1");

  std::vector<Permutation> all;
  all.reserve(kPermutationSpace);
  Permutation p;
  std::iota(p.begin(), p.end(), std::uint8_t{0});
  do {
    all.push_back(p);
  } while (std::next_permutation(p.begin(), p.end()));

  std::vector<std::uint8_t> min_dist(all.size(), kJigsawGrid + 1);
  PermutationCodebook cb;
  std::size_t chosen = 0;  // identity is first in lexicographic order
  for (std::size_t k = 0; k < count; ++k) {
    if (k > 0) {
      chosen = static_cast<std::size_t>(std::max_element(min_dist.begin(), min_dist.end()) - min_dist.begin());
      cb.min_distance = std::min<int>(cb.min_distance, min_dist[chosen]);
    }
    const Permutation& c = all[chosen];
    cb.entries.push_back(c);
    for (std::size_t i = 0; i < all.size(); ++i) {
      const auto d = static_cast<std::uint8_t>(hamming(all[i], c));
      if (d < min_dist[i]) min_dist[i] = d;
    }
  }
  return cb;
}

inline std::string format_codebook(const PermutationCodebook& cb) {
  std::ostringstream out;
  out << "# codebook grid=" << cb.grid << " count=" << cb.size() << " algorithm=" << kCodebookAlgorithm
      << " d_min=" << cb.min_distance << "\n";
  for (const auto& e : cb.entries) {
    for (int i = 0; i < kJigsawGrid; ++i) out << (i ? "," : "") << static_cast<int>(e[i]);
    out << "\n";
  }
  return out.str();
}

inline PermutationCodebook parse_codebook(std::string_view content) {
  PermutationCodebook cb;
  std::istringstream in{std::string(content)};
  std::string line;
  if (!std::getline(in, line) || line.rfind("# codebook", 0) != 0)
    throw Error(ErrorCode::BadRecord, "codebook header missing");
  std::size_t declared = 0;
  {
    std::istringstream hs(line.substr(10));
    std::string kv;
    while (hs >> kv) {
      const auto eq = kv.find('=');
      if (eq == std::string::npos) continue;
      const auto key = kv.substr(0, eq);
      const auto val = kv.substr(eq + 1);
      if (key == "grid" && std::stoi(val) != kJigsawGrid) throw Error(ErrorCode::BadRecord, "unsupported grid " + val);
      if (key == "count") declared = std::stoul(val);
      if (key == "d_min") cb.min_distance = std::stoi(val);
    }
  }
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    Permutation p{};
    std::istringstream ls(line);
    std::string tok;
    int i = 0;
    while (std::getline(ls, tok, ',')) {
      if (i >= kJigsawGrid) throw Error(ErrorCode::BadRecord, "codebook row too long: " + line);
      p[i++] = static_cast<std::uint8_t>(std::stoi(tok));
    }
    if (i != kJigsawGrid || !is_permutation_of_grid(p)) throw Error(ErrorCode::BadRecord, "bad codebook row: " + line);
    cb.entries.push_back(p);
  }
  if (cb.entries.size() != declared) throw Error(ErrorCode::BadRecord, "codebook row count disagrees with header");
  return cb;
}

/// Loads `<dir>/codebook_<count>.txt` when present and valid, otherwise builds and stores it.
inline PermutationCodebook cached_codebook(std::size_t count, const std::filesystem::path& dir) {
  const auto file = dir / ("codebook_" + std::to_string(count) + ".txt");
  if (!dir.empty() && std::filesystem::exists(file)) {
    try {
      auto cb = parse_codebook(read_text_file(file));
      if (cb.size() == count) return cb;
    } catch (const std::exception&) {
      // fall through and rebuild
    }
  }
  auto cb = build_codebook(count);
  if (!dir.empty()) write_file_atomic(file, format_codebook(cb));
  return cb;
}

}  // namespace pforge
