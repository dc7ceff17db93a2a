#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <numbers>
#include <string>
#include <vector>

#include "pretext_forge/corpus.hpp"
#include "pretext_forge/image.hpp"
#include "pretext_forge/png_io.hpp"
#include "pretext_forge/rng.hpp"

// Procedural chart renderer for fixtures, smoke runs and the desk-scale ablation.

namespace pforge::synth {

using Color = std::array<std::uint8_t, 3>;

inline constexpr std::array<Color, 6> kPalette{{{31, 119, 180}, {255, 127, 14}, {44, 160, 44},
                                               {214, 39, 40}, {148, 103, 189}, {140, 86, 75}}};
inline constexpr Color kInk{30, 30, 30};
inline constexpr Color kGrid{220, 220, 220};

/// Default tag vocabulary: five construction tags (L1) and five data-insight tags.
inline const char* const kDefaultVocabulary =
    "L1:title\nL1:chart_type\nL1:axis\nL1:encoding\nL1:legend\n"
    "trend\nextrema\ncomparison\nstatistic\noutlier\n";

class Canvas {
 public:
  explicit Canvas(RgbImage& img) : img_(img) {}

  void fill_rect(int x0, int y0, int x1, int y1, Color c) {
    for (int y = std::max(0, y0); y < std::min(img_.height, y1); ++y)
      for (int x = std::max(0, x0); x < std::min(img_.width, x1); ++x) img_.set(y, x, c);
  }

  void line(double x0, double y0, double x1, double y1, Color c, int thickness = 2) {
    const int steps = static_cast<int>(std::ceil(std::max(std::abs(x1 - x0), std::abs(y1 - y0)))) + 1;
    for (int s = 0; s <= steps; ++s) {
      const double t = static_cast<double>(s) / steps;
      const int x = static_cast<int>(std::lround(x0 + t * (x1 - x0)));
      const int y = static_cast<int>(std::lround(y0 + t * (y1 - y0)));
      fill_rect(x - thickness / 2, y - thickness / 2, x - thickness / 2 + thickness, y - thickness / 2 + thickness, c);
    }
  }

  void disc(double cx, double cy, double r, Color c) {
    for (int y = static_cast<int>(cy - r); y <= static_cast<int>(cy + r) + 1; ++y)
      for (int x = static_cast<int>(cx - r); x <= static_cast<int>(cx + r) + 1; ++x)
        if (in(x, y) && (x - cx) * (x - cx) + (y - cy) * (y - cy) <= r * r) img_.set(y, x, c);
  }

  /// Angles in radians, clockwise from twelve o'clock.
  void wedge(double cx, double cy, double r, double a0, double a1, Color c) {
    for (int y = static_cast<int>(cy - r); y <= static_cast<int>(cy + r) + 1; ++y)
      for (int x = static_cast<int>(cx - r); x <= static_cast<int>(cx + r) + 1; ++x) {
        const double dx = x - cx, dy = y - cy;
        if (!in(x, y) || dx * dx + dy * dy > r * r) continue;
        double a = std::atan2(dx, -dy);
        if (a < 0) a += 2 * std::numbers::pi;
        if (a >= a0 && a < a1) img_.set(y, x, c);
      }
  }

  /// Grey blocks standing in for a line of text.
  void text_bar(int x, int y, int width, int height, Rng& rng) {
    int cx = x;
    while (cx < x + width) {
      const int w = 3 + static_cast<int>(rng.uniform_int(9));
      fill_rect(cx, y, std::min(cx + w, x + width), y + height, {90, 90, 90});
      cx += w + 3;
    }
  }

  bool in(int x, int y) const { return x >= 0 && y >= 0 && x < img_.width && y < img_.height; }

 private:
  RgbImage& img_;
};

struct Plot {
  int x0, y0, x1, y1;  ///< pixel box of the data area

  double px(double u) const { return x0 + u * (x1 - x0); }
  double py(double v) const { return y1 - v * (y1 - y0); }
};

enum class Trend { rising, falling, flat };

inline std::string_view to_string(Trend t) {
  return t == Trend::rising ? "rises" : t == Trend::falling ? "falls" : "stays roughly flat";
}

/// Values in [0.1, 0.9] following a trend with noise.
inline std::vector<double> series(int n, Trend t, Rng& rng) {
  std::vector<double> v(n);
  const double base = rng.uniform(0.25, 0.45);
  for (int i = 0; i < n; ++i) {
    const double u = n > 1 ? static_cast<double>(i) / (n - 1) : 0.0;
    const double slope = t == Trend::rising ? 0.45 : t == Trend::falling ? -0.45 : 0.0;
    const double start = t == Trend::falling ? base + 0.4 : base;
    v[i] = std::clamp(start + slope * u + rng.uniform(-0.08, 0.08), 0.1, 0.9);
  }
  return v;
}

inline void axes(Canvas& cv, const Plot& p) {
  for (int k = 1; k <= 3; ++k) {
    const int y = static_cast<int>(p.py(k / 4.0));
    cv.fill_rect(p.x0, y, p.x1, y + 1, kGrid);
  }
  cv.fill_rect(p.x0 - 2, p.y0, p.x0, p.y1 + 2, kInk);
  cv.fill_rect(p.x0 - 2, p.y1, p.x1, p.y1 + 2, kInk);
}

struct ChartFacts {
  ChartCategory type = ChartCategory::line;
  Trend trend = Trend::flat;
  int points = 0;
  int series_count = 1;
  int argmax = 0;
  std::string title, x_name, y_name;
};

inline void draw_line_series(Canvas& cv, const Plot& p, const std::vector<double>& v, Color c) {
  for (std::size_t i = 1; i < v.size(); ++i)
    cv.line(p.px((i - 1.0) / (v.size() - 1)), p.py(v[i - 1]), p.px(static_cast<double>(i) / (v.size() - 1)), p.py(v[i]),
            c, 3);
}

inline void draw_bars(Canvas& cv, const Plot& p, const std::vector<double>& v, Color c) {
  const double slot = static_cast<double>(p.x1 - p.x0) / v.size();
  for (std::size_t i = 0; i < v.size(); ++i)
    cv.fill_rect(static_cast<int>(p.x0 + i * slot + slot * 0.15), static_cast<int>(p.py(v[i])),
                 static_cast<int>(p.x0 + (i + 1) * slot - slot * 0.15), p.y1, c);
}

inline void draw_legend(Canvas& cv, int x, int y, int entries, Rng& rng) {
  cv.fill_rect(x, y, x + 46, y + 6 + 10 * entries, {245, 245, 245});
  for (int k = 0; k < entries; ++k) {
    cv.fill_rect(x + 3, y + 4 + 10 * k, x + 10, y + 10 + 10 * k, kPalette[k % kPalette.size()]);
    cv.text_bar(x + 13, y + 5 + 10 * k, 30, 4, rng);
  }
}

/// Renders one chart of the given type; returns the facts that its summary describes.
inline ChartFacts render(ChartCategory type, Rng& rng, RgbImage& img) {
  static const std::array<const char*, 6> kTitles{"Monthly revenue", "Task completion time", "Error rate by week",
                                                  "Participant ratings", "Survey responses", "Sensor readings"};
  static const std::array<const char*, 4> kX{"month", "condition", "week", "session"};
  static const std::array<const char*, 4> kY{"revenue", "time in seconds", "error rate", "score"};
  ChartFacts f;
  f.type = type;
  f.trend = static_cast<Trend>(rng.uniform_int(3));
  f.points = 5 + static_cast<int>(rng.uniform_int(4));
  f.title = kTitles[rng.uniform_int(kTitles.size())];
  f.x_name = kX[rng.uniform_int(kX.size())];
  f.y_name = kY[rng.uniform_int(kY.size())];

  std::fill(img.pixels.begin(), img.pixels.end(), std::uint8_t{255});
  Canvas cv(img);
  const int W = img.width, H = img.height;
  cv.text_bar(W / 5, 6, W * 3 / 5, 7, rng);
  const Plot p{W / 8, H / 8, W - W / 12, H - H / 6};
  const Color main = kPalette[rng.uniform_int(kPalette.size())];
  auto v = series(f.points, f.trend, rng);
  f.argmax = static_cast<int>(std::max_element(v.begin(), v.end()) - v.begin());

  switch (type) {
    case ChartCategory::line:
      axes(cv, p);
      draw_line_series(cv, p, v, main);
      break;
    case ChartCategory::bar:
      axes(cv, p);
      draw_bars(cv, p, v, main);
      break;
    case ChartCategory::area:
      axes(cv, p);
      for (int x = p.x0; x < p.x1; ++x) {
        const double u = static_cast<double>(x - p.x0) / (p.x1 - p.x0) * (v.size() - 1);
        const std::size_t i = std::min(static_cast<std::size_t>(u), v.size() - 2);
        const double val = v[i] + (u - i) * (v[i + 1] - v[i]);
        cv.fill_rect(x, static_cast<int>(p.py(val)), x + 1, p.y1, main);
      }
      break;
    case ChartCategory::scatter:
      axes(cv, p);
      for (int k = 0; k < 4 * f.points; ++k) {
        const double u = rng.uniform();
        const double idx = u * (v.size() - 1);
        const std::size_t i = std::min(static_cast<std::size_t>(idx), v.size() - 2);
        const double val = v[i] + (idx - i) * (v[i + 1] - v[i]) + rng.uniform(-0.06, 0.06);
        cv.disc(p.px(u), p.py(std::clamp(val, 0.0, 1.0)), 2.5, main);
      }
      break;
    case ChartCategory::multivariate: {
      axes(cv, p);
      draw_bars(cv, p, v, kPalette[0]);
      auto w = series(f.points, static_cast<Trend>(rng.uniform_int(3)), rng);
      draw_line_series(cv, p, w, kPalette[1]);
      f.series_count = 2;
      draw_legend(cv, p.x1 - 48, p.y0, 2, rng);
      break;
    }
    case ChartCategory::panel: {
      const int mid = (p.x0 + p.x1) / 2;
      const Plot a{p.x0, p.y0 + 12, mid - 8, p.y1}, b{mid + 10, p.y0 + 12, p.x1, p.y1};
      axes(cv, a);
      axes(cv, b);
      draw_line_series(cv, a, v, kPalette[0]);
      draw_bars(cv, b, series(f.points, f.trend, rng), kPalette[1]);
      f.series_count = 2;
      draw_legend(cv, W / 2 - 23, p.y0 - 10, 2, rng);
      break;
    }
    case ChartCategory::pie: {
      double total = 0;
      for (double x : v) total += x;
      const double r = std::min(W, H) * 0.33;
      const double cx = W * 0.42, cy = H * 0.55;
      double a = 0;
      for (std::size_t i = 0; i < v.size(); ++i) {
        const double span = 2 * std::numbers::pi * v[i] / total;
        cv.wedge(cx, cy, r, a, a + span + 1e-9, kPalette[i % kPalette.size()]);
        a += span;
      }
      f.series_count = f.points;
      draw_legend(cv, W - 56, H / 4, std::min(f.points, 6), rng);
      break;
    }
    case ChartCategory::box: {
      axes(cv, p);
      const double slot = static_cast<double>(p.x1 - p.x0) / v.size();
      for (std::size_t i = 0; i < v.size(); ++i) {
        const double cxp = p.x0 + (i + 0.5) * slot, half = slot * 0.28;
        const double lo = std::max(0.02, v[i] - 0.12), hi = std::min(0.98, v[i] + 0.12);
        cv.line(cxp, p.py(lo - 0.06 < 0 ? 0 : lo - 0.06), cxp, p.py(std::min(1.0, hi + 0.06)), kInk, 1);
        cv.fill_rect(static_cast<int>(cxp - half), static_cast<int>(p.py(hi)), static_cast<int>(cxp + half),
                     static_cast<int>(p.py(lo)), main);
        cv.fill_rect(static_cast<int>(cxp - half), static_cast<int>(p.py(v[i])), static_cast<int>(cxp + half),
                     static_cast<int>(p.py(v[i])) + 2, kInk);
      }
      break;
    }
  }
  return f;
}

inline std::string type_phrase(ChartCategory t) {
  switch (t) {
    case ChartCategory::multivariate: return "combined bar and line chart";
    case ChartCategory::panel: return "panel of two charts";
    case ChartCategory::box: return "box plot";
    default: return std::string(to_string(t)) + " chart";
  }
}

inline std::string capitalized(std::string s) {
  if (!s.empty()) s[0] = static_cast<char>(std::toupper(static_cast<unsigned char>(s[0])));
  return s;
}

/// Sentence pool for a chart, as (markup, is_l1) pairs in canonical order.
inline std::vector<std::pair<std::string, bool>> summary_sentences(const ChartFacts& f) {
  std::vector<std::pair<std::string, bool>> out;
  out.push_back({"<title>" + f.title + "</title> is shown as a <chart_type>" + type_phrase(f.type) + "</chart_type>.", true});
  if (f.type == ChartCategory::pie)
    out.push_back({"<encoding>Slice size encodes the share of " + f.y_name + "</encoding>.", true});
  else
    out.push_back({"The <axis>x-axis shows " + f.x_name + "</axis> and the <axis>y-axis shows " + f.y_name + "</axis>.", true});
  if (f.series_count > 1) out.push_back({"A <legend>legend lists " + std::to_string(std::min(f.series_count, 6)) + " entries</legend>.", true});
  if (f.type == ChartCategory::pie)
    out.push_back({"<extrema>Slice " + std::to_string(f.argmax + 1) + " is the largest</extrema>.", false});
  else
    out.push_back({capitalized(f.y_name) + " <trend>" + std::string(to_string(f.trend)) + " overall</trend>.", false});
  out.push_back({"<extrema>The peak is at " + f.x_name + " " + std::to_string(f.argmax + 1) + " of " +
                     std::to_string(f.points) + "</extrema>.",
                 false});
  return out;
}

inline std::string join_sentences(const std::vector<std::pair<std::string, bool>>& s) {
  std::string out;
  for (const auto& [m, _] : s) out += (out.empty() ? "" : " ") + m;
  return out;
}

struct SynthOptions {
  int width = 240;
  int height = 180;
};

/// A corpus of n records cycling through the eight chart types. Images are held in memory.
inline std::vector<ChartRecord> make_records(int n, std::uint64_t seed, const Vocabulary& vocab,
                                             const SynthOptions& opts = {}) {
  std::vector<ChartRecord> out;
  for (int i = 0; i < n; ++i) {
    Rng rng(mix_seed(seed, static_cast<std::uint64_t>(i)));
    ChartRecord r;
    char id[32];
    std::snprintf(id, sizeof id, "syn-%04d", i);
    r.id = id;
    r.doi = "10.0000/synthetic." + std::to_string(i / 4);
    r.figure_number = i % 4 + 1;
    r.chart_type = static_cast<ChartCategory>(i % kChartCategoryCount);
    RgbImage img(opts.width, opts.height, 255);
    const ChartFacts f = render(r.chart_type, rng, img);
    r.image = std::move(img);
    r.image_path = std::string(id) + ".png";
    r.caption = "Figure " + std::to_string(r.figure_number) + ". " + f.title + ".";
    r.summary = parse_tagged(join_sentences(summary_sentences(f)), vocab);
    out.push_back(std::move(r));
  }
  return out;
}

/// Writes `index.jsonl`, `vocabulary.txt` and one PNG per record into dir.
inline void write_corpus(const std::vector<ChartRecord>& records, const std::filesystem::path& dir,
                         std::string_view vocabulary_text = kDefaultVocabulary) {
  for (const auto& r : records)
    if (r.image) write_png(dir / r.image_path, *r.image);
  write_file_atomic(dir / kVocabularyFileName, vocabulary_text);
  write_file_atomic(dir / kIndexFileName, format_index(records));
}

}  // namespace pforge::synth
