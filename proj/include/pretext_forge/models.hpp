#pragma once

#include <array>
#include <optional>
#include <string>
#include <vector>

#include "pretext_forge/codebook.hpp"
#include "pretext_forge/colorspace.hpp"
#include "pretext_forge/corpus.hpp"
#include "pretext_forge/image.hpp"
#include "pretext_forge/layers.hpp"
#include "pretext_forge/pretext.hpp"

namespace pforge {

/// Architecture knobs for the desk-scale model family.
struct ModelConfig {
  int resolution = kDefaultResolution;
  int tile = kJigsawTile;
  int stem_patch = 4;                         ///< power of two; stem conv has kernel = stride = patch
  std::vector<int> encoder_widths{16, 32, 32};  ///< stem, then one stride-2 stage per entry
  std::vector<int> decoder_widths{16, 8, 8};    ///< one per skip stage, then per patch upsampling stage but the last
  std::vector<int> discriminator_widths{8, 16, 16};
  int summarizer_embed = 32;
  int summarizer_context = 32;
  int summarizer_hidden = 128;

  int feature_stride() const { return stem_patch << (encoder_widths.size() - 1); }
  int feature_channels() const { return encoder_widths.back(); }

  int patch_stages() const {
    int n = 0;
    for (int p = stem_patch; p > 1; p >>= 1) ++n;
    return n;
  }

  void validate() const {
    if (stem_patch < 2 || (stem_patch & (stem_patch - 1)) != 0)
      throw Error(ErrorCode::InvalidArgument, "stem_patch must be a power of two >= 2");
    if (encoder_widths.size() < 2) throw Error(ErrorCode::InvalidArgument, "encoder needs at least two levels");
    if (decoder_widths.size() != encoder_widths.size() - 1 + patch_stages() - 1)
      throw Error(ErrorCode::InvalidArgument, "decoder_widths length does not match encoder depth");
    for (int r : {resolution, tile}) {
      if (r % feature_stride() != 0) throw Error(ErrorCode::InvalidArgument, "resolution must be a multiple of the stride");
      if (r / feature_stride() < 3) throw Error(ErrorCode::InvalidArgument, "feature map must be at least 3x3");
    }
  }
};

struct EncoderSpec {
  int input_height, input_width;
  int channels, feature_height, feature_width;
  std::size_t parameter_count;
};

inline constexpr int kPuzzleClassesDefault = 100;

enum class HeadTask { rotation, puzzle, categ };

inline int class_count(HeadTask t, std::size_t codebook_size = kPuzzleClassesDefault) {
  switch (t) {
    case HeadTask::rotation: return kRotationClasses;
    case HeadTask::puzzle: return static_cast<int>(codebook_size);
    case HeadTask::categ: return kChartCategoryCount;
  }
  return 0;
}

// ---------------------------------------------------------------------------
// Image <-> tensor conversion. Pixels are mapped to [-1, 1].

template <class T>
nn::Tensor<T> rgb_batch(const std::vector<const RgbImage*>& imgs) {
  const int B = static_cast<int>(imgs.size()), H = imgs.at(0)->height, W = imgs.at(0)->width;
  std::vector<T> v(static_cast<std::size_t>(B) * 3 * H * W);
  for (int b = 0; b < B; ++b) {
    if (imgs[b]->height != H || imgs[b]->width != W) throw Error(ErrorCode::ShapeMismatch, "images differ in size");
    for (int c = 0; c < 3; ++c)
      for (int y = 0; y < H; ++y)
        for (int x = 0; x < W; ++x)
          v[((static_cast<std::size_t>(b) * 3 + c) * H + y) * W + x] =
              static_cast<T>(imgs[b]->at(y, x, c) / 127.5 - 1.0);
  }
  return nn::Tensor<T>::from({B, 3, H, W}, std::move(v));
}

/// Grayscale batch, optionally replicated to 3 channels for the shared encoder.
template <class T>
nn::Tensor<T> gray_batch(const std::vector<const GrayImage*>& imgs, int channels = 1) {
  const int B = static_cast<int>(imgs.size()), H = imgs.at(0)->height, W = imgs.at(0)->width;
  std::vector<T> v(static_cast<std::size_t>(B) * channels * H * W);
  for (int b = 0; b < B; ++b) {
    if (imgs[b]->height != H || imgs[b]->width != W) throw Error(ErrorCode::ShapeMismatch, "images differ in size");
    for (int c = 0; c < channels; ++c)
      for (std::size_t i = 0; i < imgs[b]->pixels.size(); ++i)
        v[(static_cast<std::size_t>(b) * channels + c) * H * W + i] = static_cast<T>(imgs[b]->pixels[i] * 2.0 - 1.0);
  }
  return nn::Tensor<T>::from({B, channels, H, W}, std::move(v));
}

/// Normalised ab images (interleaved) -> planar [B, 2, H, W].
template <class T>
nn::Tensor<T> ab_batch(const std::vector<const AbImage*>& imgs) {
  const int B = static_cast<int>(imgs.size()), H = imgs.at(0)->height, W = imgs.at(0)->width;
  std::vector<T> v(static_cast<std::size_t>(B) * 2 * H * W);
  for (int b = 0; b < B; ++b)
    for (int c = 0; c < 2; ++c)
      for (int i = 0; i < H * W; ++i)
        v[(static_cast<std::size_t>(b) * 2 + c) * H * W + i] = static_cast<T>(imgs[b]->pixels[2 * i + c]);
  return nn::Tensor<T>::from({B, 2, H, W}, std::move(v));
}

/// One planar [2, H, W] slice of a batch back to an interleaved AbImage in Lab units.
template <class T>
AbImage ab_image_from(const nn::Tensor<T>& t, int b) {
  const int H = t.dim(2), W = t.dim(3);
  AbImage out(W, H);
  for (int c = 0; c < 2; ++c)
    for (int i = 0; i < H * W; ++i)
      out.pixels[2 * i + c] =
          std::clamp(static_cast<double>(t.values()[(static_cast<std::size_t>(b) * 2 + c) * H * W + i]) * color::kAbScale,
                     -128.0, 127.0);
  return out;
}

// ---------------------------------------------------------------------------
// Components

template <class T>
struct EncoderOutput {
  nn::Tensor<T> features;            ///< [B, C, H/stride, W/stride]
  std::vector<nn::Tensor<T>> skips;  ///< stem output first, shallow to deep, excluding the bottom level
};

/// Strided convolutional stack: patchify stem, stride-2 stages, one residual block.
template <class T>
struct VisionEncoder {
  ModelConfig cfg;
  nn::Conv2d<T> stem;
  std::vector<nn::Conv2d<T>> stages;
  nn::ResidualBlock<T> block;

  VisionEncoder() = default;
  VisionEncoder(const ModelConfig& c, Rng& rng) : cfg(c) {
    stem = nn::Conv2d<T>(3, c.encoder_widths[0], c.stem_patch, c.stem_patch, 0, rng);
    for (std::size_t i = 1; i < c.encoder_widths.size(); ++i)
      stages.emplace_back(c.encoder_widths[i - 1], c.encoder_widths[i], 3, 2, 1, rng);
    block = nn::ResidualBlock<T>(c.encoder_widths.back(), rng);
  }

  EncoderOutput<T> forward(const nn::Tensor<T>& x) const {
    if (x.ndim() != 4 || x.dim(1) != 3) throw Error(ErrorCode::ShapeMismatch, "encoder expects [B, 3, H, W]");
    const int h = x.dim(2), w = x.dim(3);
    if (h != w || (h != cfg.resolution && h != cfg.tile))
      throw Error(ErrorCode::ResolutionMismatch, "encoder accepts " + std::to_string(cfg.resolution) + " or " +
                                                     std::to_string(cfg.tile) + " px square inputs, got " +
                                                     std::to_string(h) + "x" + std::to_string(w));
    EncoderOutput<T> out;
    nn::Tensor<T> cur = nn::relu(stem(x));
    for (const auto& s : stages) {
      out.skips.push_back(cur);
      cur = nn::relu(s(cur));
    }
    out.features = block(cur);
    return out;
  }

  nn::Tensor<T> encode(const nn::Tensor<T>& x) const { return forward(x).features; }

  EncoderSpec spec() const {
    nn::NamedParams<T> ps;
    collect(ps, "encoder");
    const int f = cfg.resolution / cfg.feature_stride();
    return {cfg.resolution, cfg.resolution, cfg.feature_channels(), f, f, nn::parameter_count(ps)};
  }

  void collect(nn::NamedParams<T>& out, const std::string& prefix) const {
    stem.collect(out, prefix + ".stem");
    for (std::size_t i = 0; i < stages.size(); ++i) stages[i].collect(out, prefix + ".stage" + std::to_string(i + 1));
    block.collect(out, prefix + ".block");
  }
};

/// Residual stack over encoder features, average pooling, linear projection to class logits.
/// The puzzle variant pools each tile separately and concatenates the nine vectors in slot order.
template <class T>
struct PretextHead {
  HeadTask task = HeadTask::rotation;
  int classes = 0;
  nn::ResidualBlock<T> block;
  nn::Linear<T> proj;

  PretextHead() = default;
  PretextHead(HeadTask t, int channels, int classes_, Rng& rng) : task(t), classes(classes_), block(channels, rng) {
    const int in = t == HeadTask::puzzle ? channels * kJigsawGrid : channels;
    proj = nn::Linear<T>(in, classes_, rng);
  }

  nn::Tensor<T> forward(const nn::Tensor<T>& features) const {
    if (features.ndim() != 4 || features.dim(1) != block.conv1.weight.dim(1))
      throw Error(ErrorCode::ShapeMismatch, "head input " + nn::shape_str(features.shape()));
    nn::Tensor<T> pooled = nn::global_avg_pool(block(features));
    if (task == HeadTask::puzzle) {
      if (pooled.dim(0) % kJigsawGrid != 0)
        throw Error(ErrorCode::ShapeMismatch, "puzzle head needs 9 tile feature maps per sample");
      pooled = nn::reshape(pooled, {pooled.dim(0) / kJigsawGrid, pooled.dim(1) * kJigsawGrid});
    }
    return proj(pooled);
  }

  void collect(nn::NamedParams<T>& out, const std::string& prefix) const {
    block.collect(out, prefix + ".block");
    proj.collect(out, prefix + ".proj");
  }
};

/// U-Net style decoder on top of the encoder; emits tanh-bounded normalised ab at input resolution.
template <class T>
struct ColorDecoder {
  std::vector<nn::Conv2d<T>> convs;
  int skip_stages = 0;

  ColorDecoder() = default;
  ColorDecoder(const ModelConfig& c, Rng& rng) {
    skip_stages = static_cast<int>(c.encoder_widths.size()) - 1;
    int in = c.encoder_widths.back();
    std::size_t w = 0;
    for (int s = 0; s < skip_stages; ++s) {
      const int skip_ch = c.encoder_widths[skip_stages - 1 - s];
      convs.emplace_back(in + skip_ch, c.decoder_widths[w], 3, 1, 1, rng);
      in = c.decoder_widths[w++];
    }
    const int patch = c.patch_stages();
    for (int p = 0; p < patch; ++p) {
      if (p + 1 < patch) {
        convs.emplace_back(in, c.decoder_widths[w], 3, 1, 1, rng);
        in = c.decoder_widths[w++];
      } else {
        convs.emplace_back(in + 1, 2, 1, 1, 0, rng, 0.5);
      }
    }
  }

  nn::Tensor<T> forward(const EncoderOutput<T>& enc, const nn::Tensor<T>& gray1) const {
    nn::Tensor<T> h = enc.features;
    std::size_t k = 0;
    for (int s = 0; s < skip_stages; ++s) {
      h = nn::upsample_nearest(h, 2);
      h = nn::concat1<T>({h, enc.skips[skip_stages - 1 - s]});
      h = nn::relu(convs[k++](h));
    }
    while (k < convs.size()) {
      h = nn::upsample_nearest(h, 2);
      if (k + 1 == convs.size()) return nn::tanh(convs[k](nn::concat1<T>({h, gray1})));
      h = nn::relu(convs[k++](h));
    }
    return h;
  }

  void collect(nn::NamedParams<T>& out, const std::string& prefix) const {
    for (std::size_t i = 0; i < convs.size(); ++i) convs[i].collect(out, prefix + ".conv" + std::to_string(i));
  }
};

/// Shallow residual critic over concat(gray, ab); outputs P(real) per image.
template <class T>
struct Discriminator {
  std::vector<nn::Conv2d<T>> convs;
  nn::ResidualBlock<T> block;
  nn::Linear<T> proj;

  Discriminator() = default;
  Discriminator(const ModelConfig& c, Rng& rng) {
    const auto& w = c.discriminator_widths;
    convs.emplace_back(3, w[0], c.stem_patch, c.stem_patch, 0, rng);
    for (std::size_t i = 1; i < w.size(); ++i) convs.emplace_back(w[i - 1], w[i], 3, 2, 1, rng);
    block = nn::ResidualBlock<T>(w.back(), rng);
    proj = nn::Linear<T>(w.back(), 1, rng);
  }

  nn::Tensor<T> forward(const nn::Tensor<T>& gray1, const nn::Tensor<T>& ab) const {
    if (gray1.ndim() != 4 || ab.ndim() != 4 || gray1.dim(0) != ab.dim(0) || gray1.dim(2) != ab.dim(2) ||
        gray1.dim(3) != ab.dim(3) || gray1.dim(1) != 1 || ab.dim(1) != 2)
      throw Error(ErrorCode::ShapeMismatch,
                  "discriminator got gray " + nn::shape_str(gray1.shape()) + " ab " + nn::shape_str(ab.shape()));
    nn::Tensor<T> h = nn::concat1<T>({gray1, ab});
    for (const auto& c : convs) h = nn::leaky_relu(c(h), T(0.2));
    return nn::sigmoid(proj(nn::global_avg_pool(block(h))));
  }

  void collect(nn::NamedParams<T>& out, const std::string& prefix) const {
    for (std::size_t i = 0; i < convs.size(); ++i) convs[i].collect(out, prefix + ".conv" + std::to_string(i));
    block.collect(out, prefix + ".block");
    proj.collect(out, prefix + ".proj");
  }
};

// ---------------------------------------------------------------------------
// Summarizer

/// Character vocabulary with reserved control ids.
struct CharVocab {
  static constexpr int kPad = 0, kEos = 1, kLevelL1 = 2, kLevelL2L3 = 3, kUnk = 4, kFirstChar = 5;
  std::string chars;  ///< sorted, unique; id = kFirstChar + position

  static CharVocab from_texts(const std::vector<std::string>& texts) {
    std::array<bool, 256> seen{};
    for (const auto& t : texts)
      for (unsigned char c : t) seen[c] = true;
    CharVocab v;
    for (int c = 0; c < 256; ++c)
      if (seen[c]) v.chars.push_back(static_cast<char>(c));
    return v;
  }

  int size() const { return kFirstChar + static_cast<int>(chars.size()); }

  int id(char c) const {
    const auto pos = chars.find(c);
    return pos == std::string::npos ? kUnk : kFirstChar + static_cast<int>(pos);
  }

  static int level_token(SemanticLevel l) { return l == SemanticLevel::L1 ? kLevelL1 : kLevelL2L3; }

  std::vector<int> encode(std::string_view s) const {
    std::vector<int> out;
    out.reserve(s.size());
    for (char c : s) out.push_back(id(c));
    return out;
  }

  std::string decode(const std::vector<int>& ids) const {
    std::string out;
    for (int i : ids)
      if (i >= kFirstChar && i < size()) out.push_back(chars[i - kFirstChar]);
    return out;
  }
};

template <class T>
struct SequenceBatch {
  nn::Tensor<T> logits;     ///< [(steps * B), V], time-major
  std::vector<int> targets;  ///< aligned with logits rows; -1 marks padding
};

/// Autoregressive character decoder conditioned on pooled encoder features.
template <class T>
struct SummaryDecoder {
  CharVocab vocab;
  nn::Tensor<T> embedding;
  nn::Linear<T> init_proj, context_proj, out_proj;
  nn::GruCell<T> cell;

  SummaryDecoder() = default;
  SummaryDecoder(const ModelConfig& c, CharVocab v, Rng& rng) : vocab(std::move(v)) {
    embedding = nn::normal_param<T>({vocab.size(), c.summarizer_embed}, 0.3, rng);
    init_proj = nn::Linear<T>(c.feature_channels(), c.summarizer_hidden, rng);
    context_proj = nn::Linear<T>(c.feature_channels(), c.summarizer_context, rng);
    cell = nn::GruCell<T>(c.summarizer_embed + c.summarizer_context, c.summarizer_hidden, rng);
    out_proj = nn::Linear<T>(c.summarizer_hidden, vocab.size(), rng);
  }

  /// Teacher forcing. Each sequence is fed [control, c1..cn] and predicts [c1..cn, eos].
  /// `rows` selects the pooled feature row for each sequence.
  SequenceBatch<T> forward(const nn::Tensor<T>& pooled, const std::vector<int>& rows,
                           const std::vector<std::vector<int>>& sequences, const std::vector<int>& controls) const {
    const int B = static_cast<int>(sequences.size());
    const nn::Tensor<T> feats = nn::index_rows(pooled, rows);
    const nn::Tensor<T> ctx = nn::relu(context_proj(feats));
    nn::Tensor<T> h = nn::tanh(init_proj(feats));
    std::size_t steps = 0;
    for (const auto& s : sequences) steps = std::max(steps, s.size() + 1);
    std::vector<nn::Tensor<T>> hs;
    SequenceBatch<T> out;
    for (std::size_t t = 0; t < steps; ++t) {
      std::vector<int> in(B);
      for (int b = 0; b < B; ++b) {
        const auto& s = sequences[b];
        in[b] = t == 0 ? controls[b] : (t - 1 < s.size() ? s[t - 1] : CharVocab::kPad);
        out.targets.push_back(t < s.size() ? s[t] : t == s.size() ? CharVocab::kEos : -1);
      }
      h = cell(nn::concat1<T>({nn::embedding(embedding, in), ctx}), h);
      hs.push_back(h);
    }
    out.logits = out_proj(nn::concat0(hs));
    return out;
  }

  /// Greedy decoding for one image; stops at eos or max_len.
  std::vector<int> greedy(const nn::Tensor<T>& pooled_row, int control, int max_len) const {
    nn::NoGradGuard guard;
    std::vector<int> out;
    if (max_len <= 0) return out;
    const nn::Tensor<T> ctx = nn::relu(context_proj(pooled_row));
    nn::Tensor<T> h = nn::tanh(init_proj(pooled_row));
    int tok = control;
    for (int t = 0; t < max_len; ++t) {
      h = cell(nn::concat1<T>({nn::embedding(embedding, {tok}), ctx}), h);
      tok = nn::argmax_rows(out_proj(h))[0];
      if (tok == CharVocab::kEos) break;
      out.push_back(tok);
    }
    return out;
  }

  void collect(nn::NamedParams<T>& out, const std::string& prefix) const {
    out.emplace_back(prefix + ".embedding", embedding);
    init_proj.collect(out, prefix + ".init");
    context_proj.collect(out, prefix + ".context");
    cell.collect(out, prefix + ".gru");
    out_proj.collect(out, prefix + ".out");
  }
};

// ---------------------------------------------------------------------------
// Whole model

/// Seed-stream tags for component initialisation.
enum class InitStream : std::uint64_t { encoder = 1, rotation, puzzle, categ, decoder, discriminator, summarizer };

template <class T>
struct ChartModel {
  ModelConfig cfg;
  std::uint64_t seed = 0;
  VisionEncoder<T> encoder;
  PretextHead<T> rotation_head, puzzle_head, categ_head;
  ColorDecoder<T> decoder;
  Discriminator<T> discriminator;
  std::optional<SummaryDecoder<T>> summarizer;

  ChartModel() = default;
  ChartModel(const ModelConfig& c, std::uint64_t seed_, std::size_t puzzle_classes = kPuzzleClassesDefault)
      : cfg(c), seed(seed_) {
    c.validate();
    auto stream = [&](InitStream s) { return Rng(mix_seed(seed_, static_cast<std::uint64_t>(s))); };
    Rng r1 = stream(InitStream::encoder), r2 = stream(InitStream::rotation), r3 = stream(InitStream::puzzle),
        r4 = stream(InitStream::categ), r5 = stream(InitStream::decoder), r6 = stream(InitStream::discriminator);
    const int C = c.feature_channels();
    encoder = VisionEncoder<T>(c, r1);
    rotation_head = PretextHead<T>(HeadTask::rotation, C, kRotationClasses, r2);
    puzzle_head = PretextHead<T>(HeadTask::puzzle, C, static_cast<int>(puzzle_classes), r3);
    categ_head = PretextHead<T>(HeadTask::categ, C, kChartCategoryCount, r4);
    decoder = ColorDecoder<T>(c, r5);
    discriminator = Discriminator<T>(c, r6);
  }

  void attach_summarizer(const CharVocab& vocab) {
    Rng r = Rng(mix_seed(seed, static_cast<std::uint64_t>(InitStream::summarizer)));
    summarizer.emplace(cfg, vocab, r);
  }

  const PretextHead<T>& head(HeadTask t) const {
    return t == HeadTask::rotation ? rotation_head : t == HeadTask::puzzle ? puzzle_head : categ_head;
  }

  nn::Tensor<T> head_forward(HeadTask t, const nn::Tensor<T>& features) const { return head(t).forward(features); }

  /// Generator: grayscale [B, 1, H, W] -> normalised ab [B, 2, H, W] in [-1, 1].
  nn::Tensor<T> generate_ab(const nn::Tensor<T>& gray1) const {
    if (gray1.ndim() != 4 || gray1.dim(1) != 1) throw Error(ErrorCode::ShapeMismatch, "generator expects [B, 1, H, W]");
    if (gray1.dim(2) != cfg.resolution || gray1.dim(3) != cfg.resolution)
      throw Error(ErrorCode::ResolutionMismatch, "generator input must be " + std::to_string(cfg.resolution) + " px");
    const nn::Tensor<T> rgb = nn::concat1<T>({gray1, gray1, gray1});
    return decoder.forward(encoder.forward(rgb), gray1);
  }

  nn::Tensor<T> discriminate(const nn::Tensor<T>& gray1, const nn::Tensor<T>& ab) const {
    return discriminator.forward(gray1, ab);
  }

  /// Greedy summary for one image, conditioned on the level control token.
  std::string summarize(const RgbImage& img, SemanticLevel level, int max_len) const {
    if (!summarizer) throw Error(ErrorCode::InvalidArgument, "model has no summarizer");
    nn::NoGradGuard guard;
    const RgbImage sized = resize_bilinear(img, cfg.resolution, cfg.resolution);
    const auto pooled = nn::global_avg_pool(encoder.encode(rgb_batch<T>({&sized})));
    return summarizer->vocab.decode(summarizer->greedy(pooled, CharVocab::level_token(level), max_len));
  }

  /// Parameters in a fixed order: encoder, heads, decoder, discriminator, summarizer.
  nn::NamedParams<T> parameters() const {
    nn::NamedParams<T> ps;
    encoder.collect(ps, "encoder");
    rotation_head.collect(ps, "head.rotation");
    puzzle_head.collect(ps, "head.puzzle");
    categ_head.collect(ps, "head.categ");
    decoder.collect(ps, "generator");
    discriminator.collect(ps, "discriminator");
    if (summarizer) summarizer->collect(ps, "summarizer");
    return ps;
  }

  nn::NamedParams<T> discriminator_parameters() const {
    nn::NamedParams<T> ps;
    discriminator.collect(ps, "discriminator");
    return ps;
  }

  /// Everything the generator-side update touches (all but the discriminator).
  nn::NamedParams<T> generator_side_parameters() const {
    nn::NamedParams<T> ps;
    for (auto& p : parameters())
      if (p.first.rfind("discriminator.", 0) != 0) ps.push_back(p);
    return ps;
  }

  std::size_t parameter_count() const { return nn::parameter_count(parameters()); }
};

}  // namespace pforge
