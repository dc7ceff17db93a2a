#pragma once

#include <chrono>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <iomanip>
#include <numeric>
#include <optional>
#include <ostream>
#include <sstream>
#include <string>
#include <vector>

#include "pretext_forge/checkpoint.hpp"
#include "pretext_forge/codebook.hpp"
#include "pretext_forge/corpus.hpp"
#include "pretext_forge/losses.hpp"
#include "pretext_forge/models.hpp"
#include "pretext_forge/optim.hpp"
#include "pretext_forge/pretext.hpp"

namespace pforge {

enum class Stage { pretext, finetune };

struct TrainConfig {
  int batch_size = 8;
  int pretext_epochs = 3;
  int finetune_epochs = 2;
  double learning_rate = 0.01;
  double finetune_learning_rate = 0.0;  ///< 0 reuses learning_rate
  std::uint64_t seed = 0;
  LossWeights weights;
  std::filesystem::path checkpoint_dir;
  Stage stage = Stage::pretext;
  nn::OptimizerKind optimizer = nn::OptimizerKind::sgd;
  double momentum = 0.0;
  GeneratorObjective generator_objective = GeneratorObjective::non_saturating;
  ModelConfig model;
  std::size_t codebook_size = kPuzzleClassesDefault;
  long max_steps = 0;  ///< per stage; 0 means run every epoch to completion
  int max_summary_len = 300;

  void validate() const {
    if (batch_size < 1) throw Error(ErrorCode::InvalidArgument, "batch_size must be >= 1");
    if (pretext_epochs < 0 || finetune_epochs < 0) throw Error(ErrorCode::InvalidArgument, "epochs must be >= 0");
    if (!(learning_rate > 0)) throw Error(ErrorCode::InvalidArgument, "learning_rate must be positive");
    weights.validate();
    model.validate();
  }

  double stage_learning_rate(Stage s) const {
    return s == Stage::finetune && finetune_learning_rate > 0 ? finetune_learning_rate : learning_rate;
  }
};

struct TrainState {
  std::uint64_t step = 0;
  std::uint64_t epoch = 0;
  std::vector<LossReport> history;  ///< one entry per step
};

// ---------------------------------------------------------------------------
// Batch assembly

struct PretextTensors {
  int n = 0;
  nn::Tensor<float> rotation_images;  ///< [N, 3, R, R]
  std::vector<int> rotation_labels;
  nn::Tensor<float> tiles;  ///< [9N, 3, 64, 64], slot order within each sample
  std::vector<int> puzzle_labels;
  nn::Tensor<float> gray;  ///< [N, 1, R, R]
  nn::Tensor<float> ab;    ///< [N, 2, R, R], normalised
  nn::Tensor<float> category_images;
  std::vector<int> category_labels;
};

inline PretextTensors build_pretext_tensors(const std::vector<PretextSample>& samples) {
  std::vector<const RgbImage*> rot, tiles, cat;
  std::vector<const GrayImage*> gray;
  std::vector<const AbImage*> ab;
  PretextTensors t;
  for (const auto& s : samples) {
    if (const auto* r = std::get_if<RotationSample>(&s.data)) {
      rot.push_back(&r->image);
      t.rotation_labels.push_back(r->label);
    } else if (const auto* j = std::get_if<JigsawSample>(&s.data)) {
      for (const auto& tile : j->tiles) tiles.push_back(&tile);
      t.puzzle_labels.push_back(j->label);
    } else if (const auto* c = std::get_if<ColorizationSample>(&s.data)) {
      gray.push_back(&c->input);
      ab.push_back(&c->target);
    } else if (const auto* k = std::get_if<CategorySample>(&s.data)) {
      cat.push_back(&k->image);
      t.category_labels.push_back(k->label);
    }
  }
  t.n = static_cast<int>(rot.size());
  if (t.n == 0 || t.puzzle_labels.size() != rot.size() || gray.size() != rot.size() || cat.size() != rot.size())
    throw Error(ErrorCode::InvalidArgument, "pretext batch must hold one sample of every kind per record");
  t.rotation_images = rgb_batch<float>(rot);
  t.tiles = rgb_batch<float>(tiles);
  t.gray = gray_batch<float>(gray);
  t.ab = ab_batch<float>(ab);
  t.category_images = rgb_batch<float>(cat);
  return t;
}

/// Decodes every image once so training steps do not touch the filesystem.
inline std::vector<ChartRecord> preload_images(const Corpus& c) {
  std::vector<ChartRecord> out = c.records;
  for (auto& r : out)
    if (!r.image) r.image = load_image(r, c.root);
  return out;
}

// ---------------------------------------------------------------------------
// Pretext stage

/// Loss terms of one forward pass. Terms whose gamma is zero are evaluated without recording a graph,
/// so parameters used only by excluded tasks receive no gradient at all.
struct PretextForward {
  nn::Tensor<float> color, rotation, puzzle, categ, cgan, l1, total;
  nn::Tensor<float> fake_ab;
};

inline PretextForward pretext_losses(const ChartModel<float>& m, const PretextTensors& t, const LossWeights& w,
                                     GeneratorObjective obj, const nn::Tensor<float>* precomputed_fake = nullptr) {
  PretextForward f;
  {
    std::optional<nn::NoGradGuard> off;
    if (w.gamma[1] == 0) off.emplace();
    f.rotation = nn::cross_entropy(m.head_forward(HeadTask::rotation, m.encoder.encode(t.rotation_images)),
                                   t.rotation_labels);
  }
  {
    std::optional<nn::NoGradGuard> off;
    if (w.gamma[2] == 0) off.emplace();
    f.puzzle = nn::cross_entropy(m.head_forward(HeadTask::puzzle, m.encoder.encode(t.tiles)), t.puzzle_labels);
  }
  {
    std::optional<nn::NoGradGuard> off;
    if (w.gamma[3] == 0) off.emplace();
    f.categ = nn::cross_entropy(m.head_forward(HeadTask::categ, m.encoder.encode(t.category_images)), t.category_labels);
  }
  {
    std::optional<nn::NoGradGuard> off;
    if (w.gamma[0] == 0) off.emplace();
    f.fake_ab = precomputed_fake ? *precomputed_fake : m.generate_ab(t.gray);
    f.cgan = generator_adversarial_loss(m.discriminate(t.gray, f.fake_ab), obj);
    f.l1 = nn::l1_loss(f.fake_ab, t.ab);
    f.color = color_loss(f.cgan, f.l1, w);
  }
  f.total = total_loss(f.color, f.rotation, f.puzzle, f.categ, w);
  return f;
}

inline LossReport make_report(const PretextForward& f, int n) {
  LossReport r;
  r.color = f.color.item();
  r.rotation = f.rotation.item();
  r.puzzle = f.puzzle.item();
  r.categ = f.categ.item();
  r.cgan = f.cgan.item();
  r.l1 = f.l1.item();
  r.total = f.total.item();
  r.batch_size = n;
  return r;
}

inline bool report_finite(const LossReport& r) {
  for (double v : {r.color, r.rotation, r.puzzle, r.categ, r.cgan, r.l1, r.total})
    if (!std::isfinite(v)) return false;
  return true;
}

class NonFiniteLoss : public Error {
 public:
  NonFiniteLoss(std::uint64_t step, const LossReport& r)
      : Error(ErrorCode::NonFiniteLoss, "step " + std::to_string(step) + ": " + format_loss_fields(r)), report(r) {}
  LossReport report;
};

inline std::string format_log_line(std::uint64_t step, std::uint64_t epoch, const LossReport& r, double wall_ms) {
  std::ostringstream out;
  out << "step=" << step << " epoch=" << epoch << " " << format_loss_fields(r) << " wall_ms=" << std::fixed
      << std::setprecision(1) << wall_ms;
  return out.str();
}

inline std::uint64_t step_seed(std::uint64_t seed, Stage stage, std::uint64_t step) {
  return mix_seed(mix_seed(seed, stage == Stage::pretext ? 0x50524554ULL : 0x46494E45ULL), step);
}

inline std::vector<std::size_t> epoch_order(std::size_t n, std::uint64_t seed, Stage stage, std::uint64_t epoch) {
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  Rng rng(mix_seed(mix_seed(seed, stage == Stage::pretext ? 0x4F524450ULL : 0x4F524446ULL), epoch));
  rng.shuffle(order);
  return order;
}

/// One optimisation step: discriminator update on detached fakes, then one generator-side update
/// of encoder, heads and decoder against the refreshed discriminator.
class PretextStepper {
 public:
  PretextStepper(ChartModel<float>& m, const TrainConfig& cfg)
      : model_(m),
        cfg_(cfg),
        opt_d_(m.discriminator_parameters(), cfg.optimizer, cfg.learning_rate, cfg.momentum),
        opt_g_(m.generator_side_parameters(), cfg.optimizer, cfg.learning_rate, cfg.momentum) {}

  LossReport step(const PretextTensors& t, std::uint64_t step_index) {
    const auto& w = cfg_.weights;
    nn::Tensor<float> fake;
    if (w.gamma[0] > 0) {
      fake = model_.generate_ab(t.gray);
      opt_d_.zero_grad();
      auto d_loss = discriminator_loss(model_.discriminate(t.gray, t.ab), model_.discriminate(t.gray, fake.detach()));
      d_loss.backward();
      opt_d_.step();
    }
    PretextForward f = pretext_losses(model_, t, w, cfg_.generator_objective, fake.defined() ? &fake : nullptr);
    LossReport r = make_report(f, t.n);
    if (!report_finite(r)) throw NonFiniteLoss(step_index, r);
    opt_g_.zero_grad();
    opt_d_.zero_grad();
    f.total.backward();
    opt_g_.step();
    return r;
  }

 private:
  ChartModel<float>& model_;
  const TrainConfig& cfg_;
  nn::Optimizer<float> opt_d_, opt_g_;
};

struct TrainResult {
  ChartModel<float> model;
  TrainState state;
};

inline nlohmann::json config_provenance(const TrainConfig& cfg) {
  return {{"batch_size", cfg.batch_size},
          {"learning_rate", cfg.learning_rate},
          {"finetune_learning_rate", cfg.finetune_learning_rate},
          {"optimizer", nn::to_string(cfg.optimizer)},
          {"momentum", cfg.momentum},
          {"alpha", cfg.weights.alpha},
          {"gamma", cfg.weights.gamma},
          {"seed", cfg.seed},
          {"codebook_size", cfg.codebook_size}};
}

/// Multi-task encoder pretraining. Writes `pretext_epoch<k>.ckpt` into checkpoint_dir after each epoch.
inline TrainResult pretrain(const Corpus& corpus, const TrainConfig& cfg, const PermutationCodebook& cb,
                            std::ostream* log = nullptr) {
  cfg.validate();
  if (corpus.records.empty()) throw Error(ErrorCode::EmptyCorpus, "pretraining needs at least one record");
  if (cb.size() != cfg.codebook_size)
    throw Error(ErrorCode::InvalidArgument, "codebook size differs from configured puzzle classes");
  const auto records = preload_images(corpus);
  TrainResult res{ChartModel<float>(cfg.model, cfg.seed, cb.size()), {}};
  PretextStepper stepper(res.model, cfg);
  BatchOptions bopts;
  bopts.resolution = cfg.model.resolution;

  for (int e = 0; e < cfg.pretext_epochs; ++e) {
    const auto order = epoch_order(records.size(), cfg.seed, Stage::pretext, e);
    for (std::size_t b = 0; b < order.size(); b += cfg.batch_size) {
      if (cfg.max_steps > 0 && res.state.step >= static_cast<std::uint64_t>(cfg.max_steps)) break;
      const auto t0 = std::chrono::steady_clock::now();
      std::vector<ChartRecord> batch;
      for (std::size_t i = b; i < std::min(order.size(), b + cfg.batch_size); ++i) batch.push_back(records[order[i]]);
      const auto samples = make_batch(batch, corpus.root, cb, step_seed(cfg.seed, Stage::pretext, res.state.step), bopts);
      const LossReport r = stepper.step(build_pretext_tensors(samples), res.state.step);
      res.state.history.push_back(r);
      ++res.state.step;
      if (log) {
        const double ms = std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0).count();
        *log << format_log_line(res.state.step - 1, e, r, ms) << "\n" << std::flush;
      }
    }
    res.state.epoch = e + 1;
    if (!cfg.checkpoint_dir.empty())
      save_checkpoint(cfg.checkpoint_dir / ("pretext_epoch" + std::to_string(e + 1) + ".ckpt"), res.model,
                      {"pretext", res.state.step, res.state.epoch, config_provenance(cfg)});
  }
  return res;
}

// ---------------------------------------------------------------------------
// Summarization stage

struct SummaryExample {
  int image_row = 0;
  SemanticLevel level = SemanticLevel::L1;
  std::vector<int> tokens;
};

/// One teacher-forced example per (record, level) with non-empty text at that level.
inline std::vector<SummaryExample> summary_examples(const std::vector<const ChartRecord*>& batch, const CharVocab& v) {
  std::vector<SummaryExample> out;
  for (std::size_t i = 0; i < batch.size(); ++i)
    for (auto level : {SemanticLevel::L1, SemanticLevel::L2L3}) {
      const std::string text = level_text(batch[i]->summary, level);
      if (!text.empty()) out.push_back({static_cast<int>(i), level, v.encode(text)});
    }
  return out;
}

struct SummaryForward {
  nn::Tensor<float> loss;
  std::size_t tokens = 0;
  std::size_t correct = 0;
};

/// Teacher-forced token cross-entropy over every (record, level) sequence of a batch of records.
inline SummaryForward summary_forward(const ChartModel<float>& m, const std::vector<const ChartRecord*>& batch) {
  std::vector<const RgbImage*> imgs;
  std::vector<RgbImage> sized;
  sized.reserve(batch.size());
  for (const auto* r : batch) sized.push_back(resize_bilinear(*r->image, m.cfg.resolution, m.cfg.resolution));
  for (const auto& s : sized) imgs.push_back(&s);
  const auto ex = summary_examples(batch, m.summarizer->vocab);
  SummaryForward out;
  if (ex.empty()) return out;
  const auto pooled = nn::global_avg_pool(m.encoder.encode(rgb_batch<float>(imgs)));
  std::vector<int> rows, controls;
  std::vector<std::vector<int>> seqs;
  for (const auto& e : ex) {
    rows.push_back(e.image_row);
    controls.push_back(CharVocab::level_token(e.level));
    seqs.push_back(e.tokens);
  }
  const auto sb = m.summarizer->forward(pooled, rows, seqs, controls);
  out.loss = nn::cross_entropy(sb.logits, sb.targets, -1);
  const auto pred = nn::argmax_rows(sb.logits);
  for (std::size_t i = 0; i < pred.size(); ++i) {
    if (sb.targets[i] < 0) continue;
    ++out.tokens;
    out.correct += pred[i] == sb.targets[i];
  }
  return out;
}

inline CharVocab corpus_vocab(const std::vector<ChartRecord>& records) {
  std::vector<std::string> texts;
  for (const auto& r : records) texts.push_back(r.summary.text);
  return CharVocab::from_texts(texts);
}

inline ChartModel<float> clone_model(const ChartModel<float>& m) {
  return deserialize_checkpoint(serialize_checkpoint(m, {})).model;
}

struct FinetuneResult {
  ChartModel<float> model;
  TrainState state;
  std::vector<double> summary_loss;  ///< per step
};

/// Full-model summarization training from a pretext checkpoint. `vocab_source` fixes the character set.
inline FinetuneResult finetune(const Corpus& corpus, const ChartModel<float>& pretrained, const TrainConfig& cfg,
                               const std::vector<ChartRecord>& vocab_source, std::ostream* log = nullptr) {
  cfg.validate();
  if (corpus.records.empty()) throw Error(ErrorCode::EmptyCorpus, "finetuning needs at least one record");
  const auto records = preload_images(corpus);
  FinetuneResult res{clone_model(pretrained), {}, {}};
  res.model.attach_summarizer(corpus_vocab(vocab_source));

  nn::NamedParams<float> params;
  res.model.encoder.collect(params, "encoder");
  res.model.summarizer->collect(params, "summarizer");
  nn::Optimizer<float> opt(params, cfg.optimizer, cfg.stage_learning_rate(Stage::finetune), cfg.momentum);

  for (int e = 0; e < cfg.finetune_epochs; ++e) {
    const auto order = epoch_order(records.size(), cfg.seed, Stage::finetune, e);
    for (std::size_t b = 0; b < order.size(); b += cfg.batch_size) {
      if (cfg.max_steps > 0 && res.state.step >= static_cast<std::uint64_t>(cfg.max_steps)) break;
      const auto t0 = std::chrono::steady_clock::now();
      std::vector<const ChartRecord*> batch;
      for (std::size_t i = b; i < std::min(order.size(), b + cfg.batch_size); ++i) batch.push_back(&records[order[i]]);
      auto f = summary_forward(res.model, batch);
      if (!f.loss.defined()) continue;
      const double loss = f.loss.item();
      if (!std::isfinite(loss)) {
        LossReport r;
        r.total = loss;
        r.batch_size = static_cast<int>(batch.size());
        throw NonFiniteLoss(res.state.step, r);
      }
      opt.zero_grad();
      f.loss.backward();
      opt.step();
      res.summary_loss.push_back(loss);
      ++res.state.step;
      if (log) {
        const double ms = std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0).count();
        std::ostringstream line;
        line << "step=" << res.state.step - 1 << " epoch=" << e << " summary_ce=" << std::setprecision(9) << loss
             << " tokens=" << f.tokens << " token_acc="
             << (f.tokens ? static_cast<double>(f.correct) / f.tokens : 0.0) << " wall_ms=" << std::fixed
             << std::setprecision(1) << ms;
        *log << line.str() << "\n" << std::flush;
      }
    }
    res.state.epoch = e + 1;
    if (!cfg.checkpoint_dir.empty())
      save_checkpoint(cfg.checkpoint_dir / ("finetune_epoch" + std::to_string(e + 1) + ".ckpt"), res.model,
                      {"finetune", res.state.step, res.state.epoch, config_provenance(cfg)});
  }
  return res;
}

/// Teacher-forced next-token accuracy over every (record, level) sequence.
inline double token_accuracy(const ChartModel<float>& m, const Corpus& corpus, int batch_size = 8) {
  nn::NoGradGuard guard;
  const auto records = preload_images(corpus);
  std::size_t tokens = 0, correct = 0;
  for (std::size_t b = 0; b < records.size(); b += batch_size) {
    std::vector<const ChartRecord*> batch;
    for (std::size_t i = b; i < std::min(records.size(), b + batch_size); ++i) batch.push_back(&records[i]);
    const auto f = summary_forward(m, batch);
    tokens += f.tokens;
    correct += f.correct;
  }
  if (tokens == 0) throw Error(ErrorCode::EmptyInput, "no summary tokens to score");
  return static_cast<double>(correct) / static_cast<double>(tokens);
}

}  // namespace pforge
