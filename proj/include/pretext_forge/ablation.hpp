#pragma once

#include <algorithm>
#include <array>
#include <cstdio>
#include <ostream>
#include <sstream>
#include <string>
#include <vector>

#include "pretext_forge/evaluation.hpp"
#include "pretext_forge/trainer.hpp"

namespace pforge {

enum class Variant { self_supervised, supervised, combined };

inline constexpr std::array<Variant, 3> kVariants{Variant::self_supervised, Variant::supervised, Variant::combined};

inline std::string_view to_string(Variant v) {
  return v == Variant::self_supervised ? "self_supervised" : v == Variant::supervised ? "supervised" : "combined";
}

/// Self-supervised drops the category term; supervised keeps only it.
inline LossWeights variant_weights(Variant v, const LossWeights& base) {
  LossWeights w = base;
  if (v == Variant::self_supervised) w.gamma[3] = 0;
  if (v == Variant::supervised) w.gamma[0] = w.gamma[1] = w.gamma[2] = 0;
  return w;
}

struct AblationOptions {
  std::vector<std::uint64_t> seeds{1, 2, 3};
  int eval_draws = 4;  ///< pretext sample draws per held-out record
};

struct VariantRun {
  Variant variant = Variant::combined;
  std::uint64_t seed = 0;
  TaskAccuracy accuracy;        ///< held-out pretext accuracy per task
  double pretext_accuracy = 0;  ///< mean over rotation, puzzle, categ
  double token_accuracy = 0;    ///< held-out teacher-forced next-token accuracy after fine-tuning
  std::vector<LossReport> pretext_history;
};

struct MetricSummary {
  double mean = 0, min = 0, max = 0;
  double range() const { return max - min; }
};

inline MetricSummary summarize_metric(const std::vector<double>& xs) {
  if (xs.empty()) throw Error(ErrorCode::EmptyInput, "no values to summarize");
  MetricSummary s{0, xs[0], xs[0]};
  for (double x : xs) {
    s.mean += x;
    s.min = std::min(s.min, x);
    s.max = std::max(s.max, x);
  }
  s.mean /= static_cast<double>(xs.size());
  return s;
}

struct AblationReport {
  std::vector<VariantRun> runs;

  std::vector<const VariantRun*> of(Variant v) const {
    std::vector<const VariantRun*> out;
    for (const auto& r : runs)
      if (r.variant == v) out.push_back(&r);
    return out;
  }

  MetricSummary pretext(Variant v) const {
    std::vector<double> xs;
    for (const auto* r : of(v)) xs.push_back(r->pretext_accuracy);
    return summarize_metric(xs);
  }

  MetricSummary tokens(Variant v) const {
    std::vector<double> xs;
    for (const auto* r : of(v)) xs.push_back(r->token_accuracy);
    return summarize_metric(xs);
  }

  /// Seeds in which `v` reaches the supervised-only mean on both metrics.
  int seeds_at_or_above_supervised(Variant v) const {
    const double p = pretext(Variant::supervised).mean, t = tokens(Variant::supervised).mean;
    int n = 0;
    for (const auto* r : of(v)) n += r->pretext_accuracy >= p && r->token_accuracy >= t;
    return n;
  }
};

inline std::string format_ablation(const AblationReport& rep) {
  std::ostringstream out;
  char line[200];
  std::snprintf(line, sizeof line, "%-16s %-6s %-9s %-9s %-9s %-9s %-9s\n", "variant", "seed", "rotation", "puzzle",
                "categ", "pretext", "tokens");
  out << line;
  for (const auto& r : rep.runs) {
    auto acc = [&](const char* k) { return r.accuracy.count(k) ? r.accuracy.at(k) : 0.0; };
    std::snprintf(line, sizeof line, "%-16s %-6llu %-9.4f %-9.4f %-9.4f %-9.4f %-9.4f\n",
                  std::string(to_string(r.variant)).c_str(), static_cast<unsigned long long>(r.seed), acc("rotation"),
                  acc("puzzle"), acc("categ"), r.pretext_accuracy, r.token_accuracy);
    out << line;
  }
  out << "\nmean +/- half-range over seeds\n";
  for (Variant v : kVariants) {
    if (rep.of(v).empty()) continue;
    const auto p = rep.pretext(v), t = rep.tokens(v);
    std::snprintf(line, sizeof line, "%-16s pretext %.4f +/- %.4f  tokens %.4f +/- %.4f\n",
                  std::string(to_string(v)).c_str(), p.mean, p.range() / 2, t.mean, t.range() / 2);
    out << line;
  }
  return out.str();
}

/// Held-out pretext samples: several independent draws per record.
inline std::vector<PretextSample> heldout_samples(const std::vector<ChartRecord>& records, const std::filesystem::path& root,
                                                  const PermutationCodebook& cb, std::uint64_t seed, int draws,
                                                  const BatchOptions& opts) {
  std::vector<PretextSample> out;
  for (int d = 0; d < draws; ++d) {
    auto b = make_batch(records, root, cb, mix_seed(seed, 0x4556414CULL + d), opts);
    out.insert(out.end(), std::make_move_iterator(b.begin()), std::make_move_iterator(b.end()));
  }
  return out;
}

/// Pretrains each variant from the same initialisation, fine-tunes all of them identically on the
/// training split and scores them on the test split. Checkpoints land in cfg.checkpoint_dir when set.
inline AblationReport run_ablation(const Corpus& corpus, const TrainConfig& cfg, const PermutationCodebook& cb,
                                   const AblationOptions& opts = {}, std::ostream* log = nullptr) {
  cfg.validate();
  Corpus train{corpus.root, records_in(corpus, Split::train)};
  Corpus test{corpus.root, records_in(corpus, Split::test)};
  if (train.records.empty() || test.records.empty())
    throw Error(ErrorCode::EmptyCorpus, "ablation needs non-empty train and test splits");
  train.records = preload_images(train);
  test.records = preload_images(test);
  BatchOptions bopts;
  bopts.resolution = cfg.model.resolution;

  AblationReport rep;
  for (std::uint64_t seed : opts.seeds) {
    const auto eval_samples = heldout_samples(test.records, test.root, cb, seed, opts.eval_draws, bopts);
    for (Variant v : kVariants) {
      TrainConfig c = cfg;
      c.seed = seed;
      c.weights = variant_weights(v, cfg.weights);
      c.checkpoint_dir.clear();
      if (log) *log << "# ablation variant=" << to_string(v) << " seed=" << seed << "\n";
      auto pre = pretrain(train, c, cb, log);
      c.max_steps = 0;
      auto fin = finetune(train, pre.model, c, corpus.records, log);

      VariantRun run;
      run.variant = v;
      run.seed = seed;
      run.accuracy = pretext_accuracy(pre.model, eval_samples);
      double sum = 0;
      for (auto task : kAccuracyTasks) sum += run.accuracy.at(std::string(task));
      run.pretext_accuracy = sum / kAccuracyTasks.size();
      run.token_accuracy = token_accuracy(fin.model, test);
      run.pretext_history = std::move(pre.state.history);
      if (!cfg.checkpoint_dir.empty()) {
        const std::string stem = std::string(to_string(v)) + "_seed" + std::to_string(seed);
        save_checkpoint(cfg.checkpoint_dir / (stem + "_pretext.ckpt"), pre.model,
                        {"pretext", pre.state.step, pre.state.epoch, config_provenance(c)});
        save_checkpoint(cfg.checkpoint_dir / (stem + "_finetune.ckpt"), fin.model,
                        {"finetune", fin.state.step, fin.state.epoch, config_provenance(c)});
      }
      if (log)
        *log << "# result variant=" << to_string(v) << " seed=" << seed << " pretext=" << run.pretext_accuracy
             << " tokens=" << run.token_accuracy << "\n"
             << std::flush;
      rep.runs.push_back(std::move(run));
    }
  }
  return rep;
}

}  // namespace pforge
