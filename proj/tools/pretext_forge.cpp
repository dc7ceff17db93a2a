#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"
#include "pretext_forge/ablation.hpp"
#include "pretext_forge/codebook.hpp"
#include "pretext_forge/config.hpp"
#include "pretext_forge/corpus.hpp"
#include "pretext_forge/evaluation.hpp"
#include "pretext_forge/png_io.hpp"
#include "pretext_forge/trainer.hpp"

namespace fs = std::filesystem;
using namespace pforge;

namespace {

enum Exit { kOk = 0, kUsage = 1, kData = 2, kRuntime = 3 };

struct Options {
  std::string corpus, config, out, checkpoint, level_mode = "conditioned";
  std::uint64_t seed = 0;
  bool seed_set = false;
  std::size_t count = 0;
  int epochs = -1;
};

fs::path cache_dir() {
  const char* env = std::getenv("PRETEXT_FORGE_CACHE");
  return env && *env ? fs::path(env) : fs::path();
}

PermutationCodebook codebook(std::size_t count) { return cached_codebook(count, cache_dir()); }

Corpus open_corpus(const std::string& path) {
  if (path.empty()) throw Error(ErrorCode::InvalidArgument, "--corpus is required");
  const fs::path index = resolve_index_path(path);
  return load_corpus(index, load_vocabulary(index.parent_path() / kVocabularyFileName));
}

TrainConfig make_config(const Options& o) {
  TrainConfig cfg = o.config.empty() ? TrainConfig{} : load_config(o.config);
  if (o.seed_set) cfg.seed = o.seed;
  return cfg;
}

/// The split a stage consumes, or every record when the corpus has no split assignment.
Corpus subset(const Corpus& c, Split s) {
  const bool assigned = std::any_of(c.records.begin(), c.records.end(), [](const auto& r) { return r.split != Split::unassigned; });
  return assigned ? Corpus{c.root, records_in(c, s)} : c;
}

void write_kv(std::ostream& out, const std::string& k, const std::string& v) { out << k << "=" << v << "\n"; }

// ---------------------------------------------------------------------------

int cmd_build_codebook(const Options& o) {
  const auto cb = build_codebook(o.count ? o.count : kPuzzleClassesDefault);
  const std::string text = format_codebook(cb);
  if (o.out.empty()) std::cout << text;
  else write_file_atomic(o.out, text);
  std::cerr << "codebook count=" << cb.size() << " d_min=" << cb.min_distance << "\n";
  return kOk;
}

int cmd_prepare(const Options& o) {
  if (o.out.empty()) throw Error(ErrorCode::InvalidArgument, "--out is required");
  const Corpus c = open_corpus(o.corpus);
  std::vector<ChartRecord> kept;
  std::string rejected;
  for (const auto& r : c.records) {
    const auto v = accept_record(r);
    if (v.accepted) {
      kept.push_back(r);
      continue;
    }
    rejected += r.id + "\t";
    for (std::size_t i = 0; i < v.reasons.size(); ++i) rejected += (i ? "," : "") + std::string(to_string(v.reasons[i]));
    rejected += "\n";
  }
  if (kept.empty()) throw Error(ErrorCode::EmptyCorpus, "every record was rejected by the filter");
  std::vector<std::string> ids;
  for (const auto& r : kept) ids.push_back(r.id);
  const auto assignment = split_corpus(ids, o.seed);
  const fs::path out = o.out;
  for (auto& r : kept) {
    r.split = assignment.at(r.id);
    const fs::path src = c.root / r.image_path, dst = out / r.image_path;
    if (fs::weakly_canonical(src) != fs::weakly_canonical(dst)) {
      if (dst.has_parent_path()) fs::create_directories(dst.parent_path());
      write_file_atomic(dst, read_text_file(src));
    }
  }
  write_file_atomic(out / kVocabularyFileName, read_text_file(c.root / kVocabularyFileName));
  write_file_atomic(out / "rejected.tsv", rejected);
  write_file_atomic(out / kIndexFileName, format_index(kept));
  const auto sizes = split_sizes(kept.size());
  std::cout << "accepted=" << kept.size() << " rejected=" << c.records.size() - kept.size() << " train=" << sizes.train
            << " val=" << sizes.val << " test=" << sizes.test << "\n";
  return kOk;
}

int cmd_stats(const Options& o) {
  const Corpus c = open_corpus(o.corpus);
  const auto s = corpus_stats(c.records);
  std::ostringstream out;
  write_kv(out, "record_count", std::to_string(s.record_count));
  write_kv(out, "sentence_count", std::to_string(s.sentence_count));
  write_kv(out, "avg_sentence_count", exact_double(s.avg_sentence_count));
  write_kv(out, "avg_word_count", exact_double(s.avg_word_count));
  write_kv(out, "l1_ratio", exact_double(s.l1_ratio));
  write_kv(out, "l2l3_ratio", exact_double(s.l2l3_ratio));
  std::size_t accepted = 0;
  std::string rejects;
  for (const auto& r : c.records) {
    const auto v = accept_record(r);
    accepted += v.accepted;
    if (v.accepted) continue;
    rejects += "reject " + r.id + " ";
    for (std::size_t i = 0; i < v.reasons.size(); ++i) rejects += (i ? "," : "") + std::string(to_string(v.reasons[i]));
    rejects += "\n";
  }
  write_kv(out, "accepted", std::to_string(accepted));
  write_kv(out, "rejected", std::to_string(c.records.size() - accepted));
  out << rejects;
  if (o.out.empty()) std::cout << out.str();
  else write_file_atomic(o.out, out.str());
  return kOk;
}

int cmd_split(const Options& o) {
  std::vector<std::string> ids;
  if (!o.corpus.empty()) {
    for (const auto& r : open_corpus(o.corpus).records) ids.push_back(r.id);
  } else if (o.count > 0) {
    char buf[32];
    for (std::size_t i = 0; i < o.count; ++i) {
      std::snprintf(buf, sizeof buf, "id-%06zu", i);
      ids.push_back(buf);
    }
  } else {
    throw Error(ErrorCode::InvalidArgument, "split needs --corpus or --count");
  }
  const auto assignment = split_corpus(ids, o.seed);
  std::string table;
  std::size_t n[3] = {0, 0, 0};
  for (const auto& [id, s] : assignment) {
    table += id + "\t" + std::string(to_string(s)) + "\n";
    ++n[static_cast<int>(s)];
  }
  if (!o.out.empty()) write_file_atomic(o.out, table);
  std::cout << "train=" << n[0] << " val=" << n[1] << " test=" << n[2] << "\n";
  return kOk;
}

int cmd_gen_pretext(const Options& o) {
  if (o.out.empty()) throw Error(ErrorCode::InvalidArgument, "--out is required");
  const Corpus c = open_corpus(o.corpus);
  const TrainConfig cfg = make_config(o);
  const std::size_t n = o.count ? std::min(o.count, c.records.size()) : c.records.size();
  std::vector<ChartRecord> recs(c.records.begin(), c.records.begin() + static_cast<std::ptrdiff_t>(n));
  const auto cb = codebook(cfg.codebook_size);
  BatchOptions bopts;
  bopts.resolution = cfg.model.resolution;
  const auto samples = make_batch(recs, c.root, cb, o.seed, bopts);
  const fs::path out = o.out;
  std::string manifest;
  for (const auto& s : samples) {
    nlohmann::ordered_json j;
    j["source_id"] = s.source_id;
    j["task"] = std::string(to_string(s.kind()));
    j["seed"] = s.seed;
    const std::string stem = s.source_id + "_" + std::string(to_string(s.kind()));
    if (const auto* r = std::get_if<RotationSample>(&s.data)) {
      write_png(out / (stem + ".png"), r->image);
      j["label"] = r->label;
      j["files"] = {stem + ".png"};
    } else if (const auto* p = std::get_if<JigsawSample>(&s.data)) {
      j["label"] = p->label;
      j["permutation"] = std::vector<int>(cb[p->label].begin(), cb[p->label].end());
      auto files = nlohmann::json::array();
      for (int t = 0; t < kJigsawGrid; ++t) {
        const std::string f = stem + "_slot" + std::to_string(t) + ".png";
        write_png(out / f, p->tiles[t]);
        files.push_back(f);
      }
      j["files"] = files;
    } else if (const auto* col = std::get_if<ColorizationSample>(&s.data)) {
      RgbImage gray(col->input.width, col->input.height);
      for (std::size_t i = 0; i < col->input.pixels.size(); ++i)
        for (int ch = 0; ch < 3; ++ch)
          gray.pixels[i * 3 + ch] = static_cast<std::uint8_t>(std::lround(std::clamp(col->input.pixels[i], 0.0, 1.0) * 255));
      AbImage ab = col->target;
      for (auto& v : ab.pixels) v *= color::kAbScale;
      const RgbImage chroma = color::lab_to_srgb(std::vector<double>(col->input.pixels.size(), 60.0), ab);
      write_png(out / (stem + "_gray.png"), gray);
      write_png(out / (stem + "_ab.png"), chroma);
      j["files"] = {stem + "_gray.png", stem + "_ab.png"};
    } else if (const auto* k = std::get_if<CategorySample>(&s.data)) {
      write_png(out / (stem + ".png"), k->image);
      j["label"] = k->label;
      j["files"] = {stem + ".png"};
    }
    manifest += j.dump() + "\n";
  }
  write_file_atomic(out / "samples.jsonl", manifest);
  std::cout << "samples=" << samples.size() << " records=" << n << "\n";
  return kOk;
}

int cmd_pretrain(const Options& o) {
  TrainConfig cfg = make_config(o);
  if (o.epochs >= 0) cfg.pretext_epochs = o.epochs;
  cfg.stage = Stage::pretext;
  if (!o.out.empty()) cfg.checkpoint_dir = o.out;
  if (cfg.checkpoint_dir.empty()) throw Error(ErrorCode::InvalidArgument, "--out (or checkpoint_dir) is required");
  const Corpus train = subset(open_corpus(o.corpus), Split::train);
  const auto cb = codebook(cfg.codebook_size);
  fs::create_directories(cfg.checkpoint_dir);
  std::ofstream log(cfg.checkpoint_dir / "pretrain.log", std::ios::trunc);
  auto res = pretrain(train, cfg, cb, &log);
  const auto final_path = cfg.checkpoint_dir / "pretext_final.ckpt";
  save_checkpoint(final_path, res.model, {"pretext", res.state.step, res.state.epoch, config_provenance(cfg)});
  std::cout << "steps=" << res.state.step << " checkpoint=" << final_path.generic_string() << "\n";
  return kOk;
}

int cmd_finetune(const Options& o) {
  if (o.checkpoint.empty()) throw Error(ErrorCode::InvalidArgument, "--checkpoint is required");
  TrainConfig cfg = make_config(o);
  if (o.epochs >= 0) cfg.finetune_epochs = o.epochs;
  cfg.stage = Stage::finetune;
  if (!o.out.empty()) cfg.checkpoint_dir = o.out;
  if (cfg.checkpoint_dir.empty()) throw Error(ErrorCode::InvalidArgument, "--out (or checkpoint_dir) is required");
  const Corpus all = open_corpus(o.corpus);
  const Corpus train = subset(all, Split::train);
  const auto loaded = load_checkpoint(o.checkpoint);
  fs::create_directories(cfg.checkpoint_dir);
  std::ofstream log(cfg.checkpoint_dir / "finetune.log", std::ios::trunc);
  auto res = finetune(train, loaded.model, cfg, all.records, &log);
  const auto final_path = cfg.checkpoint_dir / "finetune_final.ckpt";
  save_checkpoint(final_path, res.model, {"finetune", res.state.step, res.state.epoch, config_provenance(cfg)});
  std::cout << "steps=" << res.state.step << " checkpoint=" << final_path.generic_string() << "\n";
  return kOk;
}

int cmd_evaluate(const Options& o) {
  if (o.checkpoint.empty()) throw Error(ErrorCode::InvalidArgument, "--checkpoint is required");
  if (o.out.empty()) throw Error(ErrorCode::InvalidArgument, "--out is required");
  const TrainConfig cfg = make_config(o);
  const LevelMode mode = parse_level_mode(o.level_mode);
  const Corpus all = open_corpus(o.corpus);
  Corpus test = subset(all, Split::test);
  if (test.records.empty()) throw Error(ErrorCode::EmptyCorpus, "no test records to evaluate");
  test.records = preload_images(test);
  const auto loaded = load_checkpoint(o.checkpoint);
  const auto& model = loaded.model;
  if (!model.summarizer) throw Error(ErrorCode::CheckpointFormat, "checkpoint has no summarizer; run finetune first");

  const auto scores = level_split_eval(model_generator(model, test.root, cfg.max_summary_len), test.records, mode);
  const auto cb = codebook(static_cast<std::size_t>(model.puzzle_head.classes));
  BatchOptions bopts;
  bopts.resolution = model.cfg.resolution;
  const auto samples = make_batch(test.records, test.root, cb, o.seed, bopts);

  EvalReport::Fields f;
  f.bleu_l1 = scores.bleu_l1;
  f.bleu_l2l3 = scores.bleu_l2l3;
  f.pretext_accuracy = pretext_accuracy(model, samples);
  f.sample_count = test.records.size();
  f.checkpoint_id = file_digest(o.checkpoint);
  f.corpus_id = file_digest(resolve_index_path(o.corpus));
  f.config_hash = config_hash(cfg);
  f.level_mode = std::string(to_string(mode));
  const EvalReport report(f);
  emit_report(report, o.out);

  std::string outputs;
  for (const auto& [id, hyp] : scores.outputs)
    outputs += nlohmann::ordered_json{{"id", id}, {"L1", hyp[0]}, {"L2L3", hyp[1]}}.dump() + "\n";
  write_file_atomic(o.out + ".outputs.jsonl", outputs);
  std::cout << format_report_table(report);
  return kOk;
}

int cmd_ablate(const Options& o) {
  TrainConfig cfg = make_config(o);
  if (o.epochs >= 0) cfg.pretext_epochs = cfg.finetune_epochs = o.epochs;
  if (o.out.empty()) throw Error(ErrorCode::InvalidArgument, "--out is required");
  cfg.checkpoint_dir = o.out;
  const Corpus c = open_corpus(o.corpus);
  const auto cb = codebook(cfg.codebook_size);
  AblationOptions opts;
  opts.seeds = {cfg.seed, cfg.seed + 1, cfg.seed + 2};
  fs::create_directories(o.out);
  std::ofstream log(fs::path(o.out) / "ablation.log", std::ios::trunc);
  const auto rep = run_ablation(c, cfg, cb, opts, &log);
  const std::string text = format_ablation(rep);
  write_file_atomic(fs::path(o.out) / "ablation.txt", text);
  std::cout << text;
  return kOk;
}

int report_error(const std::string& code, const std::string& msg, int exit_code) {
  std::cerr << "error: " << code << ": " << msg << "\n";
  return exit_code;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"pretext-forge: multi-pretext chart encoder pretraining toolkit"};
  app.require_subcommand(1);
  Options o;

  auto add_seed = [&](CLI::App* c) {
    c->add_option_function<std::uint64_t>("--seed", [&](std::uint64_t s) { o.seed = s, o.seed_set = true; },
                                          "Seed for every random choice (default 0)");
  };
  auto add_corpus = [&](CLI::App* c, bool required) {
    auto* opt = c->add_option("--corpus", o.corpus, "Corpus directory or index.jsonl (vocabulary.txt alongside)");
    if (required) opt->required();
  };
  auto add_config = [&](CLI::App* c) { c->add_option("--config", o.config, "Flat key=value training config file"); };

  auto* build = app.add_subcommand("build-codebook", "Build the jigsaw permutation codebook");
  build->add_option("--count", o.count, "Number of permutations (default 100)");
  build->add_option("--out", o.out, "Output file (default: standard output)");

  auto* prepare = app.add_subcommand("prepare", "Filter records and assign train/val/test splits");
  add_corpus(prepare, true);
  add_seed(prepare);
  prepare->add_option("--out", o.out, "Output corpus directory")->required();

  auto* stats = app.add_subcommand("stats", "Corpus statistics and filter verdicts");
  add_corpus(stats, true);
  stats->add_option("--out", o.out, "Write the statistics to a file instead of standard output");

  auto* split = app.add_subcommand("split", "Deterministic 80/10/10 split of record ids");
  add_corpus(split, false);
  add_seed(split);
  split->add_option("--count", o.count, "Split this many synthetic ids instead of a corpus");
  split->add_option("--out", o.out, "Write the id/split table to a file");

  auto* gen = app.add_subcommand("gen-pretext", "Write pretext samples as images plus a label manifest");
  add_corpus(gen, true);
  add_config(gen);
  add_seed(gen);
  gen->add_option("--count", o.count, "Number of records to use (default: all)");
  gen->add_option("--out", o.out, "Output directory")->required();

  auto* pre = app.add_subcommand("pretrain", "Multi-pretext encoder pretraining");
  add_corpus(pre, true);
  add_config(pre);
  add_seed(pre);
  pre->add_option("--epochs", o.epochs, "Override pretext_epochs");
  pre->add_option("--out", o.out, "Checkpoint and log directory");

  auto* fin = app.add_subcommand("finetune", "Summarization fine-tuning from a pretext checkpoint");
  add_corpus(fin, true);
  add_config(fin);
  add_seed(fin);
  fin->add_option("--checkpoint", o.checkpoint, "Pretext checkpoint to start from")->required();
  fin->add_option("--epochs", o.epochs, "Override finetune_epochs");
  fin->add_option("--out", o.out, "Checkpoint and log directory");

  auto* eval = app.add_subcommand("evaluate", "BLEU by semantic level and pretext accuracy on the test split");
  add_corpus(eval, true);
  add_config(eval);
  add_seed(eval);
  eval->add_option("--checkpoint", o.checkpoint, "Fine-tuned checkpoint")->required();
  eval->add_option("--level-mode", o.level_mode, "conditioned (level token) or filtered (one summary)")
      ->check(CLI::IsMember({"conditioned", "filtered"}));
  eval->add_option("--out", o.out, "Report prefix; writes <prefix>.txt and <prefix>.records")->required();

  auto* abl = app.add_subcommand("ablate", "Self-supervised vs supervised vs combined pretraining over three seeds");
  add_corpus(abl, true);
  add_config(abl);
  add_seed(abl);
  abl->add_option("--epochs", o.epochs, "Override both epoch counts");
  abl->add_option("--out", o.out, "Output directory")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    return report_error("Usage", e.what(), kUsage);
  }

  try {
    if (*build) return cmd_build_codebook(o);
    if (*prepare) return cmd_prepare(o);
    if (*stats) return cmd_stats(o);
    if (*split) return cmd_split(o);
    if (*gen) return cmd_gen_pretext(o);
    if (*pre) return cmd_pretrain(o);
    if (*fin) return cmd_finetune(o);
    if (*eval) return cmd_evaluate(o);
    if (*abl) return cmd_ablate(o);
  } catch (const Error& e) {
    const std::string code(to_string(e.code()));
    if (is_data_error(e.code())) return report_error(code, e.message(), kData);
    if (e.code() == ErrorCode::InvalidArgument || e.code() == ErrorCode::CountTooLarge)
      return report_error(code, e.message(), kUsage);
    return report_error(code, e.message(), kRuntime);
  } catch (const std::exception& e) {
    return report_error("Runtime", e.what(), kRuntime);
  }
  return kUsage;
}
