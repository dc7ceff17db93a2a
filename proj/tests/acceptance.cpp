#include <chrono>
#include <cmath>
#include <cstdio>
#include <functional>
#include <iostream>
#include <set>
#include <sstream>

#include "json.hpp"
#include "pretext_forge/ablation.hpp"
#include "pretext_forge/codebook.hpp"
#include "pretext_forge/colorspace.hpp"
#include "pretext_forge/config.hpp"
#include "pretext_forge/evaluation.hpp"
#include "pretext_forge/pretext.hpp"
#include "pretext_forge/synth.hpp"
#include "pretext_forge/trainer.hpp"
#include "support.hpp"
#include "toy_models.hpp"

using namespace pforge;
using Clock = std::chrono::steady_clock;

namespace {

struct Outcome {
  bool pass = true;
  std::string detail;
};

double seconds_since(Clock::time_point t0) { return std::chrono::duration<double>(Clock::now() - t0).count(); }

std::string fmt(const char* f, double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, f, v);
  return buf;
}

RgbImage random_image(Rng& rng, int w, int h) {
  RgbImage img(w, h);
  for (auto& p : img.pixels) p = static_cast<std::uint8_t>(rng.uniform_int(256));
  return img;
}

const PermutationCodebook& cb100() {
  static const PermutationCodebook cb = build_codebook(100);
  return cb;
}

Outcome golden_codebook() {
  const auto t0 = Clock::now();
  const auto cb = build_codebook(100);
  const double s = seconds_since(t0);
  const bool same = format_codebook(cb) == read_text_file(test::source_dir() / "data" / "codebook_100.txt");
  std::set<Permutation> distinct;
  bool valid = true;
  for (std::size_t i = 0; i < cb.size(); ++i) {
    Permutation sorted = cb[i];
    std::sort(sorted.begin(), sorted.end());
    valid = valid && sorted == Permutation{0, 1, 2, 3, 4, 5, 6, 7, 8};
    distinct.insert(cb[i]);
  }
  return {same && valid && distinct.size() == 100 && cb.min_distance >= 2 && s <= 300,
          std::string(same ? "byte-exact" : "differs from golden file") + " d_min=" + std::to_string(cb.min_distance) +
              " build_s=" + fmt("%.2f", s)};
}

Outcome codebook_two() {
  const auto cb = build_codebook(2);
  const Permutation want{1, 0, 3, 2, 5, 4, 7, 8, 6};
  std::string got;
  for (int v : cb[cb.size() - 1]) got += std::to_string(v);
  return {cb.size() == 2 && cb[1] == want, "count=" + std::to_string(cb.size()) + " entry2=" + got};
}

Outcome lab_round_trip() {
  Rng rng(2024);
  int worst = 0;
  for (int i = 0; i < 10000; ++i) {
    const std::array<std::uint8_t, 3> p{static_cast<std::uint8_t>(rng.uniform_int(256)),
                                        static_cast<std::uint8_t>(rng.uniform_int(256)),
                                        static_cast<std::uint8_t>(rng.uniform_int(256))};
    const auto lab = color::srgb_to_lab(p[0], p[1], p[2]);
    const auto back = color::lab_to_srgb(lab[0], lab[1], lab[2]);
    for (int c = 0; c < 3; ++c) worst = std::max(worst, std::abs(static_cast<int>(back[c]) - p[c]));
  }
  const auto w = color::srgb_to_lab(255, 255, 255);
  const bool white = std::abs(w[0] - 100) < 1e-9 && std::abs(w[1]) < 0.01 && std::abs(w[2]) < 0.01;
  return {worst <= 1 && white, "max_err=" + std::to_string(worst) + "/255 white=(" + fmt("%.6f", w[0]) + "," +
                                   fmt("%.6f", w[1]) + "," + fmt("%.6f", w[2]) + ")"};
}

Outcome transforms() {
  Rng rng(11);
  int rot_ok = 0, jig_ok = 0, crop_ok = 0;
  for (int i = 0; i < 1000; ++i) {
    const int n = 1 + static_cast<int>(rng.uniform_int(8));
    const auto img = random_image(rng, n, n);
    const int a = static_cast<int>(rng.uniform_int(4)), b = static_cast<int>(rng.uniform_int(4));
    rot_ok += rotate_image(rotate_image(img, a), b) == rotate_image(img, (a + b) % 4) &&
              rotate_image(rotate_image(img, a), 4 - a) == img && rotate_image(img, 4) == img;
  }
  for (int i = 0; i < 1000; ++i) {
    const auto img = random_image(rng, 64 + static_cast<int>(rng.uniform_int(200)), 64 + static_cast<int>(rng.uniform_int(200)));
    const int perm = static_cast<int>(rng.uniform_int(cb100().size()));
    const std::uint64_t seed = rng.next();
    const auto s = jigsaw(img, perm, seed, cb100());
    jig_ok += s.label == perm && reassemble(s, cb100()) == canonical_tiles(img, seed);
  }
  for (int i = 0; i < 1000; ++i) {
    const auto img = random_image(rng, 40 + static_cast<int>(rng.uniform_int(200)), 40 + static_cast<int>(rng.uniform_int(200)));
    const auto s = jigsaw(img, 0, rng.next(), cb100(), {true});
    const auto canvas = resize_bilinear(img, kJigsawCanvas, kJigsawCanvas);
    bool ok = true;
    for (int t = 0; t < kJigsawGrid; ++t)
      ok = ok && s.tiles[t] == crop(canvas, (t % 3) * kJigsawCell + (kJigsawCell - kJigsawTile) / 2,
                                    (t / 3) * kJigsawCell + (kJigsawCell - kJigsawTile) / 2, kJigsawTile, kJigsawTile);
    crop_ok += ok;
  }
  return {rot_ok == 1000 && jig_ok == 1000 && crop_ok == 1000,
          "rotation=" + std::to_string(rot_ok) + "/1000 jigsaw=" + std::to_string(jig_ok) +
              "/1000 centred=" + std::to_string(crop_ok) + "/1000"};
}

Outcome loss_values() {
  const double ce = cross_entropy({{0, 0, 0, 0}}, {1});
  const double cg = cgan_value({0.5}, {0.5});
  LossWeights w;
  const double total = total_loss(1, 1, 1, 1, w);
  Rng rng(5);
  bool exact = true;
  for (int i = 0; i < 1000; ++i) {
    const double c = rng.uniform(-10, 10), d = rng.uniform(0, 2);
    exact = exact && color_loss(c, d, w) == c + 100 * d;
  }
  const bool pass = std::abs(ce - std::log(4.0)) <= 1e-9 && std::abs(cg + 1.386294) <= 1e-6 && total == 1.0 && exact;
  return {pass, "ce=" + fmt("%.12f", ce) + " cgan=" + fmt("%.7f", cg) + " total=" + fmt("%.3f", total) +
                    " color_exact=" + (exact ? "yes" : "no")};
}

Outcome gradients() {
  const auto t0 = Clock::now();
  double worst = 0;
  std::size_t max_params = 0;
  std::ostringstream per;
  for (auto c : test::kGradCases) {
    double w = 0;
    for (std::uint64_t p = 0; p < 20; ++p) {
      const auto g = test::gradient_point(c, 1000 + p);
      w = std::max(w, g.result.relative_error);
      max_params = std::max(max_params, g.parameters);
    }
    per << " " << test::to_string(c) << "=" << fmt("%.1e", w);
    worst = std::max(worst, w);
  }
  const double s = seconds_since(t0);
  return {worst <= 1e-4 && max_params <= 500 && s <= 60, "max_rel=" + fmt("%.2e", worst) + " max_params=" +
                                                             std::to_string(max_params) + per.str() + " s=" + fmt("%.1f", s)};
}

Outcome overfit() {
  const auto t0 = Clock::now();
  Corpus c;
  c.root = ".";
  c.records = synth::make_records(8, 7, test::default_vocab());
  TrainConfig cfg;
  cfg.pretext_epochs = 500;
  cfg.batch_size = 8;
  cfg.optimizer = nn::OptimizerKind::adam;
  cfg.learning_rate = 1e-3;
  const auto res = pretrain(c, cfg, cb100());
  std::vector<PretextSample> ev;
  for (std::uint64_t s = 0; s < 8; ++s) {
    auto b = make_batch(c.records, c.root, cb100(), 1000 + s);
    ev.insert(ev.end(), b.begin(), b.end());
  }
  const auto acc = pretext_accuracy(res.model, ev);
  const auto& h = res.state.history;
  std::vector<double> blocks;
  for (std::size_t b = 0; b + 50 <= h.size(); b += 50) {
    double s = 0;
    for (std::size_t i = b; i < b + 50; ++i) s += h[i].total;
    blocks.push_back(s / 50);
  }
  const std::size_t first = blocks.size() / 5;
  bool monotone = h.size() == 500;
  for (std::size_t i = first + 1; i < blocks.size(); ++i) monotone = monotone && blocks[i] <= blocks[i - 1];
  const double s = seconds_since(t0);
  std::ostringstream d;
  d << "steps=" << h.size() << " rotation=" << acc.at("rotation") << " puzzle=" << acc.at("puzzle")
    << " block_means=";
  for (std::size_t i = 0; i < blocks.size(); ++i) d << (i ? "," : "") << fmt("%.3f", blocks[i]);
  d << " s=" << fmt("%.0f", s);
  return {acc.at("rotation") == 1.0 && acc.at("puzzle") >= 0.9 && monotone && s <= 600, d.str()};
}

Outcome ablation() {
  const auto t0 = Clock::now();
  Corpus c;
  c.root = ".";
  c.records = synth::make_records(100, 11, test::default_vocab());
  std::vector<std::string> ids;
  for (const auto& r : c.records) ids.push_back(r.id);
  const auto sp = split_corpus(ids, 5);
  for (auto& r : c.records) r.split = sp.at(r.id);
  const TrainConfig cfg = load_config(test::source_dir() / "configs" / "ablation.cfg");
  AblationOptions opts;
  opts.seeds = {1, 2, 3};
  const auto rep = run_ablation(c, cfg, cb100(), opts);
  const int n = rep.seeds_at_or_above_supervised(Variant::combined);
  const double s = seconds_since(t0);
  std::ostringstream d;
  d << "combined>=supervised_mean in " << n << "/3 seeds; supervised mean pretext="
    << fmt("%.4f", rep.pretext(Variant::supervised).mean) << " tokens=" << fmt("%.4f", rep.tokens(Variant::supervised).mean)
    << "; combined";
  for (const auto* r : rep.of(Variant::combined))
    d << " seed" << r->seed << "=(" << fmt("%.4f", r->pretext_accuracy) << "," << fmt("%.4f", r->token_accuracy) << ")";
  d << " s=" << fmt("%.0f", s);
  std::cerr << format_ablation(rep);
  return {n >= 2 && s <= 3600, d.str()};
}

Outcome corpus_checks() {
  const auto root = test::fixture_dir();
  const Corpus c = load_corpus(root, load_vocabulary(root / "vocabulary.txt"));
  const auto sheet = nlohmann::json::parse(read_text_file(root / "stats_oracle.json"));
  auto frac = [&](const char* key) {
    const std::string v = sheet["stats"][key];
    const auto slash = v.find('/');
    return std::stod(v.substr(0, slash)) / std::stod(v.substr(slash + 1));
  };
  const auto s = corpus_stats(c.records);
  const bool stats = s.record_count == sheet["totals"]["record_count"].get<std::size_t>() &&
                     s.avg_sentence_count == frac("avg_sentence_count") && s.avg_word_count == frac("avg_word_count") &&
                     s.l1_ratio == frac("l1_ratio") && s.l2l3_ratio == frac("l2l3_ratio");
  std::set<std::string> rejected, violators;
  for (const auto& r : c.records)
    if (!accept_record(r).accepted) rejected.insert(r.id);
  for (const auto& r : sheet["records"])
    if (!r["reasons"].empty()) violators.insert(r["id"].get<std::string>());
  std::vector<std::string> ids;
  for (int i = 0; i < 100; ++i) ids.push_back("id-" + std::to_string(i));
  std::size_t n[3] = {0, 0, 0};
  for (const auto& [_, sp] : split_corpus(ids, 0)) ++n[static_cast<int>(sp)];
  std::ostringstream d;
  d << "stats=" << (stats ? "exact" : "differ") << " rejected=" << rejected.size() << " violators=" << violators.size()
    << " split=(" << n[0] << "," << n[1] << "," << n[2] << ")";
  return {stats && rejected == violators && !violators.empty() && n[0] == 80 && n[1] == 10 && n[2] == 10, d.str()};
}

Outcome bleu() {
  const double id = corpus_bleu({"the cat sat on the mat"}, {"the cat sat on the mat"});
  const double disjoint = corpus_bleu({"alpha beta gamma delta"}, {"one two three four"});
  const double golden = corpus_bleu({"the cat sat on the mat"}, {"the cat sat on a mat"});
  EvalReport::Fields f;
  f.bleu_l1 = 44.1;
  f.bleu_l2l3 = 14.6;
  f.sample_count = 1;
  f.checkpoint_id = f.corpus_id = f.config_hash = "x";
  const double avg = EvalReport(f).bleu_avg();
  const bool pass = id == 100.0 && disjoint == 0.0 && std::abs(golden - std::pow(1.0 / 12.0, 0.25) * 100) <= 1e-6 &&
                    std::abs(golden - 53.7285) <= 1e-4 && std::abs(avg - 29.35) <= 1e-12;
  return {pass, "identity=" + fmt("%.4f", id) + " disjoint=" + fmt("%.4f", disjoint) + " golden=" +
                    fmt("%.6f", golden) + " avg=" + fmt("%.4f", avg)};
}

Outcome e2e_determinism() {
  test::TempDir work("pforge-e2e");
  const std::string cli = test::cli();
  const auto q = [](const std::filesystem::path& p) { return "'" + p.string() + "'"; };
  const std::string cfg = q(test::source_dir() / "configs" / "tiny.cfg");
  auto run_once = [&](const std::string& tag) -> std::optional<std::string> {
    const auto dir = work / tag;
    const std::string env = "PRETEXT_FORGE_CACHE=" + q(work / "cache") + " ";
    const std::vector<std::string> steps{
        cli + " prepare --corpus " + q(test::fixture_dir()) + " --seed 1 --out " + q(dir / "corpus"),
        env + cli + " pretrain --corpus " + q(dir / "corpus") + " --config " + cfg + " --epochs 1 --out " + q(dir / "pre"),
        env + cli + " finetune --corpus " + q(dir / "corpus") + " --config " + cfg + " --epochs 1 --checkpoint " +
            q(dir / "pre" / "pretext_final.ckpt") + " --out " + q(dir / "fin"),
        env + cli + " evaluate --corpus " + q(dir / "corpus") + " --config " + cfg + " --checkpoint " +
            q(dir / "fin" / "finetune_final.ckpt") + " --out " + q(dir / "report")};
    for (const auto& s : steps) {
      const auto r = test::run_command(s);
      if (r.exit_code != 0) {
        std::cerr << s << "\n" << r.err;
        return std::nullopt;
      }
    }
    auto rec = dir / "report";
    rec += ".records";
    return file_digest(rec);
  };
  const auto a = run_once("a"), b = run_once("b");
  if (!a || !b) return {false, "pipeline failed"};
  return {*a == *b, "report_hash_a=" + *a + " report_hash_b=" + *b};
}

}  // namespace

int main() {
  const std::vector<std::pair<int, std::function<Outcome()>>> criteria{
      {1, golden_codebook}, {2, codebook_two}, {3, lab_round_trip}, {4, transforms},
      {5, loss_values},     {6, gradients},    {7, overfit},        {8, ablation},
      {9, corpus_checks},   {10, bleu},        {11, e2e_determinism}};
  int failed = 0;
  for (const auto& [id, check] : criteria) {
    Outcome o;
    try {
      o = check();
    } catch (const std::exception& e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    failed += !o.pass;
    std::cout << "criterion " << id << ": " << (o.pass ? "PASS" : "FAIL") << "  " << o.detail << std::endl;
  }
  std::cout << (failed ? "acceptance: " + std::to_string(failed) + " failed" : std::string("acceptance: all passed"))
            << std::endl;
  return failed ? 1 : 0;
}
