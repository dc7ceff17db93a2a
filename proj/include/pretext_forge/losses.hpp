#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <iomanip>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "pretext_forge/error.hpp"
#include "pretext_forge/image.hpp"
#include "pretext_forge/ops.hpp"

namespace pforge {

inline constexpr double kProbabilityClamp = 1e-7;

/// alpha scales the L1 term of the colorization loss; gamma weights (color, rotation, puzzle, categ).
struct LossWeights {
  double alpha = 100.0;
  std::array<double, 4> gamma{0.25, 0.25, 0.25, 0.25};

  void validate() const {
    if (!(alpha >= 0.0)) throw Error(ErrorCode::InvalidArgument, "alpha must be nonnegative");
    for (double g : gamma)
      if (!(g >= 0.0)) throw Error(ErrorCode::InvalidArgument, "gamma components must be nonnegative");
  }
};

enum class GeneratorObjective {
  non_saturating,  ///< -mean log D(fake)
  saturating,      ///< mean log(1 - D(fake)), the literal min-max form
};

struct LossReport {
  double color = 0, rotation = 0, puzzle = 0, categ = 0;
  double cgan = 0;  ///< generator-side adversarial term entering `color`
  double l1 = 0;
  double total = 0;
  int batch_size = 0;
};

// ---------------------------------------------------------------------------
// Scalar reference implementations

inline double clamp_probability(double p) { return std::clamp(p, kProbabilityClamp, 1.0 - kProbabilityClamp); }

/// Mean over samples of -log softmax(logits)[target].
inline double cross_entropy(const std::vector<std::vector<double>>& logits, const std::vector<int>& targets) {
  if (logits.size() != targets.size()) throw Error(ErrorCode::ShapeMismatch, "logit and target counts differ");
  if (logits.empty()) throw Error(ErrorCode::EmptyInput, "cross_entropy over an empty batch");
  double total = 0;
  for (std::size_t i = 0; i < logits.size(); ++i) {
    const auto& row = logits[i];
    if (row.size() < 2) throw Error(ErrorCode::ShapeMismatch, "cross_entropy needs K >= 2");
    if (targets[i] < 0 || targets[i] >= static_cast<int>(row.size()))
      throw Error(ErrorCode::InvalidTarget, "target " + std::to_string(targets[i]) + " outside [0, K)");
    const double mx = *std::max_element(row.begin(), row.end());
    double z = 0;
    for (double v : row) z += std::exp(v - mx);
    total += std::log(z) + mx - row[targets[i]];
  }
  return total / static_cast<double>(logits.size());
}

/// (1/N) sum [log D(real) + log(1 - D(fake))] with probabilities clamped away from 0 and 1.
inline double cgan_value(const std::vector<double>& d_real, const std::vector<double>& d_fake) {
  if (d_real.size() != d_fake.size()) throw Error(ErrorCode::ShapeMismatch, "d_real and d_fake differ in length");
  if (d_real.empty()) throw Error(ErrorCode::EmptyInput, "cgan_value over an empty batch");
  double s = 0;
  for (std::size_t i = 0; i < d_real.size(); ++i)
    s += std::log(clamp_probability(d_real[i])) + std::log(1.0 - clamp_probability(d_fake[i]));
  return s / static_cast<double>(d_real.size());
}

inline double discriminator_loss(const std::vector<double>& d_real, const std::vector<double>& d_fake) {
  return -cgan_value(d_real, d_fake);
}

inline double generator_adversarial_loss(const std::vector<double>& d_fake,
                                         GeneratorObjective obj = GeneratorObjective::non_saturating) {
  if (d_fake.empty()) throw Error(ErrorCode::EmptyInput, "generator loss over an empty batch");
  double s = 0;
  for (double p : d_fake)
    s += obj == GeneratorObjective::non_saturating ? -std::log(clamp_probability(p)) : std::log(1.0 - clamp_probability(p));
  return s / static_cast<double>(d_fake.size());
}

/// Mean absolute difference over every a/b element.
inline double l1_ab(const std::vector<AbImage>& pred, const std::vector<AbImage>& target) {
  if (pred.size() != target.size()) throw Error(ErrorCode::ShapeMismatch, "batch sizes differ");
  double s = 0;
  std::size_t n = 0;
  for (std::size_t i = 0; i < pred.size(); ++i) {
    if (pred[i].width != target[i].width || pred[i].height != target[i].height)
      throw Error(ErrorCode::ShapeMismatch, "ab image sizes differ");
    for (std::size_t k = 0; k < pred[i].pixels.size(); ++k) s += std::abs(pred[i].pixels[k] - target[i].pixels[k]);
    n += pred[i].pixels.size();
  }
  return n ? s / static_cast<double>(n) : 0.0;
}

inline double l1_ab(const AbImage& pred, const AbImage& target) { return l1_ab(std::vector{pred}, std::vector{target}); }

/// Generator-side adversarial term plus alpha-weighted L1.
inline double color_loss(double cgan_term, double l1, const LossWeights& w) { return cgan_term + w.alpha * l1; }

inline double total_loss(double color, double rotation, double puzzle, double categ, const LossWeights& w) {
  return w.gamma[0] * color + w.gamma[1] * rotation + w.gamma[2] * puzzle + w.gamma[3] * categ;
}

// ---------------------------------------------------------------------------
// Differentiable versions

template <class T>
nn::Tensor<T> cgan_value(const nn::Tensor<T>& d_real, const nn::Tensor<T>& d_fake) {
  const T eps = static_cast<T>(kProbabilityClamp);
  return nn::add(nn::mean(nn::log_clamped(d_real, eps)), nn::mean(nn::log_clamped(nn::affine(d_fake, T(-1), T(1)), eps)));
}

template <class T>
nn::Tensor<T> discriminator_loss(const nn::Tensor<T>& d_real, const nn::Tensor<T>& d_fake) {
  return nn::scale(cgan_value(d_real, d_fake), T(-1));
}

template <class T>
nn::Tensor<T> generator_adversarial_loss(const nn::Tensor<T>& d_fake,
                                         GeneratorObjective obj = GeneratorObjective::non_saturating) {
  const T eps = static_cast<T>(kProbabilityClamp);
  if (obj == GeneratorObjective::non_saturating) return nn::scale(nn::mean(nn::log_clamped(d_fake, eps)), T(-1));
  return nn::mean(nn::log_clamped(nn::affine(d_fake, T(-1), T(1)), eps));
}

template <class T>
nn::Tensor<T> color_loss(const nn::Tensor<T>& cgan_term, const nn::Tensor<T>& l1, const LossWeights& w) {
  return nn::weighted_sum<T>({cgan_term, l1}, {T(1), static_cast<T>(w.alpha)});
}

template <class T>
nn::Tensor<T> total_loss(const nn::Tensor<T>& color, const nn::Tensor<T>& rotation, const nn::Tensor<T>& puzzle,
                         const nn::Tensor<T>& categ, const LossWeights& w) {
  return nn::weighted_sum<T>({color, rotation, puzzle, categ},
                             {static_cast<T>(w.gamma[0]), static_cast<T>(w.gamma[1]), static_cast<T>(w.gamma[2]),
                              static_cast<T>(w.gamma[3])});
}

// ---------------------------------------------------------------------------
// Log line: key=value pairs

inline std::string format_loss_fields(const LossReport& r) {
  std::ostringstream out;
  out << std::setprecision(9) << "color=" << r.color << " rotation=" << r.rotation << " puzzle=" << r.puzzle
      << " categ=" << r.categ << " cgan=" << r.cgan << " l1=" << r.l1 << " total=" << r.total << " N=" << r.batch_size;
  return out.str();
}

inline std::map<std::string, std::string> parse_key_values(const std::string& line) {
  std::map<std::string, std::string> kv;
  std::istringstream in(line);
  std::string tok;
  while (in >> tok) {
    const auto eq = tok.find('=');
    if (eq != std::string::npos) kv[tok.substr(0, eq)] = tok.substr(eq + 1);
  }
  return kv;
}

}  // namespace pforge
