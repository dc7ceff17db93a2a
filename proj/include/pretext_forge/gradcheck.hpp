#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <vector>

#include "pretext_forge/layers.hpp"

namespace pforge::nn {

struct GradCheckResult {
  double relative_error = 0;  ///< ||analytic - numeric|| / max(||analytic|| + ||numeric||, tiny)
  double max_abs_error = 0;
  std::size_t checked = 0;
};

/// Compares reverse-mode gradients of a scalar loss with central finite differences over every
/// element of `params`. `loss` must rebuild the graph on each call.
inline GradCheckResult gradient_check(const std::function<Tensor<double>()>& loss, const NamedParams<double>& params,
                                      double h = 1e-6) {
  for (const auto& [_, p] : params) Tensor<double>(p).zero_grad();
  loss().backward();
  std::vector<double> analytic, numeric;
  for (const auto& [_, cp] : params) {
    Tensor<double> p = cp;
    const bool had = p.has_grad();
    for (std::size_t i = 0; i < p.size(); ++i) {
      analytic.push_back(had ? p.grad()[i] : 0.0);
      const double orig = p.values()[i];
      double plus, minus;
      {
        NoGradGuard off;
        p.values()[i] = orig + h;
        plus = loss().item();
        p.values()[i] = orig - h;
        minus = loss().item();
      }
      p.values()[i] = orig;
      numeric.push_back((plus - minus) / (2 * h));
    }
  }
  GradCheckResult r;
  double diff = 0, na = 0, nn_ = 0;
  for (std::size_t i = 0; i < analytic.size(); ++i) {
    const double d = analytic[i] - numeric[i];
    diff += d * d;
    na += analytic[i] * analytic[i];
    nn_ += numeric[i] * numeric[i];
    r.max_abs_error = std::max(r.max_abs_error, std::abs(d));
  }
  r.relative_error = std::sqrt(diff) / std::max(std::sqrt(na) + std::sqrt(nn_), 1e-300);
  r.checked = analytic.size();
  return r;
}

}  // namespace pforge::nn
