#pragma once

#include <cmath>
#include <string>
#include <vector>

#include "pretext_forge/layers.hpp"

namespace pforge::nn {

enum class OptimizerKind { sgd, adam };

inline OptimizerKind parse_optimizer(const std::string& s) {
  if (s == "sgd") return OptimizerKind::sgd;
  if (s == "adam") return OptimizerKind::adam;
  throw Error(ErrorCode::InvalidArgument, "unknown optimizer '" + s + "'");
}

inline std::string to_string(OptimizerKind k) { return k == OptimizerKind::sgd ? "sgd" : "adam"; }

/// Plain SGD (optionally with momentum) or Adam over a fixed parameter list.
template <class T>
class Optimizer {
 public:
  Optimizer(NamedParams<T> params, OptimizerKind kind, double lr, double momentum = 0.0)
      : params_(std::move(params)), kind_(kind), lr_(lr), momentum_(momentum) {
    for (const auto& [_, p] : params_) {
      m_.emplace_back(p.size(), T(0));
      v_.emplace_back(kind == OptimizerKind::adam ? p.size() : 0, T(0));
    }
  }

  void zero_grad() {
    for (auto& [_, p] : params_) p.zero_grad();
  }

  void step() {
    ++t_;
    const double b1 = 0.9, b2 = 0.999, eps = 1e-8;
    const double c1 = 1.0 - std::pow(b1, t_), c2 = 1.0 - std::pow(b2, t_);
    for (std::size_t k = 0; k < params_.size(); ++k) {
      auto& p = params_[k].second;
      if (!p.has_grad()) continue;
      auto w = p.data();
      auto g = p.grad();
      auto& m = m_[k];
      if (kind_ == OptimizerKind::sgd) {
        for (std::size_t i = 0; i < w.size(); ++i) {
          if (momentum_ > 0) {
            m[i] = static_cast<T>(momentum_ * m[i] + g[i]);
            w[i] -= static_cast<T>(lr_ * m[i]);
          } else {
            w[i] -= static_cast<T>(lr_ * g[i]);
          }
        }
      } else {
        auto& v = v_[k];
        for (std::size_t i = 0; i < w.size(); ++i) {
          m[i] = static_cast<T>(b1 * m[i] + (1 - b1) * g[i]);
          v[i] = static_cast<T>(b2 * v[i] + (1 - b2) * g[i] * g[i]);
          w[i] -= static_cast<T>(lr_ * (m[i] / c1) / (std::sqrt(v[i] / c2) + eps));
        }
      }
    }
  }

  const NamedParams<T>& params() const { return params_; }

 private:
  NamedParams<T> params_;
  OptimizerKind kind_;
  double lr_;
  double momentum_;
  long t_ = 0;
  std::vector<std::vector<T>> m_, v_;
};

}  // namespace pforge::nn
