#pragma once

#include <cmath>
#include <string>
#include <utility>
#include <vector>

#include "pretext_forge/ops.hpp"
#include "pretext_forge/rng.hpp"

namespace pforge::nn {

template <class T>
using NamedParams = std::vector<std::pair<std::string, Tensor<T>>>;

template <class T>
Tensor<T> normal_param(Shape shape, double stddev, Rng& rng) {
  std::vector<T> v(numel(shape));
  for (auto& x : v) x = static_cast<T>(rng.normal() * stddev);
  return Tensor<T>::from(std::move(shape), std::move(v), true);
}

template <class T>
Tensor<T> zero_param(Shape shape) {
  return Tensor<T>::zeros(std::move(shape), true);
}

template <class T>
std::size_t parameter_count(const NamedParams<T>& ps) {
  std::size_t n = 0;
  for (const auto& [_, t] : ps) n += t.size();
  return n;
}

template <class T>
struct Conv2d {
  Tensor<T> weight, bias;
  int stride = 1, pad = 0;

  Conv2d() = default;
  /// He-normal weights scaled by `gain`, zero bias.
  Conv2d(int in, int out, int kernel, int stride_, int pad_, Rng& rng, double gain = 1.0)
      : weight(normal_param<T>({out, in, kernel, kernel}, gain * std::sqrt(2.0 / (in * kernel * kernel)), rng)),
        bias(zero_param<T>({out})),
        stride(stride_),
        pad(pad_) {}

  Tensor<T> operator()(const Tensor<T>& x) const { return conv2d(x, weight, bias, stride, pad); }

  void collect(NamedParams<T>& out, const std::string& prefix) const {
    out.emplace_back(prefix + ".weight", weight);
    out.emplace_back(prefix + ".bias", bias);
  }
};

template <class T>
struct Linear {
  Tensor<T> weight, bias;

  Linear() = default;
  Linear(int in, int out, Rng& rng, double gain = 1.0)
      : weight(normal_param<T>({out, in}, gain * std::sqrt(1.0 / in), rng)), bias(zero_param<T>({out})) {}

  Tensor<T> operator()(const Tensor<T>& x) const { return linear(x, weight, bias); }

  void collect(NamedParams<T>& out, const std::string& prefix) const {
    out.emplace_back(prefix + ".weight", weight);
    out.emplace_back(prefix + ".bias", bias);
  }
};

/// relu(x + conv(relu(conv(x)))) with 3x3 convolutions at constant width.
template <class T>
struct ResidualBlock {
  Conv2d<T> conv1, conv2;

  ResidualBlock() = default;
  ResidualBlock(int channels, Rng& rng)
      : conv1(channels, channels, 3, 1, 1, rng), conv2(channels, channels, 3, 1, 1, rng, 0.5) {}

  Tensor<T> operator()(const Tensor<T>& x) const { return relu(add(x, conv2(relu(conv1(x))))); }

  void collect(NamedParams<T>& out, const std::string& prefix) const {
    conv1.collect(out, prefix + ".conv1");
    conv2.collect(out, prefix + ".conv2");
  }
};

/// Gated recurrent unit cell.
template <class T>
struct GruCell {
  Linear<T> input_proj;   // x -> 3H (update, reset, candidate)
  Linear<T> hidden_proj;  // h -> 3H
  int hidden = 0;

  GruCell() = default;
  GruCell(int in, int hidden_, Rng& rng) : input_proj(in, 3 * hidden_, rng), hidden_proj(hidden_, 3 * hidden_, rng), hidden(hidden_) {}

  Tensor<T> operator()(const Tensor<T>& x, const Tensor<T>& h) const {
    const Tensor<T> gx = input_proj(x);
    const Tensor<T> gh = hidden_proj(h);
    const Tensor<T> z = sigmoid(add(narrow1(gx, 0, hidden), narrow1(gh, 0, hidden)));
    const Tensor<T> r = sigmoid(add(narrow1(gx, hidden, hidden), narrow1(gh, hidden, hidden)));
    const Tensor<T> n = tanh(add(narrow1(gx, 2 * hidden, hidden), mul(r, narrow1(gh, 2 * hidden, hidden))));
    // h' = n + z * (h - n)
    return add(n, mul(z, sub(h, n)));
  }

  void collect(NamedParams<T>& out, const std::string& prefix) const {
    input_proj.collect(out, prefix + ".input");
    hidden_proj.collect(out, prefix + ".hidden");
  }
};

}  // namespace pforge::nn
