#pragma once

#include <Eigen/Core>

#include <algorithm>
#include <utility>
#include <cmath>
#include <limits>
#include <vector>

#include "pretext_forge/tensor.hpp"

namespace pforge::nn {

template <class T>
using RowMat = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <class T>
using MatMap = Eigen::Map<RowMat<T>>;
template <class T>
using ConstMatMap = Eigen::Map<const RowMat<T>>;

// ---------------------------------------------------------------------------
// Elementwise

namespace detail {

template <class T, class F, class D>
Tensor<T> unary(const Tensor<T>& x, F f, D deriv) {
  std::vector<T> y(x.size());
  const auto& xv = x.values();
  for (std::size_t i = 0; i < y.size(); ++i) y[i] = f(xv[i]);
  return make_result<T>(x.shape(), std::move(y), {x}, [deriv](Node<T>& self) {
    auto& p = *self.parents[0];
    if (!p.requires_grad) return;
    auto& pg = p.ensure_grad();
    for (std::size_t i = 0; i < pg.size(); ++i) pg[i] += self.grad[i] * deriv(p.value[i], self.value[i]);
  });
}

}  // namespace detail

template <class T>
Tensor<T> relu(const Tensor<T>& x) {
  return detail::unary(x, [](T v) { return v > T(0) ? v : T(0); }, [](T v, T) { return v > T(0) ? T(1) : T(0); });
}

template <class T>
Tensor<T> leaky_relu(const Tensor<T>& x, T slope = T(0.2)) {
  return detail::unary(
      x, [slope](T v) { return v > T(0) ? v : slope * v; }, [slope](T v, T) { return v > T(0) ? T(1) : slope; });
}

template <class T>
Tensor<T> sigmoid(const Tensor<T>& x) {
  return detail::unary(
      x, [](T v) { return v >= T(0) ? T(1) / (T(1) + std::exp(-v)) : std::exp(v) / (T(1) + std::exp(v)); },
      [](T, T y) { return y * (T(1) - y); });
}

template <class T>
Tensor<T> tanh(const Tensor<T>& x) {
  return detail::unary(x, [](T v) { return std::tanh(v); }, [](T, T y) { return T(1) - y * y; });
}

/// a * x + b
template <class T>
Tensor<T> affine(const Tensor<T>& x, T a, T b = T(0)) {
  return detail::unary(x, [a, b](T v) { return a * v + b; }, [a](T, T) { return a; });
}

/// log(clamp(p, eps, 1 - eps)); the gradient is zero where the clamp is active.
template <class T>
Tensor<T> log_clamped(const Tensor<T>& p, T eps) {
  return detail::unary(
      p, [eps](T v) { return std::log(std::clamp(v, eps, T(1) - eps)); },
      [eps](T v, T) { return (v > eps && v < T(1) - eps) ? T(1) / v : T(0); });
}

template <class T>
Tensor<T> add(const Tensor<T>& a, const Tensor<T>& b) {
  detail::require_same_shape(a, b, "add");
  std::vector<T> y(a.size());
  for (std::size_t i = 0; i < y.size(); ++i) y[i] = a.values()[i] + b.values()[i];
  return detail::make_result<T>(a.shape(), std::move(y), {a, b}, [](Node<T>& self) {
    for (auto& p : self.parents) {
      if (!p->requires_grad) continue;
      auto& pg = p->ensure_grad();
      for (std::size_t i = 0; i < pg.size(); ++i) pg[i] += self.grad[i];
    }
  });
}

template <class T>
Tensor<T> sub(const Tensor<T>& a, const Tensor<T>& b) {
  detail::require_same_shape(a, b, "sub");
  std::vector<T> y(a.size());
  for (std::size_t i = 0; i < y.size(); ++i) y[i] = a.values()[i] - b.values()[i];
  return detail::make_result<T>(a.shape(), std::move(y), {a, b}, [](Node<T>& self) {
    const T sign[2] = {T(1), T(-1)};
    for (int k = 0; k < 2; ++k) {
      auto& p = *self.parents[k];
      if (!p.requires_grad) continue;
      auto& pg = p.ensure_grad();
      for (std::size_t i = 0; i < pg.size(); ++i) pg[i] += sign[k] * self.grad[i];
    }
  });
}

template <class T>
Tensor<T> mul(const Tensor<T>& a, const Tensor<T>& b) {
  detail::require_same_shape(a, b, "mul");
  std::vector<T> y(a.size());
  for (std::size_t i = 0; i < y.size(); ++i) y[i] = a.values()[i] * b.values()[i];
  return detail::make_result<T>(a.shape(), std::move(y), {a, b}, [](Node<T>& self) {
    auto& pa = *self.parents[0];
    auto& pb = *self.parents[1];
    if (pa.requires_grad) {
      auto& g = pa.ensure_grad();
      for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i] * pb.value[i];
    }
    if (pb.requires_grad) {
      auto& g = pb.ensure_grad();
      for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i] * pa.value[i];
    }
  });
}

template <class T>
Tensor<T> scale(const Tensor<T>& x, T s) {
  return affine(x, s, T(0));
}

// ---------------------------------------------------------------------------
// Reductions

template <class T>
Tensor<T> sum(const Tensor<T>& x) {
  T s = 0;
  for (T v : x.values()) s += v;
  return detail::make_result<T>({1}, {s}, {x}, [](Node<T>& self) {
    auto& p = *self.parents[0];
    auto& pg = p.ensure_grad();
    for (auto& g : pg) g += self.grad[0];
  });
}

template <class T>
Tensor<T> mean(const Tensor<T>& x) {
  const T n = static_cast<T>(x.size());
  T s = 0;
  for (T v : x.values()) s += v;
  return detail::make_result<T>({1}, {s / n}, {x}, [n](Node<T>& self) {
    auto& pg = self.parents[0]->ensure_grad();
    for (auto& g : pg) g += self.grad[0] / n;
  });
}

/// Sum of scalars with fixed weights: sum_i w_i * x_i.
template <class T>
Tensor<T> weighted_sum(const std::vector<Tensor<T>>& xs, const std::vector<T>& w) {
  T s = 0;
  for (std::size_t i = 0; i < xs.size(); ++i) s += w[i] * xs[i].item();
  return detail::make_result<T>({1}, {s}, xs, [w](Node<T>& self) {
    for (std::size_t i = 0; i < self.parents.size(); ++i) {
      auto& p = *self.parents[i];
      if (!p.requires_grad) continue;
      p.ensure_grad()[0] += w[i] * self.grad[0];
    }
  });
}

/// Mean absolute difference over all elements.
template <class T>
Tensor<T> l1_loss(const Tensor<T>& pred, const Tensor<T>& target) {
  detail::require_same_shape(pred, target, "l1_loss");
  const T n = static_cast<T>(pred.size());
  T s = 0;
  for (std::size_t i = 0; i < pred.size(); ++i) s += std::abs(pred.values()[i] - target.values()[i]);
  return detail::make_result<T>({1}, {s / n}, {pred, target}, [n](Node<T>& self) {
    auto& a = *self.parents[0];
    auto& b = *self.parents[1];
    for (std::size_t i = 0; i < a.value.size(); ++i) {
      const T d = a.value[i] - b.value[i];
      const T g = (d > T(0) ? T(1) : d < T(0) ? T(-1) : T(0)) * self.grad[0] / n;
      if (a.requires_grad) a.ensure_grad()[i] += g;
      if (b.requires_grad) b.ensure_grad()[i] -= g;
    }
  });
}

/// Mean over valid rows of -log softmax(logits)[target]. Rows whose target equals `ignore` are skipped.
template <class T>
Tensor<T> cross_entropy(const Tensor<T>& logits, const std::vector<int>& targets, int ignore = -1) {
  if (logits.ndim() != 2) throw Error(ErrorCode::ShapeMismatch, "cross_entropy expects [B, K] logits");
  const int B = logits.dim(0), K = logits.dim(1);
  if (K < 2) throw Error(ErrorCode::ShapeMismatch, "cross_entropy needs at least two classes");
  if (static_cast<int>(targets.size()) != B) throw Error(ErrorCode::ShapeMismatch, "target count differs from batch");
  std::vector<T> probs(logits.size());
  T loss = 0;
  int valid = 0;
  for (int b = 0; b < B; ++b) {
    const int t = targets[b];
    if (t == ignore) continue;
    if (t < 0 || t >= K) throw Error(ErrorCode::InvalidTarget, "target " + std::to_string(t) + " outside [0, K)");
    const T* row = &logits.values()[static_cast<std::size_t>(b) * K];
    const T mx = *std::max_element(row, row + K);
    T z = 0;
    for (int k = 0; k < K; ++k) z += std::exp(row[k] - mx);
    const T lz = std::log(z) + mx;
    for (int k = 0; k < K; ++k) probs[static_cast<std::size_t>(b) * K + k] = std::exp(row[k] - lz);
    loss += lz - row[t];
    ++valid;
  }
  const T denom = valid > 0 ? static_cast<T>(valid) : T(1);
  return detail::make_result<T>({1}, {loss / denom}, {logits},
                                [probs = std::move(probs), targets, ignore, B, K, denom](Node<T>& self) {
                                  auto& pg = self.parents[0]->ensure_grad();
                                  const T g = self.grad[0] / denom;
                                  for (int b = 0; b < B; ++b) {
                                    if (targets[b] == ignore) continue;
                                    for (int k = 0; k < K; ++k) {
                                      const std::size_t i = static_cast<std::size_t>(b) * K + k;
                                      pg[i] += g * (probs[i] - (k == targets[b] ? T(1) : T(0)));
                                    }
                                  }
                                });
}

// ---------------------------------------------------------------------------
// Shape manipulation

template <class T>
Tensor<T> reshape(const Tensor<T>& x, Shape shape) {
  if (numel(shape) != x.size())
    throw Error(ErrorCode::ShapeMismatch, "reshape " + shape_str(x.shape()) + " -> " + shape_str(shape));
  return detail::make_result<T>(std::move(shape), x.values(), {x}, [](Node<T>& self) {
    auto& pg = self.parents[0]->ensure_grad();
    for (std::size_t i = 0; i < pg.size(); ++i) pg[i] += self.grad[i];
  });
}

/// Concatenates along dimension 1; all other dimensions must agree.
template <class T>
Tensor<T> concat1(const std::vector<Tensor<T>>& xs) {
  const Shape& s0 = xs.at(0).shape();
  const int B = s0[0];
  std::size_t inner = 1;
  for (std::size_t d = 2; d < s0.size(); ++d) inner *= s0[d];
  int total = 0;
  std::vector<std::size_t> block;
  for (const auto& x : xs) {
    if (x.ndim() != static_cast<int>(s0.size()) || x.dim(0) != B || numel(x.shape()) != B * x.dim(1) * inner)
      throw Error(ErrorCode::ShapeMismatch, "concat1: incompatible " + shape_str(x.shape()));
    total += x.dim(1);
    block.push_back(static_cast<std::size_t>(x.dim(1)) * inner);
  }
  Shape out_shape = s0;
  out_shape[1] = total;
  const std::size_t row = static_cast<std::size_t>(total) * inner;
  std::vector<T> y(B * row);
  std::size_t off = 0;
  for (std::size_t k = 0; k < xs.size(); ++k) {
    for (int b = 0; b < B; ++b)
      std::copy_n(&xs[k].values()[b * block[k]], block[k], &y[b * row + off]);
    off += block[k];
  }
  return detail::make_result<T>(out_shape, std::move(y), xs, [block, B, row](Node<T>& self) {
    std::size_t off = 0;
    for (std::size_t k = 0; k < self.parents.size(); ++k) {
      auto& p = *self.parents[k];
      if (p.requires_grad) {
        auto& pg = p.ensure_grad();
        for (int b = 0; b < B; ++b)
          for (std::size_t i = 0; i < block[k]; ++i) pg[b * block[k] + i] += self.grad[b * row + off + i];
      }
      off += block[k];
    }
  });
}

/// Concatenates along dimension 0 (stacks batches); trailing dimensions must agree.
template <class T>
Tensor<T> concat0(const std::vector<Tensor<T>>& xs) {
  Shape out_shape = xs.at(0).shape();
  int rows = 0;
  std::vector<std::size_t> sizes;
  for (const auto& x : xs) {
    if (!std::equal(x.shape().begin() + 1, x.shape().end(), out_shape.begin() + 1, out_shape.end()))
      throw Error(ErrorCode::ShapeMismatch, "concat0: incompatible " + shape_str(x.shape()));
    rows += x.dim(0);
    sizes.push_back(x.size());
  }
  out_shape[0] = rows;
  std::vector<T> y;
  y.reserve(numel(out_shape));
  for (const auto& x : xs) y.insert(y.end(), x.values().begin(), x.values().end());
  return detail::make_result<T>(out_shape, std::move(y), xs, [sizes](Node<T>& self) {
    std::size_t off = 0;
    for (std::size_t k = 0; k < self.parents.size(); ++k) {
      auto& p = *self.parents[k];
      if (p.requires_grad) {
        auto& pg = p.ensure_grad();
        for (std::size_t i = 0; i < sizes[k]; ++i) pg[i] += self.grad[off + i];
      }
      off += sizes[k];
    }
  });
}

/// Columns [start, start+len) of a [B, F] tensor.
template <class T>
Tensor<T> narrow1(const Tensor<T>& x, int start, int len) {
  const int B = x.dim(0), F = x.dim(1);
  if (start < 0 || start + len > F) throw Error(ErrorCode::ShapeMismatch, "narrow1 out of range");
  std::vector<T> y(static_cast<std::size_t>(B) * len);
  for (int b = 0; b < B; ++b) std::copy_n(&x.values()[b * F + start], len, &y[b * len]);
  return detail::make_result<T>({B, len}, std::move(y), {x}, [B, F, start, len](Node<T>& self) {
    auto& pg = self.parents[0]->ensure_grad();
    for (int b = 0; b < B; ++b)
      for (int i = 0; i < len; ++i) pg[b * F + start + i] += self.grad[b * len + i];
  });
}

/// Rows of x (along dim 0) picked by index; repeated indices accumulate gradient.
template <class T>
Tensor<T> index_rows(const Tensor<T>& x, const std::vector<int>& idx) {
  const std::size_t row = x.size() / x.dim(0);
  Shape s = x.shape();
  s[0] = static_cast<int>(idx.size());
  std::vector<T> y(idx.size() * row);
  for (std::size_t i = 0; i < idx.size(); ++i) {
    if (idx[i] < 0 || idx[i] >= x.dim(0)) throw Error(ErrorCode::ShapeMismatch, "index_rows: index out of range");
    std::copy_n(&x.values()[idx[i] * row], row, &y[i * row]);
  }
  return detail::make_result<T>(std::move(s), std::move(y), {x}, [idx, row](Node<T>& self) {
    auto& pg = self.parents[0]->ensure_grad();
    for (std::size_t i = 0; i < idx.size(); ++i)
      for (std::size_t j = 0; j < row; ++j) pg[idx[i] * row + j] += self.grad[i * row + j];
  });
}

template <class T>
Tensor<T> embedding(const Tensor<T>& table, const std::vector<int>& ids) {
  return index_rows(table, ids);
}

// ---------------------------------------------------------------------------
// Dense layers

/// y = x W^T + b with x [B, I], W [O, I], b [O] (b may be undefined).
template <class T>
Tensor<T> linear(const Tensor<T>& x, const Tensor<T>& w, const Tensor<T>& b) {
  if (x.ndim() != 2 || w.ndim() != 2 || x.dim(1) != w.dim(1))
    throw Error(ErrorCode::ShapeMismatch, "linear: x " + shape_str(x.shape()) + " w " + shape_str(w.shape()));
  const int B = x.dim(0), I = x.dim(1), O = w.dim(0);
  std::vector<T> y(static_cast<std::size_t>(B) * O);
  MatMap<T> Y(y.data(), B, O);
  ConstMatMap<T> X(x.values().data(), B, I), W(w.values().data(), O, I);
  Y.noalias() = X * W.transpose();
  if (b.defined()) {
    for (int r = 0; r < B; ++r)
      for (int o = 0; o < O; ++o) y[r * O + o] += b.values()[o];
  }
  std::vector<Tensor<T>> inputs{x, w};
  if (b.defined()) inputs.push_back(b);
  return detail::make_result<T>({B, O}, std::move(y), inputs, [B, I, O](Node<T>& self) {
    ConstMatMap<T> G(self.grad.data(), B, O);
    auto& px = *self.parents[0];
    auto& pw = *self.parents[1];
    if (px.requires_grad) {
      MatMap<T> GX(px.ensure_grad().data(), B, I);
      GX.noalias() += G * ConstMatMap<T>(pw.value.data(), O, I);
    }
    if (pw.requires_grad) {
      MatMap<T> GW(pw.ensure_grad().data(), O, I);
      GW.noalias() += G.transpose() * ConstMatMap<T>(px.value.data(), B, I);
    }
    if (self.parents.size() > 2 && self.parents[2]->requires_grad) {
      auto& gb = self.parents[2]->ensure_grad();
      for (int r = 0; r < B; ++r)
        for (int o = 0; o < O; ++o) gb[o] += self.grad[r * O + o];
    }
  });
}

// ---------------------------------------------------------------------------
// Convolution and spatial ops on [B, C, H, W]

struct ConvGeometry {
  int C, H, W, KH, KW, stride, pad, Ho, Wo;
};

namespace detail {

/// Output columns [ox0, ox1) read in-bounds input pixels for kernel column j.
inline std::pair<int, int> valid_columns(const ConvGeometry& g, int j) {
  int ox0 = 0, ox1 = g.Wo;
  while (ox0 < ox1 && ox0 * g.stride - g.pad + j < 0) ++ox0;
  while (ox1 > ox0 && (ox1 - 1) * g.stride - g.pad + j >= g.W) --ox1;
  return {ox0, ox1};
}

template <class T>
void im2col(const T* x, const ConvGeometry& g, T* cols) {
  const int L = g.Ho * g.Wo;
  for (int c = 0; c < g.C; ++c)
    for (int i = 0; i < g.KH; ++i)
      for (int j = 0; j < g.KW; ++j) {
        T* dst = cols + static_cast<std::size_t>((c * g.KH + i) * g.KW + j) * L;
        const auto [ox0, ox1] = valid_columns(g, j);
        for (int oy = 0; oy < g.Ho; ++oy) {
          const int iy = oy * g.stride - g.pad + i;
          T* drow = dst + oy * g.Wo;
          if (iy < 0 || iy >= g.H) {
            std::fill_n(drow, g.Wo, T(0));
            continue;
          }
          const T* srow = x + (static_cast<std::size_t>(c) * g.H + iy) * g.W;
          const int off = j - g.pad;
          std::fill_n(drow, ox0, T(0));
          if (g.stride == 1) {
            std::copy(srow + ox0 + off, srow + ox1 + off, drow + ox0);
          } else {
            for (int ox = ox0; ox < ox1; ++ox) drow[ox] = srow[ox * g.stride + off];
          }
          std::fill(drow + ox1, drow + g.Wo, T(0));
        }
      }
}

template <class T>
void col2im_add(const T* cols, const ConvGeometry& g, T* dx) {
  const int L = g.Ho * g.Wo;
  for (int c = 0; c < g.C; ++c)
    for (int i = 0; i < g.KH; ++i)
      for (int j = 0; j < g.KW; ++j) {
        const T* src = cols + static_cast<std::size_t>((c * g.KH + i) * g.KW + j) * L;
        const auto [ox0, ox1] = valid_columns(g, j);
        for (int oy = 0; oy < g.Ho; ++oy) {
          const int iy = oy * g.stride - g.pad + i;
          if (iy < 0 || iy >= g.H) continue;
          T* drow = dx + (static_cast<std::size_t>(c) * g.H + iy) * g.W;
          const T* srow = src + oy * g.Wo;
          const int off = j - g.pad;
          if (g.stride == 1) {
            T* d = drow + off;
            for (int ox = ox0; ox < ox1; ++ox) d[ox] += srow[ox];
          } else {
            for (int ox = ox0; ox < ox1; ++ox) drow[ox * g.stride + off] += srow[ox];
          }
        }
      }
}

}  // namespace detail

/// 2-D cross-correlation: x [B, C, H, W], w [O, C, KH, KW], b [O] (may be undefined).
template <class T>
Tensor<T> conv2d(const Tensor<T>& x, const Tensor<T>& w, const Tensor<T>& b, int stride, int pad) {
  if (x.ndim() != 4 || w.ndim() != 4 || x.dim(1) != w.dim(1))
    throw Error(ErrorCode::ShapeMismatch, "conv2d: x " + shape_str(x.shape()) + " w " + shape_str(w.shape()));
  const int B = x.dim(0), O = w.dim(0);
  ConvGeometry g{x.dim(1), x.dim(2), x.dim(3), w.dim(2), w.dim(3), stride, pad, 0, 0};
  g.Ho = (g.H + 2 * pad - g.KH) / stride + 1;
  g.Wo = (g.W + 2 * pad - g.KW) / stride + 1;
  if (g.Ho < 1 || g.Wo < 1) throw Error(ErrorCode::ShapeMismatch, "conv2d: input smaller than kernel");
  const int K = g.C * g.KH * g.KW, L = g.Ho * g.Wo;
  const std::size_t in_sz = static_cast<std::size_t>(g.C) * g.H * g.W, out_sz = static_cast<std::size_t>(O) * L;

  std::vector<T> y(B * out_sz);
  std::vector<T> cols(static_cast<std::size_t>(K) * L);
  ConstMatMap<T> Wm(w.values().data(), O, K);
  for (int n = 0; n < B; ++n) {
    detail::im2col(x.values().data() + n * in_sz, g, cols.data());
    MatMap<T> Y(y.data() + n * out_sz, O, L);
    Y.noalias() = Wm * ConstMatMap<T>(cols.data(), K, L);
    if (b.defined())
      for (int o = 0; o < O; ++o) Y.row(o).array() += b.values()[o];
  }
  std::vector<Tensor<T>> inputs{x, w};
  if (b.defined()) inputs.push_back(b);
  return detail::make_result<T>({B, O, g.Ho, g.Wo}, std::move(y), inputs, [g, B, O, K, L, in_sz, out_sz](Node<T>& self) {
    auto& px = *self.parents[0];
    auto& pw = *self.parents[1];
    const bool has_b = self.parents.size() > 2 && self.parents[2]->requires_grad;
    std::vector<T> cols(static_cast<std::size_t>(K) * L);
    std::vector<T> dcols;
    if (px.requires_grad) dcols.resize(cols.size());
    ConstMatMap<T> Wm(pw.value.data(), O, K);
    for (int n = 0; n < B; ++n) {
      ConstMatMap<T> G(self.grad.data() + n * out_sz, O, L);
      if (pw.requires_grad) {
        detail::im2col(px.value.data() + n * in_sz, g, cols.data());
        MatMap<T> GW(pw.ensure_grad().data(), O, K);
        GW.noalias() += G * ConstMatMap<T>(cols.data(), K, L).transpose();
      }
      if (has_b) {
        auto& gb = self.parents[2]->ensure_grad();
        for (int o = 0; o < O; ++o) {
          const T* row = self.grad.data() + n * out_sz + static_cast<std::size_t>(o) * L;
          T acc = 0;
          for (int l = 0; l < L; ++l) acc += row[l];
          gb[o] += acc;
        }
      }
      if (px.requires_grad) {
        MatMap<T> DC(dcols.data(), K, L);
        DC.noalias() = Wm.transpose() * G;
        detail::col2im_add(dcols.data(), g, px.ensure_grad().data() + n * in_sz);
      }
    }
  });
}

template <class T>
Tensor<T> upsample_nearest(const Tensor<T>& x, int factor) {
  const int B = x.dim(0), C = x.dim(1), H = x.dim(2), W = x.dim(3);
  const int Ho = H * factor, Wo = W * factor;
  std::vector<T> y(static_cast<std::size_t>(B) * C * Ho * Wo);
  for (int bc = 0; bc < B * C; ++bc)
    for (int oy = 0; oy < Ho; ++oy)
      for (int ox = 0; ox < Wo; ++ox)
        y[(static_cast<std::size_t>(bc) * Ho + oy) * Wo + ox] =
            x.values()[(static_cast<std::size_t>(bc) * H + oy / factor) * W + ox / factor];
  return detail::make_result<T>({B, C, Ho, Wo}, std::move(y), {x}, [B, C, H, W, Ho, Wo, factor](Node<T>& self) {
    auto& pg = self.parents[0]->ensure_grad();
    for (int bc = 0; bc < B * C; ++bc)
      for (int oy = 0; oy < Ho; ++oy)
        for (int ox = 0; ox < Wo; ++ox)
          pg[(static_cast<std::size_t>(bc) * H + oy / factor) * W + ox / factor] +=
              self.grad[(static_cast<std::size_t>(bc) * Ho + oy) * Wo + ox];
  });
}

/// [B, C, H, W] -> [B, C]
template <class T>
Tensor<T> global_avg_pool(const Tensor<T>& x) {
  const int B = x.dim(0), C = x.dim(1);
  const std::size_t hw = x.size() / (static_cast<std::size_t>(B) * C);
  std::vector<T> y(static_cast<std::size_t>(B) * C);
  for (std::size_t i = 0; i < y.size(); ++i) {
    T s = 0;
    for (std::size_t j = 0; j < hw; ++j) s += x.values()[i * hw + j];
    y[i] = s / static_cast<T>(hw);
  }
  return detail::make_result<T>({B, C}, std::move(y), {x}, [hw](Node<T>& self) {
    auto& pg = self.parents[0]->ensure_grad();
    for (std::size_t i = 0; i < self.grad.size(); ++i) {
      const T g = self.grad[i] / static_cast<T>(hw);
      for (std::size_t j = 0; j < hw; ++j) pg[i * hw + j] += g;
    }
  });
}

// ---------------------------------------------------------------------------
// Helpers

template <class T>
std::vector<int> argmax_rows(const Tensor<T>& logits) {
  const int B = logits.dim(0), K = logits.dim(1);
  std::vector<int> out(B);
  for (int b = 0; b < B; ++b) {
    const T* row = &logits.values()[static_cast<std::size_t>(b) * K];
    out[b] = static_cast<int>(std::max_element(row, row + K) - row);
  }
  return out;
}

template <class T>
bool all_finite(const Tensor<T>& x) {
  return std::all_of(x.values().begin(), x.values().end(), [](T v) { return std::isfinite(v); });
}

}  // namespace pforge::nn
