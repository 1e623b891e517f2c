#pragma once

// Differentiable tensor operations. Every op takes an optional tape: pass a
// Graph to record the backward step, or nullptr for inference.

#include <algorithm>
#include <array>
#include <cmath>
#include <limits>
#include <stdexcept>
#include <string>
#include <type_traits>
#include <vector>

#include "ftamod/tensor.hpp"

namespace ftamod::ops {

template <typename T>
using Tape = std::type_identity_t<Graph<T>>*;

namespace detail {

template <typename T>
void require_finite(const Tensor<T>& t, const char* op) {
  if (!all_finite<T>(t.values())) {
    throw std::domain_error(std::string(op) + ": non-finite value in output");
  }
}

inline void require_rank(const Shape& s, std::size_t r, const char* op) {
  if (s.size() != r) {
    throw std::invalid_argument(std::string(op) + ": expected rank " + std::to_string(r) + ", got " +
                                shape_str(s));
  }
}

inline std::vector<std::size_t> strides_of(const Shape& s) {
  std::vector<std::size_t> st(s.size(), 1);
  for (std::size_t d = s.size(); d-- > 1;) st[d - 1] = st[d] * s[d];
  return st;
}

// Walks every index of `shape` in row-major order, calling fn(flat, offs)
// where offs[j] is the running offset into operand j under its strides.
template <std::size_t N, typename Fn>
void odometer(const Shape& shape, const std::array<std::vector<std::size_t>, N>& strides, Fn&& fn) {
  const std::size_t rank = shape.size();
  std::vector<std::size_t> coord(rank, 0);
  std::array<std::size_t, N> offs{};
  const std::size_t total = numel(shape);
  for (std::size_t flat = 0; flat < total; ++flat) {
    fn(flat, offs);
    for (std::size_t d = rank; d-- > 0;) {
      if (++coord[d] < shape[d]) {
        for (std::size_t j = 0; j < N; ++j) offs[j] += strides[j][d];
        break;
      }
      for (std::size_t j = 0; j < N; ++j) offs[j] -= strides[j][d] * (shape[d] - 1);
      coord[d] = 0;
    }
  }
}

}  // namespace detail

// ---------------------------------------------------------------------------
// conv2d: NHWC input, (kh, kw, Cin, Cout) kernel, zero same-padding, stride 1.

template <typename T>
Tensor<T> conv2d(Tape<T> tape, const Tensor<T>& x, const Tensor<T>& k, const Tensor<T>& bias) {
  detail::require_rank(x.shape(), 4, "conv2d");
  detail::require_rank(k.shape(), 4, "conv2d kernel");
  const std::size_t B = x.dim(0), H = x.dim(1), W = x.dim(2), Ci = x.dim(3);
  const std::size_t kh = k.dim(0), kw = k.dim(1), Co = k.dim(3);
  if (k.dim(2) != Ci) {
    throw std::invalid_argument("conv2d: channel mismatch, input " + shape_str(x.shape()) + " kernel " +
                                shape_str(k.shape()));
  }
  if (kh % 2 == 0 || kw % 2 == 0) throw std::invalid_argument("conv2d: kernel extents must be odd");
  if (bias.size() != Co) throw std::invalid_argument("conv2d: bias length must equal output channels");
  const std::ptrdiff_t ph = static_cast<std::ptrdiff_t>(kh / 2), pw = static_cast<std::ptrdiff_t>(kw / 2);

  Tensor<T> out({B, H, W, Co});
  const T* xd = x.data();
  const T* kd = k.data();
  const T* bd = bias.data();
  T* od = out.data();
  for (std::size_t b = 0; b < B; ++b) {
    for (std::size_t y = 0; y < H; ++y) {
      for (std::size_t xx = 0; xx < W; ++xx) {
        T* orow = od + ((b * H + y) * W + xx) * Co;
        std::copy(bd, bd + Co, orow);
        for (std::size_t ky = 0; ky < kh; ++ky) {
          const std::ptrdiff_t iy = static_cast<std::ptrdiff_t>(y + ky) - ph;
          if (iy < 0 || iy >= static_cast<std::ptrdiff_t>(H)) continue;
          for (std::size_t kx = 0; kx < kw; ++kx) {
            const std::ptrdiff_t ix = static_cast<std::ptrdiff_t>(xx + kx) - pw;
            if (ix < 0 || ix >= static_cast<std::ptrdiff_t>(W)) continue;
            const T* irow = xd + ((b * H + static_cast<std::size_t>(iy)) * W + static_cast<std::size_t>(ix)) * Ci;
            const T* kblk = kd + (ky * kw + kx) * Ci * Co;
            for (std::size_t ci = 0; ci < Ci; ++ci) {
              const T v = irow[ci];
              const T* kr = kblk + ci * Co;
              for (std::size_t co = 0; co < Co; ++co) orow[co] += v * kr[co];
            }
          }
        }
      }
    }
  }
  detail::require_finite(out, "conv2d");

  if (tape) {
    tape->record({x, k, bias}, out, [x, k, bias, out, B, H, W, Ci, kh, kw, Co, ph, pw]() mutable {
      const auto go = out.grad();
      auto gx = x.grad();
      auto gk = k.grad();
      auto gb = bias.grad();
      const T* xd = x.data();
      const T* kd = k.data();
      for (std::size_t b = 0; b < B; ++b) {
        for (std::size_t y = 0; y < H; ++y) {
          for (std::size_t xx = 0; xx < W; ++xx) {
            const T* g = go.data() + ((b * H + y) * W + xx) * Co;
            for (std::size_t co = 0; co < Co; ++co) gb[co] += g[co];
            for (std::size_t ky = 0; ky < kh; ++ky) {
              const std::ptrdiff_t iy = static_cast<std::ptrdiff_t>(y + ky) - ph;
              if (iy < 0 || iy >= static_cast<std::ptrdiff_t>(H)) continue;
              for (std::size_t kx = 0; kx < kw; ++kx) {
                const std::ptrdiff_t ix = static_cast<std::ptrdiff_t>(xx + kx) - pw;
                if (ix < 0 || ix >= static_cast<std::ptrdiff_t>(W)) continue;
                const std::size_t ioff =
                    ((b * H + static_cast<std::size_t>(iy)) * W + static_cast<std::size_t>(ix)) * Ci;
                const std::size_t koff = (ky * kw + kx) * Ci * Co;
                for (std::size_t ci = 0; ci < Ci; ++ci) {
                  const T v = xd[ioff + ci];
                  const T* kr = kd + koff + ci * Co;
                  T* gkr = gk.data() + koff + ci * Co;
                  T acc{0};
                  for (std::size_t co = 0; co < Co; ++co) {
                    acc += g[co] * kr[co];
                    gkr[co] += v * g[co];
                  }
                  gx[ioff + ci] += acc;
                }
              }
            }
          }
        }
      }
    });
  }
  return out;
}

// ---------------------------------------------------------------------------
// maxpool2: non-overlapping 2x2, floor semantics, first-index tie-break.

template <typename T>
Tensor<T> maxpool2(Tape<T> tape, const Tensor<T>& x) {
  detail::require_rank(x.shape(), 4, "maxpool2");
  const std::size_t B = x.dim(0), H = x.dim(1), W = x.dim(2), C = x.dim(3);
  if (H < 2 || W < 2) throw std::invalid_argument("maxpool2: spatial extents must be >= 2, got " + shape_str(x.shape()));
  const std::size_t Ho = H / 2, Wo = W / 2;
  Tensor<T> out({B, Ho, Wo, C});
  std::vector<std::size_t> argmax(out.size());
  for (std::size_t b = 0; b < B; ++b) {
    for (std::size_t y = 0; y < Ho; ++y) {
      for (std::size_t xx = 0; xx < Wo; ++xx) {
        for (std::size_t c = 0; c < C; ++c) {
          std::size_t best = ((b * H + 2 * y) * W + 2 * xx) * C + c;
          for (std::size_t dy = 0; dy < 2; ++dy) {
            for (std::size_t dx = 0; dx < 2; ++dx) {
              const std::size_t i = ((b * H + 2 * y + dy) * W + 2 * xx + dx) * C + c;
              if (x[i] > x[best]) best = i;
            }
          }
          const std::size_t o = ((b * Ho + y) * Wo + xx) * C + c;
          out[o] = x[best];
          argmax[o] = best;
        }
      }
    }
  }
  if (tape) {
    tape->record({x}, out, [x, out, argmax = std::move(argmax)]() mutable {
      const auto go = out.grad();
      auto gx = x.grad();
      for (std::size_t o = 0; o < argmax.size(); ++o) gx[argmax[o]] += go[o];
    });
  }
  return out;
}

// ---------------------------------------------------------------------------
// reduce_pool: mean or max over a set of axes, keeping them with extent 1.

enum class PoolKind { Avg, Max };

template <typename T>
Tensor<T> reduce_pool(Tape<T> tape, const Tensor<T>& x, std::vector<std::size_t> axes, PoolKind kind) {
  if (axes.empty()) throw std::invalid_argument("reduce_pool: empty reduction (no axes selected)");
  Shape oshape = x.shape();
  for (auto a : axes) {
    if (a >= x.rank()) throw std::invalid_argument("reduce_pool: axis out of range");
    oshape[a] = 1;
  }
  const std::size_t count = x.size() / numel(oshape);
  Tensor<T> out(oshape, kind == PoolKind::Max ? -std::numeric_limits<T>::infinity() : T{0});
  auto ostr = detail::strides_of(oshape);
  for (auto a : axes) ostr[a] = 0;
  const std::array<std::vector<std::size_t>, 1> strides{ostr};

  std::vector<std::size_t> argmax;
  if (kind == PoolKind::Avg) {
    const T inv = T{1} / static_cast<T>(count);
    detail::odometer(x.shape(), strides, [&](std::size_t i, const auto& o) { out[o[0]] += x[i] * inv; });
  } else {
    argmax.assign(out.size(), 0);
    detail::odometer(x.shape(), strides, [&](std::size_t i, const auto& o) {
      if (x[i] > out[o[0]]) {
        out[o[0]] = x[i];
        argmax[o[0]] = i;
      }
    });
  }
  detail::require_finite(out, "reduce_pool");
  if (tape) {
    tape->record({x}, out, [x, out, strides, kind, count, argmax = std::move(argmax)]() mutable {
      const auto go = out.grad();
      auto gx = x.grad();
      if (kind == PoolKind::Avg) {
        const T inv = T{1} / static_cast<T>(count);
        detail::odometer(x.shape(), strides, [&](std::size_t i, const auto& o) { gx[i] += go[o[0]] * inv; });
      } else {
        for (std::size_t o = 0; o < argmax.size(); ++o) gx[argmax[o]] += go[o];
      }
    });
  }
  return out;
}

// ---------------------------------------------------------------------------
// dense: (B, n) x (n, m) + (m)

template <typename T>
Tensor<T> dense(Tape<T> tape, const Tensor<T>& x, const Tensor<T>& w, const Tensor<T>& bias) {
  detail::require_rank(x.shape(), 2, "dense");
  detail::require_rank(w.shape(), 2, "dense weights");
  const std::size_t B = x.dim(0), n = x.dim(1), m = w.dim(1);
  if (w.dim(0) != n || bias.size() != m) {
    throw std::invalid_argument("dense: shape mismatch " + shape_str(x.shape()) + " x " + shape_str(w.shape()) +
                                " + " + shape_str(bias.shape()));
  }
  Tensor<T> out({B, m});
  for (std::size_t b = 0; b < B; ++b) {
    T* orow = out.data() + b * m;
    std::copy(bias.data(), bias.data() + m, orow);
    for (std::size_t i = 0; i < n; ++i) {
      const T v = x[b * n + i];
      const T* wr = w.data() + i * m;
      for (std::size_t j = 0; j < m; ++j) orow[j] += v * wr[j];
    }
  }
  detail::require_finite(out, "dense");
  if (tape) {
    tape->record({x, w, bias}, out, [x, w, bias, out, B, n, m]() mutable {
      const auto go = out.grad();
      auto gx = x.grad();
      auto gw = w.grad();
      auto gb = bias.grad();
      for (std::size_t b = 0; b < B; ++b) {
        const T* g = go.data() + b * m;
        for (std::size_t j = 0; j < m; ++j) gb[j] += g[j];
        for (std::size_t i = 0; i < n; ++i) {
          const T v = x[b * n + i];
          const T* wr = w.data() + i * m;
          T* gwr = gw.data() + i * m;
          T acc{0};
          for (std::size_t j = 0; j < m; ++j) {
            acc += g[j] * wr[j];
            gwr[j] += v * g[j];
          }
          gx[b * n + i] += acc;
        }
      }
    });
  }
  return out;
}

// ---------------------------------------------------------------------------
// Pointwise activations

enum class Activation { Relu, Sigmoid };

template <typename T>
T sigmoid_scalar(T v) {
  T y;
  if (v >= T{0}) {
    y = T{1} / (T{1} + std::exp(-v));
  } else {
    const T e = std::exp(v);
    y = e / (T{1} + e);
  }
  // Keep the open interval (0,1) even where the exact value rounds to an end.
  return std::clamp(y, std::numeric_limits<T>::min(), std::nextafter(T{1}, T{0}));
}

template <typename T>
Tensor<T> pointwise(Tape<T> tape, const Tensor<T>& x, Activation fn) {
  Tensor<T> out(x.shape());
  if (fn == Activation::Relu) {
    for (std::size_t i = 0; i < x.size(); ++i) out[i] = x[i] > T{0} ? x[i] : T{0};
  } else {
    for (std::size_t i = 0; i < x.size(); ++i) out[i] = sigmoid_scalar(x[i]);
  }
  detail::require_finite(out, "pointwise");
  if (tape) {
    tape->record({x}, out, [x, out, fn]() mutable {
      const auto go = out.grad();
      auto gx = x.grad();
      if (fn == Activation::Relu) {
        for (std::size_t i = 0; i < gx.size(); ++i) {
          if (x[i] > T{0}) gx[i] += go[i];
        }
      } else {
        for (std::size_t i = 0; i < gx.size(); ++i) gx[i] += go[i] * out[i] * (T{1} - out[i]);
      }
    });
  }
  return out;
}

template <typename T>
Tensor<T> relu(Tape<T> tape, const Tensor<T>& x) {
  return pointwise(tape, x, Activation::Relu);
}

template <typename T>
Tensor<T> sigmoid(Tape<T> tape, const Tensor<T>& x) {
  return pointwise(tape, x, Activation::Sigmoid);
}

// ---------------------------------------------------------------------------
// Elementwise binary ops

/// Broadcast shape of a and b: equal ranks, each axis equal or extent 1 on
/// one side.
inline Shape broadcast_shape(const Shape& a, const Shape& b) {
  if (a.size() != b.size()) {
    throw std::invalid_argument("broadcast: rank mismatch " + shape_str(a) + " vs " + shape_str(b));
  }
  Shape out(a.size());
  for (std::size_t d = 0; d < a.size(); ++d) {
    if (a[d] == b[d] || b[d] == 1) {
      out[d] = a[d];
    } else if (a[d] == 1) {
      out[d] = b[d];
    } else {
      throw std::invalid_argument("broadcast: incompatible shapes " + shape_str(a) + " vs " + shape_str(b));
    }
  }
  return out;
}

namespace detail {
inline std::vector<std::size_t> broadcast_strides(const Shape& s) {
  auto st = strides_of(s);
  for (std::size_t d = 0; d < s.size(); ++d) {
    if (s[d] == 1) st[d] = 0;
  }
  return st;
}
}  // namespace detail

/// Elementwise product; the gradient to a broadcast operand is summed over
/// its broadcast axes.
template <typename T>
Tensor<T> broadcast_mul(Tape<T> tape, const Tensor<T>& a, const Tensor<T>& b) {
  const Shape oshape = broadcast_shape(a.shape(), b.shape());
  Tensor<T> out(oshape);
  const std::array<std::vector<std::size_t>, 2> strides{detail::broadcast_strides(a.shape()),
                                                        detail::broadcast_strides(b.shape())};
  detail::odometer(oshape, strides, [&](std::size_t i, const auto& o) { out[i] = a[o[0]] * b[o[1]]; });
  detail::require_finite(out, "broadcast_mul");
  if (tape) {
    tape->record({a, b}, out, [a, b, out, strides]() mutable {
      const auto go = out.grad();
      auto ga = a.grad();
      auto gb = b.grad();
      detail::odometer(out.shape(), strides, [&](std::size_t i, const auto& o) {
        ga[o[0]] += go[i] * b[o[1]];
        gb[o[1]] += go[i] * a[o[0]];
      });
    });
  }
  return out;
}

/// Same-shape elementwise sum.
template <typename T>
Tensor<T> add(Tape<T> tape, const Tensor<T>& a, const Tensor<T>& b) {
  if (a.shape() != b.shape()) {
    throw std::invalid_argument("add: shape mismatch " + shape_str(a.shape()) + " vs " + shape_str(b.shape()));
  }
  Tensor<T> out(a.shape());
  for (std::size_t i = 0; i < a.size(); ++i) out[i] = a[i] + b[i];
  detail::require_finite(out, "add");
  if (tape) {
    tape->record({a, b}, out, [a, b, out]() mutable {
      const auto go = out.grad();
      auto ga = a.grad();
      auto gb = b.grad();
      for (std::size_t i = 0; i < go.size(); ++i) {
        ga[i] += go[i];
        gb[i] += go[i];
      }
    });
  }
  return out;
}

/// Sum of all elements as a (1) tensor.
template <typename T>
Tensor<T> sum(Tape<T> tape, const Tensor<T>& x) {
  Tensor<T> out({1});
  T acc{0};
  for (std::size_t i = 0; i < x.size(); ++i) acc += x[i];
  out[0] = acc;
  detail::require_finite(out, "sum");
  if (tape) {
    tape->record({x}, out, [x, out]() mutable {
      const T g = out.grad()[0];
      auto gx = x.grad();
      for (auto& v : gx) v += g;
    });
  }
  return out;
}

/// Same data, new shape (element count must match).
template <typename T>
Tensor<T> reshape(Tape<T> tape, const Tensor<T>& x, Shape shape) {
  if (numel(shape) != x.size()) {
    throw std::invalid_argument("reshape: " + shape_str(x.shape()) + " -> " + shape_str(shape));
  }
  Tensor<T> out(std::move(shape), std::vector<T>(x.values().begin(), x.values().end()));
  if (tape) {
    tape->record({x}, out, [x, out]() mutable {
      const auto go = out.grad();
      auto gx = x.grad();
      for (std::size_t i = 0; i < go.size(); ++i) gx[i] += go[i];
    });
  }
  return out;
}

/// Concatenates along the last (channel) axis, a's channels first.
template <typename T>
Tensor<T> concat_channels(Tape<T> tape, const Tensor<T>& a, const Tensor<T>& b) {
  if (a.rank() != b.rank() || a.rank() == 0) throw std::invalid_argument("concat_channels: rank mismatch");
  for (std::size_t d = 0; d + 1 < a.rank(); ++d) {
    if (a.dim(d) != b.dim(d)) {
      throw std::invalid_argument("concat_channels: non-channel extents differ " + shape_str(a.shape()) +
                                  " vs " + shape_str(b.shape()));
    }
  }
  const std::size_t ca = a.shape().back(), cb = b.shape().back(), co = ca + cb;
  Shape oshape = a.shape();
  oshape.back() = co;
  Tensor<T> out(oshape);
  const std::size_t rows = a.size() / ca;
  for (std::size_t r = 0; r < rows; ++r) {
    std::copy_n(a.data() + r * ca, ca, out.data() + r * co);
    std::copy_n(b.data() + r * cb, cb, out.data() + r * co + ca);
  }
  if (tape) {
    tape->record({a, b}, out, [a, b, out, rows, ca, cb, co]() mutable {
      const auto go = out.grad();
      auto ga = a.grad();
      auto gb = b.grad();
      for (std::size_t r = 0; r < rows; ++r) {
        for (std::size_t c = 0; c < ca; ++c) ga[r * ca + c] += go[r * co + c];
        for (std::size_t c = 0; c < cb; ++c) gb[r * cb + c] += go[r * co + ca + c];
      }
    });
  }
  return out;
}

// ---------------------------------------------------------------------------
// Softmax and cross-entropy

namespace detail {
template <typename T>
void softmax_rows(const T* logits, T* probs, std::size_t B, std::size_t M) {
  for (std::size_t b = 0; b < B; ++b) {
    const T* l = logits + b * M;
    T* q = probs + b * M;
    const T mx = *std::max_element(l, l + M);
    T z{0};
    for (std::size_t j = 0; j < M; ++j) {
      q[j] = std::exp(l[j] - mx);
      z += q[j];
    }
    for (std::size_t j = 0; j < M; ++j) q[j] /= z;
  }
}
}  // namespace detail

template <typename T>
Tensor<T> softmax(Tape<T> tape, const Tensor<T>& logits) {
  detail::require_rank(logits.shape(), 2, "softmax");
  const std::size_t B = logits.dim(0), M = logits.dim(1);
  Tensor<T> out(logits.shape());
  detail::softmax_rows(logits.data(), out.data(), B, M);
  detail::require_finite(out, "softmax");
  if (tape) {
    tape->record({logits}, out, [logits, out, B, M]() mutable {
      const auto go = out.grad();
      auto gl = logits.grad();
      for (std::size_t b = 0; b < B; ++b) {
        T dot{0};
        for (std::size_t j = 0; j < M; ++j) dot += go[b * M + j] * out[b * M + j];
        for (std::size_t j = 0; j < M; ++j) gl[b * M + j] += out[b * M + j] * (go[b * M + j] - dot);
      }
    });
  }
  return out;
}

template <typename T>
struct XentResult {
  Tensor<T> loss;   // (1): batch-mean of -log q_true
  Tensor<T> probs;  // (B, M)
};

template <typename T>
XentResult<T> softmax_xent(Tape<T> tape, const Tensor<T>& logits, const Tensor<T>& targets) {
  detail::require_rank(logits.shape(), 2, "softmax_xent");
  if (targets.shape() != logits.shape()) throw std::invalid_argument("softmax_xent: target shape mismatch");
  const std::size_t B = logits.dim(0), M = logits.dim(1);
  if (M < 2) throw std::invalid_argument("softmax_xent: need at least two classes");
  std::vector<std::size_t> label(B);
  for (std::size_t b = 0; b < B; ++b) {
    std::size_t ones = 0;
    for (std::size_t j = 0; j < M; ++j) {
      const T t = targets[b * M + j];
      if (t == T{1}) {
        ++ones;
        label[b] = j;
      } else if (t != T{0}) {
        ones = 2;
      }
    }
    if (ones != 1) throw std::invalid_argument("softmax_xent: target row " + std::to_string(b) + " is not one-hot");
  }
  XentResult<T> r{Tensor<T>({1}), Tensor<T>(logits.shape())};
  detail::softmax_rows(logits.data(), r.probs.data(), B, M);
  T total{0};
  for (std::size_t b = 0; b < B; ++b) {
    // log q via the shifted logits keeps precision when q underflows.
    const T* l = logits.data() + b * M;
    const T mx = *std::max_element(l, l + M);
    T z{0};
    for (std::size_t j = 0; j < M; ++j) z += std::exp(l[j] - mx);
    total += std::log(z) - (l[label[b]] - mx);
  }
  r.loss[0] = total / static_cast<T>(B);
  detail::require_finite(r.loss, "softmax_xent");
  if (tape) {
    tape->record({logits}, r.loss, [logits, targets, loss = r.loss, probs = r.probs, B, M]() mutable {
      const T g = loss.grad()[0] / static_cast<T>(B);
      auto gl = logits.grad();
      for (std::size_t i = 0; i < B * M; ++i) gl[i] += g * (probs[i] - targets[i]);
    });
  }
  return r;
}

}  // namespace ftamod::ops
