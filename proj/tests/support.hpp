#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <random>
#include <vector>

#include "ftamod/ops.hpp"
#include "ftamod/tensor.hpp"

namespace ftamod::testing {

using Td = Tensor<double>;
using Fn = std::function<Td(ops::Tape<double>, const std::vector<Td>&)>;

inline Td random_tensor(const Shape& s, std::mt19937_64& rng, double lo = -1.0, double hi = 1.0) {
  std::uniform_real_distribution<double> u(lo, hi);
  Td t(s);
  for (auto& v : t.values()) v = u(rng);
  return t;
}

// Values with magnitude in [margin, 1] and random sign, keeping relu and max
// away from their kinks.
inline Td away_from_zero(const Shape& s, std::mt19937_64& rng, double margin = 0.05) {
  std::uniform_real_distribution<double> u(margin, 1.0);
  std::bernoulli_distribution sign(0.5);
  Td t(s);
  for (auto& v : t.values()) v = sign(rng) ? u(rng) : -u(rng);
  return t;
}

// Distinct values spaced well apart, shuffled: no near-ties for max.
inline Td distinct_tensor(const Shape& s, std::mt19937_64& rng) {
  Td t(s);
  for (std::size_t i = 0; i < t.size(); ++i) t[i] = -1.0 + 2.0 * static_cast<double>(i) / static_cast<double>(t.size());
  std::shuffle(t.values().begin(), t.values().end(), rng);
  return t;
}

inline std::size_t rand_extent(std::mt19937_64& rng, std::size_t lo, std::size_t hi) {
  return std::uniform_int_distribution<std::size_t>(lo, hi)(rng);
}

struct GradReport {
  double max_rel_error = 0.0;
  std::size_t checked = 0;
};

inline double rel_error(double a, double n) {
  return std::abs(a - n) / std::max({std::abs(a), std::abs(n), 1e-3});
}

// Central differences of sum(f(inputs) * R) for a fixed random R against the
// tape gradient of every input element.
inline GradReport gradcheck(const Fn& f, std::vector<Td> inputs, std::uint64_t seed, double h = 1e-5) {
  std::mt19937_64 rng(seed);
  const auto probe = f(nullptr, inputs);
  const auto weights = random_tensor(probe.shape(), rng);
  auto scalar = [&](ops::Tape<double> tape) { return ops::sum(tape, ops::broadcast_mul(tape, f(tape, inputs), weights)); };

  for (auto& t : inputs) t.zero_grad();
  Graph<double> g;
  g.backward(scalar(&g));
  std::vector<std::vector<double>> analytic;
  for (auto& t : inputs) analytic.emplace_back(t.grad().begin(), t.grad().end());

  GradReport rep;
  for (std::size_t i = 0; i < inputs.size(); ++i) {
    auto& t = inputs[i];
    for (std::size_t j = 0; j < t.size(); ++j) {
      const double v = t[j];
      t[j] = v + h;
      const double up = scalar(nullptr)[0];
      t[j] = v - h;
      const double dn = scalar(nullptr)[0];
      t[j] = v;
      rep.max_rel_error = std::max(rep.max_rel_error, rel_error(analytic[i][j], (up - dn) / (2 * h)));
      ++rep.checked;
    }
  }
  return rep;
}

inline double max_abs_diff(std::span<const double> a, std::span<const double> b) {
  if (a.size() != b.size()) return INFINITY;
  double m = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) m = std::max(m, std::abs(a[i] - b[i]));
  return m;
}

// Straight-line references, written without the library's ops.

inline double sigmoid_ref(double x) { return 1.0 / (1.0 + std::exp(-x)); }

// NHWC same-padded convolution by direct summation.
inline std::vector<double> conv_ref(const Td& x, const Td& k, const Td& b) {
  const std::size_t B = x.dim(0), H = x.dim(1), W = x.dim(2), Ci = x.dim(3);
  const std::size_t KH = k.dim(0), KW = k.dim(1), Co = k.dim(3);
  std::vector<double> out(B * H * W * Co, 0.0);
  for (std::size_t n = 0; n < B; ++n)
    for (std::size_t i = 0; i < H; ++i)
      for (std::size_t j = 0; j < W; ++j)
        for (std::size_t o = 0; o < Co; ++o) {
          double acc = b[o];
          for (std::size_t u = 0; u < KH; ++u)
            for (std::size_t v = 0; v < KW; ++v)
              for (std::size_t c = 0; c < Ci; ++c) {
                const long y = static_cast<long>(i + u) - static_cast<long>(KH / 2);
                const long xx = static_cast<long>(j + v) - static_cast<long>(KW / 2);
                if (y < 0 || xx < 0 || y >= static_cast<long>(H) || xx >= static_cast<long>(W)) continue;
                acc += x[((n * H + y) * W + xx) * Ci + c] * k[((u * KW + v) * Ci + c) * Co + o];
              }
          out[((n * H + i) * W + j) * Co + o] = acc;
        }
  return out;
}

inline std::vector<double> dense_ref(const Td& x, const Td& w, const Td& b) {
  const std::size_t B = x.dim(0), n = x.dim(1), m = w.dim(1);
  std::vector<double> out(B * m);
  for (std::size_t r = 0; r < B; ++r)
    for (std::size_t c = 0; c < m; ++c) {
      double acc = b[c];
      for (std::size_t i = 0; i < n; ++i) acc += x[r * n + i] * w[i * m + c];
      out[r * m + c] = acc;
    }
  return out;
}

}  // namespace ftamod::testing
