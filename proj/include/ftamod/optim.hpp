#pragma once

#include <cmath>
#include <cstdint>
#include <random>
#include <span>
#include <stdexcept>
#include <string_view>
#include <vector>

#include "ftamod/binary_io.hpp"
#include "ftamod/tensor.hpp"

namespace ftamod {

/// RMSprop: s <- rho*s + (1-rho)*g^2;  w <- w - lr*g/(sqrt(s) + eps).
template <typename T>
class RmsProp {
 public:
  double learning_rate = 5e-4;
  double rho = 0.9;
  double epsilon = 1e-7;

  RmsProp() = default;
  RmsProp(double lr, double rho_, double eps) : learning_rate(lr), rho(rho_), epsilon(eps) {}

  /// Applies one update using each parameter's accumulated gradient.
  void step(std::span<Tensor<T>> params) {
    if (accum_.empty()) {
      for (const auto& p : params) accum_.emplace_back(p.size(), T{0});
    }
    if (accum_.size() != params.size()) throw std::invalid_argument("rmsprop: parameter count changed");
    const T lr = static_cast<T>(learning_rate);
    const T r = static_cast<T>(rho);
    const T eps = static_cast<T>(epsilon);
    for (std::size_t i = 0; i < params.size(); ++i) {
      auto& p = params[i];
      auto& s = accum_[i];
      if (s.size() != p.size()) throw std::invalid_argument("rmsprop: shape mismatch for parameter " + std::to_string(i));
      const auto g = p.grad();
      for (std::size_t j = 0; j < s.size(); ++j) {
        s[j] = r * s[j] + (T{1} - r) * g[j] * g[j];
        p[j] -= lr * g[j] / (std::sqrt(s[j]) + eps);
      }
    }
  }

  const std::vector<std::vector<T>>& state() const { return accum_; }
  void set_state(std::vector<std::vector<T>> s) { accum_ = std::move(s); }

 private:
  std::vector<std::vector<T>> accum_;
};

/// Per-name RNG seed: a parameter's initial values depend only on the model
/// seed and its own name, not on which other layers exist.
inline std::uint64_t param_seed(std::uint64_t seed, std::string_view name) {
  return binio::splitmix64(seed ^ binio::fnv1a(name));
}

/// Glorot-uniform fill, limit sqrt(6 / (fan_in + fan_out)).
template <typename T>
void glorot_uniform(Tensor<T>& t, std::size_t fan_in, std::size_t fan_out, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  const double limit = std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
  std::uniform_real_distribution<double> u(-limit, limit);
  for (auto& v : t.values()) v = static_cast<T>(u(rng));
}

}  // namespace ftamod
