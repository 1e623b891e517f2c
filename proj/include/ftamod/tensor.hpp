#pragma once

// Dense tensors and the recording tape used for reverse-mode gradients.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <functional>
#include <memory>
#include <numeric>
#include <span>
#include <sstream>
#include <stdexcept>
#include <string>
#include <unordered_map>
#include <unordered_set>
#include <utility>
#include <vector>

namespace ftamod {

using Shape = std::vector<std::size_t>;

inline std::size_t numel(const Shape& s) {
  return std::accumulate(s.begin(), s.end(), std::size_t{1}, std::multiplies<>());
}

inline std::string shape_str(const Shape& s) {
  std::ostringstream os;
  os << '(';
  for (std::size_t i = 0; i < s.size(); ++i) os << (i ? "," : "") << s[i];
  os << ')';
  return os.str();
}

/// Handle to shared storage: copies alias the same values and gradient.
/// Use clone() for an independent copy.
template <typename T>
class Tensor {
 public:
  using value_type = T;

  Tensor() = default;

  explicit Tensor(Shape shape, T fill = T{0}) : s_(std::make_shared<Storage>()) {
    for (auto d : shape) {
      if (d == 0) throw std::invalid_argument("tensor extents must be positive: " + shape_str(shape));
    }
    s_->value.assign(numel(shape), fill);
    s_->shape = std::move(shape);
  }

  Tensor(Shape shape, std::vector<T> values) : Tensor(std::move(shape)) {
    if (values.size() != s_->value.size()) {
      throw std::invalid_argument("tensor data length " + std::to_string(values.size()) +
                                  " does not match shape " + shape_str(s_->shape));
    }
    s_->value = std::move(values);
  }

  bool defined() const { return static_cast<bool>(s_); }
  const Shape& shape() const { return s_->shape; }
  std::size_t rank() const { return s_->shape.size(); }
  std::size_t dim(std::size_t i) const { return s_->shape.at(i); }
  std::size_t size() const { return s_->value.size(); }

  T* data() { return s_->value.data(); }
  const T* data() const { return s_->value.data(); }
  std::span<T> values() { return s_->value; }
  std::span<const T> values() const { return s_->value; }
  T& operator[](std::size_t i) { return s_->value[i]; }
  const T& operator[](std::size_t i) const { return s_->value[i]; }

  // 4-D (B, H, W, C) accessors.
  T& at(std::size_t b, std::size_t h, std::size_t w, std::size_t c) {
    const auto& s = s_->shape;
    return s_->value[((b * s[1] + h) * s[2] + w) * s[3] + c];
  }
  const T& at(std::size_t b, std::size_t h, std::size_t w, std::size_t c) const {
    const auto& s = s_->shape;
    return s_->value[((b * s[1] + h) * s[2] + w) * s[3] + c];
  }

  bool has_grad() const { return !s_->grad.empty(); }

  /// Gradient buffer, zero-allocated on first access. Writable through
  /// const handles: gradients are bookkeeping, not part of the value.
  std::span<T> grad() const {
    if (s_->grad.empty()) s_->grad.assign(s_->value.size(), T{0});
    return s_->grad;
  }

  void zero_grad() const {
    if (!s_->grad.empty()) std::fill(s_->grad.begin(), s_->grad.end(), T{0});
  }

  Tensor clone() const {
    Tensor t;
    t.s_ = std::make_shared<Storage>();
    t.s_->shape = s_->shape;
    t.s_->value = s_->value;
    return t;
  }

  void fill(T v) { std::fill(s_->value.begin(), s_->value.end(), v); }

  const void* id() const { return s_.get(); }

 private:
  struct Storage {
    Shape shape;
    std::vector<T> value;
    mutable std::vector<T> grad;
  };
  std::shared_ptr<Storage> s_;
};

template <typename T>
bool all_finite(std::span<const T> v) {
  return std::all_of(v.begin(), v.end(), [](T x) { return std::isfinite(x); });
}

/// Records differentiable operations in execution order. backward() replays
/// them in exact reverse order; each replay adds into its inputs' gradients,
/// so a tensor consumed twice receives the sum of both contributions.
template <typename T>
class Graph {
 public:
  using BackwardFn = std::function<void()>;

  void record(std::vector<Tensor<T>> inputs, Tensor<T> output, BackwardFn fn) {
    ops_.push_back({std::move(inputs), std::move(output), std::move(fn)});
  }

  std::size_t size() const { return ops_.size(); }
  bool empty() const { return ops_.empty(); }
  void clear() { ops_.clear(); }

  /// Seeds d(loss)/d(loss) = 1 and propagates. Leaf gradients accumulate
  /// (call zero_grad on parameters between steps); gradients of recorded
  /// intermediates are reset first.
  void backward(Tensor<T> loss) {
    if (!loss.defined() || loss.size() != 1) {
      throw std::invalid_argument("backward: loss must be a scalar tensor");
    }
    std::unordered_map<const void*, std::size_t> producer;
    for (std::size_t i = 0; i < ops_.size(); ++i) {
      if (!producer.emplace(ops_[i].output.id(), i).second) {
        throw std::logic_error("backward: graph cycle (tensor produced twice)");
      }
    }
    // An input must be a leaf or produced by an earlier operation.
    for (std::size_t i = 0; i < ops_.size(); ++i) {
      for (const auto& in : ops_[i].inputs) {
        auto it = producer.find(in.id());
        if (it != producer.end() && it->second >= i) {
          throw std::logic_error("backward: graph cycle (input produced later)");
        }
      }
    }
    if (!producer.contains(loss.id())) {
      throw std::invalid_argument("backward: loss was not produced by a recorded operation");
    }
    for (auto& op : ops_) op.output.zero_grad();
    loss.grad()[0] = T{1};

    std::unordered_set<const void*> reached{loss.id()};
    for (auto it = ops_.rbegin(); it != ops_.rend(); ++it) {
      if (!reached.contains(it->output.id())) continue;
      it->fn();
      for (const auto& in : it->inputs) reached.insert(in.id());
    }
  }

 private:
  struct Entry {
    std::vector<Tensor<T>> inputs;
    Tensor<T> output;
    BackwardFn fn;
  };
  std::vector<Entry> ops_;
};

}  // namespace ftamod
