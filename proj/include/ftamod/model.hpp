#pragma once

// Spectrogram CNN with an attention block after every convolution:
//   [conv3x3 -> attention -> relu -> maxpool2] x (n-1), conv3x3 -> attention -> relu,
//   flatten -> dense -> relu -> dense -> softmax.

#include <cstdint>
#include <functional>
#include <stdexcept>
#include <string>
#include <vector>

#include "ftamod/attention.hpp"
#include "ftamod/ops.hpp"
#include "ftamod/optim.hpp"
#include "ftamod/tensor.hpp"

namespace ftamod {

struct ArchitectureConfig {
  std::size_t height = 100;  // frequency
  std::size_t width = 100;   // time
  std::size_t channels = 3;
  std::vector<std::size_t> conv_channels{64, 32, 12, 8};
  std::size_t dense_width = 128;
  std::size_t n_classes = 11;
  AttentionVariant variant = AttentionVariant::Fta;
  std::size_t cam_reduction = 4;
  std::uint64_t seed = 1;

  /// Spatial extent entering conv layer i, plus the final (H, W) before
  /// flattening.
  std::vector<std::pair<std::size_t, std::size_t>> shape_walk() const {
    std::vector<std::pair<std::size_t, std::size_t>> walk;
    std::size_t h = height, w = width;
    for (std::size_t i = 0; i < conv_channels.size(); ++i) {
      walk.emplace_back(h, w);
      if (i + 1 < conv_channels.size()) {
        if (h < 2 || w < 2) {
          throw std::invalid_argument("architecture: spatial extent " + std::to_string(h) + "x" + std::to_string(w) +
                                      " too small to pool after conv layer " + std::to_string(i));
        }
        h /= 2;
        w /= 2;
      }
    }
    walk.emplace_back(h, w);
    return walk;
  }

  std::size_t flatten_width() const {
    const auto walk = shape_walk();
    return walk.back().first * walk.back().second * conv_channels.back();
  }

  void validate() const {
    if (height == 0 || width == 0 || channels == 0) throw std::invalid_argument("architecture: input extents must be positive");
    if (conv_channels.empty()) throw std::invalid_argument("architecture: need at least one conv layer");
    for (auto c : conv_channels) {
      if (c == 0) throw std::invalid_argument("architecture: conv channel counts must be positive");
    }
    if (dense_width == 0) throw std::invalid_argument("architecture: dense width must be positive");
    if (n_classes < 2) throw std::invalid_argument("architecture: need at least two classes");
    if (cam_reduction == 0) throw std::invalid_argument("architecture: CAM reduction must be positive");
    (void)shape_walk();
  }

  /// Closed-form parameter count.
  std::size_t param_count() const {
    std::size_t n = 0, cin = channels;
    for (auto c : conv_channels) {
      n += 9 * cin * c + c;
      n += AttentionBlock<double>::param_count(variant, c, cam_reduction);
      cin = c;
    }
    n += flatten_width() * dense_width + dense_width;
    n += dense_width * n_classes + n_classes;
    return n;
  }
};

template <typename T>
class Model {
 public:
  using Hook = std::function<void(std::size_t layer, const AttentionTrace<T>&)>;

  static Model build(const ArchitectureConfig& cfg) {
    cfg.validate();
    Model m;
    m.cfg_ = cfg;
    std::size_t cin = cfg.channels;
    for (std::size_t i = 0; i < cfg.conv_channels.size(); ++i) {
      const std::size_t c = cfg.conv_channels[i];
      Tensor<T> k({3, 3, cin, c});
      glorot_uniform(k, 9 * cin, 9 * c, param_seed(cfg.seed, conv_name(i) + ".k"));
      m.conv_k_.push_back(k);
      m.conv_b_.emplace_back(Shape{c});
      AttentionBlock<T> blk(cfg.variant, c, cfg.cam_reduction);
      blk.init(cfg.seed, attn_prefix(i));
      m.attn_.push_back(std::move(blk));
      cin = c;
    }
    const std::size_t flat = cfg.flatten_width();
    m.d1_w_ = Tensor<T>({flat, cfg.dense_width});
    glorot_uniform(m.d1_w_, flat, cfg.dense_width, param_seed(cfg.seed, "dense1.w"));
    m.d1_b_ = Tensor<T>({cfg.dense_width});
    m.d2_w_ = Tensor<T>({cfg.dense_width, cfg.n_classes});
    glorot_uniform(m.d2_w_, cfg.dense_width, cfg.n_classes, param_seed(cfg.seed, "dense2.w"));
    m.d2_b_ = Tensor<T>({cfg.n_classes});
    return m;
  }

  const ArchitectureConfig& config() const { return cfg_; }
  std::size_t n_layers() const { return conv_k_.size(); }
  const AttentionBlock<T>& attention(std::size_t i) const { return attn_.at(i); }
  const Tensor<T>& conv_kernel(std::size_t i) const { return conv_k_.at(i); }
  const Tensor<T>& conv_bias(std::size_t i) const { return conv_b_.at(i); }

  /// Parameters in a fixed order; the handles alias the model's storage.
  std::vector<NamedTensor<T>> parameters() const {
    std::vector<NamedTensor<T>> out;
    for (std::size_t i = 0; i < conv_k_.size(); ++i) {
      out.push_back({conv_name(i) + ".k", conv_k_[i]});
      out.push_back({conv_name(i) + ".b", conv_b_[i]});
      for (auto& p : attn_[i].parameters(attn_prefix(i))) out.push_back(std::move(p));
    }
    out.push_back({"dense1.w", d1_w_});
    out.push_back({"dense1.b", d1_b_});
    out.push_back({"dense2.w", d2_w_});
    out.push_back({"dense2.b", d2_b_});
    return out;
  }

  std::vector<Tensor<T>> parameter_tensors() const {
    std::vector<Tensor<T>> out;
    for (auto& p : parameters()) out.push_back(p.tensor);
    return out;
  }

  std::size_t param_count() const {
    std::size_t n = 0;
    for (const auto& p : parameters()) n += p.tensor.size();
    return n;
  }

  /// Deep copy with independent storage.
  Model clone() const {
    Model m = build(cfg_);
    m.copy_values_from(*this);
    return m;
  }

  void copy_values_from(const Model& other) {
    auto dst = parameters();
    const auto src = other.parameters();
    if (dst.size() != src.size()) throw std::invalid_argument("copy_values_from: architecture mismatch");
    for (std::size_t i = 0; i < dst.size(); ++i) {
      if (dst[i].tensor.shape() != src[i].tensor.shape()) throw std::invalid_argument("copy_values_from: shape mismatch");
      std::copy(src[i].tensor.values().begin(), src[i].tensor.values().end(), dst[i].tensor.values().begin());
    }
  }

  void zero_grad() {
    for (auto& p : parameters()) p.tensor.zero_grad();
  }

  Tensor<T> logits(ops::Tape<T> tape, const Tensor<T>& batch, const Hook& hook = {}) const {
    if (batch.rank() != 4 || batch.dim(1) != cfg_.height || batch.dim(2) != cfg_.width || batch.dim(3) != cfg_.channels) {
      throw std::invalid_argument("model: batch shape " + shape_str(batch.shape()) + " does not match input (B," +
                                  std::to_string(cfg_.height) + "," + std::to_string(cfg_.width) + "," +
                                  std::to_string(cfg_.channels) + ")");
    }
    Tensor<T> h = batch;
    for (std::size_t i = 0; i < conv_k_.size(); ++i) {
      auto f = ops::conv2d(tape, h, conv_k_[i], conv_b_[i]);
      auto tr = attn_[i].forward(tape, f);
      if (hook) hook(i, tr);
      h = ops::relu(tape, tr.output);
      if (i + 1 < conv_k_.size()) h = ops::maxpool2(tape, h);
    }
    const std::size_t B = batch.dim(0);
    auto flat = ops::reshape(tape, h, {B, h.size() / B});
    auto hidden = ops::relu(tape, ops::dense(tape, flat, d1_w_, d1_b_));
    return ops::dense(tape, hidden, d2_w_, d2_b_);
  }

  /// Class probabilities, (B, n_classes).
  Tensor<T> forward(ops::Tape<T> tape, const Tensor<T>& batch, const Hook& hook = {}) const {
    return ops::softmax(tape, logits(tape, batch, hook));
  }

  ops::XentResult<T> loss(ops::Tape<T> tape, const Tensor<T>& batch, const Tensor<T>& targets) const {
    if (targets.rank() != 2 || targets.dim(1) != cfg_.n_classes) {
      throw std::invalid_argument("model: targets must be (B, " + std::to_string(cfg_.n_classes) + ")");
    }
    return ops::softmax_xent(tape, logits(tape, batch), targets);
  }

  static std::string conv_name(std::size_t i) { return "conv" + std::to_string(i); }
  static std::string attn_prefix(std::size_t i) { return "attn" + std::to_string(i) + "."; }

 private:
  ArchitectureConfig cfg_;
  std::vector<Tensor<T>> conv_k_, conv_b_;
  std::vector<AttentionBlock<T>> attn_;
  Tensor<T> d1_w_, d1_b_, d2_w_, d2_b_;
};

/// One-hot rows for class labels.
template <typename T>
Tensor<T> one_hot(std::span<const std::size_t> labels, std::size_t n_classes) {
  Tensor<T> t({labels.size(), n_classes});
  for (std::size_t i = 0; i < labels.size(); ++i) {
    if (labels[i] >= n_classes) throw std::invalid_argument("label out of range for one-hot encoding");
    t[i * n_classes + labels[i]] = T{1};
  }
  return t;
}

}  // namespace ftamod
