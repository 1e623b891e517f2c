#pragma once

// Channel, frequency and time attention blocks and the ablation variants
// built from them. Feature maps are (B, H, W, C) with H the frequency axis
// and W the time axis.

#include <array>
#include <cstdint>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "ftamod/ops.hpp"
#include "ftamod/optim.hpp"
#include "ftamod/tensor.hpp"

namespace ftamod {

enum class AttentionVariant { None, CamFam, CamTam, CamFamTam, Cbam, Fta };

inline constexpr std::array<AttentionVariant, 6> kAllVariants = {
    AttentionVariant::None,      AttentionVariant::CamFam, AttentionVariant::CamTam,
    AttentionVariant::CamFamTam, AttentionVariant::Cbam,   AttentionVariant::Fta,
};

inline std::string_view to_string(AttentionVariant v) {
  switch (v) {
    case AttentionVariant::None: return "none";
    case AttentionVariant::CamFam: return "cam-fam";
    case AttentionVariant::CamTam: return "cam-tam";
    case AttentionVariant::CamFamTam: return "cam-fam-tam";
    case AttentionVariant::Cbam: return "cbam";
    case AttentionVariant::Fta: return "fta";
  }
  return "?";
}

inline AttentionVariant parse_variant(std::string_view tag) {
  for (auto v : kAllVariants) {
    if (to_string(v) == tag) return v;
  }
  throw std::invalid_argument("unknown attention variant '" + std::string(tag) +
                              "' (expected none|cam-fam|cam-tam|cam-fam-tam|cbam|fta)");
}

template <typename T>
struct NamedTensor {
  std::string name;
  Tensor<T> tensor;
};

inline std::size_t cam_hidden_width(std::size_t channels, std::size_t reduction) {
  if (reduction == 0) throw std::invalid_argument("CAM reduction ratio must be positive");
  return std::max<std::size_t>(1, (channels + reduction - 1) / reduction);
}

// ---------------------------------------------------------------------------
// Parameter sets

template <typename T>
struct CamParams {
  Tensor<T> w1, b1, w2, b2;  // shared MLP: C -> hidden -> C

  static CamParams zeros(std::size_t channels, std::size_t reduction) {
    const auto h = cam_hidden_width(channels, reduction);
    return {Tensor<T>({channels, h}), Tensor<T>({h}), Tensor<T>({h, channels}), Tensor<T>({channels})};
  }
  void init(std::uint64_t seed, const std::string& prefix) {
    glorot_uniform(w1, w1.dim(0), w1.dim(1), param_seed(seed, prefix + "w1"));
    glorot_uniform(w2, w2.dim(0), w2.dim(1), param_seed(seed, prefix + "w2"));
  }
  void collect(std::vector<NamedTensor<T>>& out, const std::string& prefix) const {
    out.push_back({prefix + "w1", w1});
    out.push_back({prefix + "b1", b1});
    out.push_back({prefix + "w2", w2});
    out.push_back({prefix + "b2", b2});
  }
  static std::size_t count(std::size_t c, std::size_t r) {
    const auto h = cam_hidden_width(c, r);
    return c * h + h + h * c + c;
  }
};

/// Three cascaded 3x3 convolutions 2 -> 8 -> 8 -> 1.
template <typename T>
struct AxisAttnParams {
  static constexpr std::size_t kWidth = 8;
  Tensor<T> k1, b1, k2, b2, k3, b3;

  static AxisAttnParams zeros() {
    return {Tensor<T>({3, 3, 2, kWidth}), Tensor<T>({kWidth}), Tensor<T>({3, 3, kWidth, kWidth}),
            Tensor<T>({kWidth}),          Tensor<T>({3, 3, kWidth, 1}), Tensor<T>({1})};
  }
  void init(std::uint64_t seed, const std::string& prefix) {
    glorot_uniform(k1, 9 * 2, 9 * kWidth, param_seed(seed, prefix + "k1"));
    glorot_uniform(k2, 9 * kWidth, 9 * kWidth, param_seed(seed, prefix + "k2"));
    glorot_uniform(k3, 9 * kWidth, 9, param_seed(seed, prefix + "k3"));
  }
  void collect(std::vector<NamedTensor<T>>& out, const std::string& prefix) const {
    out.push_back({prefix + "k1", k1});
    out.push_back({prefix + "b1", b1});
    out.push_back({prefix + "k2", k2});
    out.push_back({prefix + "b2", b2});
    out.push_back({prefix + "k3", k3});
    out.push_back({prefix + "b3", b3});
  }
  static constexpr std::size_t count() {
    return 9 * 2 * kWidth + kWidth + 9 * kWidth * kWidth + kWidth + 9 * kWidth + 1;
  }
};

/// CBAM spatial branch: one 7x7 conv over [avg_c; max_c].
template <typename T>
struct SpatialParams {
  Tensor<T> k, b;

  static SpatialParams zeros() { return {Tensor<T>({7, 7, 2, 1}), Tensor<T>({1})}; }
  void init(std::uint64_t seed, const std::string& prefix) {
    glorot_uniform(k, 49 * 2, 49, param_seed(seed, prefix + "k"));
  }
  void collect(std::vector<NamedTensor<T>>& out, const std::string& prefix) const {
    out.push_back({prefix + "k", k});
    out.push_back({prefix + "b", b});
  }
  static constexpr std::size_t count() { return 49 * 2 + 1; }
};

template <typename T>
struct FtaParams {
  CamParams<T> cam;
  AxisAttnParams<T> fam;
  AxisAttnParams<T> tam;
  Tensor<T> fuse_w;  // (1, 1, 2C, C)
  Tensor<T> fuse_b;  // (C)

  static FtaParams zeros(std::size_t channels, std::size_t reduction) {
    return {CamParams<T>::zeros(channels, reduction), AxisAttnParams<T>::zeros(), AxisAttnParams<T>::zeros(),
            Tensor<T>({1, 1, 2 * channels, channels}), Tensor<T>({channels})};
  }
};

// ---------------------------------------------------------------------------
// Blocks

template <typename T>
struct AttnOut {
  Tensor<T> map;      // attention map in (0,1)
  Tensor<T> refined;  // map (x) input
};

namespace detail {

template <typename T>
Tensor<T> shared_mlp(ops::Tape<T> tape, const Tensor<T>& pooled, const CamParams<T>& p) {
  const std::size_t B = pooled.dim(0), C = pooled.dim(3);
  auto flat = ops::reshape(tape, pooled, {B, C});
  auto hidden = ops::relu(tape, ops::dense(tape, flat, p.w1, p.b1));
  return ops::dense(tape, hidden, p.w2, p.b2);
}

template <typename T>
Tensor<T> conv_stack(ops::Tape<T> tape, const Tensor<T>& x, const AxisAttnParams<T>& p) {
  auto h = ops::relu(tape, ops::conv2d(tape, x, p.k1, p.b1));
  h = ops::relu(tape, ops::conv2d(tape, h, p.k2, p.b2));
  return ops::sigmoid(tape, ops::conv2d(tape, h, p.k3, p.b3));
}

// Average along `axis` (2 = time for FAM, 1 = frequency for TAM), then
// [avg_c; max_c] over channels, conv stack, sigmoid.
template <typename T>
AttnOut<T> axis_attention(ops::Tape<T> tape, const Tensor<T>& fc, const AxisAttnParams<T>& p, std::size_t axis) {
  if (fc.rank() != 4) throw std::invalid_argument("axis attention expects a (B,H,W,C) feature map");
  auto axis_feat = ops::reduce_pool(tape, fc, {axis}, ops::PoolKind::Avg);
  auto avg_c = ops::reduce_pool(tape, axis_feat, {3}, ops::PoolKind::Avg);
  auto max_c = ops::reduce_pool(tape, axis_feat, {3}, ops::PoolKind::Max);
  auto map = conv_stack(tape, ops::concat_channels(tape, avg_c, max_c), p);
  return {map, ops::broadcast_mul(tape, fc, map)};
}

}  // namespace detail

/// M_c = sigmoid(MLP(avgpool(F)) + MLP(maxpool(F))), pools global over H x W.
template <typename T>
AttnOut<T> cam_forward(ops::Tape<T> tape, const Tensor<T>& f, const CamParams<T>& p) {
  if (f.rank() != 4) throw std::invalid_argument("cam_forward expects a (B,H,W,C) feature map");
  const std::size_t B = f.dim(0), C = f.dim(3);
  if (p.w1.dim(0) != C) throw std::invalid_argument("cam_forward: parameter channel count mismatch");
  auto avg = ops::reduce_pool(tape, f, {1, 2}, ops::PoolKind::Avg);
  auto mx = ops::reduce_pool(tape, f, {1, 2}, ops::PoolKind::Max);
  auto logits = ops::add(tape, detail::shared_mlp(tape, avg, p), detail::shared_mlp(tape, mx, p));
  auto map = ops::reshape(tape, ops::sigmoid(tape, logits), {B, 1, 1, C});
  return {map, ops::broadcast_mul(tape, f, map)};
}

/// Frequency attention: map is (B, H, 1, 1).
template <typename T>
AttnOut<T> fam_forward(ops::Tape<T> tape, const Tensor<T>& fc, const AxisAttnParams<T>& p) {
  return detail::axis_attention(tape, fc, p, 2);
}

/// Time attention: map is (B, 1, W, 1).
template <typename T>
AttnOut<T> tam_forward(ops::Tape<T> tape, const Tensor<T>& fc, const AxisAttnParams<T>& p) {
  return detail::axis_attention(tape, fc, p, 1);
}

/// CBAM spatial attention: map is (B, H, W, 1).
template <typename T>
AttnOut<T> spatial_forward(ops::Tape<T> tape, const Tensor<T>& fc, const SpatialParams<T>& p) {
  auto avg_c = ops::reduce_pool(tape, fc, {3}, ops::PoolKind::Avg);
  auto max_c = ops::reduce_pool(tape, fc, {3}, ops::PoolKind::Max);
  auto map = ops::sigmoid(tape, ops::conv2d(tape, ops::concat_channels(tape, avg_c, max_c), p.k, p.b));
  return {map, ops::broadcast_mul(tape, fc, map)};
}

/// Every intermediate of one attention block; members a variant does not
/// produce stay undefined.
template <typename T>
struct AttentionTrace {
  Tensor<T> input;  // F
  Tensor<T> mc, fc;
  Tensor<T> mf, ff;
  Tensor<T> mt, ft;
  Tensor<T> ms;     // CBAM spatial map
  Tensor<T> output;  // F'
};

/// F_c = M_c(F)*F; F_f = M_f(F_c)*F_c and F_t = M_t(F_c)*F_c from the same
/// F_c; F' = 1x1 conv over [F_f; F_t] back to C channels.
template <typename T>
AttentionTrace<T> fta_forward(ops::Tape<T> tape, const Tensor<T>& f, const FtaParams<T>& p) {
  AttentionTrace<T> tr;
  tr.input = f;
  auto cam = cam_forward(tape, f, p.cam);
  tr.mc = cam.map;
  tr.fc = cam.refined;
  auto fam = fam_forward(tape, tr.fc, p.fam);
  auto tam = tam_forward(tape, tr.fc, p.tam);
  tr.mf = fam.map;
  tr.ff = fam.refined;
  tr.mt = tam.map;
  tr.ft = tam.refined;
  tr.output = ops::conv2d(tape, ops::concat_channels(tape, tr.ff, tr.ft), p.fuse_w, p.fuse_b);
  return tr;
}

/// One attention block of a given variant, owning its parameters.
template <typename T>
class AttentionBlock {
 public:
  AttentionBlock() = default;

  /// Zero-initialized parameters; call init() for the seeded Glorot fill.
  AttentionBlock(AttentionVariant v, std::size_t channels, std::size_t reduction = 4)
      : variant_(v), channels_(channels) {
    if (channels == 0) throw std::invalid_argument("attention block needs at least one channel");
    if (v == AttentionVariant::None) return;
    cam_ = CamParams<T>::zeros(channels, reduction);
    switch (v) {
      case AttentionVariant::CamFam:
        fam_ = AxisAttnParams<T>::zeros();
        break;
      case AttentionVariant::CamTam:
        tam_ = AxisAttnParams<T>::zeros();
        break;
      case AttentionVariant::CamFamTam:
      case AttentionVariant::Fta:
        fam_ = AxisAttnParams<T>::zeros();
        tam_ = AxisAttnParams<T>::zeros();
        break;
      case AttentionVariant::Cbam:
        spatial_ = SpatialParams<T>::zeros();
        break;
      default:
        break;
    }
    if (v == AttentionVariant::Fta) {
      fuse_w_ = Tensor<T>({1, 1, 2 * channels, channels});
      fuse_b_ = Tensor<T>({channels});
    }
  }

  AttentionVariant variant() const { return variant_; }
  std::size_t channels() const { return channels_; }

  void init(std::uint64_t seed, const std::string& prefix) {
    if (cam_) cam_->init(seed, prefix + "cam.");
    if (fam_) fam_->init(seed, prefix + "fam.");
    if (tam_) tam_->init(seed, prefix + "tam.");
    if (spatial_) spatial_->init(seed, prefix + "spatial.");
    if (fuse_w_.defined()) glorot_uniform(fuse_w_, 2 * channels_, channels_, param_seed(seed, prefix + "fuse.w"));
  }

  std::vector<NamedTensor<T>> parameters(const std::string& prefix = "") const {
    std::vector<NamedTensor<T>> out;
    if (cam_) cam_->collect(out, prefix + "cam.");
    if (fam_) fam_->collect(out, prefix + "fam.");
    if (tam_) tam_->collect(out, prefix + "tam.");
    if (spatial_) spatial_->collect(out, prefix + "spatial.");
    if (fuse_w_.defined()) {
      out.push_back({prefix + "fuse.w", fuse_w_});
      out.push_back({prefix + "fuse.b", fuse_b_});
    }
    return out;
  }

  const CamParams<T>& cam() const { return *cam_; }
  const AxisAttnParams<T>& fam() const { return *fam_; }
  const AxisAttnParams<T>& tam() const { return *tam_; }
  const SpatialParams<T>& spatial() const { return *spatial_; }
  FtaParams<T> fta_params() const { return {*cam_, *fam_, *tam_, fuse_w_, fuse_b_}; }

  AttentionTrace<T> forward(ops::Tape<T> tape, const Tensor<T>& f) const {
    if (f.rank() != 4 || f.dim(3) != channels_) {
      throw std::invalid_argument("attention block: expected " + std::to_string(channels_) + " channels, got " +
                                  shape_str(f.shape()));
    }
    AttentionTrace<T> tr;
    tr.input = f;
    switch (variant_) {
      case AttentionVariant::None:
        tr.output = f;
        return tr;
      case AttentionVariant::Fta:
        return fta_forward(tape, f, fta_params());
      default:
        break;
    }
    auto cam = cam_forward(tape, f, *cam_);
    tr.mc = cam.map;
    tr.fc = cam.refined;
    switch (variant_) {
      case AttentionVariant::CamFam: {
        auto a = fam_forward(tape, tr.fc, *fam_);
        tr.mf = a.map;
        tr.ff = tr.output = a.refined;
        break;
      }
      case AttentionVariant::CamTam: {
        auto a = tam_forward(tape, tr.fc, *tam_);
        tr.mt = a.map;
        tr.ft = tr.output = a.refined;
        break;
      }
      case AttentionVariant::CamFamTam: {
        auto a = fam_forward(tape, tr.fc, *fam_);
        tr.mf = a.map;
        tr.ff = a.refined;
        auto b = tam_forward(tape, tr.ff, *tam_);
        tr.mt = b.map;
        tr.ft = tr.output = b.refined;
        break;
      }
      case AttentionVariant::Cbam: {
        auto a = spatial_forward(tape, tr.fc, *spatial_);
        tr.ms = a.map;
        tr.output = a.refined;
        break;
      }
      default:
        throw std::logic_error("unhandled attention variant");
    }
    return tr;
  }

  /// Closed-form parameter count.
  static std::size_t param_count(AttentionVariant v, std::size_t c, std::size_t r = 4) {
    const std::size_t cam = CamParams<T>::count(c, r);
    const std::size_t axis = AxisAttnParams<T>::count();
    switch (v) {
      case AttentionVariant::None: return 0;
      case AttentionVariant::CamFam:
      case AttentionVariant::CamTam: return cam + axis;
      case AttentionVariant::CamFamTam: return cam + 2 * axis;
      case AttentionVariant::Cbam: return cam + SpatialParams<T>::count();
      case AttentionVariant::Fta: return cam + 2 * axis + 2 * c * c + c;
    }
    return 0;
  }

 private:
  AttentionVariant variant_ = AttentionVariant::None;
  std::size_t channels_ = 0;
  std::optional<CamParams<T>> cam_;
  std::optional<AxisAttnParams<T>> fam_;
  std::optional<AxisAttnParams<T>> tam_;
  std::optional<SpatialParams<T>> spatial_;
  Tensor<T> fuse_w_, fuse_b_;
};

}  // namespace ftamod
