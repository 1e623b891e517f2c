#pragma once

// Dumps the intermediate attention tensors of one layer as PGM images
// (channel mean, display-scaled) and raw CSV.

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "ftamod/attention.hpp"
#include "ftamod/model.hpp"
#include "ftamod/spectro.hpp"

namespace ftamod {

struct InspectResult {
  bool passthrough = false;  // variant none: only F is available
  std::vector<std::string> maps;
  AttentionTrace<double> trace;  // captured tensors, first batch element
};

namespace detail {

template <typename T>
std::vector<double> channel_mean(const Tensor<T>& t) {
  const std::size_t H = t.dim(1), W = t.dim(2), C = t.dim(3);
  std::vector<double> g(H * W, 0.0);
  for (std::size_t h = 0; h < H; ++h) {
    for (std::size_t w = 0; w < W; ++w) {
      double acc = 0.0;
      for (std::size_t c = 0; c < C; ++c) acc += static_cast<double>(t.at(0, h, w, c));
      g[h * W + w] = acc / static_cast<double>(C);
    }
  }
  return g;
}

template <typename T>
Tensor<double> to_double(const Tensor<T>& t) {
  if (!t.defined()) return {};
  Tensor<double> d(t.shape());
  for (std::size_t i = 0; i < t.size(); ++i) d[i] = static_cast<double>(t[i]);
  return d;
}

template <typename T>
void dump_tensor(const std::filesystem::path& dir, const std::string& name, const Tensor<T>& t) {
  for (std::size_t i = 0; i < t.size(); ++i) {
    if (!std::isfinite(static_cast<double>(t[i]))) throw std::runtime_error("inspect: non-finite value in " + name);
  }
  const auto mean = channel_mean(t);
  write_pgm16(dir / (name + ".pgm"), display_scale(mean), t.dim(1), t.dim(2));
  std::ofstream out(dir / (name + ".csv"), std::ios::trunc);
  if (!out) throw std::runtime_error("cannot write " + (dir / (name + ".csv")).string());
  out << "h,w,c,value\n";
  char buf[40];
  for (std::size_t h = 0; h < t.dim(1); ++h) {
    for (std::size_t w = 0; w < t.dim(2); ++w) {
      for (std::size_t c = 0; c < t.dim(3); ++c) {
        std::snprintf(buf, sizeof buf, "%.9g", static_cast<double>(t.at(0, h, w, c)));
        out << h << ',' << w << ',' << c << ',' << buf << '\n';
      }
    }
  }
}

}  // namespace detail

/// Runs `image` (S x S x 3, HWC) through the model and dumps the attention
/// intermediates of conv layer `layer`: F, F_c, F_f, F_t, F' and the maps
/// M_c, M_f, M_t (M_s for CBAM), whichever the variant produces.
template <typename T>
InspectResult inspect_maps(const Model<T>& model, std::span<const float> image, std::size_t layer,
                           const std::filesystem::path& out_dir) {
  if (layer >= model.n_layers()) {
    throw std::out_of_range("inspect: layer index " + std::to_string(layer) + " out of range (model has " +
                            std::to_string(model.n_layers()) + " conv layers)");
  }
  const auto& a = model.config();
  if (image.size() != a.height * a.width * a.channels) throw std::invalid_argument("inspect: image size mismatch");
  Tensor<T> x({1, a.height, a.width, a.channels});
  std::transform(image.begin(), image.end(), x.values().begin(), [](float v) { return static_cast<T>(v); });

  AttentionTrace<T> captured;
  model.forward(nullptr, x, [&](std::size_t i, const AttentionTrace<T>& tr) {
    if (i == layer) captured = tr;
  });

  std::filesystem::create_directories(out_dir);
  InspectResult res;
  res.passthrough = model.config().variant == AttentionVariant::None;
  const std::vector<std::pair<std::string, Tensor<T>>> maps = {
      {"F", captured.input},  {"Mc", captured.mc}, {"Fc", captured.fc}, {"Mf", captured.mf},
      {"Ff", captured.ff},    {"Mt", captured.mt}, {"Ft", captured.ft}, {"Ms", captured.ms},
      {"Fprime", res.passthrough ? Tensor<T>{} : captured.output},
  };
  for (const auto& [name, t] : maps) {
    if (!t.defined()) continue;
    detail::dump_tensor(out_dir, name, t);
    res.maps.push_back(name);
  }
  res.trace.input = detail::to_double(captured.input);
  res.trace.mc = detail::to_double(captured.mc);
  res.trace.fc = detail::to_double(captured.fc);
  res.trace.mf = detail::to_double(captured.mf);
  res.trace.ff = detail::to_double(captured.ff);
  res.trace.mt = detail::to_double(captured.mt);
  res.trace.ft = detail::to_double(captured.ft);
  res.trace.ms = detail::to_double(captured.ms);
  res.trace.output = detail::to_double(captured.output);
  return res;
}

}  // namespace ftamod
