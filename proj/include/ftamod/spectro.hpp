#pragma once

// STFT power spectrograms and the normalized network input image.

#include <algorithm>
#include <cmath>
#include <complex>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <numbers>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "ftamod/sigsynth.hpp"

namespace ftamod {

enum class Window { Hamming, Rectangular };

inline std::string_view to_string(Window w) { return w == Window::Hamming ? "hamming" : "rectangular"; }

inline Window parse_window(std::string_view s) {
  if (s == "hamming") return Window::Hamming;
  if (s == "rectangular" || s == "rect") return Window::Rectangular;
  throw std::invalid_argument("unknown window '" + std::string(s) + "'");
}

struct StftConfig {
  std::size_t frame_length = 40;  // L, also the DFT size
  std::size_t frame_shift = 2;    // K; 38 of 40 samples overlap (95%)
  Window window = Window::Hamming;

  void validate() const {
    if (frame_length == 0 || frame_shift == 0 || frame_shift > frame_length) {
      throw std::invalid_argument("STFT config requires 1 <= shift <= frame length");
    }
  }

  std::size_t frame_count(std::size_t n) const {
    return n < frame_length ? 0 : (n - frame_length) / frame_shift + 1;
  }
};

inline std::vector<double> window_coefficients(const StftConfig& cfg) {
  std::vector<double> w(cfg.frame_length, 1.0);
  if (cfg.window == Window::Hamming && cfg.frame_length > 1) {
    const double denom = static_cast<double>(cfg.frame_length - 1);
    for (std::size_t n = 0; n < w.size(); ++n) {
      w[n] = 0.54 - 0.46 * std::cos(2.0 * std::numbers::pi * static_cast<double>(n) / denom);
    }
  }
  return w;
}

/// R(m, k), frames x bins, row-major by frame.
struct FrameMatrix {
  std::size_t frames = 0;
  std::size_t bins = 0;
  std::vector<cplx> data;

  cplx& at(std::size_t m, std::size_t k) { return data[m * bins + k]; }
  const cplx& at(std::size_t m, std::size_t k) const { return data[m * bins + k]; }
};

/// Direct windowed DFT per frame. The phase term uses the absolute sample
/// index n, so R(m,k) differs from a per-frame DFT by a unit-modulus factor.
inline FrameMatrix stft(std::span<const cplx> r, const StftConfig& cfg) {
  cfg.validate();
  const std::size_t L = cfg.frame_length;
  if (r.size() < L) {
    throw std::invalid_argument("signal of " + std::to_string(r.size()) +
                                " samples is shorter than the frame length " + std::to_string(L));
  }
  const auto w = window_coefficients(cfg);
  std::vector<cplx> twiddle(L);
  for (std::size_t i = 0; i < L; ++i) {
    twiddle[i] = std::polar(1.0, -2.0 * std::numbers::pi * static_cast<double>(i) / static_cast<double>(L));
  }
  FrameMatrix R;
  R.frames = cfg.frame_count(r.size());
  R.bins = L;
  R.data.assign(R.frames * L, cplx{});
  std::vector<cplx> frame(L);
  for (std::size_t m = 0; m < R.frames; ++m) {
    const std::size_t start = m * cfg.frame_shift;
    for (std::size_t i = 0; i < L; ++i) frame[i] = r[start + i] * w[i];
    for (std::size_t k = 0; k < L; ++k) {
      cplx acc{};
      for (std::size_t i = 0; i < L; ++i) acc += frame[i] * twiddle[(k * (start + i)) % L];
      R.at(m, k) = acc;
    }
  }
  return R;
}

inline FrameMatrix stft(const IqSignal& s, const StftConfig& cfg) { return stft(s.samples, cfg); }

struct ImageConfig {
  std::size_t size = 100;  // output is size x size x 3
  bool colormap = false;   // false: grayscale replicated into 3 channels
  double log_floor = 1e-10;
};

struct Spectrogram {
  std::size_t rows = 0;  // frequency bins, DC-centered, ascending frequency
  std::size_t cols = 0;  // time frames
  std::vector<double> power;  // rows x cols
  std::size_t image_size = 0;
  std::vector<double> image;  // image_size x image_size x 3, HWC, in [0,1]

  double power_at(std::size_t row, std::size_t col) const { return power[row * cols + col]; }
  double pixel(std::size_t y, std::size_t x, std::size_t c) const {
    return image[(y * image_size + x) * 3 + c];
  }
};

/// |R|^2 arranged rows = frequency (rotated by L/2 so DC sits mid-axis),
/// cols = frames.
inline std::vector<double> centered_power(const FrameMatrix& R) {
  std::vector<double> p(R.bins * R.frames);
  const std::size_t shift = R.bins - R.bins / 2;
  for (std::size_t row = 0; row < R.bins; ++row) {
    const std::size_t k = (row + shift) % R.bins;
    for (std::size_t m = 0; m < R.frames; ++m) p[row * R.frames + m] = std::norm(R.at(m, k));
  }
  return p;
}

/// log10(p + floor), min-max scaled to [0,1]. A constant grid maps to zeros.
inline std::vector<double> log_normalize(std::span<const double> power, double floor = 1e-10) {
  std::vector<double> v(power.size());
  for (std::size_t i = 0; i < v.size(); ++i) v[i] = std::log10(power[i] + floor);
  if (v.empty()) return v;
  const auto [lo, hi] = std::minmax_element(v.begin(), v.end());
  const double mn = *lo, range = *hi - *lo;
  if (!(range > 0.0)) {
    std::fill(v.begin(), v.end(), 0.0);
    return v;
  }
  for (auto& x : v) x = (x - mn) / range;
  return v;
}

/// Bilinear resize with half-pixel centers and edge clamping.
inline std::vector<double> bilinear_resize(std::span<const double> src, std::size_t src_h, std::size_t src_w,
                                           std::size_t dst_h, std::size_t dst_w) {
  if (src.size() != src_h * src_w || src_h == 0 || src_w == 0) {
    throw std::invalid_argument("bilinear_resize: source extent mismatch");
  }
  std::vector<double> dst(dst_h * dst_w);
  const double sy = static_cast<double>(src_h) / static_cast<double>(dst_h);
  const double sx = static_cast<double>(src_w) / static_cast<double>(dst_w);
  auto coord = [](double pos, std::size_t extent, std::size_t& i0, std::size_t& i1, double& f) {
    pos = std::clamp(pos, 0.0, static_cast<double>(extent - 1));
    i0 = static_cast<std::size_t>(std::floor(pos));
    i1 = std::min(i0 + 1, extent - 1);
    f = pos - static_cast<double>(i0);
  };
  for (std::size_t y = 0; y < dst_h; ++y) {
    std::size_t y0, y1;
    double fy;
    coord((static_cast<double>(y) + 0.5) * sy - 0.5, src_h, y0, y1, fy);
    for (std::size_t x = 0; x < dst_w; ++x) {
      std::size_t x0, x1;
      double fx;
      coord((static_cast<double>(x) + 0.5) * sx - 0.5, src_w, x0, x1, fx);
      const double top = (1.0 - fx) * src[y0 * src_w + x0] + fx * src[y0 * src_w + x1];
      const double bot = (1.0 - fx) * src[y1 * src_w + x0] + fx * src[y1 * src_w + x1];
      dst[y * dst_w + x] = (1.0 - fy) * top + fy * bot;
    }
  }
  return dst;
}

// Three-segment linear ramp (black -> red -> yellow -> white).
inline void colormap3(double v, double& r, double& g, double& b) {
  r = std::clamp(3.0 * v, 0.0, 1.0);
  g = std::clamp(3.0 * v - 1.0, 0.0, 1.0);
  b = std::clamp(3.0 * v - 2.0, 0.0, 1.0);
}

inline Spectrogram spectrogram_image(const FrameMatrix& R, const ImageConfig& cfg = {}) {
  if (R.frames == 0 || R.bins == 0) throw std::invalid_argument("empty frame matrix");
  if (cfg.size == 0) throw std::invalid_argument("image size must be positive");
  Spectrogram s;
  s.rows = R.bins;
  s.cols = R.frames;
  s.power = centered_power(R);
  const auto norm = log_normalize(s.power, cfg.log_floor);
  const auto gray = bilinear_resize(norm, s.rows, s.cols, cfg.size, cfg.size);
  s.image_size = cfg.size;
  s.image.resize(gray.size() * 3);
  for (std::size_t i = 0; i < gray.size(); ++i) {
    const double v = std::clamp(gray[i], 0.0, 1.0);
    if (cfg.colormap) {
      colormap3(v, s.image[3 * i], s.image[3 * i + 1], s.image[3 * i + 2]);
    } else {
      s.image[3 * i] = s.image[3 * i + 1] = s.image[3 * i + 2] = v;
    }
  }
  return s;
}

inline Spectrogram spectrogram(const IqSignal& sig, const StftConfig& stft_cfg = {},
                               const ImageConfig& img_cfg = {}) {
  return spectrogram_image(stft(sig, stft_cfg), img_cfg);
}

// ---------------------------------------------------------------------------
// PGM output (binary P5, 16-bit big-endian samples as the format requires)

inline void write_pgm16(const std::filesystem::path& path, std::span<const double> gray, std::size_t height,
                        std::size_t width) {
  if (gray.size() != height * width) throw std::invalid_argument("write_pgm16: extent mismatch");
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw std::runtime_error("cannot open '" + path.string() + "' for writing");
  out << "P5\n" << width << ' ' << height << "\n65535\n";
  for (double v : gray) {
    const auto q = static_cast<std::uint16_t>(std::lround(std::clamp(v, 0.0, 1.0) * 65535.0));
    const char bytes[2] = {static_cast<char>(q >> 8), static_cast<char>(q & 0xFF)};
    out.write(bytes, 2);
  }
  if (!out) throw std::runtime_error("write failed for '" + path.string() + "'");
}

/// Min-max scales arbitrary values into [0,1] for display (constant -> 0).
inline std::vector<double> display_scale(std::span<const double> v) {
  std::vector<double> out(v.begin(), v.end());
  if (out.empty()) return out;
  const auto [lo, hi] = std::minmax_element(out.begin(), out.end());
  const double mn = *lo, range = *hi - *lo;
  for (auto& x : out) x = range > 0.0 ? (x - mn) / range : 0.0;
  return out;
}

/// Grayscale channel 0 of the image.
inline std::vector<double> image_channel(const Spectrogram& s, std::size_t c = 0) {
  std::vector<double> g(s.image_size * s.image_size);
  for (std::size_t i = 0; i < g.size(); ++i) g[i] = s.image[3 * i + c];
  return g;
}

}  // namespace ftamod
