#pragma once

// Modulated baseband signal synthesis and channel impairments.

#include <cmath>
#include <complex>
#include <cstdint>
#include <limits>
#include <numbers>
#include <random>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "ftamod/modulation.hpp"

namespace ftamod {

using cplx = std::complex<double>;

inline constexpr double kNoNoise = std::numeric_limits<double>::infinity();

struct IqSignal {
  std::vector<cplx> samples;
  double sample_rate_hz = 200e3;
  ModulationMode mode = ModulationMode::Bpsk;
  double snr_db = kNoNoise;  // tag; +inf until impaired

  std::size_t size() const { return samples.size(); }
};

/// Synthesis defaults (GNU-Radio-like). Frequencies are normalized to the
/// sample rate.
struct SynthParams {
  std::size_t length = 128;
  std::size_t samples_per_symbol = 8;
  double rrc_rolloff = 0.35;
  std::size_t rrc_span_symbols = 8;
  double gfsk_bt = 0.3;
  std::size_t gaussian_span_symbols = 4;
  double fsk_mod_index = 0.5;
  double wbfm_deviation = 0.25;  // phase step (rad/sample) at full-scale source
  double am_mod_index = 0.5;
  double analog_max_freq = 0.1;
  double silence_prob = 0.2;
  double sample_rate_hz = 200e3;
};

struct MultipathTap {
  cplx gain{1.0, 0.0};
  std::size_t delay = 0;
};

struct ChannelConfig {
  double snr_db = kNoNoise;
  double cfo_fraction = 0.0;
  double sro_ppm = 0.0;
  std::vector<MultipathTap> multipath_taps;  // empty: AWGN only
  std::uint64_t rng_seed = 0;
};

inline double mean_power(std::span<const cplx> x) {
  if (x.empty()) return 0.0;
  double p = 0.0;
  for (const auto& v : x) p += std::norm(v);
  return p / static_cast<double>(x.size());
}

// ---------------------------------------------------------------------------
// Constellations

struct Constellation {
  std::size_t bits_per_symbol = 1;
  std::vector<cplx> points;  // indexed by the bit-group value, MSB first
};

namespace detail {

inline std::vector<cplx> normalized(std::vector<cplx> pts) {
  double e = 0.0;
  for (const auto& p : pts) e += std::norm(p);
  const double scale = 1.0 / std::sqrt(e / static_cast<double>(pts.size()));
  for (auto& p : pts) p *= scale;
  return pts;
}

inline std::size_t gray_decode(std::size_t g) {
  std::size_t b = 0;
  for (; g; g >>= 1) b ^= g;
  return b;
}

// Gray-coded amplitude levels {-(M-1), ..., M-1}: bit group g sits at level gray_decode(g).
inline std::vector<double> gray_pam_levels(std::size_t m) {
  std::vector<double> lv(m);
  for (std::size_t g = 0; g < m; ++g) {
    lv[g] = 2.0 * static_cast<double>(gray_decode(g)) - static_cast<double>(m - 1);
  }
  return lv;
}

inline std::vector<cplx> square_qam(std::size_t side) {
  const auto lv = gray_pam_levels(side);
  std::size_t half_bits = 0;
  while ((std::size_t{1} << half_bits) < side) ++half_bits;
  std::vector<cplx> pts(side * side);
  for (std::size_t g = 0; g < pts.size(); ++g) {
    pts[g] = {lv[g >> half_bits], lv[g & (side - 1)]};
  }
  return normalized(std::move(pts));
}

}  // namespace detail

/// Unit-average-energy constellation for the linear digital modes.
inline Constellation constellation(ModulationMode mode) {
  using std::numbers::pi;
  switch (mode) {
    case ModulationMode::Bpsk:
      return {1, {{1.0, 0.0}, {-1.0, 0.0}}};
    case ModulationMode::Qpsk: {
      const double a = 1.0 / std::sqrt(2.0);
      return {2, {{a, a}, {a, -a}, {-a, a}, {-a, -a}}};
    }
    case ModulationMode::Psk8: {
      std::vector<cplx> pts(8);
      for (std::size_t g = 0; g < 8; ++g) {
        pts[g] = std::polar(1.0, 2.0 * pi * static_cast<double>(detail::gray_decode(g)) / 8.0);
      }
      return {3, pts};
    }
    case ModulationMode::Pam4: {
      std::vector<cplx> pts;
      for (double l : detail::gray_pam_levels(4)) pts.emplace_back(l, 0.0);
      return {2, detail::normalized(std::move(pts))};
    }
    case ModulationMode::Qam16:
      return {4, detail::square_qam(4)};
    case ModulationMode::Qam64:
      return {6, detail::square_qam(8)};
    default:
      throw std::invalid_argument(std::string("no constellation for ") +
                                  std::string(to_string(mode)));
  }
}

inline bool is_linear(ModulationMode m) {
  switch (m) {
    case ModulationMode::Bpsk:
    case ModulationMode::Qpsk:
    case ModulationMode::Psk8:
    case ModulationMode::Pam4:
    case ModulationMode::Qam16:
    case ModulationMode::Qam64:
      return true;
    default:
      return false;
  }
}

/// Maps a bit stream to symbols (before pulse shaping). Trailing bits that
/// do not fill a whole symbol are ignored.
inline std::vector<cplx> map_bits(ModulationMode mode, std::span<const int> bits) {
  const auto c = constellation(mode);
  std::vector<cplx> out;
  for (std::size_t i = 0; i + c.bits_per_symbol <= bits.size(); i += c.bits_per_symbol) {
    std::size_t g = 0;
    for (std::size_t b = 0; b < c.bits_per_symbol; ++b) g = (g << 1) | (bits[i + b] ? 1u : 0u);
    out.push_back(c.points[g]);
  }
  return out;
}

// ---------------------------------------------------------------------------
// Pulse shapes

/// Root-raised-cosine taps at `sps` samples per symbol over `span` symbols,
/// normalized to unit energy.
inline std::vector<double> rrc_taps(std::size_t sps, double rolloff, std::size_t span) {
  using std::numbers::pi;
  const std::size_t n = span * sps + 1;
  const double b = rolloff;
  std::vector<double> h(n);
  const double mid = static_cast<double>(n - 1) / 2.0;
  for (std::size_t i = 0; i < n; ++i) {
    const double t = (static_cast<double>(i) - mid) / static_cast<double>(sps);
    if (std::abs(t) < 1e-12) {
      h[i] = 1.0 - b + 4.0 * b / pi;
    } else if (b > 0.0 && std::abs(std::abs(t) - 1.0 / (4.0 * b)) < 1e-9) {
      h[i] = b / std::sqrt(2.0) *
             ((1.0 + 2.0 / pi) * std::sin(pi / (4.0 * b)) + (1.0 - 2.0 / pi) * std::cos(pi / (4.0 * b)));
    } else {
      const double num = std::sin(pi * t * (1.0 - b)) + 4.0 * b * t * std::cos(pi * t * (1.0 + b));
      const double den = pi * t * (1.0 - (4.0 * b * t) * (4.0 * b * t));
      h[i] = num / den;
    }
  }
  double e = 0.0;
  for (double v : h) e += v * v;
  for (double& v : h) v /= std::sqrt(e);
  return h;
}

/// Gaussian frequency-smoothing filter for GFSK, unit DC gain.
inline std::vector<double> gaussian_taps(std::size_t sps, double bt, std::size_t span) {
  using std::numbers::pi;
  const std::size_t n = span * sps + 1;
  const double mid = static_cast<double>(n - 1) / 2.0;
  const double a = 2.0 * pi * pi * bt * bt / std::log(2.0);
  std::vector<double> h(n);
  double sum = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const double t = (static_cast<double>(i) - mid) / static_cast<double>(sps);
    h[i] = std::exp(-a * t * t);
    sum += h[i];
  }
  for (double& v : h) v /= sum;
  return h;
}

// ---------------------------------------------------------------------------
// Modulators

namespace detail {

template <typename V>
std::vector<V> fir_filter(std::span<const V> x, std::span<const double> taps) {
  std::vector<V> y(x.size(), V{});
  for (std::size_t n = 0; n < x.size(); ++n) {
    V acc{};
    const std::size_t kmax = std::min(taps.size(), n + 1);
    for (std::size_t k = 0; k < kmax; ++k) acc += taps[k] * x[n - k];
    y[n] = acc;
  }
  return y;
}

inline std::vector<cplx> modulate_linear(ModulationMode mode, const SynthParams& p, std::mt19937_64& rng) {
  const auto c = constellation(mode);
  const std::size_t sps = p.samples_per_symbol;
  const auto taps = rrc_taps(sps, p.rrc_rolloff, p.rrc_span_symbols);
  // Skip the full filter length of start-up transient.
  const std::size_t skip = taps.size();
  const std::size_t n_total = p.length + skip;
  const std::size_t n_sym = (n_total + sps - 1) / sps;
  std::uniform_int_distribution<std::size_t> pick(0, c.points.size() - 1);
  std::vector<cplx> up(n_sym * sps, cplx{});
  for (std::size_t k = 0; k < n_sym; ++k) up[k * sps] = c.points[pick(rng)];
  const auto shaped = fir_filter<cplx>(up, taps);
  return {shaped.begin() + static_cast<std::ptrdiff_t>(skip),
          shaped.begin() + static_cast<std::ptrdiff_t>(skip + p.length)};
}

inline std::vector<cplx> modulate_fsk(bool gaussian, const SynthParams& p, std::mt19937_64& rng) {
  using std::numbers::pi;
  const std::size_t sps = p.samples_per_symbol;
  std::vector<double> freq;
  std::size_t skip = 0;
  std::bernoulli_distribution bit(0.5);
  if (gaussian) {
    const auto taps = gaussian_taps(sps, p.gfsk_bt, p.gaussian_span_symbols);
    skip = taps.size();
    const std::size_t n_sym = (p.length + skip + sps - 1) / sps;
    std::vector<double> nrz(n_sym * sps);
    for (std::size_t k = 0; k < n_sym; ++k) {
      const double v = bit(rng) ? 1.0 : -1.0;
      for (std::size_t s = 0; s < sps; ++s) nrz[k * sps + s] = v;
    }
    freq = fir_filter<double>(nrz, taps);
  } else {
    const std::size_t n_sym = (p.length + sps - 1) / sps;
    freq.resize(n_sym * sps);
    for (std::size_t k = 0; k < n_sym; ++k) {
      const double v = bit(rng) ? 1.0 : -1.0;
      for (std::size_t s = 0; s < sps; ++s) freq[k * sps + s] = v;
    }
  }
  std::uniform_real_distribution<double> ph(0.0, 2.0 * pi);
  double phase = ph(rng);
  const double step = pi * p.fsk_mod_index / static_cast<double>(sps);
  std::vector<cplx> out(p.length);
  for (std::size_t n = 0; n < p.length; ++n) {
    phase += step * freq[n + skip];
    out[n] = std::polar(1.0, phase);
  }
  return out;
}

// Sum of 3-5 random-phase tones below analog_max_freq. Real part is the
// message, imaginary part its Hilbert transform. Peak magnitude <= 1.
inline std::vector<cplx> analog_source(const SynthParams& p, std::mt19937_64& rng) {
  using std::numbers::pi;
  std::uniform_int_distribution<int> n_tones_dist(3, 5);
  std::uniform_real_distribution<double> f_dist(0.002, p.analog_max_freq);
  std::uniform_real_distribution<double> a_dist(0.3, 1.0);
  std::uniform_real_distribution<double> ph_dist(0.0, 2.0 * pi);
  const int n_tones = n_tones_dist(rng);
  std::vector<double> f(n_tones), a(n_tones), ph(n_tones);
  double a_sum = 0.0;
  for (int i = 0; i < n_tones; ++i) {
    f[i] = f_dist(rng);
    a[i] = a_dist(rng);
    ph[i] = ph_dist(rng);
    a_sum += a[i];
  }
  std::vector<cplx> m(p.length);
  for (std::size_t n = 0; n < p.length; ++n) {
    cplx acc{};
    for (int i = 0; i < n_tones; ++i) {
      acc += a[i] * std::polar(1.0, 2.0 * pi * f[i] * static_cast<double>(n) + ph[i]);
    }
    m[n] = acc / a_sum;
  }
  std::bernoulli_distribution silent(p.silence_prob);
  if (p.silence_prob > 0.0 && silent(rng)) {
    std::uniform_int_distribution<std::size_t> len_dist(p.length / 4, p.length / 2);
    const std::size_t len = len_dist(rng);
    std::uniform_int_distribution<std::size_t> start_dist(0, p.length - len);
    const std::size_t start = start_dist(rng);
    for (std::size_t n = start; n < start + len; ++n) m[n] = cplx{};
  }
  return m;
}

}  // namespace detail

/// Clean, unit-mean-power baseband signal of `params.length` samples.
inline IqSignal modulate(ModulationMode mode, const SynthParams& params, std::uint64_t seed) {
  if (params.samples_per_symbol == 0 || params.length < 2 * params.samples_per_symbol) {
    throw std::invalid_argument("signal length " + std::to_string(params.length) +
                                " is shorter than two symbols");
  }
  std::mt19937_64 rng(seed);
  std::vector<cplx> s;
  if (is_linear(mode)) {
    s = detail::modulate_linear(mode, params, rng);
  } else if (mode == ModulationMode::Gfsk || mode == ModulationMode::Cpfsk) {
    s = detail::modulate_fsk(mode == ModulationMode::Gfsk, params, rng);
  } else {
    auto m = detail::analog_source(params, rng);
    s.resize(m.size());
    switch (mode) {
      case ModulationMode::AmDsb:
        for (std::size_t n = 0; n < m.size(); ++n) s[n] = 1.0 + params.am_mod_index * m[n].real();
        break;
      case ModulationMode::AmSsb:
        s = std::move(m);
        break;
      case ModulationMode::Wbfm: {
        double phase = 0.0;
        for (std::size_t n = 0; n < m.size(); ++n) {
          phase += params.wbfm_deviation * m[n].real();
          s[n] = std::polar(1.0, phase);
        }
        break;
      }
      default:
        throw std::invalid_argument("unhandled modulation mode");
    }
  }
  const double p = mean_power(s);
  if (!(p > 0.0)) throw std::runtime_error("synthesized signal has zero power");
  if (!is_constant_envelope(mode) && mode != ModulationMode::Wbfm) {
    const double scale = 1.0 / std::sqrt(p);
    for (auto& v : s) v *= scale;
  }
  return IqSignal{std::move(s), params.sample_rate_hz, mode, kNoNoise};
}

// ---------------------------------------------------------------------------
// Channel

inline std::vector<cplx> apply_multipath(std::span<const cplx> x, std::span<const MultipathTap> taps) {
  if (taps.empty()) return {x.begin(), x.end()};
  if (taps.front().delay != 0) throw std::invalid_argument("first multipath tap must have delay 0");
  std::vector<cplx> y(x.size(), cplx{});
  for (const auto& tap : taps) {
    for (std::size_t n = tap.delay; n < x.size(); ++n) y[n] += tap.gain * x[n - tap.delay];
  }
  return y;
}

/// Resamples by 1 + ppm*1e-6 with linear interpolation; positions past the
/// end hold the last sample.
inline std::vector<cplx> apply_sro(std::span<const cplx> x, double ppm) {
  if (ppm == 0.0 || x.empty()) return {x.begin(), x.end()};
  const double ratio = 1.0 + ppm * 1e-6;
  std::vector<cplx> y(x.size());
  const double last = static_cast<double>(x.size() - 1);
  for (std::size_t n = 0; n < x.size(); ++n) {
    const double t = std::min(static_cast<double>(n) * ratio, last);
    const auto i0 = static_cast<std::size_t>(std::floor(t));
    const std::size_t i1 = std::min(i0 + 1, x.size() - 1);
    const double frac = t - static_cast<double>(i0);
    y[n] = (1.0 - frac) * x[i0] + frac * x[i1];
  }
  return y;
}

inline std::vector<cplx> apply_cfo(std::span<const cplx> x, double cfo_fraction) {
  if (cfo_fraction == 0.0) return {x.begin(), x.end()};
  std::vector<cplx> y(x.size());
  for (std::size_t n = 0; n < x.size(); ++n) {
    y[n] = x[n] * std::polar(1.0, 2.0 * std::numbers::pi * cfo_fraction * static_cast<double>(n));
  }
  return y;
}

/// Adds complex AWGN at `snr_db` relative to `signal_power`.
inline void add_awgn(std::span<cplx> x, double signal_power, double snr_db, std::uint64_t seed) {
  if (std::isinf(snr_db) && snr_db > 0) return;
  const double sigma = std::sqrt(signal_power / (2.0 * std::pow(10.0, snr_db / 10.0)));
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> g(0.0, sigma);
  for (auto& v : x) {
    const double re = g(rng);
    const double im = g(rng);
    v += cplx{re, im};
  }
}

/// Multipath, then sampling-rate offset, then CFO rotation, then AWGN. The
/// noise level is set against the signal power after multipath.
inline IqSignal impair(const IqSignal& signal, const ChannelConfig& channel) {
  if (!(mean_power(signal.samples) > 0.0)) {
    throw std::invalid_argument("cannot impair a zero-power signal: SNR undefined");
  }
  auto y = apply_multipath(signal.samples, channel.multipath_taps);
  const double p_sig = mean_power(y);
  y = apply_sro(y, channel.sro_ppm);
  y = apply_cfo(y, channel.cfo_fraction);
  add_awgn(y, p_sig, channel.snr_db, channel.rng_seed);
  return IqSignal{std::move(y), signal.sample_rate_hz, signal.mode, channel.snr_db};
}

}  // namespace ftamod
