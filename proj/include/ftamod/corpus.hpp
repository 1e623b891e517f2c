#pragma once

// Labeled signal corpora and the FTAD container.
//
// FTAD layout (little-endian):
//   "FTAD" u16 version=1 u16 n_modes u16 n_snrs u32 signal_length
//   then records until EOF:
//   u8 split  u8 mode_index  i16 snr_db  signal_length x (f32 I, f32 Q)

#include <algorithm>
#include <array>
#include <cmath>
#include <complex>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <map>
#include <numbers>
#include <random>
#include <set>
#include <sstream>
#include <stdexcept>
#include <string>
#include <thread>
#include <vector>

#include "ftamod/binary_io.hpp"
#include "ftamod/modulation.hpp"
#include "ftamod/sigsynth.hpp"

namespace ftamod {

enum class Split : std::uint8_t { Train = 0, Val = 1, Test = 2 };

inline constexpr std::array<std::string_view, 3> kSplitNames = {"train", "val", "test"};

struct SplitCounts {
  std::size_t train = 700;
  std::size_t val = 100;
  std::size_t test = 200;

  std::size_t of(Split s) const {
    switch (s) {
      case Split::Train: return train;
      case Split::Val: return val;
      default: return test;
    }
  }
  std::size_t total() const { return train + val + test; }
};

/// Ranges for the per-record random channel. All zero gives pure AWGN.
struct ChannelProfile {
  double max_cfo_fraction = 0.005;
  double max_sro_ppm = 50.0;
  std::size_t multipath_taps = 3;  // 0 or 1 disables multipath
  double multipath_decay = 0.3;    // power ratio between successive taps
};

struct CorpusSpec {
  std::vector<ModulationMode> modes{kAllModes.begin(), kAllModes.end()};
  std::vector<double> snr_grid_db = [] {
    std::vector<double> g;
    for (int s = -20; s <= 18; s += 2) g.push_back(s);
    return g;
  }();
  SplitCounts per_class_per_snr{};
  std::size_t signal_length = 128;
  std::uint64_t seed = 1;
  SynthParams synth{};
  ChannelProfile channel{};

  void validate() const {
    if (modes.empty()) throw std::invalid_argument("corpus spec: no modes");
    if (snr_grid_db.empty()) throw std::invalid_argument("corpus spec: empty SNR grid");
    if (std::set<ModulationMode>(modes.begin(), modes.end()).size() != modes.size()) {
      throw std::invalid_argument("corpus spec: duplicate modes");
    }
    for (double s : snr_grid_db) {
      if (!std::isfinite(s) || s < -32768.0 || s > 32767.0) {
        throw std::invalid_argument("corpus spec: SNR out of the i16 range");
      }
    }
    if (signal_length < 2 * synth.samples_per_symbol) {
      throw std::invalid_argument("corpus spec: signal length shorter than two symbols");
    }
  }
};

struct Record {
  Split split = Split::Train;
  ModulationMode mode = ModulationMode::Bpsk;
  std::int16_t snr_db = 0;
  std::vector<std::complex<float>> iq;
};

struct Corpus {
  std::uint16_t version = 1;
  std::uint16_t n_modes = 0;
  std::uint16_t n_snrs = 0;
  std::uint32_t signal_length = 0;
  std::vector<Record> records;

  std::size_t count(Split s) const {
    return static_cast<std::size_t>(
        std::count_if(records.begin(), records.end(), [s](const Record& r) { return r.split == s; }));
  }

  std::vector<const Record*> split(Split s) const {
    std::vector<const Record*> out;
    for (const auto& r : records) {
      if (r.split == s) out.push_back(&r);
    }
    return out;
  }

  // Fills n_modes / n_snrs from the records.
  void refresh_header() {
    std::set<int> modes, snrs;
    for (const auto& r : records) {
      modes.insert(static_cast<int>(r.mode));
      snrs.insert(r.snr_db);
    }
    n_modes = static_cast<std::uint16_t>(modes.size());
    n_snrs = static_cast<std::uint16_t>(snrs.size());
  }
};

inline IqSignal to_signal(const Record& r, double sample_rate_hz = 200e3) {
  IqSignal s;
  s.samples.reserve(r.iq.size());
  for (const auto& v : r.iq) s.samples.emplace_back(v.real(), v.imag());
  s.sample_rate_hz = sample_rate_hz;
  s.mode = r.mode;
  s.snr_db = r.snr_db;
  return s;
}

// ---------------------------------------------------------------------------
// FTAD IO

inline void write_ftad(std::ostream& out, const Corpus& c) {
  binio::write_magic(out, "FTAD");
  binio::write_u16(out, c.version);
  binio::write_u16(out, c.n_modes);
  binio::write_u16(out, c.n_snrs);
  binio::write_u32(out, c.signal_length);
  for (const auto& r : c.records) {
    if (r.iq.size() != c.signal_length) throw std::invalid_argument("record length mismatch");
    binio::write_u8(out, static_cast<std::uint8_t>(r.split));
    binio::write_u8(out, static_cast<std::uint8_t>(r.mode));
    binio::write_i16(out, r.snr_db);
    for (const auto& v : r.iq) {
      binio::write_f32(out, v.real());
      binio::write_f32(out, v.imag());
    }
  }
}

inline void write_ftad(const std::filesystem::path& path, const Corpus& c) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw std::runtime_error("cannot open '" + path.string() + "' for writing");
  write_ftad(out, c);
  out.flush();
  if (!out) throw std::runtime_error("write failed for '" + path.string() + "'");
}

inline Corpus read_ftad(std::istream& in) {
  binio::expect_magic(in, "FTAD");
  Corpus c;
  c.version = binio::read_u16(in);
  if (c.version != 1) throw std::runtime_error("unsupported FTAD version " + std::to_string(c.version));
  c.n_modes = binio::read_u16(in);
  c.n_snrs = binio::read_u16(in);
  c.signal_length = binio::read_u32(in);
  if (c.signal_length == 0) throw std::runtime_error("FTAD signal length is zero");
  while (in.peek() != std::char_traits<char>::eof()) {
    Record r;
    const auto split = binio::read_u8(in);
    if (split > 2) throw std::runtime_error("FTAD record has invalid split " + std::to_string(split));
    r.split = static_cast<Split>(split);
    r.mode = mode_from_index(binio::read_u8(in));
    r.snr_db = binio::read_i16(in);
    r.iq.resize(c.signal_length);
    for (auto& v : r.iq) {
      const float re = binio::read_f32(in);
      const float im = binio::read_f32(in);
      v = {re, im};
    }
    c.records.push_back(std::move(r));
  }
  return c;
}

inline Corpus read_ftad(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open corpus '" + path.string() + "'");
  return read_ftad(in);
}

// ---------------------------------------------------------------------------
// Synthesis

/// Seed for record `index`: each record owns an independent RNG stream, so
/// output does not depend on how records are distributed over workers.
inline std::uint64_t record_seed(std::uint64_t corpus_seed, std::uint64_t index) {
  return binio::splitmix64(binio::splitmix64(corpus_seed) ^ (index * 0xD1B54A32D192ED03ull));
}

inline ChannelConfig random_channel(const ChannelProfile& prof, double snr_db, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  ChannelConfig ch;
  ch.snr_db = snr_db;
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  ch.cfo_fraction = prof.max_cfo_fraction * u(rng);
  ch.sro_ppm = prof.max_sro_ppm * u(rng);
  if (prof.multipath_taps > 1) {
    std::uniform_real_distribution<double> ph(0.0, 2.0 * std::numbers::pi);
    std::uniform_real_distribution<double> jitter(0.5, 1.0);
    ch.multipath_taps.push_back({{1.0, 0.0}, 0});
    double amp = 1.0;
    for (std::size_t k = 1; k < prof.multipath_taps; ++k) {
      amp *= std::sqrt(prof.multipath_decay);
      ch.multipath_taps.push_back({std::polar(amp * jitter(rng), ph(rng)), k});
    }
  }
  ch.rng_seed = binio::splitmix64(seed ^ 0xA5A5A5A5A5A5A5A5ull);
  return ch;
}

/// Builds one impaired record. Exposed for tests of the per-index streams.
inline Record synth_record(const CorpusSpec& spec, Split split, ModulationMode mode, double snr_db,
                           std::uint64_t index) {
  const auto seed = record_seed(spec.seed, index);
  auto params = spec.synth;
  params.length = spec.signal_length;
  const auto clean = modulate(mode, params, seed);
  const auto noisy = impair(clean, random_channel(spec.channel, snr_db, binio::splitmix64(seed)));
  Record r;
  r.split = split;
  r.mode = mode;
  r.snr_db = static_cast<std::int16_t>(std::lround(snr_db));
  r.iq.reserve(noisy.size());
  for (const auto& v : noisy.samples) {
    r.iq.emplace_back(static_cast<float>(v.real()), static_cast<float>(v.imag()));
  }
  return r;
}

/// Records are grouped by split (train, val, test), then ordered by mode,
/// SNR and repetition.
inline Corpus synth_corpus(const CorpusSpec& spec, unsigned threads = 1) {
  spec.validate();
  struct Job {
    Split split;
    ModulationMode mode;
    double snr;
  };
  std::vector<Job> jobs;
  for (Split s : {Split::Train, Split::Val, Split::Test}) {
    for (auto m : spec.modes) {
      for (double snr : spec.snr_grid_db) {
        for (std::size_t i = 0; i < spec.per_class_per_snr.of(s); ++i) jobs.push_back({s, m, snr});
      }
    }
  }
  Corpus c;
  c.signal_length = static_cast<std::uint32_t>(spec.signal_length);
  c.records.resize(jobs.size());
  const unsigned n_workers = std::max(1u, std::min<unsigned>(threads, static_cast<unsigned>(jobs.size())));
  auto work = [&](std::size_t begin, std::size_t step) {
    for (std::size_t i = begin; i < jobs.size(); i += step) {
      c.records[i] = synth_record(spec, jobs[i].split, jobs[i].mode, jobs[i].snr, i);
    }
  };
  if (n_workers <= 1) {
    work(0, 1);
  } else {
    std::vector<std::jthread> pool;
    for (unsigned w = 0; w < n_workers; ++w) pool.emplace_back(work, w, n_workers);
  }
  c.n_modes = static_cast<std::uint16_t>(spec.modes.size());
  std::set<long> snrs;
  for (double s : spec.snr_grid_db) snrs.insert(std::lround(s));
  c.n_snrs = static_cast<std::uint16_t>(snrs.size());
  return c;
}

}  // namespace ftamod
