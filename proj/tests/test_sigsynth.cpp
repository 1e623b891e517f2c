#include <gtest/gtest.h>

#include <cmath>
#include <numbers>
#include <random>
#include <sstream>

#include "ftamod/corpus.hpp"
#include "ftamod/sigsynth.hpp"

using namespace ftamod;

namespace {

CorpusSpec tiny_spec() {
  CorpusSpec s;
  s.modes = {ModulationMode::Bpsk, ModulationMode::Gfsk};
  s.snr_grid_db = {10};
  s.per_class_per_snr = {10, 2, 4};
  s.seed = 7;
  return s;
}

std::string serialize(const Corpus& c) {
  std::ostringstream os;
  write_ftad(os, c);
  return os.str();
}

double measured_snr_db(double target_db, std::uint64_t seed) {
  IqSignal s;
  s.samples.resize(100000);
  for (std::size_t n = 0; n < s.samples.size(); ++n) s.samples[n] = std::polar(1.0, 2 * std::numbers::pi * 0.01 * n);
  ChannelConfig ch;
  ch.snr_db = target_db;
  ch.rng_seed = seed;
  const auto y = impair(s, ch);
  double noise = 0.0;
  for (std::size_t n = 0; n < s.size(); ++n) noise += std::norm(y.samples[n] - s.samples[n]);
  noise /= static_cast<double>(s.size());
  return 10.0 * std::log10(mean_power(s.samples) / noise);
}

}  // namespace

TEST(Modulation, ClassIndexBijection) {
  for (std::size_t i = 0; i < kNumModes; ++i) {
    EXPECT_EQ(class_index(parse_mode(kModeTags[i])), i);
    EXPECT_EQ(class_index(mode_from_index(i)), i);
  }
  EXPECT_THROW(mode_from_index(kNumModes), std::out_of_range);
}

TEST(Modulation, ParseIsCaseAndSeparatorInsensitive) {
  EXPECT_EQ(parse_mode("bpsk"), ModulationMode::Bpsk);
  EXPECT_EQ(parse_mode("am_dsb"), ModulationMode::AmDsb);
  EXPECT_EQ(parse_mode("AM-SSB"), ModulationMode::AmSsb);
  EXPECT_EQ(parse_mode("qam64"), ModulationMode::Qam64);
  EXPECT_THROW(parse_mode("ofdm"), std::invalid_argument);
}

TEST(Constellation, BpskMapping) {
  const std::vector<int> bits{0, 1, 1, 0};
  const auto sym = map_bits(ModulationMode::Bpsk, bits);
  ASSERT_EQ(sym.size(), 4u);
  const std::vector<cplx> expect{{1, 0}, {-1, 0}, {-1, 0}, {1, 0}};
  for (std::size_t i = 0; i < 4; ++i) EXPECT_EQ(sym[i], expect[i]);
}

TEST(Constellation, UnitAverageEnergy) {
  for (auto m : {ModulationMode::Bpsk, ModulationMode::Qpsk, ModulationMode::Psk8, ModulationMode::Pam4,
                 ModulationMode::Qam16, ModulationMode::Qam64}) {
    const auto c = constellation(m);
    double e = 0.0;
    for (auto p : c.points) e += std::norm(p);
    EXPECT_NEAR(e / static_cast<double>(c.points.size()), 1.0, 1e-12) << to_string(m);
    EXPECT_EQ(c.points.size(), std::size_t{1} << c.bits_per_symbol);
  }
}

TEST(Constellation, Qam16MonteCarloPower) {
  std::mt19937_64 rng(1);
  std::bernoulli_distribution bit(0.5);
  std::vector<int> bits(4 * 100000);
  for (auto& b : bits) b = bit(rng);
  const auto sym = map_bits(ModulationMode::Qam16, bits);
  ASSERT_EQ(sym.size(), 100000u);
  EXPECT_NEAR(mean_power(sym), 1.0, 0.01);
}

TEST(Modulate, ConstantEnvelopeForFrequencyModulation) {
  for (auto m : {ModulationMode::Gfsk, ModulationMode::Cpfsk}) {
    for (std::uint64_t seed = 0; seed < 5; ++seed) {
      const auto s = modulate(m, SynthParams{}, seed);
      for (auto v : s.samples) EXPECT_LT(std::abs(std::abs(v) - 1.0), 1e-6);
    }
  }
}

TEST(Modulate, EveryModeIsFiniteWithRequestedLength) {
  SynthParams p;
  p.length = 256;
  for (auto m : kAllModes) {
    const auto s = modulate(m, p, 3);
    ASSERT_EQ(s.size(), 256u);
    EXPECT_EQ(s.mode, m);
    for (auto v : s.samples) ASSERT_TRUE(std::isfinite(v.real()) && std::isfinite(v.imag()));
    if (m != ModulationMode::Wbfm) {
      EXPECT_NEAR(mean_power(s.samples), 1.0, 1e-9) << to_string(m);
    }
  }
}

TEST(Modulate, RejectsTooShortSignals) {
  SynthParams p;
  p.length = 10;
  EXPECT_THROW(modulate(ModulationMode::Bpsk, p, 1), std::invalid_argument);
}

TEST(Modulate, DeterministicPerSeed) {
  const auto a = modulate(ModulationMode::Qam64, SynthParams{}, 42);
  const auto b = modulate(ModulationMode::Qam64, SynthParams{}, 42);
  const auto c = modulate(ModulationMode::Qam64, SynthParams{}, 43);
  EXPECT_EQ(a.samples, b.samples);
  EXPECT_NE(a.samples, c.samples);
}

TEST(Impair, IdentityChannelIsBitExact) {
  const auto s = modulate(ModulationMode::Qpsk, SynthParams{}, 5);
  const auto y = impair(s, ChannelConfig{});
  EXPECT_EQ(y.samples, s.samples);
}

TEST(Impair, CarrierOffsetRotation) {
  std::vector<cplx> ones(64, cplx{1.0, 0.0});
  const auto y = apply_cfo(ones, 0.25);
  for (std::size_t n = 0; n < y.size(); ++n) {
    EXPECT_LT(std::abs(y[n] - std::polar(1.0, std::numbers::pi * static_cast<double>(n) / 2)), 1e-9);
  }
}

TEST(Impair, SnrCalibration) {
  for (double snr : {-10.0, 0.0, 10.0}) EXPECT_NEAR(measured_snr_db(snr, 17), snr, 0.5);
}

TEST(Impair, RejectsZeroPowerAndBadTaps) {
  IqSignal z;
  z.samples.assign(32, cplx{});
  ChannelConfig ch;
  ch.snr_db = 0;
  EXPECT_THROW(impair(z, ch), std::invalid_argument);
  std::vector<cplx> x(8, cplx{1, 0});
  std::vector<MultipathTap> taps{{cplx{1, 0}, 1}};
  EXPECT_THROW(apply_multipath(x, taps), std::invalid_argument);
}

TEST(Impair, SroOfZeroIsIdentity) {
  const auto s = modulate(ModulationMode::Bpsk, SynthParams{}, 9);
  EXPECT_EQ(apply_sro(s.samples, 0.0), s.samples);
}

TEST(Corpus, CountArithmetic) {
  const auto c = synth_corpus(tiny_spec());
  EXPECT_EQ(c.records.size(), 32u);
  EXPECT_EQ(c.count(Split::Train), 20u);
  EXPECT_EQ(c.count(Split::Val), 4u);
  EXPECT_EQ(c.count(Split::Test), 8u);
  EXPECT_EQ(c.n_modes, 2u);
  EXPECT_EQ(c.n_snrs, 1u);
}

TEST(Corpus, DefaultSpecHasTwoHundredTwentyThousandRecords) {
  const CorpusSpec s;
  EXPECT_EQ(s.modes.size(), 11u);
  EXPECT_EQ(s.snr_grid_db.size(), 20u);
  EXPECT_EQ(s.snr_grid_db.front(), -20);
  EXPECT_EQ(s.snr_grid_db.back(), 18);
  EXPECT_EQ(s.per_class_per_snr.train, 700u);
  EXPECT_EQ(s.per_class_per_snr.val, 100u);
  EXPECT_EQ(s.per_class_per_snr.test, 200u);
  EXPECT_EQ(s.modes.size() * s.snr_grid_db.size() * s.per_class_per_snr.total(), 220000u);
}

TEST(Corpus, RoundTripPreservesEverySample) {
  const auto c = synth_corpus(tiny_spec());
  std::istringstream in(serialize(c));
  const auto d = read_ftad(in);
  ASSERT_EQ(d.records.size(), c.records.size());
  EXPECT_EQ(d.signal_length, c.signal_length);
  for (std::size_t i = 0; i < c.records.size(); ++i) {
    EXPECT_EQ(d.records[i].split, c.records[i].split);
    EXPECT_EQ(d.records[i].mode, c.records[i].mode);
    EXPECT_EQ(d.records[i].snr_db, c.records[i].snr_db);
    EXPECT_EQ(d.records[i].iq, c.records[i].iq);
  }
}

TEST(Corpus, DeterministicAndThreadIndependent) {
  auto spec = tiny_spec();
  const auto a = serialize(synth_corpus(spec, 1));
  EXPECT_EQ(a, serialize(synth_corpus(spec, 1)));
  EXPECT_EQ(a, serialize(synth_corpus(spec, 4)));
  spec.seed = 8;
  EXPECT_NE(a, serialize(synth_corpus(spec, 1)));
}

TEST(Corpus, HeaderLayout) {
  const auto bytes = serialize(synth_corpus(tiny_spec()));
  ASSERT_GE(bytes.size(), 14u);
  EXPECT_EQ(bytes.substr(0, 4), "FTAD");
  auto u16 = [&](std::size_t o) { return static_cast<unsigned>(static_cast<unsigned char>(bytes[o])) |
                                         static_cast<unsigned>(static_cast<unsigned char>(bytes[o + 1])) << 8; };
  EXPECT_EQ(u16(4), 1u);
  EXPECT_EQ(u16(6), 2u);
  EXPECT_EQ(u16(8), 1u);
  EXPECT_EQ(u16(10), 128u);
  EXPECT_EQ(bytes.size(), 14u + 32u * (4u + 128u * 8u));
}

TEST(Corpus, ReadRejectsMalformedInput) {
  std::istringstream bad_magic(std::string("FTAX\x01\x00", 6));
  EXPECT_THROW(read_ftad(bad_magic), std::runtime_error);
  auto bytes = serialize(synth_corpus(tiny_spec()));
  bytes.resize(bytes.size() - 3);
  std::istringstream truncated(bytes);
  EXPECT_THROW(read_ftad(truncated), std::runtime_error);
}

TEST(Corpus, RecordsCarryTheirRequestedSnr) {
  auto spec = tiny_spec();
  spec.snr_grid_db = {-4, 6};
  const auto c = synth_corpus(spec);
  std::size_t at_minus4 = 0;
  for (const auto& r : c.records) {
    EXPECT_TRUE(r.snr_db == -4 || r.snr_db == 6);
    at_minus4 += r.snr_db == -4;
  }
  EXPECT_EQ(at_minus4, c.records.size() / 2);
}
