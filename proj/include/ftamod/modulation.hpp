#pragma once

#include <algorithm>
#include <array>
#include <cctype>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <string_view>

namespace ftamod {

/// The eleven modulation classes. Enumerator values are the class indices
/// (alphabetical by tag) used in corpus files, checkpoints and reports.
enum class ModulationMode : std::uint8_t {
  Psk8 = 0,
  AmDsb = 1,
  AmSsb = 2,
  Bpsk = 3,
  Cpfsk = 4,
  Gfsk = 5,
  Pam4 = 6,
  Qam16 = 7,
  Qam64 = 8,
  Qpsk = 9,
  Wbfm = 10,
};

inline constexpr std::size_t kNumModes = 11;

inline constexpr std::array<ModulationMode, kNumModes> kAllModes = {
    ModulationMode::Psk8,  ModulationMode::AmDsb, ModulationMode::AmSsb, ModulationMode::Bpsk,
    ModulationMode::Cpfsk, ModulationMode::Gfsk,  ModulationMode::Pam4,  ModulationMode::Qam16,
    ModulationMode::Qam64, ModulationMode::Qpsk,  ModulationMode::Wbfm,
};

inline constexpr std::array<std::string_view, kNumModes> kModeTags = {
    "8PSK", "AM-DSB", "AM-SSB", "BPSK", "CPFSK", "GFSK", "PAM4", "QAM16", "QAM64", "QPSK", "WBFM",
};

constexpr std::size_t class_index(ModulationMode m) { return static_cast<std::size_t>(m); }

inline ModulationMode mode_from_index(std::size_t index) {
  if (index >= kNumModes) {
    throw std::out_of_range("modulation class index " + std::to_string(index) + " out of range");
  }
  return kAllModes[index];
}

constexpr std::string_view to_string(ModulationMode m) { return kModeTags[class_index(m)]; }

inline bool is_analog(ModulationMode m) {
  return m == ModulationMode::AmDsb || m == ModulationMode::AmSsb || m == ModulationMode::Wbfm;
}

inline bool is_constant_envelope(ModulationMode m) {
  return m == ModulationMode::Gfsk || m == ModulationMode::Cpfsk;
}

namespace detail {
inline std::string normalize_tag(std::string_view s) {
  std::string out;
  for (char c : s) {
    if (c == '-' || c == '_' || c == ' ') continue;
    out.push_back(static_cast<char>(std::toupper(static_cast<unsigned char>(c))));
  }
  return out;
}
}  // namespace detail

/// Case- and separator-insensitive: "am-dsb", "AM_DSB" and "AMDSB" all parse.
inline ModulationMode parse_mode(std::string_view tag) {
  const auto key = detail::normalize_tag(tag);
  for (std::size_t i = 0; i < kNumModes; ++i) {
    if (detail::normalize_tag(kModeTags[i]) == key) return kAllModes[i];
  }
  throw std::invalid_argument("unknown modulation tag '" + std::string(tag) + "'");
}

}  // namespace ftamod
