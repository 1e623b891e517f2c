#pragma once

// FTAC checkpoint container (little-endian):
//   "FTAC" u16 version
//   u32 descriptor_length, UTF-8 key=value descriptor
//   u32 n_blocks, then per block: u32 name_length, name, u32 count, count x f32
//   u32 n_optimizer_blocks, same block layout (optional; absent = 0)

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "ftamod/binary_io.hpp"
#include "ftamod/dataset.hpp"
#include "ftamod/model.hpp"

namespace ftamod {

inline constexpr std::uint16_t kCheckpointVersion = 1;

struct Checkpoint {
  ArchitectureConfig arch;
  InputConfig input;
  std::vector<NamedTensor<float>> params;
  std::vector<std::vector<float>> optimizer_state;

  Model<float> model() const {
    auto m = Model<float>::build(arch);
    auto dst = m.parameters();
    std::map<std::string, const Tensor<float>*> by_name;
    for (const auto& p : params) by_name[p.name] = &p.tensor;
    if (by_name.size() != dst.size()) {
      throw std::runtime_error("checkpoint holds " + std::to_string(by_name.size()) + " parameter blocks, architecture expects " +
                               std::to_string(dst.size()));
    }
    for (auto& d : dst) {
      auto it = by_name.find(d.name);
      if (it == by_name.end()) throw std::runtime_error("checkpoint is missing parameter '" + d.name + "'");
      if (it->second->size() != d.tensor.size()) {
        throw std::runtime_error("checkpoint parameter '" + d.name + "' has " + std::to_string(it->second->size()) +
                                 " values, expected " + std::to_string(d.tensor.size()));
      }
      std::copy(it->second->values().begin(), it->second->values().end(), d.tensor.values().begin());
    }
    return m;
  }
};

template <typename T>
Checkpoint make_checkpoint(const Model<T>& model, const InputConfig& input,
                           const std::vector<std::vector<T>>& optimizer_state = {}) {
  Checkpoint c;
  c.arch = model.config();
  c.input = input;
  for (const auto& p : model.parameters()) {
    Tensor<float> t(p.tensor.shape());
    std::transform(p.tensor.values().begin(), p.tensor.values().end(), t.values().begin(),
                   [](T v) { return static_cast<float>(v); });
    c.params.push_back({p.name, t});
  }
  for (const auto& s : optimizer_state) c.optimizer_state.emplace_back(s.begin(), s.end());
  return c;
}

// ---------------------------------------------------------------------------
// Descriptor

inline std::string join_sizes(const std::vector<std::size_t>& v) {
  std::string s;
  for (std::size_t i = 0; i < v.size(); ++i) s += (i ? "," : "") + std::to_string(v[i]);
  return s;
}

inline std::vector<std::size_t> parse_sizes(const std::string& s) {
  std::vector<std::size_t> out;
  std::stringstream ss(s);
  std::string item;
  while (std::getline(ss, item, ',')) {
    if (item.empty()) continue;
    out.push_back(static_cast<std::size_t>(std::stoull(item)));
  }
  return out;
}

inline std::string describe(const ArchitectureConfig& a, const InputConfig& in) {
  std::ostringstream os;
  os << "format=ftamod-checkpoint\n"
     << "height=" << a.height << "\nwidth=" << a.width << "\nchannels=" << a.channels
     << "\nconv_channels=" << join_sizes(a.conv_channels) << "\ndense_width=" << a.dense_width
     << "\nn_classes=" << a.n_classes << "\nvariant=" << to_string(a.variant) << "\ncam_reduction=" << a.cam_reduction
     << "\nseed=" << a.seed << "\nstft.frame_length=" << in.stft.frame_length
     << "\nstft.frame_shift=" << in.stft.frame_shift << "\nstft.window=" << to_string(in.stft.window)
     << "\nimage.size=" << in.image.size << "\nimage.colormap=" << (in.image.colormap ? 1 : 0) << "\n";
  return os.str();
}

inline std::map<std::string, std::string> parse_key_values(const std::string& text) {
  std::map<std::string, std::string> kv;
  std::istringstream is(text);
  std::string line;
  while (std::getline(is, line)) {
    if (line.empty() || line[0] == '#') continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) throw std::runtime_error("descriptor line without '=': " + line);
    kv[line.substr(0, eq)] = line.substr(eq + 1);
  }
  return kv;
}

inline void parse_descriptor(const std::string& text, ArchitectureConfig& a, InputConfig& in) {
  const auto kv = parse_key_values(text);
  auto get = [&](const std::string& k) -> const std::string& {
    auto it = kv.find(k);
    if (it == kv.end()) throw std::runtime_error("checkpoint descriptor is missing '" + k + "'");
    return it->second;
  };
  if (get("format") != "ftamod-checkpoint") throw std::runtime_error("not an ftamod checkpoint descriptor");
  a.height = std::stoull(get("height"));
  a.width = std::stoull(get("width"));
  a.channels = std::stoull(get("channels"));
  a.conv_channels = parse_sizes(get("conv_channels"));
  a.dense_width = std::stoull(get("dense_width"));
  a.n_classes = std::stoull(get("n_classes"));
  a.variant = parse_variant(get("variant"));
  a.cam_reduction = std::stoull(get("cam_reduction"));
  a.seed = std::stoull(get("seed"));
  in.stft.frame_length = std::stoull(get("stft.frame_length"));
  in.stft.frame_shift = std::stoull(get("stft.frame_shift"));
  in.stft.window = parse_window(get("stft.window"));
  in.image.size = std::stoull(get("image.size"));
  in.image.colormap = get("image.colormap") == "1";
  a.validate();
  in.stft.validate();
  if (a.height != in.image.size || a.width != in.image.size || a.channels != 3) {
    throw std::runtime_error("checkpoint descriptor: input shape does not match the image configuration");
  }
}

// ---------------------------------------------------------------------------
// IO

namespace detail {
inline void write_block(std::ostream& out, const std::string& name, std::span<const float> v) {
  binio::write_string(out, name);
  binio::write_u32(out, static_cast<std::uint32_t>(v.size()));
  for (float x : v) binio::write_f32(out, x);
}

inline std::vector<float> read_block(std::istream& in, std::string& name) {
  name = binio::read_string(in, 4096);
  const auto n = binio::read_u32(in);
  if (n > (1u << 30)) throw std::runtime_error("checkpoint block too large");
  std::vector<float> v(n);
  for (auto& x : v) x = binio::read_f32(in);
  return v;
}
}  // namespace detail

inline void write_checkpoint(std::ostream& out, const Checkpoint& c) {
  binio::write_magic(out, "FTAC");
  binio::write_u16(out, kCheckpointVersion);
  binio::write_string(out, describe(c.arch, c.input));
  binio::write_u32(out, static_cast<std::uint32_t>(c.params.size()));
  for (const auto& p : c.params) detail::write_block(out, p.name, p.tensor.values());
  binio::write_u32(out, static_cast<std::uint32_t>(c.optimizer_state.size()));
  for (std::size_t i = 0; i < c.optimizer_state.size(); ++i) {
    detail::write_block(out, "rmsprop." + std::to_string(i), c.optimizer_state[i]);
  }
}

inline void write_checkpoint(const std::filesystem::path& path, const Checkpoint& c) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw std::runtime_error("cannot open '" + path.string() + "' for writing");
  write_checkpoint(out, c);
  if (!out) throw std::runtime_error("write failed for '" + path.string() + "'");
}

/// Reads and validates a checkpoint: every block must match the shapes of
/// the architecture in its descriptor.
inline Checkpoint read_checkpoint(std::istream& in) {
  binio::expect_magic(in, "FTAC");
  const auto version = binio::read_u16(in);
  if (version != kCheckpointVersion) throw std::runtime_error("unsupported checkpoint version " + std::to_string(version));
  Checkpoint c;
  parse_descriptor(binio::read_string(in), c.arch, c.input);
  const auto expected = Model<float>::build(c.arch).parameters();
  const auto n = binio::read_u32(in);
  if (n != expected.size()) {
    throw std::runtime_error("checkpoint holds " + std::to_string(n) + " parameter blocks, descriptor implies " +
                             std::to_string(expected.size()));
  }
  for (std::uint32_t i = 0; i < n; ++i) {
    std::string name;
    auto v = detail::read_block(in, name);
    const auto& e = expected[i];
    if (name != e.name || v.size() != e.tensor.size()) {
      throw std::runtime_error("checkpoint block '" + name + "' does not match expected parameter '" + e.name + "' " +
                               shape_str(e.tensor.shape()));
    }
    c.params.push_back({name, Tensor<float>(e.tensor.shape(), std::move(v))});
  }
  if (in.peek() != std::char_traits<char>::eof()) {
    const auto n_opt = binio::read_u32(in);
    for (std::uint32_t i = 0; i < n_opt; ++i) {
      std::string name;
      c.optimizer_state.push_back(detail::read_block(in, name));
    }
  }
  return c;
}

inline Checkpoint read_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open checkpoint '" + path.string() + "'");
  return read_checkpoint(in);
}

}  // namespace ftamod
