#pragma once

// Corpus split -> batched spectrogram images, with an optional on-disk cache.

#include <algorithm>
#include <cstdint>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <optional>
#include <span>
#include <string>
#include <thread>
#include <vector>

#include "ftamod/binary_io.hpp"
#include "ftamod/corpus.hpp"
#include "ftamod/spectro.hpp"
#include "ftamod/tensor.hpp"

namespace ftamod {

struct InputConfig {
  StftConfig stft{};
  ImageConfig image{};

  std::string key() const {
    return "L" + std::to_string(stft.frame_length) + "K" + std::to_string(stft.frame_shift) + "w" +
           std::string(to_string(stft.window)) + "s" + std::to_string(image.size) + "c" +
           std::to_string(image.colormap ? 1 : 0);
  }
};

/// Images (N x S x S x 3, float) with labels and SNR tags.
struct SpectrogramSet {
  std::size_t image_size = 0;
  std::vector<float> images;
  std::vector<std::size_t> labels;
  std::vector<int> snr_db;

  std::size_t size() const { return labels.size(); }
  std::size_t image_len() const { return image_size * image_size * 3; }
  std::span<const float> image(std::size_t i) const { return {images.data() + i * image_len(), image_len()}; }

  SpectrogramSet subset(std::span<const std::size_t> idx) const {
    SpectrogramSet s;
    s.image_size = image_size;
    for (auto i : idx) {
      const auto img = image(i);
      s.images.insert(s.images.end(), img.begin(), img.end());
      s.labels.push_back(labels[i]);
      s.snr_db.push_back(snr_db[i]);
    }
    return s;
  }

  SpectrogramSet with_snr(int snr) const {
    std::vector<std::size_t> idx;
    for (std::size_t i = 0; i < size(); ++i) {
      if (snr_db[i] == snr) idx.push_back(i);
    }
    return subset(idx);
  }

  std::vector<int> snr_values() const {
    std::vector<int> v(snr_db.begin(), snr_db.end());
    std::sort(v.begin(), v.end());
    v.erase(std::unique(v.begin(), v.end()), v.end());
    return v;
  }
};

inline std::uint64_t corpus_hash(const Corpus& c) {
  std::uint64_t h = binio::fnv1a(std::to_string(c.signal_length));
  for (const auto& r : c.records) {
    const char head[4] = {static_cast<char>(r.split), static_cast<char>(r.mode),
                          static_cast<char>(r.snr_db & 0xFF), static_cast<char>((r.snr_db >> 8) & 0xFF)};
    h = binio::fnv1a({head, 4}, h);
    h = binio::fnv1a({reinterpret_cast<const char*>(r.iq.data()), r.iq.size() * sizeof(r.iq[0])}, h);
  }
  return h;
}

namespace detail {

inline std::optional<SpectrogramSet> load_cache(const std::filesystem::path& p, std::size_t n, std::size_t image_size) {
  std::ifstream in(p, std::ios::binary);
  if (!in) return std::nullopt;
  try {
    binio::expect_magic(in, "FTSC");
    if (binio::read_u32(in) != n || binio::read_u32(in) != image_size) return std::nullopt;
    SpectrogramSet s;
    s.image_size = image_size;
    s.images.resize(n * image_size * image_size * 3);
    for (auto& v : s.images) v = binio::read_f32(in);
    return s;
  } catch (const std::exception&) {
    return std::nullopt;
  }
}

inline void store_cache(const std::filesystem::path& p, const SpectrogramSet& s) {
  std::error_code ec;
  std::filesystem::create_directories(p.parent_path(), ec);
  const auto tmp = p.string() + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) return;
    binio::write_magic(out, "FTSC");
    binio::write_u32(out, static_cast<std::uint32_t>(s.size()));
    binio::write_u32(out, static_cast<std::uint32_t>(s.image_size));
    for (float v : s.images) binio::write_f32(out, v);
    if (!out) return;
  }
  std::filesystem::rename(tmp, p, ec);
}

}  // namespace detail

/// Directory named by FTAMOD_CACHE_DIR, if set.
inline std::optional<std::filesystem::path> cache_dir_from_env() {
  if (const char* d = std::getenv("FTAMOD_CACHE_DIR"); d && *d) return std::filesystem::path(d);
  return std::nullopt;
}

/// Spectrogram images for one split. Work fans out over `threads`; each
/// image depends only on its own record, so results do not depend on the
/// thread count.
inline SpectrogramSet make_spectrogram_set(const Corpus& corpus, Split split, const InputConfig& cfg,
                                           unsigned threads = 1,
                                           const std::optional<std::filesystem::path>& cache_dir = std::nullopt) {
  const auto recs = corpus.split(split);
  SpectrogramSet s;
  s.image_size = cfg.image.size;
  for (const auto* r : recs) {
    s.labels.push_back(class_index(r->mode));
    s.snr_db.push_back(r->snr_db);
  }
  std::optional<std::filesystem::path> cache_file;
  if (cache_dir) {
    char name[96];
    std::snprintf(name, sizeof name, "%016llx-%s-%s.ftsc", static_cast<unsigned long long>(corpus_hash(corpus)),
                  cfg.key().c_str(), std::string(kSplitNames[static_cast<std::size_t>(split)]).c_str());
    cache_file = *cache_dir / name;
    if (auto cached = detail::load_cache(*cache_file, recs.size(), cfg.image.size)) {
      s.images = std::move(cached->images);
      return s;
    }
  }
  s.images.assign(recs.size() * s.image_len(), 0.0f);
  auto work = [&](std::size_t begin, std::size_t step) {
    for (std::size_t i = begin; i < recs.size(); i += step) {
      const auto sp = spectrogram(to_signal(*recs[i]), cfg.stft, cfg.image);
      std::transform(sp.image.begin(), sp.image.end(), s.images.begin() + static_cast<std::ptrdiff_t>(i * s.image_len()),
                     [](double v) { return static_cast<float>(v); });
    }
  };
  const unsigned n = std::max(1u, std::min<unsigned>(threads, static_cast<unsigned>(std::max<std::size_t>(1, recs.size()))));
  if (n == 1) {
    work(0, 1);
  } else {
    std::vector<std::jthread> pool;
    for (unsigned w = 0; w < n; ++w) pool.emplace_back(work, w, n);
  }
  if (cache_file) detail::store_cache(*cache_file, s);
  return s;
}

/// Stacks the selected images into a (B, S, S, 3) tensor.
template <typename T>
Tensor<T> batch_images(const SpectrogramSet& s, std::span<const std::size_t> idx) {
  Tensor<T> t({idx.size(), s.image_size, s.image_size, 3});
  const std::size_t len = s.image_len();
  for (std::size_t b = 0; b < idx.size(); ++b) {
    const auto img = s.image(idx[b]);
    std::transform(img.begin(), img.end(), t.data() + b * len, [](float v) { return static_cast<T>(v); });
  }
  return t;
}

}  // namespace ftamod
