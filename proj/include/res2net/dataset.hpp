#pragma once

#include <algorithm>
#include <array>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include "res2net/errors.hpp"
#include "res2net/rng.hpp"
#include "res2net/tensor.hpp"

namespace res2net {

// Inclusive pixel bounding box of a generated pattern.
struct PatternBox {
  int h0 = 0, w0 = 0, h1 = -1, w1 = -1;

  bool contains(int h, int w) const {
    return h >= h0 && h <= h1 && w >= w0 && w <= w1;
  }
};

struct Dataset {
  Tensor<float> images;  // (N, 3, H, W), values in [0,1] until standardized
  std::vector<int> labels;
  int class_count = 0;
  std::vector<PatternBox> boxes;  // synthetic generator only

  std::size_t size() const { return labels.size(); }
};

enum class Split { train, test };

// CIFAR-100 binary layout: 3074-byte records of coarse label, fine label and
// 3072 pixel bytes (R plane, then G, then B; 32x32 row-major). The fine
// label is used. limit == 0 keeps every record.
inline Dataset load_cifar100(const std::string& path, Split split,
                             std::size_t limit = 0) {
  namespace fs = std::filesystem;
  std::string file = path;
  if (fs::is_directory(path)) {
    file = (fs::path(path) / (split == Split::train ? "train.bin" : "test.bin"))
               .string();
  }
  std::ifstream in(file, std::ios::binary);
  if (!in) {
    throw IoError("cannot open dataset file: " + file);
  }
  in.seekg(0, std::ios::end);
  const std::uint64_t bytes = static_cast<std::uint64_t>(in.tellg());
  in.seekg(0, std::ios::beg);
  constexpr std::uint64_t kRecord = 3074;
  if (bytes % kRecord != 0) {
    throw BadRecordLength("file size " + std::to_string(bytes) +
                          " is not a multiple of 3074: " + file);
  }
  std::uint64_t count = bytes / kRecord;
  if (limit > 0 && limit < count) count = limit;
  Dataset ds;
  ds.class_count = 100;
  ds.images = Tensor<float>(Shape4{static_cast<int>(count), 3, 32, 32});
  ds.labels.resize(count);
  std::vector<unsigned char> record(kRecord);
  for (std::uint64_t i = 0; i < count; ++i) {
    if (!in.read(reinterpret_cast<char*>(record.data()), kRecord)) {
      throw IoError("short read in " + file);
    }
    ds.labels[i] = record[1];  // fine label; record[0] is the coarse label
    float* dst = ds.images.data() + i * 3 * 32 * 32;
    for (std::size_t p = 0; p < 3072; ++p) {
      dst[p] = static_cast<float>(record[2 + p]) / 255.0f;
    }
  }
  return ds;
}

namespace detail {

// Scale-invariant pattern stencils; classes that share a stencil differ by
// channel tint, so shape identity (not size or position) carries the label.
inline bool pattern_pixel(int style, int dh, int dw, int side) {
  const int t = std::max(1, side / 6);
  switch (style % 6) {
    case 0:
      return true;  // filled square
    case 1:
      return dh < t || dw < t || dh >= side - t || dw >= side - t;  // ring
    case 2:
      return std::abs(dh - dw) < t || std::abs(dh + dw - (side - 1)) < t;  // X
    case 3:
      return (dh / std::max(1, side / 5)) % 2 == 0;  // horizontal stripes
    case 4:
      return (dw / std::max(1, side / 5)) % 2 == 0;  // vertical stripes
    default:
      return ((dh / std::max(1, side / 4)) + (dw / std::max(1, side / 4))) %
                 2 ==
             0;  // checkerboard
  }
}

}  // namespace detail

// Deterministic desk-scale dataset: each sample gets its class's pattern at a
// random position and one of three sizes, over a faint noise background.
// Same arguments always produce bit-identical tensors.
inline Dataset gen_synthetic_multiscale(int n, int class_count, int image_size,
                                        std::uint64_t seed) {
  if (image_size < 16) {
    throw ShapeMismatch("synthetic image_size must be >= 16");
  }
  if (n < 0 || class_count <= 0) {
    throw ShapeMismatch("bad synthetic dataset arguments");
  }
  Dataset ds;
  ds.class_count = class_count;
  ds.images = Tensor<float>(Shape4{n, 3, image_size, image_size});
  ds.labels.resize(n);
  ds.boxes.resize(n);
  const int sizes[3] = {std::max(4, image_size / 5), image_size / 3,
                        image_size / 2};
  for (int k = 0; k < n; ++k) {
    Rng rng(seed + 0x9E3779B97F4A7C15ULL * static_cast<std::uint64_t>(k + 1));
    const int label = k % class_count;
    ds.labels[k] = label;
    const int side = sizes[rng.uniform_int(0, 2)];
    const int h0 = rng.uniform_int(0, image_size - side);
    const int w0 = rng.uniform_int(0, image_size - side);
    ds.boxes[k] = PatternBox{h0, w0, h0 + side - 1, w0 + side - 1};
    const int style = label % 6;
    const int tint = (label / 6) % 3;
    for (int c = 0; c < 3; ++c) {
      for (int h = 0; h < image_size; ++h) {
        for (int w = 0; w < image_size; ++w) {
          ds.images.at(k, c, h, w) =
              static_cast<float>(rng.uniform(0.0, 0.01));
        }
      }
    }
    for (int dh = 0; dh < side; ++dh) {
      for (int dw = 0; dw < side; ++dw) {
        if (!detail::pattern_pixel(style, dh, dw, side)) continue;
        for (int c = 0; c < 3; ++c) {
          ds.images.at(k, c, h0 + dh, w0 + dw) = (c == tint) ? 1.0f : 0.4f;
        }
      }
    }
  }
  return ds;
}

// ---- per-channel standardization ----

struct ChannelStats {
  std::vector<float> mean;
  std::vector<float> stddev;
};

inline ChannelStats channel_stats(const Tensor<float>& images) {
  const Shape4 s = images.shape();
  ChannelStats st;
  st.mean.assign(s.c, 0.0f);
  st.stddev.assign(s.c, 0.0f);
  const std::size_t plane = static_cast<std::size_t>(s.h) * s.w;
  const std::size_t m = static_cast<std::size_t>(s.n) * plane;
  if (m == 0) return st;
  for (int c = 0; c < s.c; ++c) {
    double sum = 0.0;
    for (int n = 0; n < s.n; ++n) {
      const float* p = images.data() + (static_cast<std::size_t>(n) * s.c + c) * plane;
      for (std::size_t i = 0; i < plane; ++i) sum += p[i];
    }
    const double mu = sum / static_cast<double>(m);
    double sq = 0.0;
    for (int n = 0; n < s.n; ++n) {
      const float* p = images.data() + (static_cast<std::size_t>(n) * s.c + c) * plane;
      for (std::size_t i = 0; i < plane; ++i) {
        const double d = p[i] - mu;
        sq += d * d;
      }
    }
    st.mean[c] = static_cast<float>(mu);
    st.stddev[c] = static_cast<float>(
        std::sqrt(std::max(sq / static_cast<double>(m), 1e-12)));
  }
  return st;
}

inline void standardize(Tensor<float>& images, const ChannelStats& st) {
  const Shape4 s = images.shape();
  const std::size_t plane = static_cast<std::size_t>(s.h) * s.w;
  for (int n = 0; n < s.n; ++n) {
    for (int c = 0; c < s.c; ++c) {
      float* p = images.data() + (static_cast<std::size_t>(n) * s.c + c) * plane;
      const float mu = st.mean[c];
      const float inv = 1.0f / st.stddev[c];
      for (std::size_t i = 0; i < plane; ++i) p[i] = (p[i] - mu) * inv;
    }
  }
}

}  // namespace res2net
