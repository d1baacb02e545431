#pragma once

#include <algorithm>
#include <cstddef>
#include <string>
#include <vector>

#include "res2net/errors.hpp"
#include "res2net/rng.hpp"

namespace res2net {

// Shape of a rank-4 NCHW tensor. Dims are non-negative; zero-sized tensors
// are legal and flow through every shape-preserving op.
struct Shape4 {
  int n = 0;
  int c = 0;
  int h = 0;
  int w = 0;

  std::size_t numel() const {
    return static_cast<std::size_t>(n) * static_cast<std::size_t>(c) *
           static_cast<std::size_t>(h) * static_cast<std::size_t>(w);
  }

  void validate() const {
    if (n < 0 || c < 0 || h < 0 || w < 0) {
      throw ShapeMismatch("negative tensor dimension in " + str());
    }
  }

  bool operator==(const Shape4& o) const {
    return n == o.n && c == o.c && h == o.h && w == o.w;
  }
  bool operator!=(const Shape4& o) const { return !(*this == o); }

  std::string str() const {
    return "(" + std::to_string(n) + "," + std::to_string(c) + "," +
           std::to_string(h) + "," + std::to_string(w) + ")";
  }
};

// Dense rank-4 NCHW tensor with contiguous row-major storage. Model data is
// Tensor<float>; the gradient checker instantiates the same code with double.
template <typename T>
class Tensor {
 public:
  Tensor() = default;

  explicit Tensor(Shape4 shape) : shape_(shape), data_() {
    shape_.validate();
    data_.assign(shape_.numel(), T(0));
  }

  Tensor(Shape4 shape, std::vector<T> data)
      : shape_(shape), data_(std::move(data)) {
    shape_.validate();
    if (data_.size() != shape_.numel()) {
      throw ShapeMismatch("tensor data length " + std::to_string(data_.size()) +
                          " does not match shape " + shape_.str());
    }
  }

  static Tensor zeros(Shape4 shape) { return Tensor(shape); }

  static Tensor full(Shape4 shape, T value) {
    Tensor t(shape);
    for (auto& v : t.data_) v = value;
    return t;
  }

  static Tensor randn(Shape4 shape, Rng& rng, double stddev = 1.0) {
    Tensor t(shape);
    for (auto& v : t.data_) v = static_cast<T>(rng.normal(0.0, stddev));
    return t;
  }

  static Tensor randn(Shape4 shape, std::uint64_t seed, double stddev = 1.0) {
    Rng rng(seed);
    return randn(shape, rng, stddev);
  }

  const Shape4& shape() const { return shape_; }
  std::size_t numel() const { return data_.size(); }

  T* data() { return data_.data(); }
  const T* data() const { return data_.data(); }
  std::vector<T>& vec() { return data_; }
  const std::vector<T>& vec() const { return data_; }

  std::size_t index(int n, int c, int h, int w) const {
    return ((static_cast<std::size_t>(n) * shape_.c + c) * shape_.h + h) *
               shape_.w +
           w;
  }

  T& at(int n, int c, int h, int w) { return data_[index(n, c, h, w)]; }
  const T& at(int n, int c, int h, int w) const {
    return data_[index(n, c, h, w)];
  }

  T& operator[](std::size_t i) { return data_[i]; }
  const T& operator[](std::size_t i) const { return data_[i]; }

  template <typename U>
  Tensor<U> cast() const {
    Tensor<U> out(shape_);
    for (std::size_t i = 0; i < data_.size(); ++i)
      out[i] = static_cast<U>(data_[i]);
    return out;
  }

 private:
  Shape4 shape_;
  std::vector<T> data_;
};

// Evenly split along the channel axis into s subsets of C/s channels each.
// Subset i holds channels [i*C/s, (i+1)*C/s). Copies; outputs never alias.
template <typename T>
std::vector<Tensor<T>> split_channels(const Tensor<T>& t, int s) {
  if (s <= 0) {
    throw NonDivisibleChannels("split count must be positive, got " +
                               std::to_string(s));
  }
  const Shape4 sh = t.shape();
  if (sh.c % s != 0) {
    throw NonDivisibleChannels("cannot split " + std::to_string(sh.c) +
                               " channels into " + std::to_string(s) +
                               " subsets");
  }
  const int part_c = sh.c / s;
  std::vector<Tensor<T>> parts;
  parts.reserve(s);
  const std::size_t plane = static_cast<std::size_t>(sh.h) * sh.w;
  for (int i = 0; i < s; ++i) {
    Tensor<T> part(Shape4{sh.n, part_c, sh.h, sh.w});
    for (int n = 0; n < sh.n; ++n) {
      const T* src = t.data() + (static_cast<std::size_t>(n) * sh.c +
                                 static_cast<std::size_t>(i) * part_c) *
                                    plane;
      T* dst = part.data() + static_cast<std::size_t>(n) * part_c * plane;
      std::copy(src, src + static_cast<std::size_t>(part_c) * plane, dst);
    }
    parts.push_back(std::move(part));
  }
  return parts;
}

// Concatenate along channels, preserving list order. Inverse of split_channels.
template <typename T>
Tensor<T> concat_channels(const std::vector<Tensor<T>>& parts) {
  if (parts.empty()) {
    throw ShapeMismatch("concat_channels requires at least one part");
  }
  const Shape4 first = parts.front().shape();
  int total_c = 0;
  for (const auto& p : parts) {
    const Shape4 sh = p.shape();
    if (sh.n != first.n || sh.h != first.h || sh.w != first.w) {
      throw ShapeMismatch("concat_channels part shape " + sh.str() +
                          " does not match " + first.str());
    }
    total_c += sh.c;
  }
  Tensor<T> out(Shape4{first.n, total_c, first.h, first.w});
  const std::size_t plane = static_cast<std::size_t>(first.h) * first.w;
  for (int n = 0; n < first.n; ++n) {
    std::size_t c_off = 0;
    for (const auto& p : parts) {
      const int pc = p.shape().c;
      const T* src = p.data() + static_cast<std::size_t>(n) * pc * plane;
      T* dst = out.data() +
               (static_cast<std::size_t>(n) * total_c + c_off) * plane;
      std::copy(src, src + static_cast<std::size_t>(pc) * plane, dst);
      c_off += static_cast<std::size_t>(pc);
    }
  }
  return out;
}

// Elementwise sum of two identically shaped tensors.
template <typename T>
Tensor<T> add(const Tensor<T>& a, const Tensor<T>& b) {
  if (a.shape() != b.shape()) {
    throw ShapeMismatch("add shape " + a.shape().str() + " vs " +
                        b.shape().str());
  }
  Tensor<T> out(a.shape());
  for (std::size_t i = 0; i < out.numel(); ++i) out[i] = a[i] + b[i];
  return out;
}

}  // namespace res2net
