#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <string>
#include <vector>

#include "res2net/errors.hpp"
#include "res2net/tensor.hpp"

namespace res2net {

// Convolution weight layout is (C_out, C_in/groups, k, k); square odd kernels,
// zero padding, no bias (BN follows every conv in this architecture family).
template <typename T>
struct Conv2dParams {
  Tensor<T> weight;
  int stride = 1;
  int padding = 0;
  int groups = 1;

  int k() const { return weight.shape().h; }
  int out_channels() const { return weight.shape().n; }
  int in_channels() const { return weight.shape().c * groups; }

  void validate() const {
    const Shape4 w = weight.shape();
    if (w.h != w.w) {
      throw ShapeMismatch("conv kernel must be square, got " + w.str());
    }
    if (w.h % 2 == 0) {
      throw ShapeMismatch("conv kernel size must be odd, got " +
                          std::to_string(w.h));
    }
    if (stride <= 0 || padding < 0 || groups <= 0) {
      throw ShapeMismatch("invalid conv hyperparameters");
    }
    if (w.n % groups != 0) {
      throw NonDivisibleChannels("C_out " + std::to_string(w.n) +
                                 " not divisible by groups " +
                                 std::to_string(groups));
    }
  }
};

inline int conv_out_dim(int in, int k, int stride, int padding) {
  return (in + 2 * padding - k) / stride + 1;
}

namespace detail {

template <typename T>
Shape4 conv_output_shape(const Shape4& x, const Conv2dParams<T>& p) {
  p.validate();
  if (x.c != p.in_channels()) {
    throw ShapeMismatch("conv input channels " + std::to_string(x.c) +
                        " != weight expects " +
                        std::to_string(p.in_channels()));
  }
  if (x.c % p.groups != 0) {
    throw NonDivisibleChannels("C_in " + std::to_string(x.c) +
                               " not divisible by groups " +
                               std::to_string(p.groups));
  }
  const int ho = conv_out_dim(x.h, p.k(), p.stride, p.padding);
  const int wo = conv_out_dim(x.w, p.k(), p.stride, p.padding);
  if (ho < 1 || wo < 1) {
    throw ShapeMismatch("conv output spatial dims would be empty for input " +
                        x.str());
  }
  return Shape4{x.n, p.out_channels(), ho, wo};
}

}  // namespace detail

// Normative convolution semantics: direct cross-correlation, accumulating per
// output element over (c_in, kh, kw) in ascending order.
template <typename T>
Tensor<T> conv2d_naive(const Tensor<T>& x, const Conv2dParams<T>& p) {
  const Shape4 xs = x.shape();
  const Shape4 os = detail::conv_output_shape(xs, p);
  Tensor<T> out(os);
  const int k = p.k();
  const int cin_g = xs.c / p.groups;
  const int cout_g = os.c / p.groups;
  for (int n = 0; n < os.n; ++n) {
    for (int co = 0; co < os.c; ++co) {
      const int g = co / cout_g;
      for (int oh = 0; oh < os.h; ++oh) {
        for (int ow = 0; ow < os.w; ++ow) {
          T acc = T(0);
          for (int ci = 0; ci < cin_g; ++ci) {
            for (int kh = 0; kh < k; ++kh) {
              const int ih = oh * p.stride - p.padding + kh;
              if (ih < 0 || ih >= xs.h) continue;
              for (int kw = 0; kw < k; ++kw) {
                const int iw = ow * p.stride - p.padding + kw;
                if (iw < 0 || iw >= xs.w) continue;
                acc += x.at(n, g * cin_g + ci, ih, iw) *
                       p.weight.at(co, ci, kh, kw);
              }
            }
          }
          out.at(n, co, oh, ow) = acc;
        }
      }
    }
  }
  return out;
}

// Unrolls one batch sample and one channel group into a (cin_g*k*k, ho*wo)
// column matrix; row order (c_in, kh, kw) matches the naive accumulation order.
template <typename T>
void im2col(const Tensor<T>& x, int n, int group, int cin_g, int k, int stride,
            int padding, int ho, int wo, std::vector<T>& col) {
  const Shape4 xs = x.shape();
  col.assign(static_cast<std::size_t>(cin_g) * k * k * ho * wo, T(0));
  std::size_t row = 0;
  for (int ci = 0; ci < cin_g; ++ci) {
    const int c = group * cin_g + ci;
    for (int kh = 0; kh < k; ++kh) {
      for (int kw = 0; kw < k; ++kw, ++row) {
        T* dst = col.data() + row * ho * wo;
        for (int oh = 0; oh < ho; ++oh) {
          const int ih = oh * stride - padding + kh;
          if (ih < 0 || ih >= xs.h) {
            dst += wo;
            continue;
          }
          for (int ow = 0; ow < wo; ++ow, ++dst) {
            const int iw = ow * stride - padding + kw;
            if (iw >= 0 && iw < xs.w) *dst = x.at(n, c, ih, iw);
          }
        }
      }
    }
  }
}

// Scatter-add of a column matrix back into the input layout (adjoint of
// im2col). Used by the convolution backward pass.
template <typename T>
void col2im_add(const std::vector<T>& col, int n, int group, int cin_g, int k,
                int stride, int padding, int ho, int wo, Tensor<T>& x) {
  const Shape4 xs = x.shape();
  std::size_t row = 0;
  for (int ci = 0; ci < cin_g; ++ci) {
    const int c = group * cin_g + ci;
    for (int kh = 0; kh < k; ++kh) {
      for (int kw = 0; kw < k; ++kw, ++row) {
        const T* src = col.data() + row * ho * wo;
        for (int oh = 0; oh < ho; ++oh) {
          const int ih = oh * stride - padding + kh;
          if (ih < 0 || ih >= xs.h) {
            src += wo;
            continue;
          }
          for (int ow = 0; ow < wo; ++ow, ++src) {
            const int iw = ow * stride - padding + kw;
            if (iw >= 0 && iw < xs.w) x.at(n, c, ih, iw) += *src;
          }
        }
      }
    }
  }
}

// out[m, j] += sum_k a[m, k] * b[k, j]; k ascends for every output element, so
// the accumulation order matches conv2d_naive exactly.
template <typename T>
void gemm_accumulate(const T* a, const T* b, T* out, int m, int kk, int jj) {
  for (int i = 0; i < m; ++i) {
    for (int l = 0; l < kk; ++l) {
      const T w = a[static_cast<std::size_t>(i) * kk + l];
      if (w == T(0)) continue;
      const T* brow = b + static_cast<std::size_t>(l) * jj;
      T* orow = out + static_cast<std::size_t>(i) * jj;
      for (int j = 0; j < jj; ++j) orow[j] += w * brow[j];
    }
  }
}

// im2col + GEMM fast path. Bit-identical to conv2d_naive for every input,
// because both accumulate per output element over (c_in, kh, kw) ascending.
template <typename T>
Tensor<T> conv2d(const Tensor<T>& x, const Conv2dParams<T>& p) {
  const Shape4 xs = x.shape();
  const Shape4 os = detail::conv_output_shape(xs, p);
  Tensor<T> out(os);
  const int k = p.k();
  const int cin_g = xs.c / p.groups;
  const int cout_g = os.c / p.groups;
  const int rows = cin_g * k * k;
  const int cols = os.h * os.w;
  std::vector<T> col;
  for (int n = 0; n < os.n; ++n) {
    for (int g = 0; g < p.groups; ++g) {
      im2col(x, n, g, cin_g, k, p.stride, p.padding, os.h, os.w, col);
      const T* w = p.weight.data() + static_cast<std::size_t>(g) * cout_g *
                                         cin_g * k * k;
      T* o = out.data() +
             (static_cast<std::size_t>(n) * os.c +
              static_cast<std::size_t>(g) * cout_g) *
                 cols;
      gemm_accumulate(w, col.data(), o, cout_g, rows, cols);
    }
  }
  return out;
}

// ---- batch normalization ----

template <typename T>
struct BatchNormParams {
  std::vector<T> gamma;
  std::vector<T> beta;
  std::vector<T> running_mean;
  std::vector<T> running_var;
  T epsilon = T(1e-5);
  T momentum = T(0.1);

  static BatchNormParams identity(int channels) {
    BatchNormParams p;
    p.gamma.assign(channels, T(1));
    p.beta.assign(channels, T(0));
    p.running_mean.assign(channels, T(0));
    p.running_var.assign(channels, T(1));
    return p;
  }

  int channels() const { return static_cast<int>(gamma.size()); }
};

enum class BnMode { train, eval };

// Per-channel batch statistics from the most recent train-mode call; the
// variance is the biased (divide by m) estimate used for normalization.
template <typename T>
struct BnBatchStats {
  std::vector<T> mean;
  std::vector<T> var;
};

template <typename T>
Tensor<T> batch_norm(const Tensor<T>& x, const BatchNormParams<T>& p,
                     BnMode mode, BnBatchStats<T>* stats_out = nullptr) {
  const Shape4 xs = x.shape();
  if (xs.c != p.channels()) {
    throw ShapeMismatch("batch_norm expects " + std::to_string(p.channels()) +
                        " channels, got " + xs.str());
  }
  Tensor<T> out(xs);
  const std::size_t plane = static_cast<std::size_t>(xs.h) * xs.w;
  const std::size_t m = static_cast<std::size_t>(xs.n) * plane;
  if (mode == BnMode::train && m == 0) {
    throw ShapeMismatch("batch_norm train mode needs at least one element");
  }
  std::vector<T> mean(xs.c, T(0));
  std::vector<T> var(xs.c, T(0));
  if (mode == BnMode::train) {
    for (int c = 0; c < xs.c; ++c) {
      double sum = 0.0;
      for (int n = 0; n < xs.n; ++n) {
        const T* px = x.data() + (static_cast<std::size_t>(n) * xs.c + c) * plane;
        for (std::size_t i = 0; i < plane; ++i) sum += static_cast<double>(px[i]);
      }
      const double mu = sum / static_cast<double>(m);
      double sq = 0.0;
      for (int n = 0; n < xs.n; ++n) {
        const T* px = x.data() + (static_cast<std::size_t>(n) * xs.c + c) * plane;
        for (std::size_t i = 0; i < plane; ++i) {
          const double d = static_cast<double>(px[i]) - mu;
          sq += d * d;
        }
      }
      mean[c] = static_cast<T>(mu);
      var[c] = static_cast<T>(sq / static_cast<double>(m));
    }
  } else {
    mean = p.running_mean;
    var = p.running_var;
  }
  for (int c = 0; c < xs.c; ++c) {
    const T inv = T(1) / std::sqrt(var[c] + p.epsilon);
    const T g = p.gamma[c];
    const T b = p.beta[c];
    const T mu = mean[c];
    for (int n = 0; n < xs.n; ++n) {
      const T* px = x.data() + (static_cast<std::size_t>(n) * xs.c + c) * plane;
      T* po = out.data() + (static_cast<std::size_t>(n) * xs.c + c) * plane;
      for (std::size_t i = 0; i < plane; ++i) {
        po[i] = (px[i] - mu) * inv * g + b;
      }
    }
  }
  if (stats_out) {
    stats_out->mean = std::move(mean);
    stats_out->var = std::move(var);
  }
  return out;
}

// Commit a train-mode batch into running statistics:
// running <- (1 - momentum) * running + momentum * batch.
template <typename T>
void update_running_stats(BatchNormParams<T>& p, const BnBatchStats<T>& stats) {
  for (int c = 0; c < p.channels(); ++c) {
    p.running_mean[c] =
        (T(1) - p.momentum) * p.running_mean[c] + p.momentum * stats.mean[c];
    p.running_var[c] =
        (T(1) - p.momentum) * p.running_var[c] + p.momentum * stats.var[c];
  }
}

// ---- activations ----

template <typename T>
Tensor<T> relu(const Tensor<T>& x) {
  Tensor<T> out(x.shape());
  for (std::size_t i = 0; i < x.numel(); ++i) out[i] = x[i] > T(0) ? x[i] : T(0);
  return out;
}

template <typename T>
Tensor<T> sigmoid(const Tensor<T>& x) {
  Tensor<T> out(x.shape());
  for (std::size_t i = 0; i < x.numel(); ++i)
    out[i] = T(1) / (T(1) + std::exp(-x[i]));
  return out;
}

// ---- pooling ----

template <typename T>
Tensor<T> global_avg_pool(const Tensor<T>& x) {
  const Shape4 xs = x.shape();
  const std::size_t plane = static_cast<std::size_t>(xs.h) * xs.w;
  if (plane == 0) {
    throw EmptySpatial("global_avg_pool on empty spatial dims " + xs.str());
  }
  Tensor<T> out(Shape4{xs.n, xs.c, 1, 1});
  for (int n = 0; n < xs.n; ++n) {
    for (int c = 0; c < xs.c; ++c) {
      const T* px = x.data() + (static_cast<std::size_t>(n) * xs.c + c) * plane;
      double sum = 0.0;
      for (std::size_t i = 0; i < plane; ++i) sum += static_cast<double>(px[i]);
      out.at(n, c, 0, 0) = static_cast<T>(sum / static_cast<double>(plane));
    }
  }
  return out;
}

template <typename T>
Tensor<T> avg_pool2d(const Tensor<T>& x, int k, int stride, int padding = 0) {
  const Shape4 xs = x.shape();
  const int ho = conv_out_dim(xs.h, k, stride, padding);
  const int wo = conv_out_dim(xs.w, k, stride, padding);
  if (ho < 1 || wo < 1) {
    throw ShapeMismatch("avg_pool2d output would be empty for " + xs.str());
  }
  Tensor<T> out(Shape4{xs.n, xs.c, ho, wo});
  const T norm = T(1) / static_cast<T>(k * k);
  for (int n = 0; n < xs.n; ++n) {
    for (int c = 0; c < xs.c; ++c) {
      for (int oh = 0; oh < ho; ++oh) {
        for (int ow = 0; ow < wo; ++ow) {
          T acc = T(0);
          for (int kh = 0; kh < k; ++kh) {
            const int ih = oh * stride - padding + kh;
            if (ih < 0 || ih >= xs.h) continue;
            for (int kw = 0; kw < k; ++kw) {
              const int iw = ow * stride - padding + kw;
              if (iw < 0 || iw >= xs.w) continue;
              acc += x.at(n, c, ih, iw);
            }
          }
          out.at(n, c, oh, ow) = acc * norm;
        }
      }
    }
  }
  return out;
}

// Max pooling; returns the flat input index of each window maximum through
// argmax_out so the backward pass can route gradients. Ties go to the first
// element in scan order.
template <typename T>
Tensor<T> max_pool2d(const Tensor<T>& x, int k, int stride, int padding = 0,
                     std::vector<std::size_t>* argmax_out = nullptr) {
  const Shape4 xs = x.shape();
  const int ho = conv_out_dim(xs.h, k, stride, padding);
  const int wo = conv_out_dim(xs.w, k, stride, padding);
  if (ho < 1 || wo < 1) {
    throw ShapeMismatch("max_pool2d output would be empty for " + xs.str());
  }
  Tensor<T> out(Shape4{xs.n, xs.c, ho, wo});
  if (argmax_out) argmax_out->assign(out.numel(), 0);
  std::size_t oi = 0;
  for (int n = 0; n < xs.n; ++n) {
    for (int c = 0; c < xs.c; ++c) {
      for (int oh = 0; oh < ho; ++oh) {
        for (int ow = 0; ow < wo; ++ow, ++oi) {
          T best = T(0);
          std::size_t best_idx = 0;
          bool seen = false;
          for (int kh = 0; kh < k; ++kh) {
            const int ih = oh * stride - padding + kh;
            if (ih < 0 || ih >= xs.h) continue;
            for (int kw = 0; kw < k; ++kw) {
              const int iw = ow * stride - padding + kw;
              if (iw < 0 || iw >= xs.w) continue;
              const T v = x.at(n, c, ih, iw);
              if (!seen || v > best) {
                best = v;
                best_idx = x.index(n, c, ih, iw);
                seen = true;
              }
            }
          }
          out[oi] = best;
          if (argmax_out) (*argmax_out)[oi] = best_idx;
        }
      }
    }
  }
  return out;
}

// ---- fully connected ----

// x is (N, C_in, 1, 1) (spatial dims already pooled away), weight (C_out, C_in),
// bias (C_out). Output (N, C_out, 1, 1).
template <typename T>
Tensor<T> fully_connected(const Tensor<T>& x, const Tensor<T>& weight,
                          const Tensor<T>& bias) {
  const Shape4 xs = x.shape();
  const Shape4 ws = weight.shape();
  const Shape4 bs = bias.shape();
  if (xs.h != 1 || xs.w != 1) {
    throw ShapeMismatch("fully_connected input must be (N,C,1,1), got " +
                        xs.str());
  }
  if (ws.h != 1 || ws.w != 1 || ws.c != xs.c) {
    throw ShapeMismatch("fully_connected weight " + ws.str() +
                        " does not match input " + xs.str());
  }
  if (bs.n != ws.n || bs.numel() != static_cast<std::size_t>(ws.n)) {
    throw ShapeMismatch("fully_connected bias " + bs.str() +
                        " does not match weight " + ws.str());
  }
  Tensor<T> out(Shape4{xs.n, ws.n, 1, 1});
  for (int n = 0; n < xs.n; ++n) {
    const T* px = x.data() + static_cast<std::size_t>(n) * xs.c;
    for (int o = 0; o < ws.n; ++o) {
      const T* pw = weight.data() + static_cast<std::size_t>(o) * xs.c;
      T acc = bias[static_cast<std::size_t>(o)];
      for (int c = 0; c < xs.c; ++c) acc += pw[c] * px[c];
      out.at(n, o, 0, 0) = acc;
    }
  }
  return out;
}

}  // namespace res2net
