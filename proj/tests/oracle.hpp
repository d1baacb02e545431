#pragma once

// Straight-line scalar reference implementations, independent of the library
// forward paths. Everything here is written as plain nested loops directly
// from the operator definitions so it can serve as the oracle side of
// equivalence tests.

#include <cmath>
#include <vector>

#include "res2net/block.hpp"
#include "res2net/params.hpp"
#include "res2net/tensor.hpp"

namespace oracle {

using res2net::ParamStore;
using res2net::Res2NetBlockConfig;
using res2net::Shape4;
using res2net::Tensor;

template <typename T>
Tensor<T> conv2d(const Tensor<T>& x, const Tensor<T>& w, int stride, int pad,
                 int groups) {
  const Shape4 xs = x.shape();
  const Shape4 ws = w.shape();
  const int k = ws.h;
  const int ho = (xs.h + 2 * pad - k) / stride + 1;
  const int wo = (xs.w + 2 * pad - k) / stride + 1;
  const int cin_g = xs.c / groups;
  const int cout_g = ws.n / groups;
  Tensor<T> out(Shape4{xs.n, ws.n, ho, wo});
  for (int n = 0; n < xs.n; ++n) {
    for (int co = 0; co < ws.n; ++co) {
      const int g = co / cout_g;
      for (int oh = 0; oh < ho; ++oh) {
        for (int ow = 0; ow < wo; ++ow) {
          T acc = T(0);
          for (int ci = 0; ci < cin_g; ++ci) {
            for (int kh = 0; kh < k; ++kh) {
              for (int kw = 0; kw < k; ++kw) {
                const int ih = oh * stride - pad + kh;
                const int iw = ow * stride - pad + kw;
                if (ih < 0 || ih >= xs.h || iw < 0 || iw >= xs.w) continue;
                acc += x.at(n, g * cin_g + ci, ih, iw) * w.at(co, ci, kh, kw);
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

template <typename T>
Tensor<T> batch_norm_train(const Tensor<T>& x, const std::vector<T>& gamma,
                           const std::vector<T>& beta, T eps) {
  const Shape4 s = x.shape();
  Tensor<T> out(s);
  const double m = static_cast<double>(s.n) * s.h * s.w;
  for (int c = 0; c < s.c; ++c) {
    double sum = 0.0;
    for (int n = 0; n < s.n; ++n)
      for (int h = 0; h < s.h; ++h)
        for (int w = 0; w < s.w; ++w) sum += x.at(n, c, h, w);
    const double mu = sum / m;
    double sq = 0.0;
    for (int n = 0; n < s.n; ++n)
      for (int h = 0; h < s.h; ++h)
        for (int w = 0; w < s.w; ++w) {
          const double d = x.at(n, c, h, w) - mu;
          sq += d * d;
        }
    // Statistics accumulate in double and round to T before normalizing,
    // the same discipline the library op pins down.
    const T mean_t = static_cast<T>(mu);
    const T var_t = static_cast<T>(sq / m);
    const T inv = T(1) / std::sqrt(var_t + eps);
    for (int n = 0; n < s.n; ++n)
      for (int h = 0; h < s.h; ++h)
        for (int w = 0; w < s.w; ++w) {
          out.at(n, c, h, w) =
              (x.at(n, c, h, w) - mean_t) * inv * gamma[c] + beta[c];
        }
  }
  return out;
}

template <typename T>
Tensor<T> batch_norm_eval(const Tensor<T>& x, const std::vector<T>& gamma,
                          const std::vector<T>& beta, const std::vector<T>& rm,
                          const std::vector<T>& rv, T eps) {
  const Shape4 s = x.shape();
  Tensor<T> out(s);
  for (int c = 0; c < s.c; ++c) {
    const T inv = T(1) / std::sqrt(rv[c] + eps);
    for (int n = 0; n < s.n; ++n)
      for (int h = 0; h < s.h; ++h)
        for (int w = 0; w < s.w; ++w)
          out.at(n, c, h, w) = (x.at(n, c, h, w) - rm[c]) * inv * gamma[c] + beta[c];
  }
  return out;
}

template <typename T>
Tensor<T> relu(const Tensor<T>& x) {
  Tensor<T> out(x.shape());
  for (std::size_t i = 0; i < x.numel(); ++i)
    out[i] = x[i] > T(0) ? x[i] : T(0);
  return out;
}

template <typename T>
Tensor<T> sigmoid(const Tensor<T>& x) {
  Tensor<T> out(x.shape());
  for (std::size_t i = 0; i < x.numel(); ++i)
    out[i] = T(1) / (T(1) + std::exp(-x[i]));
  return out;
}

template <typename T>
Tensor<T> add(const Tensor<T>& a, const Tensor<T>& b) {
  Tensor<T> out(a.shape());
  for (std::size_t i = 0; i < a.numel(); ++i) out[i] = a[i] + b[i];
  return out;
}

template <typename T>
Tensor<T> global_avg_pool(const Tensor<T>& x) {
  const Shape4 s = x.shape();
  Tensor<T> out(Shape4{s.n, s.c, 1, 1});
  for (int n = 0; n < s.n; ++n)
    for (int c = 0; c < s.c; ++c) {
      double sum = 0.0;
      for (int h = 0; h < s.h; ++h)
        for (int w = 0; w < s.w; ++w) sum += x.at(n, c, h, w);
      out.at(n, c, 0, 0) = static_cast<T>(sum / (s.h * s.w));
    }
  return out;
}

template <typename T>
Tensor<T> avg_pool(const Tensor<T>& x, int k, int stride, int pad) {
  const Shape4 s = x.shape();
  const int ho = (s.h + 2 * pad - k) / stride + 1;
  const int wo = (s.w + 2 * pad - k) / stride + 1;
  Tensor<T> out(Shape4{s.n, s.c, ho, wo});
  for (int n = 0; n < s.n; ++n)
    for (int c = 0; c < s.c; ++c)
      for (int oh = 0; oh < ho; ++oh)
        for (int ow = 0; ow < wo; ++ow) {
          T acc = T(0);
          for (int kh = 0; kh < k; ++kh)
            for (int kw = 0; kw < k; ++kw) {
              const int ih = oh * stride - pad + kh;
              const int iw = ow * stride - pad + kw;
              if (ih < 0 || ih >= s.h || iw < 0 || iw >= s.w) continue;
              acc += x.at(n, c, ih, iw);
            }
          out.at(n, c, oh, ow) = acc / static_cast<T>(k * k);
        }
  return out;
}

template <typename T>
Tensor<T> max_pool(const Tensor<T>& x, int k, int stride, int pad) {
  const Shape4 s = x.shape();
  const int ho = (s.h + 2 * pad - k) / stride + 1;
  const int wo = (s.w + 2 * pad - k) / stride + 1;
  Tensor<T> out(Shape4{s.n, s.c, ho, wo});
  for (int n = 0; n < s.n; ++n)
    for (int c = 0; c < s.c; ++c)
      for (int oh = 0; oh < ho; ++oh)
        for (int ow = 0; ow < wo; ++ow) {
          bool seen = false;
          T best = T(0);
          for (int kh = 0; kh < k; ++kh)
            for (int kw = 0; kw < k; ++kw) {
              const int ih = oh * stride - pad + kh;
              const int iw = ow * stride - pad + kw;
              if (ih < 0 || ih >= s.h || iw < 0 || iw >= s.w) continue;
              const T v = x.at(n, c, ih, iw);
              if (!seen || v > best) {
                best = v;
                seen = true;
              }
            }
          out.at(n, c, oh, ow) = best;
        }
  return out;
}

template <typename T>
Tensor<T> fully_connected(const Tensor<T>& x, const Tensor<T>& w,
                          const Tensor<T>& b) {
  const Shape4 xs = x.shape();
  const Shape4 ws = w.shape();
  Tensor<T> out(Shape4{xs.n, ws.n, 1, 1});
  for (int n = 0; n < xs.n; ++n)
    for (int o = 0; o < ws.n; ++o) {
      T acc = b[static_cast<std::size_t>(o)];
      for (int c = 0; c < xs.c; ++c) acc += w.at(o, c, 0, 0) * x.at(n, c, 0, 0);
      out.at(n, o, 0, 0) = acc;
    }
  return out;
}

template <typename T>
Tensor<T> scale_channels(const Tensor<T>& u, const Tensor<T>& e) {
  const Shape4 s = u.shape();
  Tensor<T> out(s);
  for (int n = 0; n < s.n; ++n)
    for (int c = 0; c < s.c; ++c)
      for (int h = 0; h < s.h; ++h)
        for (int w = 0; w < s.w; ++w)
          out.at(n, c, h, w) = u.at(n, c, h, w) * e.at(n, c, 0, 0);
  return out;
}

template <typename T>
Tensor<T> se_block(const Tensor<T>& u, const Tensor<T>& fc1w,
                   const Tensor<T>& fc1b, const Tensor<T>& fc2w,
                   const Tensor<T>& fc2b) {
  const Tensor<T> z = oracle::global_avg_pool(u);
  const Tensor<T> h = oracle::relu(oracle::fully_connected(z, fc1w, fc1b));
  const Tensor<T> e = oracle::sigmoid(oracle::fully_connected(h, fc2w, fc2b));
  return oracle::scale_channels(u, e);
}

template <typename T>
std::vector<Tensor<T>> split(const Tensor<T>& t, int s) {
  const Shape4 sh = t.shape();
  const int pc = sh.c / s;
  std::vector<Tensor<T>> parts;
  for (int i = 0; i < s; ++i) {
    Tensor<T> p(Shape4{sh.n, pc, sh.h, sh.w});
    for (int n = 0; n < sh.n; ++n)
      for (int c = 0; c < pc; ++c)
        for (int h = 0; h < sh.h; ++h)
          for (int w = 0; w < sh.w; ++w)
            p.at(n, c, h, w) = t.at(n, i * pc + c, h, w);
    parts.push_back(std::move(p));
  }
  return parts;
}

template <typename T>
Tensor<T> concat(const std::vector<Tensor<T>>& parts) {
  const Shape4 f = parts.front().shape();
  int total = 0;
  for (const auto& p : parts) total += p.shape().c;
  Tensor<T> out(Shape4{f.n, total, f.h, f.w});
  int off = 0;
  for (const auto& p : parts) {
    const Shape4 s = p.shape();
    for (int n = 0; n < s.n; ++n)
      for (int c = 0; c < s.c; ++c)
        for (int h = 0; h < s.h; ++h)
          for (int w = 0; w < s.w; ++w)
            out.at(n, off + c, h, w) = p.at(n, c, h, w);
    off += s.c;
  }
  return out;
}

// The split recurrence written straight down: 1x1 reduce, split into s
// subsets, y_1 = x_1, y_2 = K_2(x_2), y_i = K_i(x_i + y_{i-1}), concat,
// 1x1 expand, optional SE, shortcut, final ReLU. Mirrors the parameter
// naming contract.
template <typename T>
Tensor<T> res2net_block(const Tensor<T>& x, const Res2NetBlockConfig& cfg,
                        const ParamStore<T>& p, const std::string& prefix,
                        bool train_mode_bn = false) {
  const T eps = static_cast<T>(res2net::kBnEpsilon);
  auto bn = [&](const Tensor<T>& v, const std::string& name) {
    if (train_mode_bn) {
      return oracle::batch_norm_train(v, p.at(name + ".gamma").vec(),
                              p.at(name + ".beta").vec(), eps);
    }
    return oracle::batch_norm_eval(v, p.at(name + ".gamma").vec(),
                           p.at(name + ".beta").vec(),
                           p.at(name + ".running_mean").vec(),
                           p.at(name + ".running_var").vec(), eps);
  };
  Tensor<T> h = oracle::relu(bn(oracle::conv2d(x, p.at(prefix + ".conv1.weight"), 1, 0, 1),
                        prefix + ".bn1"));
  std::vector<Tensor<T>> ys;
  if (cfg.scale == 1) {
    ys.push_back(oracle::relu(bn(oracle::conv2d(h, p.at(prefix + ".conv2_1.weight"),
                                cfg.stride, 1, cfg.cardinality),
                         prefix + ".bn2_1")));
  } else {
    std::vector<Tensor<T>> xs = oracle::split(h, cfg.scale);
    if (cfg.stride == 1) {
      ys.push_back(xs[0]);
      for (int i = 2; i <= cfg.scale; ++i) {
        Tensor<T> in = xs[i - 1];
        if (i > 2) in = oracle::add(in, ys.back());
        ys.push_back(oracle::relu(bn(
            oracle::conv2d(in, p.at(prefix + ".conv2_" + std::to_string(i) + ".weight"),
                   1, 1, cfg.cardinality),
            prefix + ".bn2_" + std::to_string(i))));
      }
    } else {
      ys.push_back(oracle::avg_pool(xs[0], 3, cfg.stride, 1));
      for (int i = 2; i <= cfg.scale; ++i) {
        ys.push_back(oracle::relu(bn(
            oracle::conv2d(xs[i - 1],
                   p.at(prefix + ".conv2_" + std::to_string(i) + ".weight"),
                   cfg.stride, 1, cfg.cardinality),
            prefix + ".bn2_" + std::to_string(i))));
      }
    }
  }
  Tensor<T> u = bn(oracle::conv2d(oracle::concat(ys), p.at(prefix + ".conv3.weight"), 1, 0, 1),
                   prefix + ".bn3");
  if (cfg.use_se) {
    u = oracle::se_block(u, p.at(prefix + ".se.fc1.weight"),
                 p.at(prefix + ".se.fc1.bias"), p.at(prefix + ".se.fc2.weight"),
                 p.at(prefix + ".se.fc2.bias"));
  }
  Tensor<T> shortcut = x;
  if (cfg.needs_projection()) {
    shortcut = bn(oracle::conv2d(x, p.at(prefix + ".shortcut.conv.weight"), cfg.stride,
                         0, 1),
                  prefix + ".shortcut.bn");
  }
  return oracle::relu(oracle::add(u, shortcut));
}

template <typename T>
Tensor<T> bottleneck_block(const Tensor<T>& x, const Res2NetBlockConfig& cfg,
                           const ParamStore<T>& p, const std::string& prefix) {
  const T eps = static_cast<T>(res2net::kBnEpsilon);
  auto bn = [&](const Tensor<T>& v, const std::string& name) {
    return oracle::batch_norm_eval(v, p.at(name + ".gamma").vec(),
                           p.at(name + ".beta").vec(),
                           p.at(name + ".running_mean").vec(),
                           p.at(name + ".running_var").vec(), eps);
  };
  Tensor<T> h = oracle::relu(bn(oracle::conv2d(x, p.at(prefix + ".conv1.weight"), 1, 0, 1),
                        prefix + ".bn1"));
  h = oracle::relu(bn(oracle::conv2d(h, p.at(prefix + ".conv2_1.weight"), cfg.stride, 1,
                     cfg.cardinality),
              prefix + ".bn2_1"));
  h = bn(oracle::conv2d(h, p.at(prefix + ".conv3.weight"), 1, 0, 1), prefix + ".bn3");
  if (cfg.use_se) {
    h = oracle::se_block(h, p.at(prefix + ".se.fc1.weight"),
                 p.at(prefix + ".se.fc1.bias"), p.at(prefix + ".se.fc2.weight"),
                 p.at(prefix + ".se.fc2.bias"));
  }
  Tensor<T> shortcut = x;
  if (cfg.needs_projection()) {
    shortcut = bn(oracle::conv2d(x, p.at(prefix + ".shortcut.conv.weight"), cfg.stride,
                         0, 1),
                  prefix + ".shortcut.bn");
  }
  return oracle::relu(oracle::add(h, shortcut));
}

template <typename T>
double max_rel_diff(const Tensor<T>& a, const Tensor<T>& b) {
  double worst = 0.0;
  for (std::size_t i = 0; i < a.numel(); ++i) {
    const double da = a[i];
    const double db = b[i];
    const double denom = std::max({std::abs(da), std::abs(db), 1e-8});
    worst = std::max(worst, std::abs(da - db) / denom);
  }
  return worst;
}

}  // namespace oracle
