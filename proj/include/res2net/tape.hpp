#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <functional>
#include <limits>
#include <string>
#include <utility>
#include <vector>

#include "res2net/nnops.hpp"
#include "res2net/tensor.hpp"

namespace res2net {

// Reverse-mode tape. Ops append value slots during the forward pass and a
// backward closure per recorded op; backward() replays the closures in exact
// reverse recording order, accumulating gradients for every slot. Single
// writer during recording; one backward per recorded forward (grads
// accumulate across repeated calls unless zero_grads() is used).
template <typename T>
class Tape {
 public:
  // Records a leaf value (network input or parameter). Returns its slot id.
  int leaf(Tensor<T> value) {
    values_.push_back(std::move(value));
    grads_.emplace_back(values_.back().shape());
    return static_cast<int>(values_.size()) - 1;
  }

  const Tensor<T>& value(int slot) const { return values_[slot]; }
  const Tensor<T>& grad(int slot) const { return grads_[slot]; }
  Tensor<T>& grad_mut(int slot) { return grads_[slot]; }
  int size() const { return static_cast<int>(values_.size()); }

  // Smallest distance to a nonsmooth point (ReLU zero crossing, max-pool tie)
  // observed during the forward pass; the gradient checker excludes
  // coordinates whose evaluations come closer than 10*epsilon.
  double kink_margin() const { return kink_margin_; }

  void zero_grads() {
    for (auto& g : grads_) {
      std::fill(g.vec().begin(), g.vec().end(), T(0));
    }
  }

  // Seeds d(loss)/d(loss) = 1 and visits recorded ops in reverse order.
  void backward(int loss_slot) {
    if (values_[loss_slot].numel() != 1) {
      throw NotScalarLoss("backward needs a scalar loss, got shape " +
                          values_[loss_slot].shape().str());
    }
    grads_[loss_slot][0] += T(1);
    for (auto it = nodes_.rbegin(); it != nodes_.rend(); ++it) {
      (*it)(*this);
    }
  }

  // ---- recorded operations ----

  int conv2d(int x, int w, int stride, int padding, int groups) {
    Conv2dParams<T> p{values_[w], stride, padding, groups};
    int out = push(res2net::conv2d(values_[x], p));
    nodes_.push_back([x, w, out, stride, padding, groups](Tape& t) {
      t.conv2d_backward(x, w, out, stride, padding, groups);
    });
    return out;
  }

  int batch_norm(int x, int gamma, int beta, const std::vector<T>& running_mean,
                 const std::vector<T>& running_var, T epsilon, BnMode mode,
                 BnBatchStats<T>* stats_out = nullptr) {
    BatchNormParams<T> p;
    p.gamma = values_[gamma].vec();
    p.beta = values_[beta].vec();
    p.running_mean = running_mean;
    p.running_var = running_var;
    p.epsilon = epsilon;
    BnBatchStats<T> stats;
    int out = push(res2net::batch_norm(values_[x], p, mode, &stats));
    if (mode == BnMode::eval) {
      stats.mean = running_mean;
      stats.var = running_var;
    }
    if (stats_out) *stats_out = stats;
    nodes_.push_back([x, gamma, beta, out, stats = std::move(stats), epsilon,
                      mode](Tape& t) {
      t.batch_norm_backward(x, gamma, beta, out, stats, epsilon, mode);
    });
    return out;
  }

  int relu(int x) {
    const auto& xv = values_[x];
    double margin = std::numeric_limits<double>::infinity();
    for (std::size_t i = 0; i < xv.numel(); ++i) {
      const double d = std::abs(static_cast<double>(xv[i]));
      if (d < margin) margin = d;
    }
    if (xv.numel() > 0 && margin < kink_margin_) kink_margin_ = margin;
    int out = push(res2net::relu(xv));
    nodes_.push_back([x, out](Tape& t) {
      const auto& xv = t.values_[x];
      const auto& go = t.grads_[out];
      auto& gx = t.grads_[x];
      for (std::size_t i = 0; i < xv.numel(); ++i) {
        if (xv[i] > T(0)) gx[i] += go[i];
      }
    });
    return out;
  }

  int sigmoid(int x) {
    int out = push(res2net::sigmoid(values_[x]));
    nodes_.push_back([x, out](Tape& t) {
      const auto& y = t.values_[out];
      const auto& go = t.grads_[out];
      auto& gx = t.grads_[x];
      for (std::size_t i = 0; i < y.numel(); ++i) {
        gx[i] += go[i] * y[i] * (T(1) - y[i]);
      }
    });
    return out;
  }

  int add(int a, int b) {
    int out = push(res2net::add(values_[a], values_[b]));
    nodes_.push_back([a, b, out](Tape& t) {
      const auto& go = t.grads_[out];
      auto& ga = t.grads_[a];
      auto& gb = t.grads_[b];
      for (std::size_t i = 0; i < go.numel(); ++i) {
        ga[i] += go[i];
        gb[i] += go[i];
      }
    });
    return out;
  }

  // Channels [c0, c1) of x as a fresh tensor; backward scatters back.
  int slice_channels(int x, int c0, int c1) {
    const Shape4 xs = values_[x].shape();
    if (c0 < 0 || c1 > xs.c || c0 >= c1) {
      throw ShapeMismatch("slice_channels [" + std::to_string(c0) + "," +
                          std::to_string(c1) + ") of " + xs.str());
    }
    const std::size_t plane = static_cast<std::size_t>(xs.h) * xs.w;
    Tensor<T> part(Shape4{xs.n, c1 - c0, xs.h, xs.w});
    for (int n = 0; n < xs.n; ++n) {
      const T* src =
          values_[x].data() + (static_cast<std::size_t>(n) * xs.c + c0) * plane;
      T* dst = part.data() + static_cast<std::size_t>(n) * (c1 - c0) * plane;
      std::copy(src, src + static_cast<std::size_t>(c1 - c0) * plane, dst);
    }
    int out = push(std::move(part));
    nodes_.push_back([x, out, c0, c1, plane](Tape& t) {
      const Shape4 xs = t.values_[x].shape();
      const auto& go = t.grads_[out];
      auto& gx = t.grads_[x];
      for (int n = 0; n < xs.n; ++n) {
        const T* src =
            go.data() + static_cast<std::size_t>(n) * (c1 - c0) * plane;
        T* dst = gx.data() + (static_cast<std::size_t>(n) * xs.c + c0) * plane;
        for (std::size_t i = 0;
             i < static_cast<std::size_t>(c1 - c0) * plane; ++i) {
          dst[i] += src[i];
        }
      }
    });
    return out;
  }

  // Evenly split into s channel groups (the tape form of split_channels).
  std::vector<int> split_channels(int x, int s) {
    const Shape4 xs = values_[x].shape();
    if (s <= 0 || xs.c % s != 0) {
      throw NonDivisibleChannels("cannot split " + std::to_string(xs.c) +
                                 " channels into " + std::to_string(s));
    }
    std::vector<int> parts;
    const int pc = xs.c / s;
    for (int i = 0; i < s; ++i) {
      parts.push_back(slice_channels(x, i * pc, (i + 1) * pc));
    }
    return parts;
  }

  int concat_channels(const std::vector<int>& parts) {
    std::vector<Tensor<T>> vals;
    vals.reserve(parts.size());
    for (int p : parts) vals.push_back(values_[p]);
    int out = push(res2net::concat_channels(vals));
    nodes_.push_back([parts, out](Tape& t) {
      const auto& go = t.grads_[out];
      const Shape4 os = go.shape();
      const std::size_t plane = static_cast<std::size_t>(os.h) * os.w;
      std::size_t c_off = 0;
      for (int p : parts) {
        auto& gp = t.grads_[p];
        const int pc = gp.shape().c;
        for (int n = 0; n < os.n; ++n) {
          const T* src =
              go.data() + (static_cast<std::size_t>(n) * os.c + c_off) * plane;
          T* dst = gp.data() + static_cast<std::size_t>(n) * pc * plane;
          for (std::size_t i = 0; i < static_cast<std::size_t>(pc) * plane; ++i)
            dst[i] += src[i];
        }
        c_off += static_cast<std::size_t>(pc);
      }
    });
    return out;
  }

  int global_avg_pool(int x) {
    int out = push(res2net::global_avg_pool(values_[x]));
    nodes_.push_back([x, out](Tape& t) {
      const Shape4 xs = t.values_[x].shape();
      const std::size_t plane = static_cast<std::size_t>(xs.h) * xs.w;
      const T norm = T(1) / static_cast<T>(plane);
      const auto& go = t.grads_[out];
      auto& gx = t.grads_[x];
      for (int n = 0; n < xs.n; ++n) {
        for (int c = 0; c < xs.c; ++c) {
          const T g = go.at(n, c, 0, 0) * norm;
          T* dst = gx.data() + (static_cast<std::size_t>(n) * xs.c + c) * plane;
          for (std::size_t i = 0; i < plane; ++i) dst[i] += g;
        }
      }
    });
    return out;
  }

  int avg_pool2d(int x, int k, int stride, int padding = 0) {
    int out = push(res2net::avg_pool2d(values_[x], k, stride, padding));
    nodes_.push_back([x, out, k, stride, padding](Tape& t) {
      const Shape4 xs = t.values_[x].shape();
      const Shape4 os = t.values_[out].shape();
      const auto& go = t.grads_[out];
      auto& gx = t.grads_[x];
      const T norm = T(1) / static_cast<T>(k * k);
      for (int n = 0; n < os.n; ++n) {
        for (int c = 0; c < os.c; ++c) {
          for (int oh = 0; oh < os.h; ++oh) {
            for (int ow = 0; ow < os.w; ++ow) {
              const T g = go.at(n, c, oh, ow) * norm;
              for (int kh = 0; kh < k; ++kh) {
                const int ih = oh * stride - padding + kh;
                if (ih < 0 || ih >= xs.h) continue;
                for (int kw = 0; kw < k; ++kw) {
                  const int iw = ow * stride - padding + kw;
                  if (iw < 0 || iw >= xs.w) continue;
                  gx.at(n, c, ih, iw) += g;
                }
              }
            }
          }
        }
      }
    });
    return out;
  }

  int max_pool2d(int x, int k, int stride, int padding = 0) {
    std::vector<std::size_t> argmax;
    Tensor<T> pooled =
        res2net::max_pool2d(values_[x], k, stride, padding, &argmax);
    track_maxpool_margin(values_[x], pooled, k, stride, padding);
    int out = push(std::move(pooled));
    nodes_.push_back([x, out, argmax = std::move(argmax)](Tape& t) {
      const auto& go = t.grads_[out];
      auto& gx = t.grads_[x];
      for (std::size_t i = 0; i < go.numel(); ++i) gx[argmax[i]] += go[i];
    });
    return out;
  }

  int fully_connected(int x, int w, int b) {
    int out = push(res2net::fully_connected(values_[x], values_[w], values_[b]));
    nodes_.push_back([x, w, b, out](Tape& t) {
      const auto& xv = t.values_[x];
      const auto& wv = t.values_[w];
      const auto& go = t.grads_[out];
      auto& gx = t.grads_[x];
      auto& gw = t.grads_[w];
      auto& gb = t.grads_[b];
      const int cin = xv.shape().c;
      const int cout = wv.shape().n;
      for (int n = 0; n < xv.shape().n; ++n) {
        const T* px = xv.data() + static_cast<std::size_t>(n) * cin;
        T* pgx = gx.data() + static_cast<std::size_t>(n) * cin;
        for (int o = 0; o < cout; ++o) {
          const T g = go.at(n, o, 0, 0);
          if (g == T(0)) continue;
          const T* pw = wv.data() + static_cast<std::size_t>(o) * cin;
          T* pgw = gw.data() + static_cast<std::size_t>(o) * cin;
          gb[static_cast<std::size_t>(o)] += g;
          for (int c = 0; c < cin; ++c) {
            pgw[c] += g * px[c];
            pgx[c] += g * pw[c];
          }
        }
      }
    });
    return out;
  }

  // Per-channel rescaling: out[n,c,h,w] = u[n,c,h,w] * e[n,c,0,0] (the SE
  // excitation applied to the block output).
  int scale_channels(int u, int e) {
    const Shape4 us = values_[u].shape();
    const Shape4 es = values_[e].shape();
    if (es.n != us.n || es.c != us.c || es.h != 1 || es.w != 1) {
      throw ShapeMismatch("scale_channels gate " + es.str() +
                          " does not match " + us.str());
    }
    Tensor<T> outv(us);
    const std::size_t plane = static_cast<std::size_t>(us.h) * us.w;
    for (int n = 0; n < us.n; ++n) {
      for (int c = 0; c < us.c; ++c) {
        const T s = values_[e].at(n, c, 0, 0);
        const T* pu =
            values_[u].data() + (static_cast<std::size_t>(n) * us.c + c) * plane;
        T* po = outv.data() + (static_cast<std::size_t>(n) * us.c + c) * plane;
        for (std::size_t i = 0; i < plane; ++i) po[i] = pu[i] * s;
      }
    }
    int out = push(std::move(outv));
    nodes_.push_back([u, e, out, plane](Tape& t) {
      const Shape4 us = t.values_[u].shape();
      const auto& go = t.grads_[out];
      auto& gu = t.grads_[u];
      auto& ge = t.grads_[e];
      for (int n = 0; n < us.n; ++n) {
        for (int c = 0; c < us.c; ++c) {
          const T s = t.values_[e].at(n, c, 0, 0);
          const std::size_t off =
              (static_cast<std::size_t>(n) * us.c + c) * plane;
          const T* pgo = go.data() + off;
          const T* pu = t.values_[u].data() + off;
          T* pgu = gu.data() + off;
          double acc = 0.0;
          for (std::size_t i = 0; i < plane; ++i) {
            pgu[i] += pgo[i] * s;
            acc += static_cast<double>(pgo[i]) * static_cast<double>(pu[i]);
          }
          ge.at(n, c, 0, 0) += static_cast<T>(acc);
        }
      }
    });
    return out;
  }

  // Mean softmax cross-entropy over the batch; logits are (N, C, 1, 1).
  int softmax_cross_entropy(int logits, std::vector<int> labels) {
    const auto& lv = values_[logits];
    const Shape4 ls = lv.shape();
    if (static_cast<int>(labels.size()) != ls.n || ls.h != 1 || ls.w != 1) {
      throw ShapeMismatch("softmax_cross_entropy logits " + ls.str() + " vs " +
                          std::to_string(labels.size()) + " labels");
    }
    for (const int label : labels) {
      if (label < 0 || label >= ls.c) {
        throw ShapeMismatch("label " + std::to_string(label) +
                            " outside [0, " + std::to_string(ls.c) + ")");
      }
    }
    Tensor<T> probs(ls);
    double total = 0.0;
    for (int n = 0; n < ls.n; ++n) {
      const T* pl = lv.data() + static_cast<std::size_t>(n) * ls.c;
      T* pp = probs.data() + static_cast<std::size_t>(n) * ls.c;
      double mx = -std::numeric_limits<double>::infinity();
      for (int c = 0; c < ls.c; ++c) mx = std::max(mx, static_cast<double>(pl[c]));
      double sum = 0.0;
      for (int c = 0; c < ls.c; ++c) sum += std::exp(static_cast<double>(pl[c]) - mx);
      const double lse = mx + std::log(sum);
      for (int c = 0; c < ls.c; ++c) {
        pp[c] = static_cast<T>(std::exp(static_cast<double>(pl[c]) - lse));
      }
      total += lse - static_cast<double>(pl[labels[n]]);
    }
    Tensor<T> loss(Shape4{1, 1, 1, 1});
    loss[0] = static_cast<T>(total / std::max(1, ls.n));
    int out = push(std::move(loss));
    nodes_.push_back(
        [logits, out, labels = std::move(labels), probs = std::move(probs)](
            Tape& t) {
          const Shape4 ls = t.values_[logits].shape();
          const T g = t.grads_[out][0] / static_cast<T>(std::max(1, ls.n));
          auto& gl = t.grads_[logits];
          for (int n = 0; n < ls.n; ++n) {
            const T* pp = probs.data() + static_cast<std::size_t>(n) * ls.c;
            T* pg = gl.data() + static_cast<std::size_t>(n) * ls.c;
            for (int c = 0; c < ls.c; ++c) {
              T d = pp[c];
              if (c == labels[n]) d -= T(1);
              pg[c] += g * d;
            }
          }
        });
    return out;
  }

  // Scalar sum of all elements.
  int sum(int x) {
    double acc = 0.0;
    for (std::size_t i = 0; i < values_[x].numel(); ++i)
      acc += static_cast<double>(values_[x][i]);
    Tensor<T> s(Shape4{1, 1, 1, 1});
    s[0] = static_cast<T>(acc);
    int out = push(std::move(s));
    nodes_.push_back([x, out](Tape& t) {
      const T g = t.grads_[out][0];
      auto& gx = t.grads_[x];
      for (std::size_t i = 0; i < gx.numel(); ++i) gx[i] += g;
    });
    return out;
  }

  // Weighted sum <w, x> with a fixed projection tensor; handy for building
  // scalar losses over arbitrary outputs.
  int weighted_sum(int x, Tensor<T> proj) {
    if (proj.shape() != values_[x].shape()) {
      throw ShapeMismatch("weighted_sum projection shape mismatch");
    }
    double acc = 0.0;
    for (std::size_t i = 0; i < proj.numel(); ++i)
      acc += static_cast<double>(proj[i]) * static_cast<double>(values_[x][i]);
    Tensor<T> s(Shape4{1, 1, 1, 1});
    s[0] = static_cast<T>(acc);
    int out = push(std::move(s));
    nodes_.push_back([x, out, proj = std::move(proj)](Tape& t) {
      const T g = t.grads_[out][0];
      auto& gx = t.grads_[x];
      for (std::size_t i = 0; i < gx.numel(); ++i) gx[i] += g * proj[i];
    });
    return out;
  }

  // Picks a single element as a (1,1,1,1) scalar.
  int select(int x, int n, int c, int h, int w) {
    const std::size_t idx = values_[x].index(n, c, h, w);
    Tensor<T> s(Shape4{1, 1, 1, 1});
    s[0] = values_[x][idx];
    int out = push(std::move(s));
    nodes_.push_back([x, out, idx](Tape& t) {
      t.grads_[x][idx] += t.grads_[out][0];
    });
    return out;
  }

 private:
  int push(Tensor<T> value) {
    values_.push_back(std::move(value));
    grads_.emplace_back(values_.back().shape());
    return static_cast<int>(values_.size()) - 1;
  }

  void conv2d_backward(int x, int w, int out, int stride, int padding,
                       int groups) {
    const auto& xv = values_[x];
    const auto& wv = values_[w];
    const auto& go = grads_[out];
    auto& gx = grads_[x];
    auto& gw = grads_[w];
    const Shape4 xs = xv.shape();
    const Shape4 os = go.shape();
    const int k = wv.shape().h;
    const int cin_g = xs.c / groups;
    const int cout_g = os.c / groups;
    const int rows = cin_g * k * k;
    const int cols = os.h * os.w;
    std::vector<T> col;
    std::vector<T> dcol(static_cast<std::size_t>(rows) * cols);
    for (int n = 0; n < xs.n; ++n) {
      for (int g = 0; g < groups; ++g) {
        im2col(xv, n, g, cin_g, k, stride, padding, os.h, os.w, col);
        const T* pgo = go.data() + (static_cast<std::size_t>(n) * os.c +
                                    static_cast<std::size_t>(g) * cout_g) *
                                       cols;
        // dW += go * col^T
        T* pgw = gw.data() +
                 static_cast<std::size_t>(g) * cout_g * rows;
        for (int m = 0; m < cout_g; ++m) {
          const T* gorow = pgo + static_cast<std::size_t>(m) * cols;
          T* gwrow = pgw + static_cast<std::size_t>(m) * rows;
          for (int r = 0; r < rows; ++r) {
            const T* crow = col.data() + static_cast<std::size_t>(r) * cols;
            double acc = 0.0;
            for (int j = 0; j < cols; ++j)
              acc += static_cast<double>(gorow[j]) * static_cast<double>(crow[j]);
            gwrow[r] += static_cast<T>(acc);
          }
        }
        // dcol = W^T * go, then scatter back with col2im.
        std::fill(dcol.begin(), dcol.end(), T(0));
        const T* pw = wv.data() +
                      static_cast<std::size_t>(g) * cout_g * rows;
        for (int m = 0; m < cout_g; ++m) {
          const T* wrow = pw + static_cast<std::size_t>(m) * rows;
          const T* gorow = pgo + static_cast<std::size_t>(m) * cols;
          for (int r = 0; r < rows; ++r) {
            const T wv_ = wrow[r];
            if (wv_ == T(0)) continue;
            T* drow = dcol.data() + static_cast<std::size_t>(r) * cols;
            for (int j = 0; j < cols; ++j) drow[j] += wv_ * gorow[j];
          }
        }
        col2im_add(dcol, n, g, cin_g, k, stride, padding, os.h, os.w, gx);
      }
    }
  }

  void batch_norm_backward(int x, int gamma, int beta, int out,
                           const BnBatchStats<T>& stats, T epsilon,
                           BnMode mode) {
    const auto& xv = values_[x];
    const auto& go = grads_[out];
    auto& gx = grads_[x];
    auto& ggamma = grads_[gamma];
    auto& gbeta = grads_[beta];
    const Shape4 xs = xv.shape();
    const std::size_t plane = static_cast<std::size_t>(xs.h) * xs.w;
    const std::size_t m = static_cast<std::size_t>(xs.n) * plane;
    for (int c = 0; c < xs.c; ++c) {
      const T mu = stats.mean[c];
      const T inv = T(1) / std::sqrt(stats.var[c] + epsilon);
      const T g = values_[gamma][static_cast<std::size_t>(c)];
      double sum_go = 0.0;
      double sum_go_xhat = 0.0;
      for (int n = 0; n < xs.n; ++n) {
        const std::size_t off = (static_cast<std::size_t>(n) * xs.c + c) * plane;
        const T* pgo = go.data() + off;
        const T* px = xv.data() + off;
        for (std::size_t i = 0; i < plane; ++i) {
          const double xhat = (static_cast<double>(px[i]) - mu) * inv;
          sum_go += static_cast<double>(pgo[i]);
          sum_go_xhat += static_cast<double>(pgo[i]) * xhat;
        }
      }
      gbeta[static_cast<std::size_t>(c)] += static_cast<T>(sum_go);
      ggamma[static_cast<std::size_t>(c)] += static_cast<T>(sum_go_xhat);
      if (mode == BnMode::train) {
        // Differentiates through the batch statistics (biased variance).
        const double scale = static_cast<double>(g) * inv /
                             static_cast<double>(m);
        for (int n = 0; n < xs.n; ++n) {
          const std::size_t off =
              (static_cast<std::size_t>(n) * xs.c + c) * plane;
          const T* pgo = go.data() + off;
          const T* px = xv.data() + off;
          T* pgx = gx.data() + off;
          for (std::size_t i = 0; i < plane; ++i) {
            const double xhat = (static_cast<double>(px[i]) - mu) * inv;
            const double d = static_cast<double>(m) * pgo[i] - sum_go -
                             xhat * sum_go_xhat;
            pgx[i] += static_cast<T>(scale * d);
          }
        }
      } else {
        const T scale = g * inv;
        for (int n = 0; n < xs.n; ++n) {
          const std::size_t off =
              (static_cast<std::size_t>(n) * xs.c + c) * plane;
          const T* pgo = go.data() + off;
          T* pgx = gx.data() + off;
          for (std::size_t i = 0; i < plane; ++i) pgx[i] += pgo[i] * scale;
        }
      }
    }
  }

  void track_maxpool_margin(const Tensor<T>& x, const Tensor<T>& pooled, int k,
                            int stride, int padding) {
    const Shape4 xs = x.shape();
    const Shape4 os = pooled.shape();
    double margin = std::numeric_limits<double>::infinity();
    for (int n = 0; n < os.n; ++n) {
      for (int c = 0; c < os.c; ++c) {
        for (int oh = 0; oh < os.h; ++oh) {
          for (int ow = 0; ow < os.w; ++ow) {
            const T best = pooled.at(n, c, oh, ow);
            double runner = -std::numeric_limits<double>::infinity();
            int count = 0;
            int at_best = 0;
            for (int kh = 0; kh < k; ++kh) {
              const int ih = oh * stride - padding + kh;
              if (ih < 0 || ih >= xs.h) continue;
              for (int kw = 0; kw < k; ++kw) {
                const int iw = ow * stride - padding + kw;
                if (iw < 0 || iw >= xs.w) continue;
                const double v = static_cast<double>(x.at(n, c, ih, iw));
                ++count;
                if (v == static_cast<double>(best)) {
                  ++at_best;
                } else if (v > runner) {
                  runner = v;
                }
              }
            }
            if (count >= 2) {
              const double gap = at_best >= 2
                                     ? 0.0
                                     : static_cast<double>(best) - runner;
              if (gap < margin) margin = gap;
            }
          }
        }
      }
    }
    if (margin < kink_margin_) kink_margin_ = margin;
  }

  std::vector<Tensor<T>> values_;
  std::vector<Tensor<T>> grads_;
  std::vector<std::function<void(Tape&)>> nodes_;
  double kink_margin_ = std::numeric_limits<double>::infinity();
};

}  // namespace res2net
