#pragma once

#include <string>
#include <type_traits>
#include <vector>

#include "res2net/gradcheck.hpp"
#include "res2net/params.hpp"
#include "res2net/rng.hpp"
#include "res2net/tape.hpp"

namespace res2net {

inline constexpr double kBnEpsilon = 1e-5;
inline constexpr double kBnMomentum = 0.1;

// How a strided block treats the split chain. Eq-style hierarchy needs equal
// spatial dims between y_{i-1} and x_i, which a stride breaks; `parallel`
// drops the adds and gives every K_i the stride (the first split goes through
// a 3x3/2 average pool instead), `pooled_hierarchical` pools every split
// first and keeps the adds with stride-1 convs.
enum class StridedForm { parallel, pooled_hierarchical };

// One Res2Net (or bottleneck) block. `width` is the channel count of each
// split; internal channels n = scale * width; cardinality is the group count
// inside each 3x3 conv.
struct Res2NetBlockConfig {
  int in_channels = 0;
  int out_channels = 0;
  int width = 0;
  int scale = 1;
  int cardinality = 1;
  int stride = 1;
  bool use_se = false;
  int se_ratio = 16;
  StridedForm strided_form = StridedForm::parallel;

  int internal_channels() const { return scale * width; }

  bool needs_projection() const {
    return stride != 1 || in_channels != out_channels;
  }

  void validate() const {
    if (in_channels <= 0 || out_channels <= 0 || width <= 0) {
      throw ShapeMismatch("block channels must be positive");
    }
    if (scale < 1 || cardinality < 1) {
      throw ShapeMismatch("scale and cardinality must be >= 1");
    }
    if (stride != 1 && stride != 2) {
      throw ShapeMismatch("block stride must be 1 or 2, got " +
                          std::to_string(stride));
    }
    if (width % cardinality != 0) {
      throw NonDivisibleChannels(
          "split width " + std::to_string(width) +
          " not divisible by cardinality " + std::to_string(cardinality));
    }
    if (use_se && se_ratio < 1) {
      throw ShapeMismatch("se_ratio must be >= 1");
    }
  }
};

// ---- parameter initialization ----

namespace detail {

template <typename T>
Tensor<T> he_normal_conv(Shape4 shape, Rng& rng) {
  const double fan_out =
      static_cast<double>(shape.n) * shape.h * shape.w;
  return Tensor<T>::randn(shape, rng, std::sqrt(2.0 / fan_out));
}

template <typename T>
void add_conv(ParamStore<T>& store, const std::string& name, int c_out,
              int c_in, int k, int groups, Rng& rng) {
  store.add(name + ".weight",
            he_normal_conv<T>(Shape4{c_out, c_in / groups, k, k}, rng),
            /*trainable=*/true, /*decay=*/true);
}

template <typename T>
void add_bn(ParamStore<T>& store, const std::string& name, int channels) {
  store.add(name + ".gamma", Tensor<T>::full(Shape4{channels, 1, 1, 1}, T(1)),
            true, false);
  store.add(name + ".beta", Tensor<T>::zeros(Shape4{channels, 1, 1, 1}), true,
            false);
  store.add(name + ".running_mean", Tensor<T>::zeros(Shape4{channels, 1, 1, 1}),
            false, false);
  store.add(name + ".running_var",
            Tensor<T>::full(Shape4{channels, 1, 1, 1}, T(1)), false, false);
}

template <typename T>
void add_fc(ParamStore<T>& store, const std::string& name, int c_out, int c_in,
            Rng& rng) {
  store.add(name + ".weight",
            Tensor<T>::randn(Shape4{c_out, c_in, 1, 1}, rng,
                             std::sqrt(2.0 / c_out)),
            true, true);
  store.add(name + ".bias", Tensor<T>::zeros(Shape4{c_out, 1, 1, 1}), true,
            false);
}

}  // namespace detail

inline int se_hidden_channels(int channels, int ratio) {
  return std::max(1, channels / ratio);
}

// Registers all parameters of one block under `prefix`, in forward order.
template <typename T>
void init_block_params(ParamStore<T>& store, const std::string& prefix,
                       const Res2NetBlockConfig& cfg, Rng& rng) {
  cfg.validate();
  const int n = cfg.internal_channels();
  detail::add_conv(store, prefix + ".conv1", n, cfg.in_channels, 1, 1, rng);
  detail::add_bn(store, prefix + ".bn1", n);
  const int first = cfg.scale == 1 ? 1 : 2;
  for (int i = first; i <= cfg.scale; ++i) {
    const std::string tag = std::to_string(i);
    detail::add_conv(store, prefix + ".conv2_" + tag, cfg.width, cfg.width, 3,
                     cfg.cardinality, rng);
    detail::add_bn(store, prefix + ".bn2_" + tag, cfg.width);
  }
  detail::add_conv(store, prefix + ".conv3", cfg.out_channels, n, 1, 1, rng);
  detail::add_bn(store, prefix + ".bn3", cfg.out_channels);
  if (cfg.use_se) {
    const int hidden = se_hidden_channels(cfg.out_channels, cfg.se_ratio);
    detail::add_fc(store, prefix + ".se.fc1", hidden, cfg.out_channels, rng);
    detail::add_fc(store, prefix + ".se.fc2", cfg.out_channels, hidden, rng);
  }
  if (cfg.needs_projection()) {
    detail::add_conv(store, prefix + ".shortcut.conv", cfg.out_channels,
                     cfg.in_channels, 1, 1, rng);
    detail::add_bn(store, prefix + ".shortcut.bn", cfg.out_channels);
  }
}

// ---- tape forwards ----

// Batch statistics produced by train-mode BN calls, keyed by BN name, for the
// trainer to fold into running stats after the optimizer step.
template <typename T>
struct BnUpdate {
  std::string name;
  BnBatchStats<T> stats;
};

template <typename T>
int tape_batch_norm(Tape<T>& tape, int x, const std::string& name,
                    const SlotMap& slots, const ParamStore<T>& store,
                    BnMode mode,
                    std::type_identity_t<std::vector<BnUpdate<T>>*> updates =
                        nullptr) {
  BnBatchStats<T> stats;
  const int out = tape.batch_norm(
      x, slots.at(name + ".gamma"), slots.at(name + ".beta"),
      store.at(name + ".running_mean").vec(),
      store.at(name + ".running_var").vec(), static_cast<T>(kBnEpsilon), mode,
      &stats);
  if (mode == BnMode::train && updates) {
    updates->push_back(BnUpdate<T>{name, std::move(stats)});
  }
  return out;
}

// Squeeze-and-excitation: global pool -> FC -> ReLU -> FC -> sigmoid ->
// per-channel rescale of u.
template <typename T>
int se_apply(Tape<T>& tape, int u, const SlotMap& slots,
             const ParamStore<T>& store, const std::string& prefix) {
  (void)store;
  const int z = tape.global_avg_pool(u);
  const int h = tape.relu(tape.fully_connected(
      z, slots.at(prefix + ".fc1.weight"), slots.at(prefix + ".fc1.bias")));
  const int e = tape.sigmoid(tape.fully_connected(
      h, slots.at(prefix + ".fc2.weight"), slots.at(prefix + ".fc2.bias")));
  return tape.scale_channels(u, e);
}

// The Res2Net block. After the 1x1 reduce, the n channels are split into
// `scale` subsets of `width` channels; split 1 passes through untouched and
// split i>=2 goes through K_i (3x3, groups=cardinality), with y_{i-1} added
// into x_i before K_i for i>2. Splits are concatenated, fused by a 1x1 conv,
// optionally SE-gated, and joined with the shortcut. scale==1 degenerates to
// a single 3x3 over the whole width (the bottleneck form).
// When pre_concat is given it receives the slot of every split output in
// order y_1..y_s.
template <typename T>
int res2net_block_forward(Tape<T>& tape, int x, const Res2NetBlockConfig& cfg,
                          const SlotMap& slots, const ParamStore<T>& store,
                          const std::string& prefix, BnMode mode,
                          std::type_identity_t<std::vector<BnUpdate<T>>*>
                              bn_updates = nullptr,
                          std::vector<int>* pre_concat = nullptr) {
  cfg.validate();
  int h = tape.conv2d(x, slots.at(prefix + ".conv1.weight"), 1, 0, 1);
  h = tape_batch_norm(tape, h, prefix + ".bn1", slots, store, mode, bn_updates);
  h = tape.relu(h);

  std::vector<int> ys;
  if (cfg.scale == 1) {
    int y = tape.conv2d(h, slots.at(prefix + ".conv2_1.weight"), cfg.stride, 1,
                        cfg.cardinality);
    y = tape_batch_norm(tape, y, prefix + ".bn2_1", slots, store, mode,
                        bn_updates);
    ys.push_back(tape.relu(y));
  } else {
    std::vector<int> xs = tape.split_channels(h, cfg.scale);
    const bool hierarchical = cfg.stride == 1;
    if (hierarchical) {
      ys.push_back(xs[0]);  // feature reuse: no conv, no BN on the first split
      for (int i = 2; i <= cfg.scale; ++i) {
        int in = xs[i - 1];
        if (i > 2) in = tape.add(in, ys.back());
        const std::string tag = std::to_string(i);
        int y = tape.conv2d(in, slots.at(prefix + ".conv2_" + tag + ".weight"),
                            1, 1, cfg.cardinality);
        y = tape_batch_norm(tape, y, prefix + ".bn2_" + tag, slots, store,
                            mode, bn_updates);
        ys.push_back(tape.relu(y));
      }
    } else if (cfg.strided_form == StridedForm::parallel) {
      ys.push_back(tape.avg_pool2d(xs[0], 3, cfg.stride, 1));
      for (int i = 2; i <= cfg.scale; ++i) {
        const std::string tag = std::to_string(i);
        int y = tape.conv2d(xs[i - 1],
                            slots.at(prefix + ".conv2_" + tag + ".weight"),
                            cfg.stride, 1, cfg.cardinality);
        y = tape_batch_norm(tape, y, prefix + ".bn2_" + tag, slots, store,
                            mode, bn_updates);
        ys.push_back(tape.relu(y));
      }
    } else {
      // Pool every split to the output resolution first, then keep the
      // hierarchical adds with stride-1 convs.
      std::vector<int> pooled;
      for (int i = 0; i < cfg.scale; ++i) {
        pooled.push_back(tape.avg_pool2d(xs[i], 3, cfg.stride, 1));
      }
      ys.push_back(pooled[0]);
      for (int i = 2; i <= cfg.scale; ++i) {
        int in = pooled[i - 1];
        if (i > 2) in = tape.add(in, ys.back());
        const std::string tag = std::to_string(i);
        int y = tape.conv2d(in, slots.at(prefix + ".conv2_" + tag + ".weight"),
                            1, 1, cfg.cardinality);
        y = tape_batch_norm(tape, y, prefix + ".bn2_" + tag, slots, store,
                            mode, bn_updates);
        ys.push_back(tape.relu(y));
      }
    }
  }
  if (pre_concat) *pre_concat = ys;

  int u = ys.size() == 1 ? ys[0] : tape.concat_channels(ys);
  u = tape.conv2d(u, slots.at(prefix + ".conv3.weight"), 1, 0, 1);
  u = tape_batch_norm(tape, u, prefix + ".bn3", slots, store, mode, bn_updates);
  if (cfg.use_se) {
    u = se_apply(tape, u, slots, store, prefix + ".se");
  }

  int shortcut = x;
  if (cfg.needs_projection()) {
    shortcut = tape.conv2d(x, slots.at(prefix + ".shortcut.conv.weight"),
                           cfg.stride, 0, 1);
    shortcut = tape_batch_norm(tape, shortcut, prefix + ".shortcut.bn", slots,
                               store, mode, bn_updates);
  }
  return tape.relu(tape.add(u, shortcut));
}

// The plain ResNet/ResNeXt bottleneck (1x1 reduce, 3x3 with groups, 1x1
// expand). Configured with scale == 1; `width` is the width of the 3x3 stage.
template <typename T>
int bottleneck_forward(Tape<T>& tape, int x, const Res2NetBlockConfig& cfg,
                       const SlotMap& slots, const ParamStore<T>& store,
                       const std::string& prefix, BnMode mode,
                       std::type_identity_t<std::vector<BnUpdate<T>>*>
                           bn_updates = nullptr) {
  cfg.validate();
  if (cfg.scale != 1) {
    throw ShapeMismatch("bottleneck_forward expects scale == 1");
  }
  int h = tape.conv2d(x, slots.at(prefix + ".conv1.weight"), 1, 0, 1);
  h = tape_batch_norm(tape, h, prefix + ".bn1", slots, store, mode, bn_updates);
  h = tape.relu(h);
  h = tape.conv2d(h, slots.at(prefix + ".conv2_1.weight"), cfg.stride, 1,
                  cfg.cardinality);
  h = tape_batch_norm(tape, h, prefix + ".bn2_1", slots, store, mode,
                      bn_updates);
  h = tape.relu(h);
  h = tape.conv2d(h, slots.at(prefix + ".conv3.weight"), 1, 0, 1);
  h = tape_batch_norm(tape, h, prefix + ".bn3", slots, store, mode, bn_updates);
  if (cfg.use_se) {
    h = se_apply(tape, h, slots, store, prefix + ".se");
  }
  int shortcut = x;
  if (cfg.needs_projection()) {
    shortcut = tape.conv2d(x, slots.at(prefix + ".shortcut.conv.weight"),
                           cfg.stride, 0, 1);
    shortcut = tape_batch_norm(tape, shortcut, prefix + ".shortcut.bn", slots,
                               store, mode, bn_updates);
  }
  return tape.relu(tape.add(h, shortcut));
}

}  // namespace res2net
