#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <vector>

#include "res2net/dataset.hpp"
#include "res2net/gradcheck.hpp"
#include "res2net/network.hpp"

namespace res2net {

// The ResNet recipe: SGD with heavy-ball momentum, L2 weight decay folded
// into the gradient, and a step schedule dividing the rate by 10 every
// lr_step epochs. The seed fixes every stochastic choice (shuffling,
// augmentation draws); single-threaded runs are bit-reproducible.
struct TrainConfig {
  double lr0 = 0.1;
  double momentum = 0.9;
  double weight_decay = 1e-4;
  int lr_step = 30;
  int epochs = 0;
  int batch_size = 32;
  std::uint64_t seed = 42;
  bool augment = false;         // random horizontal flip + 4px pad-and-crop
  double stop_at_accuracy = 0;  // early stop once train accuracy reaches this
};

inline double lr_at_epoch(const TrainConfig& cfg, int epoch) {
  return cfg.lr0 * std::pow(10.0, -static_cast<double>(epoch / cfg.lr_step));
}

struct EpochLog {
  int epoch = 0;
  double loss = 0.0;
  double accuracy = 0.0;
  double lr = 0.0;
};

namespace detail {

// Deterministic Fisher-Yates (std::shuffle is implementation-defined).
inline void shuffle_indices(std::vector<int>& idx, Rng& rng) {
  for (int i = static_cast<int>(idx.size()) - 1; i > 0; --i) {
    std::swap(idx[i], idx[rng.uniform_int(0, i)]);
  }
}

inline Tensor<float> gather_batch(const Dataset& data,
                                  const std::vector<int>& idx, std::size_t lo,
                                  std::size_t hi, bool augment, Rng& rng) {
  const Shape4 s = data.images.shape();
  const int b = static_cast<int>(hi - lo);
  Tensor<float> batch(Shape4{b, s.c, s.h, s.w});
  const std::size_t sample = static_cast<std::size_t>(s.c) * s.h * s.w;
  for (int i = 0; i < b; ++i) {
    const float* src = data.images.data() + idx[lo + i] * sample;
    float* dst = batch.data() + static_cast<std::size_t>(i) * sample;
    if (!augment) {
      std::copy(src, src + sample, dst);
      continue;
    }
    const bool flip = rng.uniform() < 0.5;
    const int pad = 4;
    const int dh = rng.uniform_int(-pad, pad);
    const int dw = rng.uniform_int(-pad, pad);
    for (int c = 0; c < s.c; ++c) {
      for (int h = 0; h < s.h; ++h) {
        for (int w = 0; w < s.w; ++w) {
          const int sh = h + dh;
          int sw = w + dw;
          if (flip) sw = s.w - 1 - sw;
          float v = 0.0f;
          if (sh >= 0 && sh < s.h && sw >= 0 && sw < s.w) {
            v = src[(static_cast<std::size_t>(c) * s.h + sh) * s.w + sw];
          }
          dst[(static_cast<std::size_t>(c) * s.h + h) * s.w + w] = v;
        }
      }
    }
  }
  return batch;
}

// Argmax with ties broken toward the lower class index.
inline int argmax_logit(const float* logits, int classes) {
  int best = 0;
  for (int c = 1; c < classes; ++c) {
    if (logits[c] > logits[best]) best = c;
  }
  return best;
}

}  // namespace detail

// One heavy-ball step: v <- momentum*v + (g + wd*theta); theta <- theta - lr*v.
inline void sgd_update(Tensor<float>& theta, Tensor<float>& velocity,
                       const Tensor<float>& grad, double lr, double momentum,
                       double weight_decay) {
  const float wd = static_cast<float>(weight_decay);
  const float mom = static_cast<float>(momentum);
  const float step = static_cast<float>(lr);
  for (std::size_t i = 0; i < theta.numel(); ++i) {
    velocity[i] = mom * velocity[i] + (grad[i] + wd * theta[i]);
    theta[i] -= step * velocity[i];
  }
}

// Trains in place and returns the per-epoch log (ordered by epoch index).
// Update rule per parameter: v <- momentum*v + (g + wd*theta);
// theta <- theta - lr*v. Weight decay applies only to decay-flagged entries
// (conv and FC weights).
inline std::vector<EpochLog> train(const NetworkSpec& spec,
                                   ParamStore<float>& params,
                                   const Dataset& data,
                                   const TrainConfig& cfg) {
  if (data.size() == 0) {
    throw EmptyDataset("training dataset is empty");
  }
  if (spec.classes != data.class_count) {
    throw ShapeMismatch("network head has " + std::to_string(spec.classes) +
                        " classes, dataset has " +
                        std::to_string(data.class_count));
  }
  if (cfg.lr0 <= 0 || cfg.momentum < 0 || cfg.momentum >= 1 ||
      cfg.weight_decay < 0 || cfg.lr_step < 1 || cfg.batch_size < 1 ||
      cfg.epochs < 0) {
    throw Error("invalid training configuration");
  }
  std::vector<EpochLog> log;
  if (cfg.epochs <= 0) return log;

  std::vector<Tensor<float>> velocity;
  velocity.reserve(params.size());
  for (const auto& e : params.entries()) {
    velocity.emplace_back(e.value.shape());
  }

  Rng rng(cfg.seed);
  std::vector<int> idx(data.size());
  std::iota(idx.begin(), idx.end(), 0);

  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    const double lr = lr_at_epoch(cfg, epoch);
    detail::shuffle_indices(idx, rng);
    double loss_sum = 0.0;
    std::size_t correct = 0;
    for (std::size_t lo = 0; lo < idx.size();
         lo += static_cast<std::size_t>(cfg.batch_size)) {
      const std::size_t hi =
          std::min(idx.size(), lo + static_cast<std::size_t>(cfg.batch_size));
      Tensor<float> batch =
          detail::gather_batch(data, idx, lo, hi, cfg.augment, rng);
      std::vector<int> labels;
      labels.reserve(hi - lo);
      for (std::size_t i = lo; i < hi; ++i) labels.push_back(data.labels[idx[i]]);

      Tape<float> tape;
      SlotMap slots = bind_leaves(tape, params);
      const int x = tape.leaf(std::move(batch));
      std::vector<BnUpdate<float>> bn_updates;
      auto fwd = network_forward(tape, x, spec, slots, params, BnMode::train,
                                 &bn_updates);
      const int loss = tape.softmax_cross_entropy(fwd.logits, labels);
      tape.backward(loss);

      loss_sum += static_cast<double>(tape.value(loss)[0]) *
                  static_cast<double>(hi - lo);
      const auto& logits = tape.value(fwd.logits);
      for (std::size_t i = 0; i < hi - lo; ++i) {
        const float* row =
            logits.data() + i * static_cast<std::size_t>(spec.classes);
        if (detail::argmax_logit(row, spec.classes) == labels[i]) ++correct;
      }

      for (std::size_t p = 0; p < params.size(); ++p) {
        auto& entry = params.entries()[p];
        if (!entry.trainable) continue;
        sgd_update(entry.value, velocity[p], tape.grad(slots.at(entry.name)),
                   lr, cfg.momentum, entry.decay ? cfg.weight_decay : 0.0);
      }
      commit_bn_updates(params, bn_updates);
    }
    EpochLog e;
    e.epoch = epoch;
    e.loss = loss_sum / static_cast<double>(data.size());
    e.accuracy = static_cast<double>(correct) / static_cast<double>(data.size());
    e.lr = lr;
    log.push_back(e);
    if (cfg.stop_at_accuracy > 0 && e.accuracy >= cfg.stop_at_accuracy) break;
  }
  return log;
}

// ---- evaluation ----

struct EvalResult {
  double top1_error = 0.0;
  double top5_error = 0.0;
};

// Batch inference returning the raw logits, eval-mode BN.
inline Tensor<float> predict_logits(const NetworkSpec& spec,
                                    const ParamStore<float>& params,
                                    const Tensor<float>& images) {
  Tape<float> tape;
  SlotMap slots = bind_leaves(tape, params);
  const int x = tape.leaf(images);
  auto fwd = network_forward(tape, x, spec, slots, params, BnMode::eval);
  return tape.value(fwd.logits);
}

// Top-k error: fraction of samples whose label is absent from the k highest
// logits; ties rank the lower class index first.
inline EvalResult evaluate(const NetworkSpec& spec,
                           const ParamStore<float>& params,
                           const Dataset& data, int batch_size = 64) {
  if (data.size() == 0) {
    throw EmptyDataset("evaluation dataset is empty");
  }
  const Shape4 s = data.images.shape();
  const std::size_t sample = static_cast<std::size_t>(s.c) * s.h * s.w;
  std::size_t top1_wrong = 0;
  std::size_t top5_wrong = 0;
  for (std::size_t lo = 0; lo < data.size();
       lo += static_cast<std::size_t>(batch_size)) {
    const std::size_t hi =
        std::min(data.size(), lo + static_cast<std::size_t>(batch_size));
    Tensor<float> batch(Shape4{static_cast<int>(hi - lo), s.c, s.h, s.w});
    std::copy(data.images.data() + lo * sample,
              data.images.data() + hi * sample, batch.data());
    const Tensor<float> logits = predict_logits(spec, params, batch);
    for (std::size_t i = 0; i < hi - lo; ++i) {
      const float* row =
          logits.data() + i * static_cast<std::size_t>(spec.classes);
      const int label = data.labels[lo + i];
      std::vector<int> order(spec.classes);
      std::iota(order.begin(), order.end(), 0);
      std::stable_sort(order.begin(), order.end(), [&](int a, int b) {
        if (row[a] != row[b]) return row[a] > row[b];
        return a < b;
      });
      if (order[0] != label) ++top1_wrong;
      const int k = std::min(5, spec.classes);
      bool in_top5 = false;
      for (int j = 0; j < k; ++j) {
        if (order[j] == label) {
          in_top5 = true;
          break;
        }
      }
      if (!in_top5) ++top5_wrong;
    }
  }
  EvalResult r;
  r.top1_error = static_cast<double>(top1_wrong) / static_cast<double>(data.size());
  r.top5_error = static_cast<double>(top5_wrong) / static_cast<double>(data.size());
  return r;
}

}  // namespace res2net
