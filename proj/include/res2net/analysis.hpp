#pragma once

#include <algorithm>
#include <array>
#include <cstdint>
#include <iomanip>
#include <sstream>
#include <string>
#include <vector>

#include "res2net/network.hpp"

namespace res2net {

struct LayerRow {
  std::string name;
  long long params = 0;
  long long macs = 0;
  Shape4 out_shape;
};

// Per-layer parameter and multiply-accumulate accounting for a NetworkSpec at
// a given input resolution. One MAC counts as one FLOP; BN, activations and
// pooling are excluded. BN affine parameters count as trainable; running
// statistics are tallied separately.
struct ComplexityReport {
  std::string model;
  int input_resolution = 0;
  std::vector<LayerRow> rows;
  long long total_params = 0;
  long long total_macs = 0;
  long long bn_running_stats = 0;

  double params_millions() const { return static_cast<double>(total_params) / 1e6; }
  double macs_giga() const { return static_cast<double>(total_macs) / 1e9; }

  std::string table() const {
    std::ostringstream os;
    os << "model: " << model << "  input: " << input_resolution << "x"
       << input_resolution << "\n";
    std::size_t name_w = 5;
    for (const auto& r : rows) name_w = std::max(name_w, r.name.size());
    os << std::left << std::setw(static_cast<int>(name_w) + 2) << "layer"
       << std::right << std::setw(14) << "params" << std::setw(16) << "macs"
       << "  shape\n";
    for (const auto& r : rows) {
      os << std::left << std::setw(static_cast<int>(name_w) + 2) << r.name
         << std::right << std::setw(14) << r.params << std::setw(16) << r.macs
         << "  " << r.out_shape.str() << "\n";
    }
    os << std::left << std::setw(static_cast<int>(name_w) + 2) << "total"
       << std::right << std::setw(14) << total_params << std::setw(16)
       << total_macs << "\n";
    os << std::fixed << std::setprecision(2) << "total params: "
       << params_millions() << "M   total macs: " << std::setprecision(3)
       << macs_giga() << "G   bn running stats: " << bn_running_stats << "\n";
    return os.str();
  }

  // Machine-readable line format for diffing: layer<TAB>params<TAB>macs<TAB>shape.
  std::string tsv() const {
    std::ostringstream os;
    for (const auto& r : rows) {
      os << r.name << "\t" << r.params << "\t" << r.macs << "\t"
         << r.out_shape.str() << "\n";
    }
    os << "total\t" << total_params << "\t" << total_macs << "\t-\n";
    return os.str();
  }
};

namespace detail {

struct Counter {
  ComplexityReport report;
  Shape4 cur;  // running activation shape

  void conv(const std::string& name, int c_out, int groups, int k, int stride,
            int padding) {
    const long long params = static_cast<long long>(c_out) *
                             (cur.c / groups) * k * k;
    const int ho = conv_out_dim(cur.h, k, stride, padding);
    const int wo = conv_out_dim(cur.w, k, stride, padding);
    cur = Shape4{cur.n, c_out, ho, wo};
    rows_push(name, params, params * ho * wo);
  }

  void bn(const std::string& name) {
    rows_push(name, 2LL * cur.c, 0);
    report.bn_running_stats += 2LL * cur.c;
  }

  void pool(int k, int stride, int padding) {
    cur.h = conv_out_dim(cur.h, k, stride, padding);
    cur.w = conv_out_dim(cur.w, k, stride, padding);
  }

  void fc(const std::string& name, int c_out) {
    const long long params =
        static_cast<long long>(c_out) * cur.c + c_out;
    const long long macs = static_cast<long long>(c_out) * cur.c;
    cur = Shape4{cur.n, c_out, 1, 1};
    rows_push(name, params, macs);
  }

  void rows_push(const std::string& name, long long params, long long macs) {
    report.rows.push_back(LayerRow{name, params, macs, cur});
    report.total_params += params;
    report.total_macs += macs;
  }
};

}  // namespace detail

inline int native_resolution(const NetworkSpec& spec) {
  return spec.stem.kernel == 7 ? 224 : 32;
}

inline ComplexityReport count_macs(const NetworkSpec& spec,
                                   int input_resolution) {
  spec.validate();
  if (input_resolution <= 0) {
    throw ShapeMismatch("input resolution must be positive");
  }
  detail::Counter ctr;
  ctr.report.model = spec.name;
  ctr.report.input_resolution = input_resolution;
  ctr.cur = Shape4{1, spec.in_channels, input_resolution, input_resolution};
  ctr.conv("stem.conv", spec.stem.out_channels, 1, spec.stem.kernel,
           spec.stem.stride, spec.stem.kernel / 2);
  ctr.bn("stem.bn");
  if (spec.stem.max_pool) ctr.pool(3, 2, 1);
  for (std::size_t i = 0; i < spec.stages.size(); ++i) {
    for (int b = 0; b < spec.stages[i].blocks; ++b) {
      const Res2NetBlockConfig cfg = spec.block_config(static_cast<int>(i), b);
      const std::string prefix = "stage" + std::to_string(i + 1) + ".block" +
                                 std::to_string(b + 1);
      const Shape4 block_in = ctr.cur;
      const int n = cfg.internal_channels();
      ctr.conv(prefix + ".conv1", n, 1, 1, 1, 0);
      ctr.bn(prefix + ".bn1");
      // The split convs all see `width` input channels; strided blocks carry
      // the stride inside each K_i.
      const Shape4 pre_split = ctr.cur;
      const int first = cfg.scale == 1 ? 1 : 2;
      Shape4 split_out;
      for (int k = first; k <= cfg.scale; ++k) {
        ctr.cur = Shape4{pre_split.n, cfg.width, pre_split.h, pre_split.w};
        ctr.conv(prefix + ".conv2_" + std::to_string(k), cfg.width,
                 cfg.cardinality, 3, cfg.stride, 1);
        ctr.bn(prefix + ".bn2_" + std::to_string(k));
        split_out = ctr.cur;
      }
      ctr.cur = Shape4{split_out.n, n, split_out.h, split_out.w};
      ctr.conv(prefix + ".conv3", cfg.out_channels, 1, 1, 1, 0);
      ctr.bn(prefix + ".bn3");
      if (cfg.use_se) {
        const Shape4 save = ctr.cur;
        const int hidden = se_hidden_channels(cfg.out_channels, cfg.se_ratio);
        ctr.cur = Shape4{save.n, cfg.out_channels, 1, 1};
        ctr.fc(prefix + ".se.fc1", hidden);
        ctr.fc(prefix + ".se.fc2", cfg.out_channels);
        ctr.cur = save;
      }
      if (cfg.needs_projection()) {
        const Shape4 save = ctr.cur;
        ctr.cur = block_in;
        ctr.conv(prefix + ".shortcut.conv", cfg.out_channels, 1, 1, cfg.stride,
                 0);
        ctr.bn(prefix + ".shortcut.bn");
        ctr.cur = save;
      }
    }
  }
  ctr.cur = Shape4{ctr.cur.n, ctr.cur.c, 1, 1};
  ctr.fc("head.fc", spec.classes);
  return ctr.report;
}

inline ComplexityReport count_params(const NetworkSpec& spec) {
  return count_macs(spec, native_resolution(spec));
}

// Finds the split width w whose res2net variant matches the baseline's
// parameter budget most closely; ties break toward the smaller w.
inline int solve_width_for_scale(const NetworkSpec& baseline, int scale,
                                 int w_lo = 1, int w_hi = 128) {
  if (w_lo > w_hi) {
    throw EmptyRange("width search range is empty");
  }
  if (scale < 1) {
    throw ShapeMismatch("scale must be >= 1");
  }
  const long long target = count_params(baseline).total_params;
  TemplateConfig tc;
  tc.template_name = baseline.stem.kernel == 7 ? "res2net50" : "res2next29";
  tc.scale = scale;
  tc.cardinality = baseline.stages[0].cardinality;
  tc.classes = baseline.classes;
  long long best_diff = -1;
  int best_w = w_lo;
  for (int w = w_lo; w <= w_hi; ++w) {
    tc.width = w;
    const long long p = count_params(build_network(tc)).total_params;
    const long long diff = p > target ? p - target : target - p;
    if (best_diff < 0 || diff < best_diff) {
      best_diff = diff;
      best_w = w;
    }
  }
  return best_w;
}

// ---- capacity sweep (model size vs. architectural dimension) ----

enum class SweepDimension { scale, cardinality, depth };

inline SweepDimension parse_sweep_dimension(const std::string& s) {
  if (s == "scale") return SweepDimension::scale;
  if (s == "cardinality") return SweepDimension::cardinality;
  if (s == "depth") return SweepDimension::depth;
  throw InvalidDimension("unknown sweep dimension: " + s);
}

struct SweepPoint {
  int value = 0;
  long long params = 0;
};

inline std::vector<SweepPoint> sweep_dimension(const TemplateConfig& base,
                                               SweepDimension dim,
                                               const std::vector<int>& values) {
  std::vector<SweepPoint> out;
  for (int v : values) {
    TemplateConfig tc = base;
    switch (dim) {
      case SweepDimension::scale: tc.scale = v; break;
      case SweepDimension::cardinality: tc.cardinality = v; break;
      case SweepDimension::depth: tc.depth = v; break;
    }
    out.push_back(
        SweepPoint{v, count_params(build_network(tc)).total_params});
  }
  return out;
}

// ---- receptive fields ----

struct SupportBox {
  int h0 = 0, h1 = -1, w0 = 0, w1 = -1;  // inclusive; empty when h1 < h0

  bool empty() const { return h1 < h0 || w1 < w0; }
  int side_h() const { return empty() ? 0 : h1 - h0 + 1; }
  int side_w() const { return empty() ? 0 : w1 - w0 + 1; }

  bool operator==(const SupportBox& o) const {
    return h0 == o.h0 && h1 == o.h1 && w0 == o.w0 && w1 == o.w1;
  }
};

// Theory plus (optionally) measurement for every pre-concat split of one
// block: within the block, split 1 is untouched (side 1) and split i >= 2
// has passed i-1 3x3 convolutions (side 2(i-1)+1).
struct ReceptiveFieldProfile {
  int scale = 0;
  std::vector<int> theory_side;        // indexed by split - 1
  std::vector<SupportBox> measured;    // filled by rf_oracle

  std::string str() const {
    std::ostringstream os;
    os << "split  theory_rf";
    if (!measured.empty()) os << "  measured_box";
    os << "\n";
    for (std::size_t i = 0; i < theory_side.size(); ++i) {
      os << std::setw(5) << (i + 1) << std::setw(10) << theory_side[i] << "x"
         << theory_side[i];
      if (i < measured.size()) {
        const auto& b = measured[i];
        os << "  [" << b.h0 << ".." << b.h1 << "]x[" << b.w0 << ".." << b.w1
           << "] = " << b.side_h() << "x" << b.side_w();
      }
      os << "\n";
    }
    return os.str();
  }
};

inline ReceptiveFieldProfile enumerate_receptive_fields(
    const Res2NetBlockConfig& cfg) {
  cfg.validate();
  if (cfg.stride != 1) {
    throw PreconditionViolation("receptive-field theory covers stride-1 "
                                "hierarchical blocks only");
  }
  ReceptiveFieldProfile profile;
  profile.scale = cfg.scale;
  if (cfg.scale == 1) {
    profile.theory_side.push_back(3);
    return profile;
  }
  for (int i = 1; i <= cfg.scale; ++i) {
    profile.theory_side.push_back(i == 1 ? 1 : 2 * (i - 1) + 1);
  }
  return profile;
}

// Block parameters for the oracle: strictly positive conv weights, identity
// BN, no SE, so no cancellation can shrink the measured support.
template <typename T>
ParamStore<T> make_positive_block_params(const Res2NetBlockConfig& cfg,
                                         const std::string& prefix,
                                         std::uint64_t seed) {
  Rng rng(seed);
  ParamStore<T> store;
  init_block_params(store, prefix, cfg, rng);
  for (auto& e : store.entries()) {
    if (e.name.find("conv") != std::string::npos) {
      for (std::size_t i = 0; i < e.value.numel(); ++i) {
        e.value[i] = static_cast<T>(std::abs(static_cast<double>(e.value[i])) +
                                    0.05);
      }
    } else if (e.name.find(".gamma") != std::string::npos) {
      for (std::size_t i = 0; i < e.value.numel(); ++i) e.value[i] = T(1);
    } else if (e.name.find(".beta") != std::string::npos ||
               e.name.find(".running_mean") != std::string::npos) {
      for (std::size_t i = 0; i < e.value.numel(); ++i) e.value[i] = T(0);
    } else if (e.name.find(".running_var") != std::string::npos) {
      for (std::size_t i = 0; i < e.value.numel(); ++i) e.value[i] = T(1);
    }
  }
  return store;
}

// Runs backward from the center element of every pre-concat split and
// returns the bounding box of nonzero input gradient for each. Requires
// strictly positive conv weights (checked), stride 1 and SE off, so the
// measured support equals the theoretical receptive field exactly.
template <typename T>
ReceptiveFieldProfile rf_oracle(const Res2NetBlockConfig& cfg,
                                const ParamStore<T>& params,
                                const std::string& prefix, int input_size) {
  cfg.validate();
  if (cfg.stride != 1 || cfg.use_se) {
    throw PreconditionViolation(
        "rf_oracle requires a stride-1 block with SE off");
  }
  for (const auto& e : params.entries()) {
    if (e.name.find("conv") == std::string::npos) continue;
    for (std::size_t i = 0; i < e.value.numel(); ++i) {
      if (!(e.value[i] > T(0))) {
        throw PreconditionViolation("rf_oracle requires strictly positive "
                                    "conv weights; offender: " + e.name);
      }
    }
  }
  const int max_side = cfg.scale == 1 ? 3 : 2 * (cfg.scale - 1) + 1;
  if (input_size < max_side || input_size % 2 == 0) {
    throw PreconditionViolation("input size must be odd and >= " +
                                std::to_string(max_side));
  }

  ReceptiveFieldProfile profile = enumerate_receptive_fields(cfg);
  Tape<T> tape;
  SlotMap slots = bind_leaves(tape, params);
  const int x = tape.leaf(Tensor<T>::full(
      Shape4{1, cfg.in_channels, input_size, input_size}, T(1)));
  std::vector<int> splits;
  res2net_block_forward(tape, x, cfg, slots, params, prefix, BnMode::eval,
                        nullptr, &splits);
  const int center = input_size / 2;
  for (const int split_slot : splits) {
    tape.zero_grads();
    const int loss = tape.select(split_slot, 0, 0, center, center);
    tape.backward(loss);
    const Tensor<T>& g = tape.grad(x);
    SupportBox box;
    box.h0 = input_size;
    box.w0 = input_size;
    box.h1 = -1;
    box.w1 = -1;
    const Shape4 gs = g.shape();
    for (int c = 0; c < gs.c; ++c) {
      for (int h = 0; h < gs.h; ++h) {
        for (int w = 0; w < gs.w; ++w) {
          if (g.at(0, c, h, w) != T(0)) {
            box.h0 = std::min(box.h0, h);
            box.h1 = std::max(box.h1, h);
            box.w0 = std::min(box.w0, w);
            box.w1 = std::max(box.w1, w);
          }
        }
      }
    }
    profile.measured.push_back(box);
  }
  return profile;
}

}  // namespace res2net
