#pragma once

#include <cctype>
#include <sstream>
#include <type_traits>
#include <string>
#include <vector>

#include "res2net/block.hpp"

namespace res2net {

enum class BlockKind { bottleneck, res2net };

inline const char* block_kind_name(BlockKind k) {
  return k == BlockKind::bottleneck ? "bottleneck" : "res2net";
}

struct StemSpec {
  int out_channels = 64;
  int kernel = 7;
  int stride = 2;
  bool max_pool = true;  // 3x3 stride-2 pad-1 max pool after the stem conv
};

struct StageSpec {
  int blocks = 0;
  int out_channels = 0;
  int width = 0;  // channels per split, cardinality already folded in
  int scale = 1;
  int cardinality = 1;
  int stride = 1;  // stride of the first block
  bool use_se = false;
  int se_ratio = 16;
};

// Ordered description of a whole network: stem, stages of residual blocks,
// global-pool + FC head. Both the executable model and the analytical
// reports derive from this.
struct NetworkSpec {
  std::string name;
  BlockKind kind = BlockKind::res2net;
  int in_channels = 3;
  StemSpec stem;
  std::vector<StageSpec> stages;
  int classes = 1000;

  int stage_in_channels(int stage) const {
    return stage == 0 ? stem.out_channels : stages[stage - 1].out_channels;
  }

  Res2NetBlockConfig block_config(int stage, int block) const {
    const StageSpec& st = stages[stage];
    Res2NetBlockConfig cfg;
    cfg.in_channels = block == 0 ? stage_in_channels(stage) : st.out_channels;
    cfg.out_channels = st.out_channels;
    cfg.width = st.width;
    cfg.scale = st.scale;
    cfg.cardinality = st.cardinality;
    cfg.stride = block == 0 ? st.stride : 1;
    cfg.use_se = st.use_se;
    cfg.se_ratio = st.se_ratio;
    return cfg;
  }

  void validate() const {
    if (stages.empty()) throw InvalidTemplate("network has no stages");
    if (classes <= 0) throw InvalidTemplate("class count must be positive");
    for (std::size_t i = 0; i < stages.size(); ++i) {
      for (int b = 0; b < stages[i].blocks; ++b) {
        block_config(static_cast<int>(i), b).validate();
      }
    }
  }
};

// ---- templates ----

// Parsed form of the model-config grammar: template name plus the
// architectural dials. Negative fields mean "use the template default".
struct TemplateConfig {
  std::string template_name;
  int width = -1;
  int scale = -1;
  int cardinality = -1;
  int classes = -1;
  bool se = false;
  int depth = -1;  // res2next29 family only; used by the capacity sweep
};

namespace detail {

inline int scaled_width(int planes, int base_width, int cardinality) {
  return (planes * base_width / 64) * cardinality;
}

}  // namespace detail

inline NetworkSpec build_network(const TemplateConfig& tc) {
  TemplateConfig t = tc;
  NetworkSpec spec;
  const std::string& name = t.template_name;
  if (name == "resnet50" || name == "res2net50") {
    const bool baseline = name == "resnet50";
    if (t.width < 0) t.width = baseline ? 64 : 26;
    if (t.scale < 0) t.scale = baseline ? 1 : 4;
    if (t.cardinality < 0) t.cardinality = 1;
    if (t.classes < 0) t.classes = 1000;
    if (baseline && t.scale != 1) {
      throw InvalidTemplate("resnet50 is the scale-1 baseline");
    }
    spec.kind = baseline ? BlockKind::bottleneck : BlockKind::res2net;
    spec.stem = StemSpec{64, 7, 2, true};
    const int planes[4] = {64, 128, 256, 512};
    const int blocks[4] = {3, 4, 6, 3};
    for (int i = 0; i < 4; ++i) {
      StageSpec st;
      st.blocks = blocks[i];
      st.out_channels = planes[i] * 4;
      st.width = detail::scaled_width(planes[i], t.width, t.cardinality);
      st.scale = t.scale;
      st.cardinality = t.cardinality;
      st.stride = i == 0 ? 1 : 2;
      st.use_se = t.se;
      spec.stages.push_back(st);
    }
  } else if (name == "res2next29" || name == "resnext29") {
    const bool baseline = name == "resnext29";
    if (t.width < 0) t.width = baseline ? 64 : 24;
    if (t.scale < 0) t.scale = baseline ? 1 : 4;
    if (t.cardinality < 0) t.cardinality = baseline ? 8 : 6;
    if (t.classes < 0) t.classes = 100;
    if (t.depth < 0) t.depth = 29;
    if ((t.depth - 2) % 9 != 0 || t.depth < 29) {
      throw InvalidTemplate("depth must be 9*b + 2 with b >= 3, got " +
                            std::to_string(t.depth));
    }
    if (baseline && t.scale != 1) {
      throw InvalidTemplate("resnext29 is the scale-1 baseline");
    }
    spec.kind = t.scale == 1 ? BlockKind::bottleneck : BlockKind::res2net;
    spec.stem = StemSpec{64, 3, 1, false};
    const int planes[3] = {64, 128, 256};
    const int blocks_per_stage = (t.depth - 2) / 9;
    for (int i = 0; i < 3; ++i) {
      StageSpec st;
      st.blocks = blocks_per_stage;
      st.out_channels = planes[i] * 4;
      st.width = detail::scaled_width(planes[i], t.width, t.cardinality);
      st.scale = t.scale;
      st.cardinality = t.cardinality;
      st.stride = i == 0 ? 1 : 2;
      st.use_se = t.se;
      spec.stages.push_back(st);
    }
  } else if (name == "mini") {
    if (t.width < 0) t.width = 4;
    if (t.scale < 0) t.scale = 4;
    if (t.cardinality < 0) t.cardinality = 1;
    if (t.classes < 0) t.classes = 4;
    spec.kind = t.scale == 1 ? BlockKind::bottleneck : BlockKind::res2net;
    spec.stem = StemSpec{16, 3, 1, false};
    const int outs[3] = {32, 64, 128};
    for (int i = 0; i < 3; ++i) {
      StageSpec st;
      st.blocks = 2;
      st.out_channels = outs[i];
      st.width = t.width * (1 << i) * t.cardinality;
      st.scale = t.scale;
      st.cardinality = t.cardinality;
      st.stride = i == 0 ? 1 : 2;
      st.use_se = t.se;
      spec.stages.push_back(st);
    }
  } else {
    throw InvalidTemplate("unknown template: " + name);
  }
  spec.classes = t.classes;
  std::ostringstream os;
  os << name << "-" << spec.stages[0].cardinality << "c"
     << (spec.stages[0].width / spec.stages[0].cardinality) << "w"
     << spec.stages[0].scale << "s" << (t.se ? "-se" : "");
  spec.name = os.str();
  spec.validate();
  return spec;
}

// ---- config grammar ----

// Inline shorthand: template[-Nc][Nw][Ns][-se], e.g. "res2net50-26w4s",
// "res2next29-6c24w4s-se", "resnext29-8c64w", "mini".
inline TemplateConfig parse_shorthand(const std::string& text) {
  TemplateConfig tc;
  std::vector<std::string> parts;
  std::string cur;
  for (char ch : text) {
    if (ch == '-') {
      parts.push_back(cur);
      cur.clear();
    } else {
      cur.push_back(ch);
    }
  }
  parts.push_back(cur);
  if (parts.empty() || parts[0].empty()) {
    throw InvalidTemplate("empty model config");
  }
  tc.template_name = parts[0];
  for (std::size_t i = 1; i < parts.size(); ++i) {
    const std::string& p = parts[i];
    if (p == "se") {
      tc.se = true;
      continue;
    }
    std::size_t pos = 0;
    while (pos < p.size()) {
      std::size_t start = pos;
      while (pos < p.size() && std::isdigit(static_cast<unsigned char>(p[pos])))
        ++pos;
      if (pos == start || pos == p.size()) {
        throw InvalidTemplate("bad config token: " + p);
      }
      const int value = std::stoi(p.substr(start, pos - start));
      switch (p[pos]) {
        case 'c': tc.cardinality = value; break;
        case 'w': tc.width = value; break;
        case 's': tc.scale = value; break;
        case 'd': tc.depth = value; break;
        case 'k': tc.classes = value; break;
        default:
          throw InvalidTemplate(std::string("unknown config dimension '") +
                                p[pos] + "' in " + p);
      }
      ++pos;
    }
  }
  return tc;
}

// Key=value file grammar, one pair per line. Keys: template, width, scale,
// cardinality, se, classes. '#' starts a comment. Unknown keys are rejected.
inline TemplateConfig parse_config_text(const std::string& text) {
  TemplateConfig tc;
  bool saw_template = false;
  std::istringstream in(text);
  std::string line;
  while (std::getline(in, line)) {
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.erase(hash);
    while (!line.empty() && std::isspace(static_cast<unsigned char>(line.back())))
      line.pop_back();
    std::size_t b = 0;
    while (b < line.size() && std::isspace(static_cast<unsigned char>(line[b])))
      ++b;
    line.erase(0, b);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) {
      throw InvalidTemplate("config line is not key=value: " + line);
    }
    const std::string key = line.substr(0, eq);
    const std::string value = line.substr(eq + 1);
    if (key == "template") {
      tc.template_name = value;
      saw_template = true;
    } else if (key == "width") {
      tc.width = std::stoi(value);
    } else if (key == "scale") {
      tc.scale = std::stoi(value);
    } else if (key == "cardinality") {
      tc.cardinality = std::stoi(value);
    } else if (key == "classes") {
      tc.classes = std::stoi(value);
    } else if (key == "se") {
      tc.se = (value == "1" || value == "true" || value == "on");
      if (!tc.se && value != "0" && value != "false" && value != "off") {
        throw InvalidTemplate("bad boolean for se: " + value);
      }
    } else {
      throw InvalidTemplate("unknown config key: " + key);
    }
  }
  if (!saw_template) {
    throw InvalidTemplate("config is missing template=");
  }
  return tc;
}

// ---- layer-per-line spec text ----

inline std::string to_text(const NetworkSpec& spec) {
  std::ostringstream os;
  os << "input channels=" << spec.in_channels << "\n";
  os << "stem out=" << spec.stem.out_channels << " k=" << spec.stem.kernel
     << " stride=" << spec.stem.stride
     << " maxpool=" << (spec.stem.max_pool ? 1 : 0) << "\n";
  for (std::size_t i = 0; i < spec.stages.size(); ++i) {
    for (int b = 0; b < spec.stages[i].blocks; ++b) {
      const Res2NetBlockConfig cfg = spec.block_config(static_cast<int>(i), b);
      os << "block kind=" << block_kind_name(spec.kind)
         << " in=" << cfg.in_channels << " out=" << cfg.out_channels
         << " w=" << cfg.width << " s=" << cfg.scale << " c=" << cfg.cardinality
         << " stride=" << cfg.stride << " se=" << (cfg.use_se ? 1 : 0)
         << " ratio=" << cfg.se_ratio << "\n";
    }
  }
  os << "head classes=" << spec.classes << "\n";
  return os.str();
}

namespace detail {

inline int parse_field(const std::string& token, const std::string& key) {
  if (token.rfind(key + "=", 0) != 0) {
    throw InvalidTemplate("expected " + key + "=..., got " + token);
  }
  return std::stoi(token.substr(key.size() + 1));
}

inline std::string parse_field_str(const std::string& token,
                                   const std::string& key) {
  if (token.rfind(key + "=", 0) != 0) {
    throw InvalidTemplate("expected " + key + "=..., got " + token);
  }
  return token.substr(key.size() + 1);
}

}  // namespace detail

// Parses the layer-per-line form emitted by to_text. Consecutive stride-1
// blocks with identical dials are grouped back into stages.
inline NetworkSpec from_text(const std::string& text) {
  NetworkSpec spec;
  spec.name = "custom";
  spec.stages.clear();
  std::istringstream in(text);
  std::string line;
  bool have_kind = false;
  while (std::getline(in, line)) {
    std::istringstream ls(line);
    std::vector<std::string> tok;
    std::string t;
    while (ls >> t) tok.push_back(t);
    if (tok.empty()) continue;
    if (tok[0] == "input") {
      spec.in_channels = detail::parse_field(tok.at(1), "channels");
    } else if (tok[0] == "stem") {
      spec.stem.out_channels = detail::parse_field(tok.at(1), "out");
      spec.stem.kernel = detail::parse_field(tok.at(2), "k");
      spec.stem.stride = detail::parse_field(tok.at(3), "stride");
      spec.stem.max_pool = detail::parse_field(tok.at(4), "maxpool") != 0;
    } else if (tok[0] == "block") {
      const std::string kind = detail::parse_field_str(tok.at(1), "kind");
      BlockKind bk;
      if (kind == "bottleneck") {
        bk = BlockKind::bottleneck;
      } else if (kind == "res2net") {
        bk = BlockKind::res2net;
      } else {
        throw InvalidTemplate("unknown block kind: " + kind);
      }
      if (have_kind && bk != spec.kind) {
        throw InvalidTemplate("mixed block kinds are not supported");
      }
      spec.kind = bk;
      have_kind = true;
      StageSpec st;
      st.blocks = 1;
      const int in = detail::parse_field(tok.at(2), "in");
      st.out_channels = detail::parse_field(tok.at(3), "out");
      st.width = detail::parse_field(tok.at(4), "w");
      st.scale = detail::parse_field(tok.at(5), "s");
      st.cardinality = detail::parse_field(tok.at(6), "c");
      st.stride = detail::parse_field(tok.at(7), "stride");
      st.use_se = detail::parse_field(tok.at(8), "se") != 0;
      st.se_ratio = tok.size() > 9 ? detail::parse_field(tok.at(9), "ratio") : 16;
      if (!spec.stages.empty()) {
        StageSpec& prev = spec.stages.back();
        const bool same = prev.out_channels == st.out_channels &&
                          prev.width == st.width && prev.scale == st.scale &&
                          prev.cardinality == st.cardinality &&
                          prev.use_se == st.use_se &&
                          prev.se_ratio == st.se_ratio && st.stride == 1 &&
                          in == prev.out_channels;
        if (same) {
          ++prev.blocks;
          continue;
        }
      }
      spec.stages.push_back(st);
    } else if (tok[0] == "head") {
      spec.classes = detail::parse_field(tok.at(1), "classes");
    } else {
      throw InvalidTemplate("unknown spec line: " + tok[0]);
    }
  }
  spec.validate();
  return spec;
}

// ---- parameters and execution ----

template <typename T>
ParamStore<T> init_network_params(const NetworkSpec& spec,
                                  std::uint64_t seed) {
  spec.validate();
  Rng rng(seed);
  ParamStore<T> store;
  detail::add_conv(store, "stem.conv", spec.stem.out_channels, spec.in_channels,
                   spec.stem.kernel, 1, rng);
  detail::add_bn(store, "stem.bn", spec.stem.out_channels);
  for (std::size_t i = 0; i < spec.stages.size(); ++i) {
    for (int b = 0; b < spec.stages[i].blocks; ++b) {
      const std::string prefix = "stage" + std::to_string(i + 1) + ".block" +
                                 std::to_string(b + 1);
      init_block_params(store, prefix, spec.block_config(static_cast<int>(i), b),
                        rng);
    }
  }
  detail::add_fc(store, "head.fc", spec.classes,
                 spec.stages.back().out_channels, rng);
  return store;
}

// Slots of named activations recorded during a forward pass, usable as
// Grad-CAM targets.
struct ActivationMap {
  std::vector<std::pair<std::string, int>> entries;

  void add(const std::string& name, int slot) { entries.emplace_back(name, slot); }

  int find(const std::string& name) const {
    for (const auto& [n, s] : entries) {
      if (n == name) return s;
    }
    throw UnknownLayer("unknown activation layer: " + name);
  }

  std::vector<std::string> names() const {
    std::vector<std::string> out;
    out.reserve(entries.size());
    for (const auto& [n, _] : entries) out.push_back(n);
    return out;
  }
};

template <typename T>
struct NetworkForwardResult {
  int logits = -1;
  ActivationMap activations;
};

template <typename T>
NetworkForwardResult<T> network_forward(
    Tape<T>& tape, int x, const NetworkSpec& spec, const SlotMap& slots,
    const ParamStore<T>& store, BnMode mode,
    std::type_identity_t<std::vector<BnUpdate<T>>*> bn_updates = nullptr) {
  NetworkForwardResult<T> result;
  int h = tape.conv2d(x, slots.at("stem.conv.weight"), spec.stem.stride,
                      spec.stem.kernel / 2, 1);
  h = tape_batch_norm(tape, h, "stem.bn", slots, store, mode, bn_updates);
  h = tape.relu(h);
  if (spec.stem.max_pool) {
    h = tape.max_pool2d(h, 3, 2, 1);
  }
  result.activations.add("stem.out", h);
  for (std::size_t i = 0; i < spec.stages.size(); ++i) {
    for (int b = 0; b < spec.stages[i].blocks; ++b) {
      const std::string prefix = "stage" + std::to_string(i + 1) + ".block" +
                                 std::to_string(b + 1);
      const Res2NetBlockConfig cfg =
          spec.block_config(static_cast<int>(i), b);
      if (spec.kind == BlockKind::bottleneck) {
        h = bottleneck_forward(tape, h, cfg, slots, store, prefix, mode,
                               bn_updates);
      } else {
        h = res2net_block_forward(tape, h, cfg, slots, store, prefix, mode,
                                  bn_updates);
      }
      result.activations.add(prefix + ".out", h);
    }
  }
  h = tape.global_avg_pool(h);
  result.activations.add("head.pool", h);
  result.logits = tape.fully_connected(h, slots.at("head.fc.weight"),
                                       slots.at("head.fc.bias"));
  return result;
}

// Applies accumulated train-mode batch statistics to the running stats in the
// store (running <- (1 - momentum) * running + momentum * batch).
template <typename T>
void commit_bn_updates(ParamStore<T>& store,
                       const std::vector<BnUpdate<T>>& updates) {
  for (const auto& u : updates) {
    auto& rm = store.at(u.name + ".running_mean");
    auto& rv = store.at(u.name + ".running_var");
    const T mom = static_cast<T>(kBnMomentum);
    for (std::size_t c = 0; c < rm.numel(); ++c) {
      rm[c] = (T(1) - mom) * rm[c] + mom * u.stats.mean[c];
      rv[c] = (T(1) - mom) * rv[c] + mom * u.stats.var[c];
    }
  }
}

}  // namespace res2net
