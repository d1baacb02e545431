#pragma once

#include <string>
#include <unordered_map>
#include <vector>

#include "res2net/errors.hpp"
#include "res2net/tensor.hpp"

namespace res2net {

// Named tensor store in deterministic insertion order. Holds trainable
// weights, BN affine parameters, and non-trainable state (BN running stats,
// normalization constants). `decay` marks weight-decay eligibility: conv and
// FC weights yes, BN gamma/beta and biases no.
template <typename T>
class ParamStore {
 public:
  struct Entry {
    std::string name;
    Tensor<T> value;
    bool trainable = true;
    bool decay = false;
  };

  int add(std::string name, Tensor<T> value, bool trainable, bool decay) {
    if (index_.count(name)) {
      throw Error("duplicate parameter name: " + name);
    }
    index_[name] = static_cast<int>(entries_.size());
    entries_.push_back(Entry{std::move(name), std::move(value), trainable, decay});
    return static_cast<int>(entries_.size()) - 1;
  }

  bool has(const std::string& name) const { return index_.count(name) != 0; }

  Tensor<T>& at(const std::string& name) {
    auto it = index_.find(name);
    if (it == index_.end()) throw Error("unknown parameter: " + name);
    return entries_[it->second].value;
  }

  const Tensor<T>& at(const std::string& name) const {
    auto it = index_.find(name);
    if (it == index_.end()) throw Error("unknown parameter: " + name);
    return entries_[it->second].value;
  }

  std::vector<Entry>& entries() { return entries_; }
  const std::vector<Entry>& entries() const { return entries_; }
  std::size_t size() const { return entries_.size(); }

  template <typename U>
  ParamStore<U> cast() const {
    ParamStore<U> out;
    for (const auto& e : entries_) {
      out.add(e.name, e.value.template cast<U>(), e.trainable, e.decay);
    }
    return out;
  }

  std::size_t total_elements(bool trainable_only) const {
    std::size_t n = 0;
    for (const auto& e : entries_) {
      if (!trainable_only || e.trainable) n += e.value.numel();
    }
    return n;
  }

 private:
  std::vector<Entry> entries_;
  std::unordered_map<std::string, int> index_;
};

}  // namespace res2net
