#pragma once

#include <algorithm>
#include <cstdint>
#include <functional>
#include <sstream>
#include <string>
#include <unordered_map>
#include <vector>

#include "res2net/params.hpp"
#include "res2net/rng.hpp"
#include "res2net/tape.hpp"

namespace res2net {

// Maps parameter names to tape leaf slots for one recorded forward pass.
using SlotMap = std::unordered_map<std::string, int>;

// Creates one leaf per store entry, in store order, and returns the binding.
template <typename T>
SlotMap bind_leaves(Tape<T>& tape, const ParamStore<T>& store) {
  SlotMap slots;
  for (const auto& e : store.entries()) {
    slots[e.name] = tape.leaf(e.value);
  }
  return slots;
}

struct GradCheckRow {
  std::string name;
  double max_rel_err = 0.0;
  std::size_t checked = 0;
  std::size_t skipped = 0;
};

struct GradCheckReport {
  double max_rel_err = 0.0;
  std::size_t comparisons = 0;
  std::size_t skipped = 0;
  double epsilon = 0.0;
  double threshold = 0.0;
  std::vector<GradCheckRow> rows;

  bool pass() const { return max_rel_err < threshold; }

  std::string str() const {
    std::ostringstream os;
    os << "grad check: " << (pass() ? "PASS" : "FAIL")
       << "  max_rel_err=" << max_rel_err << "  threshold=" << threshold
       << "  comparisons=" << comparisons << "  skipped=" << skipped << "\n";
    for (const auto& r : rows) {
      os << "  " << r.name << ": max_rel_err=" << r.max_rel_err
         << " checked=" << r.checked << " skipped=" << r.skipped << "\n";
    }
    return os.str();
  }
};

namespace detail {

inline double rel_err(double a, double n) {
  return std::abs(a - n) / std::max({std::abs(a), std::abs(n), 1e-8});
}

}  // namespace detail

// A model fragment: records a forward pass over already-bound leaves and
// returns the scalar loss slot. Must be a pure function of the store values.
using GradCheckFragment = std::function<int(
    Tape<double>&, const SlotMap&, const ParamStore<double>&)>;

// Compares tape gradients of every trainable parameter against central
// differences (f(t+e) - f(t-e)) / 2e in the binary64 path. Samples at most
// max_coords coordinates per tensor (exhaustive when the tensor is that small
// or smaller); coordinates whose evaluations pass within 10*epsilon of a ReLU
// or max-pool kink are excluded.
inline GradCheckReport grad_check(const ParamStore<double>& params,
                                  const GradCheckFragment& fragment,
                                  double epsilon, double threshold,
                                  std::uint64_t seed = 42,
                                  int max_coords = 64) {
  if (epsilon < 1e-6 || epsilon > 1e-3) {
    throw Error("grad_check epsilon must lie in [1e-6, 1e-3]");
  }
  GradCheckReport report;
  report.epsilon = epsilon;
  report.threshold = threshold;

  Tape<double> tape;
  SlotMap slots = bind_leaves(tape, params);
  const int loss_slot = fragment(tape, slots, params);
  tape.backward(loss_slot);
  const double base_margin = tape.kink_margin();

  auto eval = [&](const ParamStore<double>& p, double* margin) {
    Tape<double> t;
    SlotMap s = bind_leaves(t, p);
    const int slot = fragment(t, s, p);
    if (margin) *margin = std::min(*margin, t.kink_margin());
    return t.value(slot)[0];
  };

  const double kink_limit = 10.0 * epsilon;
  Rng rng(seed);
  ParamStore<double> work = params;
  for (std::size_t ti = 0; ti < params.size(); ++ti) {
    const auto& entry = params.entries()[ti];
    if (!entry.trainable) continue;
    const Tensor<double>& analytic = tape.grad(slots.at(entry.name));
    GradCheckRow row;
    row.name = entry.name;
    const std::size_t numel = entry.value.numel();
    std::vector<std::size_t> coords;
    if (numel <= static_cast<std::size_t>(max_coords)) {
      coords.resize(numel);
      for (std::size_t i = 0; i < numel; ++i) coords[i] = i;
    } else {
      for (int i = 0; i < max_coords; ++i) {
        coords.push_back(static_cast<std::size_t>(
            rng.uniform_int(0, static_cast<int>(numel) - 1)));
      }
      std::sort(coords.begin(), coords.end());
      coords.erase(std::unique(coords.begin(), coords.end()), coords.end());
    }
    auto& tensor = work.entries()[ti].value;
    for (const std::size_t i : coords) {
      const double original = tensor[i];
      double margin = base_margin;
      tensor[i] = original + epsilon;
      const double lp = eval(work, &margin);
      tensor[i] = original - epsilon;
      const double lm = eval(work, &margin);
      tensor[i] = original;
      if (margin < kink_limit) {
        ++row.skipped;
        ++report.skipped;
        continue;
      }
      const double numeric = (lp - lm) / (2.0 * epsilon);
      const double err = detail::rel_err(analytic[i], numeric);
      row.max_rel_err = std::max(row.max_rel_err, err);
      ++row.checked;
      ++report.comparisons;
    }
    report.max_rel_err = std::max(report.max_rel_err, row.max_rel_err);
    report.rows.push_back(std::move(row));
  }
  return report;
}

}  // namespace res2net
