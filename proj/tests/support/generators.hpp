#pragma once

// Hand-rolled generators for property tests. Every case is derived from
// (seed, case index) so a failure report pins down the input exactly.

#include <cmath>
#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "t1noise/rng.hpp"

namespace t1noise::testing {

class Gen {
 public:
  explicit Gen(std::uint64_t seed, std::uint64_t stream = 0) : rng_(seed, stream) {}

  double uniform(double lo, double hi) { return lo + (hi - lo) * rng_.uniform(); }
  double log_uniform(double lo, double hi) {
    return std::exp(uniform(std::log(lo), std::log(hi)));
  }
  int integer(int lo, int hi) {  // inclusive
    return lo + static_cast<int>(rng_.uniform() * (hi - lo + 1));
  }
  double normal(double mean = 0.0, double sd = 1.0) { return rng_.normal(mean, sd); }
  bool coin() { return rng_.uniform() < 0.5; }

  std::vector<double> sorted_log_grid(double lo, double hi, int n) {
    std::vector<double> v(static_cast<std::size_t>(n));
    for (int i = 0; i < n; ++i) v[static_cast<std::size_t>(i)] = lo * std::pow(hi / lo, double(i) / (n - 1));
    return v;
  }

  template <typename T>
  void shuffle(std::vector<T>& v) {
    for (std::size_t i = v.size(); i > 1; --i) {
      const auto j = static_cast<std::size_t>(rng_.uniform() * static_cast<double>(i));
      std::swap(v[i - 1], v[j]);
    }
  }

 private:
  Rng rng_;
};

// Runs body(gen, case_index) for n cases; gen is reseeded per case.
inline void for_all(int n, std::uint64_t seed, const std::function<void(Gen&, int)>& body) {
  for (int i = 0; i < n; ++i) {
    Gen g(seed, static_cast<std::uint64_t>(i));
    body(g, i);
  }
}

inline double rel_err(double a, double b) {
  return std::abs(a - b) / std::max(std::abs(b), 1e-300);
}

}  // namespace t1noise::testing
