#pragma once

#include <vector>

#include "t1noise/fitting.hpp"

namespace t1noise::fit::detail {

// Reorders names, values, errors, intervals and covariance so that new
// position i holds old parameter perm[i].
inline void permute(FitResult& f, const std::vector<Eigen::Index>& perm) {
  const auto n = static_cast<Eigen::Index>(perm.size());
  FitResult g = f;
  for (Eigen::Index i = 0; i < n; ++i) {
    const auto si = static_cast<std::size_t>(i);
    const Eigen::Index o = perm[si];
    g.names[si] = f.names[static_cast<std::size_t>(o)];
    g.parameters[i] = f.parameters[o];
    g.standard_errors[i] = f.standard_errors[o];
    g.confidence_intervals[si] = f.confidence_intervals[static_cast<std::size_t>(o)];
    for (Eigen::Index k = 0; k < n; ++k) {
      g.covariance(i, k) = f.covariance(o, perm[static_cast<std::size_t>(k)]);
    }
  }
  f = std::move(g);
}

}  // namespace t1noise::fit::detail
