#pragma once

#include <map>
#include <span>
#include <string>
#include <vector>

#include "flab/core/error.hpp"
#include "flab/nn/tensor.hpp"

namespace flab::cl {

/// Sample counts per class over a training pool.
inline std::map<int, std::size_t> class_counts(std::span<const int> pool_labels) {
  std::map<int, std::size_t> n;
  for (int y : pool_labels) ++n[y];
  return n;
}

/// Weighted-gradient factors w_i = N / (C * n_c(i)) with counts over the whole exposure pool.
/// A class-balanced pool gives all ones and every class carries the same total weight.
inline std::vector<Real> class_balance_weights(std::span<const int> labels, const std::map<int, std::size_t>& pool) {
  std::size_t total = 0;
  for (const auto& [c, n] : pool) total += n;
  std::vector<Real> w(labels.size());
  for (std::size_t i = 0; i < labels.size(); ++i) {
    auto it = pool.find(labels[i]);
    if (it == pool.end() || it->second == 0)
      throw ConfigError("class_balance_weights: label " + std::to_string(labels[i]) + " is not in the pool");
    w[i] = static_cast<Real>(double(total) / (double(pool.size()) * double(it->second)));
  }
  return w;
}

inline std::vector<Real> class_balance_weights(std::span<const int> pool_labels) {
  return class_balance_weights(pool_labels, class_counts(pool_labels));
}

}  // namespace flab::cl
