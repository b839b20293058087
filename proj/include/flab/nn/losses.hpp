#pragma once

#include <cmath>
#include <cstddef>
#include <span>
#include <string>

#include "flab/nn/tensor.hpp"

namespace flab::nn {

struct LossResult {
  Real loss = 0;
  Tensor grad;  // dLoss/dInput, same shape as the prediction
};

namespace detail {

inline void require_same_shape(const Tensor& a, const Tensor& b, const char* op) {
  if (a.shape() != b.shape())
    throw ConfigError(std::string(op) + ": shape mismatch " + shape_str(a.shape()) + " vs " +
                      shape_str(b.shape()));
}

// Per-row weights for elementwise losses; empty means all ones.
inline Real row_weight(std::span<const Real> w, std::size_t row) {
  return w.empty() ? Real{1} : w[row];
}

inline void check_row_weights(std::span<const Real> w, std::size_t rows, const char* op) {
  if (!w.empty() && w.size() != rows)
    throw ConfigError(std::string(op) + ": expected " + std::to_string(rows) + " row weights, got " +
                      std::to_string(w.size()));
}

}  // namespace detail

/// loss = (1/B) sum_i w_i * CE_i. Weights are expected to be normalized by the caller.
inline LossResult weighted_softmax_cross_entropy(const Tensor& logits, std::span<const int> labels,
                                                 std::span<const Real> weights) {
  const std::size_t b = logits.rows(), c = logits.cols();
  if (labels.size() != b || weights.size() != b)
    throw ConfigError("weighted_softmax_cross_entropy: batch size mismatch");
  Real total_weight = 0;
  for (std::size_t i = 0; i < b; ++i) {
    if (!(weights[i] >= 0)) throw ConfigError("weighted_softmax_cross_entropy: negative weight");
    if (labels[i] < 0 || std::size_t(labels[i]) >= c)
      throw ConfigError("weighted_softmax_cross_entropy: label " + std::to_string(labels[i]) +
                        " outside [0," + std::to_string(c) + ")");
    total_weight += weights[i];
  }
  if (total_weight == 0) throw DegenerateError("weighted_softmax_cross_entropy: all weights are zero");

  LossResult r{0, Tensor(logits.shape())};
  const Real inv_b = Real{1} / static_cast<Real>(b);
  for (std::size_t i = 0; i < b; ++i) {
    const auto z = logits.row(i);
    Real zmax = z[0];
    for (Real v : z) zmax = std::max(zmax, v);
    Real sum = 0;
    for (Real v : z) sum += std::exp(v - zmax);
    const Real log_sum = std::log(sum) + zmax;
    r.loss += weights[i] * (log_sum - z[std::size_t(labels[i])]) * inv_b;
    auto g = r.grad.row(i);
    for (std::size_t j = 0; j < c; ++j) {
      const Real p = std::exp(z[j] - log_sum);
      g[j] = weights[i] * inv_b * (p - (j == std::size_t(labels[i]) ? Real{1} : Real{0}));
    }
  }
  return r;
}

inline LossResult softmax_cross_entropy(const Tensor& logits, std::span<const int> labels) {
  std::vector<Real> ones(labels.size(), Real{1});
  return weighted_softmax_cross_entropy(logits, labels, ones);
}

/// Elementwise binary cross entropy on logits against targets in [0,1], mean-reduced.
/// Evaluated as max(z,0) - z p + log(1 + e^-|z|), which stays finite at saturation.
inline LossResult sigmoid_bce(const Tensor& logits, const Tensor& targets,
                              std::span<const Real> row_weights = {}) {
  detail::require_same_shape(logits, targets, "sigmoid_bce");
  detail::check_row_weights(row_weights, logits.rows(), "sigmoid_bce");
  LossResult r{0, Tensor(logits.shape())};
  const std::size_t n = logits.size();
  const std::size_t c = logits.cols();
  const Real inv_n = Real{1} / static_cast<Real>(n);
  for (std::size_t e = 0; e < n; ++e) {
    const Real z = logits[e], p = targets[e];
    const Real w = detail::row_weight(row_weights, c ? e / c : 0);
    const Real l = std::max(z, Real{0}) - z * p + std::log1p(std::exp(-std::abs(z)));
    r.loss += w * l * inv_n;
    const Real s = z >= 0 ? Real{1} / (Real{1} + std::exp(-z)) : std::exp(z) / (Real{1} + std::exp(z));
    r.grad[e] = w * (s - p) * inv_n;
  }
  return r;
}

/// Mean squared error over all elements; grad = 2 (pred - target) / N.
inline LossResult mse_loss(const Tensor& pred, const Tensor& target,
                           std::span<const Real> row_weights = {}) {
  detail::require_same_shape(pred, target, "mse_loss");
  detail::check_row_weights(row_weights, pred.rows(), "mse_loss");
  LossResult r{0, Tensor(pred.shape())};
  const std::size_t n = pred.size(), c = pred.cols();
  const Real inv_n = Real{1} / static_cast<Real>(n);
  for (std::size_t e = 0; e < n; ++e) {
    const Real w = detail::row_weight(row_weights, c ? e / c : 0);
    const Real d = pred[e] - target[e];
    r.loss += w * d * d * inv_n;
    r.grad[e] = w * Real{2} * d * inv_n;
  }
  return r;
}

/// Surface-weighted L1 for SDF regression: weight 4 where |gt| <= 0.01, else 1.
inline constexpr Real kSdfNearSurface = Real(0.01);
inline constexpr Real kSdfNearWeight = Real(4);

inline LossResult weighted_l1_sdf_loss(const Tensor& pred_sdf, const Tensor& gt_sdf,
                                       std::span<const Real> row_weights = {}) {
  detail::require_same_shape(pred_sdf, gt_sdf, "weighted_l1_sdf_loss");
  detail::check_row_weights(row_weights, pred_sdf.rows(), "weighted_l1_sdf_loss");
  LossResult r{0, Tensor(pred_sdf.shape())};
  const std::size_t n = pred_sdf.size(), c = pred_sdf.cols();
  const Real inv_n = Real{1} / static_cast<Real>(n);
  for (std::size_t e = 0; e < n; ++e) {
    const Real s = gt_sdf[e];
    const Real w = (std::abs(s) > kSdfNearSurface ? Real{1} : kSdfNearWeight) *
                   detail::row_weight(row_weights, c ? e / c : 0);
    const Real d = pred_sdf[e] - s;
    r.loss += w * std::abs(d) * inv_n;
    r.grad[e] = d > 0 ? w * inv_n : (d < 0 ? -w * inv_n : Real{0});
  }
  return r;
}

}  // namespace flab::nn
