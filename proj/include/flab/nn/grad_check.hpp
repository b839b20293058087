#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <span>
#include <vector>

#include "flab/nn/losses.hpp"
#include "flab/nn/model.hpp"

namespace flab::nn {

struct GradCheckEntry {
  std::size_t param = 0;
  std::size_t element = 0;
  double analytic = 0;
  double numeric = 0;
  double rel_error = 0;
};

struct GradCheckReport {
  double max_rel_error = 0;
  std::size_t checked = 0;
  std::vector<GradCheckEntry> failures;  // entries above tolerance
  bool passed = true;
};

/// Relative error |a - n| / max(|a|, |n|, floor). The floor keeps near-zero gradients
/// from reporting huge relative errors out of O(h^2) truncation noise.
inline double relative_error(double analytic, double numeric, double floor = 1e-6) {
  return std::abs(analytic - numeric) / std::max({std::abs(analytic), std::abs(numeric), floor});
}

/// Central-difference check of `analytic` against `loss_at` evaluated with each parameter
/// element perturbed by +-h. Parameters are restored afterwards.
inline GradCheckReport check_gradients(std::span<Tensor* const> params,
                                       std::span<const Tensor> analytic,
                                       const std::function<double()>& loss_at, double h,
                                       double tolerance) {
  if constexpr (sizeof(Real) != 8) throw UsageError("gradient checks need a 64-bit build");
  GradCheckReport report;
  for (std::size_t k = 0; k < params.size(); ++k) {
    Tensor& p = *params[k];
    for (std::size_t i = 0; i < p.size(); ++i) {
      const Real saved = p[i];
      p[i] = saved + h;
      const double up = loss_at();
      p[i] = saved - h;
      const double down = loss_at();
      p[i] = saved;
      const double numeric = (up - down) / (2 * h);
      const double err = relative_error(analytic[k][i], numeric);
      ++report.checked;
      report.max_rel_error = std::max(report.max_rel_error, err);
      if (err > tolerance) report.failures.push_back({k, i, analytic[k][i], numeric, err});
    }
  }
  report.passed = report.failures.empty();
  return report;
}

/// A loss over model outputs: returns value and dLoss/dOutputs.
using OutputLoss = std::function<LossResult(const Tensor&)>;

inline GradCheckReport grad_check(Model& model, const OutputLoss& loss_fn, const Tensor& batch,
                                  double h = 1e-5, double tolerance = 1e-4) {
  auto fwd = model.forward(batch);
  auto lr = loss_fn(fwd.outputs);
  auto grads = model.backward(fwd.cache, lr.grad);
  auto params = model.parameters();
  return check_gradients(params, grads.params,
                         [&] { return double(loss_fn(model.forward(batch).outputs).loss); }, h,
                         tolerance);
}

}  // namespace flab::nn
