#pragma once

#include <cmath>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "flab/nn/tensor.hpp"

namespace flab::nn {

struct SgdConfig {
  double lr = 0.01;
  double momentum = 0.0;
  double weight_decay = 0.0;
};

struct AdamConfig {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  double weight_decay = 0.0;
};

/// SGD (heavy-ball momentum, L2 decay folded into the gradient) or Adam with bias
/// correction. Moment buffers are created lazily on the first step and must keep
/// matching the parameter shapes afterwards.
class Optimizer {
 public:
  enum class Kind { kSgd, kAdam };

  explicit Optimizer(SgdConfig cfg) : kind_(Kind::kSgd), sgd_(cfg) { check_lr(cfg.lr); }
  explicit Optimizer(AdamConfig cfg) : kind_(Kind::kAdam), adam_(cfg) { check_lr(cfg.lr); }

  Kind kind() const noexcept { return kind_; }
  std::uint64_t step_count() const noexcept { return steps_; }
  double lr() const noexcept { return kind_ == Kind::kSgd ? sgd_.lr : adam_.lr; }
  void set_lr(double lr) {
    check_lr(lr);
    (kind_ == Kind::kSgd ? sgd_.lr : adam_.lr) = lr;
  }

  void step(std::span<Tensor* const> params, std::span<const Tensor> grads) {
    if (params.size() != grads.size())
      throw ConfigError("optimizer: " + std::to_string(params.size()) + " parameters but " +
                        std::to_string(grads.size()) + " gradients");
    if (first_.empty()) {
      for (auto* p : params) {
        first_.emplace_back(p->shape());
        if (kind_ == Kind::kAdam) second_.emplace_back(p->shape());
      }
    }
    if (first_.size() != params.size()) throw ConfigError("optimizer: parameter list changed size");
    for (std::size_t k = 0; k < params.size(); ++k) {
      if (params[k]->shape() != grads[k].shape() || first_[k].shape() != params[k]->shape())
        throw ConfigError("optimizer: shape mismatch for parameter " + std::to_string(k));
    }
    ++steps_;
    for (std::size_t k = 0; k < params.size(); ++k) {
      if (kind_ == Kind::kSgd)
        sgd_update(*params[k], grads[k], first_[k]);
      else
        adam_update(*params[k], grads[k], first_[k], second_[k]);
      if (!params[k]->all_finite())
        throw NumericError("optimizer produced a non-finite parameter (index " + std::to_string(k) + ")");
    }
  }

 private:
  static void check_lr(double lr) {
    if (!(lr > 0)) throw ConfigError("optimizer: learning rate must be positive");
  }

  void sgd_update(Tensor& p, const Tensor& g, Tensor& buf) const {
    const Real lr = Real(sgd_.lr), mu = Real(sgd_.momentum), wd = Real(sgd_.weight_decay);
    for (std::size_t i = 0; i < p.size(); ++i) {
      Real d = g[i] + wd * p[i];
      if (mu != 0) {
        buf[i] = mu * buf[i] + d;
        d = buf[i];
      }
      p[i] -= lr * d;
    }
  }

  void adam_update(Tensor& p, const Tensor& g, Tensor& m, Tensor& v) const {
    const double b1 = adam_.beta1, b2 = adam_.beta2;
    const double c1 = 1.0 - std::pow(b1, double(steps_));
    const double c2 = 1.0 - std::pow(b2, double(steps_));
    const Real wd = Real(adam_.weight_decay);
    for (std::size_t i = 0; i < p.size(); ++i) {
      const Real gi = g[i] + wd * p[i];
      m[i] = Real(b1) * m[i] + Real(1 - b1) * gi;
      v[i] = Real(b2) * v[i] + Real(1 - b2) * gi * gi;
      const double mhat = double(m[i]) / c1, vhat = double(v[i]) / c2;
      p[i] -= Real(adam_.lr * mhat / (std::sqrt(vhat) + adam_.eps));
    }
  }

  Kind kind_;
  SgdConfig sgd_{};
  AdamConfig adam_{};
  std::vector<Tensor> first_;
  std::vector<Tensor> second_;
  std::uint64_t steps_ = 0;
};

}  // namespace flab::nn
