#pragma once

#include <Eigen/Core>

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <span>
#include <string>
#include <vector>

#include "flab/core/error.hpp"
#include "flab/core/rng.hpp"
#include "flab/nn/losses.hpp"
#include "flab/nn/layers.hpp"
#include "flab/nn/optim.hpp"

namespace flab::analysis {

using Matrix = Eigen::MatrixXd;

enum class KernelKind { kLinear, kRbf };

struct Kernel {
  KernelKind kind = KernelKind::kRbf;
  double sigma_fraction = 1.0;  // rbf bandwidth as a multiple of the median pairwise distance
};

inline Matrix to_matrix(const Tensor& x) {
  if (x.rank() != 2) throw ConfigError("feature matrix must be 2-D, got " + shape_str(x.shape()));
  return x.mat().cast<double>();
}

/// Median of the pairwise Euclidean distances between distinct rows.
inline double median_pairwise_distance(const Matrix& x) {
  const Eigen::Index n = x.rows();
  std::vector<double> d;
  d.reserve(std::size_t(n * (n - 1) / 2));
  for (Eigen::Index i = 0; i < n; ++i)
    for (Eigen::Index j = i + 1; j < n; ++j) d.push_back((x.row(i) - x.row(j)).norm());
  if (d.empty()) return 0.0;
  const std::size_t mid = d.size() / 2;
  std::nth_element(d.begin(), d.begin() + long(mid), d.end());
  if (d.size() % 2 == 1) return d[mid];
  const double hi = d[mid];
  return 0.5 * (hi + *std::max_element(d.begin(), d.begin() + long(mid)));
}

inline Matrix gram(const Matrix& x, const Kernel& k = {}) {
  if (x.rows() < 4) throw ConfigError("gram needs at least 4 rows, got " + std::to_string(x.rows()));
  if (k.kind == KernelKind::kLinear) return x * x.transpose();
  if (!(k.sigma_fraction > 0)) throw ConfigError("rbf sigma fraction must be positive");
  const double sigma = k.sigma_fraction * median_pairwise_distance(x);
  if (sigma == 0) throw DegenerateError("rbf kernel: median pairwise distance is zero");
  const Eigen::VectorXd sq = x.rowwise().squaredNorm();
  Matrix d2 = (-2.0 * x * x.transpose()).colwise() + sq;
  d2.rowwise() += sq.transpose();
  Matrix g = (-d2.cwiseMax(0.0) / (2 * sigma * sigma)).array().exp().matrix();
  g.diagonal().setOnes();
  return g;
}

inline Matrix gram(const Tensor& x, const Kernel& k = {}) { return gram(to_matrix(x), k); }

/// Biased estimator tr(KHLH)/(n-1)^2 with H = I - 11^T/n.
inline double hsic_biased(const Matrix& K, const Matrix& L) {
  const Eigen::Index n = K.rows();
  if (K.cols() != n || L.rows() != n || L.cols() != n)
    throw ConfigError("hsic: kernel matrices must be square and of equal size");
  if (n < 2) throw ConfigError("hsic needs at least 2 samples");
  const Eigen::VectorXd col = K.colwise().mean().transpose();
  const Eigen::VectorXd row = K.rowwise().mean();
  Matrix kc = K;
  kc.colwise() -= row;
  kc.rowwise() -= col.transpose();
  kc.array() += K.mean();
  return (kc.array() * L.array()).sum() / double((n - 1) * (n - 1));
}

inline double cka_from_grams(const Matrix& K, const Matrix& L) {
  const double kk = hsic_biased(K, K), ll = hsic_biased(L, L);
  if (!(kk > 0) || !(ll > 0)) throw DegenerateError("cka: zero self-HSIC");
  return hsic_biased(K, L) / std::sqrt(kk * ll);
}

inline double cka(const Matrix& x, const Matrix& y, const Kernel& k = {}) {
  if (x.rows() != y.rows()) throw ConfigError("cka: feature matrices have different row counts");
  return cka_from_grams(gram(x, k), gram(y, k));
}

inline double cka(const Tensor& x, const Tensor& y, const Kernel& k = {}) { return cka(to_matrix(x), to_matrix(y), k); }

struct VfTargets {
  Tensor y;  // {0,1} per example and unit
  double theta = 1.0;
  std::vector<double> positive_rate;
};

/// Binarizes activations with a non-strict threshold: y = 1 where a >= theta.
inline VfTargets vf_targets(const Tensor& activations, double theta = 1.0) {
  if (activations.rank() != 2) throw ConfigError("vf_targets needs a 2-D activation matrix");
  VfTargets t{Tensor(activations.shape()), theta, std::vector<double>(activations.cols(), 0.0)};
  const std::size_t n = activations.rows(), d = activations.cols();
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < d; ++j) {
      const bool on = double(activations.at(i, j)) >= theta;
      t.y.at(i, j) = on ? 1 : 0;
      if (on) t.positive_rate[j] += 1.0 / double(n);
    }
  return t;
}

struct ProbeHyper {
  int epochs = 50;
  std::size_t batch_size = 32;
  double lr = 1e-2;
  int patience = 5;  // finetune only: epochs without validation gain before stopping
};

struct VfProbeResult {
  std::vector<double> per_unit_accuracy;  // NaN for degenerate units
  std::vector<bool> degenerate;
  std::size_t degenerate_count = 0;
  double mean_accuracy = 0;
  nn::Linear probe;    // acts on standardized features
  Tensor test_logits;  // probe outputs on the test split
};

/// Accuracy over non-degenerate units, restricted to test rows `rows`.
inline double vf_accuracy_on(const VfProbeResult& r, const Tensor& test_y, std::span<const std::size_t> rows) {
  double sum = 0;
  std::size_t units = 0;
  for (std::size_t j = 0; j < r.degenerate.size(); ++j) {
    if (r.degenerate[j]) continue;
    std::size_t hit = 0;
    for (auto i : rows) hit += (r.test_logits.at(i, j) >= 0) == (test_y.at(i, j) >= Real(0.5));
    sum += rows.empty() ? 0.0 : double(hit) / double(rows.size());
    ++units;
  }
  return units == 0 ? 0.0 : sum / double(units);
}

namespace detail {

/// Per-column mean and inverse standard deviation of `x`; constant columns get scale 1.
struct Standardizer {
  std::vector<Real> mean, inv_sd;

  explicit Standardizer(const Tensor& x) : mean(x.cols(), 0), inv_sd(x.cols(), 1) {
    const std::size_t n = x.rows(), d = x.cols();
    for (std::size_t j = 0; j < d; ++j) {
      double s = 0, s2 = 0;
      for (std::size_t i = 0; i < n; ++i) s += double(x.at(i, j));
      const double m = s / double(n);
      for (std::size_t i = 0; i < n; ++i) s2 += (double(x.at(i, j)) - m) * (double(x.at(i, j)) - m);
      const double sd = std::sqrt(s2 / double(n));
      mean[j] = Real(m);
      inv_sd[j] = sd > 1e-12 ? Real(1 / sd) : Real(1);
    }
  }

  Tensor apply(const Tensor& x) const {
    Tensor out(x.shape());
    for (std::size_t i = 0; i < x.rows(); ++i)
      for (std::size_t j = 0; j < x.cols(); ++j) out.at(i, j) = (x.at(i, j) - mean[j]) * inv_sd[j];
    return out;
  }
};

/// One shuffled epoch of minibatch steps on a bare linear layer.
template <typename LossFn>
void train_linear(nn::Linear& lin, const Tensor& x, std::size_t batch_size, nn::Optimizer& opt, RngStream& rng,
                  const LossFn& loss_of) {
  std::vector<std::size_t> order(x.rows());
  std::iota(order.begin(), order.end(), 0);
  rng.shuffle(order);
  std::vector<Tensor*> params{&lin.weight, &lin.bias};
  for (std::size_t b = 0; b < order.size(); b += batch_size) {
    std::span<const std::size_t> idx(order.data() + b, std::min(order.size(), b + batch_size) - b);
    const Tensor xb = gather_rows(x, idx);
    auto loss = loss_of(lin.forward(xb), idx);
    std::vector<Tensor> grads;
    lin.backward(xb, loss.grad, grads);
    opt.step(params, grads);
  }
}

}  // namespace detail

/// One linear map from features to every VF unit, trained jointly with elementwise BCE.
/// Inputs are standardized with training statistics. Units constant on the training split
/// are degenerate and excluded from the mean.
inline VfProbeResult train_vf_probes(const Tensor& train_x, const Tensor& train_y, const Tensor& test_x,
                                     const Tensor& test_y, const ProbeHyper& hyper, RngStream rng) {
  if (train_x.rows() != train_y.rows() || test_x.rows() != test_y.rows() || train_y.cols() != test_y.cols() ||
      train_x.cols() != test_x.cols())
    throw ConfigError("train_vf_probes: mismatched feature and target shapes");
  if (train_x.rows() == 0 || test_x.rows() == 0) throw ConfigError("train_vf_probes: empty split");
  const std::size_t d = train_y.cols();
  VfProbeResult r;
  r.per_unit_accuracy.assign(d, std::numeric_limits<double>::quiet_NaN());
  r.degenerate.assign(d, false);
  for (std::size_t j = 0; j < d; ++j) {
    bool all_same = true;
    for (std::size_t i = 1; i < train_y.rows() && all_same; ++i) all_same = train_y.at(i, j) == train_y.at(0, j);
    r.degenerate[j] = all_same;
    r.degenerate_count += all_same;
  }
  if (r.degenerate_count == d) throw DegenerateError("train_vf_probes: every unit is constant on the training split");

  const detail::Standardizer z(train_x);
  const Tensor xs = z.apply(train_x), xt = z.apply(test_x);
  nn::Linear probe(train_x.cols(), d);
  RngStream init = rng.fork("init");
  probe.init(init, std::sqrt(3.0));
  RngStream order = rng.fork("order");
  nn::Optimizer opt(nn::AdamConfig{.lr = hyper.lr});
  for (int e = 0; e < hyper.epochs; ++e)
    detail::train_linear(probe, xs, hyper.batch_size, opt, order,
                         [&](const Tensor& logits, std::span<const std::size_t> idx) {
                           return nn::sigmoid_bce(logits, gather_rows(train_y, idx));
                         });
  const Tensor logits = probe.forward(xt);
  double sum = 0;
  for (std::size_t j = 0; j < d; ++j) {
    if (r.degenerate[j]) continue;
    std::size_t hit = 0;
    for (std::size_t i = 0; i < xt.rows(); ++i) hit += (logits.at(i, j) >= 0) == (test_y.at(i, j) >= Real(0.5));
    r.per_unit_accuracy[j] = double(hit) / double(xt.rows());
    sum += r.per_unit_accuracy[j];
  }
  r.mean_accuracy = sum / double(d - r.degenerate_count);
  r.probe = std::move(probe);
  r.test_logits = logits;
  return r;
}

struct LabeledFeatures {
  Tensor x;
  std::vector<int> y;
};

/// Trains a fresh softmax head over frozen features of every class and returns test accuracy.
/// Each epoch reshuffles; the head with the best validation accuracy is kept and training
/// stops after `patience` epochs without improvement.
inline double finetune_fc_accuracy(const LabeledFeatures& train, const LabeledFeatures& val,
                                   const LabeledFeatures& test, int num_classes, const ProbeHyper& hyper,
                                   RngStream rng) {
  for (const auto* s : {&train, &val, &test})
    if (s->x.rows() != s->y.size()) throw ConfigError("finetune_fc: feature rows and labels differ");
  if (train.x.rows() == 0 || test.x.rows() == 0) throw ConfigError("finetune_fc: empty split");
  for (const auto* s : {&train, &val, &test})
    for (int c : s->y)
      if (c < 0 || c >= num_classes) throw ConfigError("finetune_fc: label " + std::to_string(c) + " out of range");

  const detail::Standardizer z(train.x);
  const Tensor xs = z.apply(train.x), xv = z.apply(val.x), xt = z.apply(test.x);
  auto acc = [](const nn::Linear& m, const Tensor& x, const std::vector<int>& y) {
    const Tensor out = m.forward(x);
    std::size_t hit = 0;
    for (std::size_t i = 0; i < y.size(); ++i) {
      const auto r = out.row(i);
      hit += int(std::max_element(r.begin(), r.end()) - r.begin()) == y[i];
    }
    return y.empty() ? 0.0 : double(hit) / double(y.size());
  };

  nn::Linear head(train.x.cols(), std::size_t(num_classes));
  RngStream init = rng.fork("init");
  head.init(init, std::sqrt(3.0));
  RngStream order = rng.fork("order");
  nn::Optimizer opt(nn::AdamConfig{.lr = hyper.lr});
  nn::Linear best = head;
  double best_val = -1;
  int stale = 0;
  for (int e = 0; e < hyper.epochs && stale < hyper.patience; ++e) {
    detail::train_linear(head, xs, hyper.batch_size, opt, order,
                         [&](const Tensor& logits, std::span<const std::size_t> idx) {
                           std::vector<int> labels;
                           for (auto i : idx) labels.push_back(train.y[i]);
                           return nn::softmax_cross_entropy(logits, labels);
                         });
    const double v = val.y.empty() ? acc(head, xs, train.y) : acc(head, xv, val.y);
    if (v > best_val) {
      best_val = v;
      best = head;
      stale = 0;
    } else {
      ++stale;
    }
  }
  return acc(best, xt, test.y);
}

}  // namespace flab::analysis
