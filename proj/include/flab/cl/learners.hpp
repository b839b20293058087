#pragma once

#include <chrono>
#include <cmath>
#include <map>
#include <memory>
#include <numbers>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "flab/cl/memory.hpp"
#include "flab/cl/ncm.hpp"
#include "flab/cl/schedule.hpp"
#include "flab/cl/tasks.hpp"
#include "flab/cl/weights.hpp"

namespace flab::cl {

enum class LearnerKind {
  kNaive,
  kClassifierWithExemplars,
  kYass,
  kGDumb,
  kGDumbPlusPlus,
  kICaRLLite,
  kBiCLite,
  kE2EILLite,
  kNcmProxy,
};

inline constexpr std::array<std::pair<LearnerKind, std::string_view>, 9> kLearnerNames = {{
    {LearnerKind::kNaive, "naive"},
    {LearnerKind::kClassifierWithExemplars, "classifier_exemplars"},
    {LearnerKind::kYass, "yass"},
    {LearnerKind::kGDumb, "gdumb"},
    {LearnerKind::kGDumbPlusPlus, "gdumb++"},
    {LearnerKind::kICaRLLite, "icarl"},
    {LearnerKind::kBiCLite, "bic"},
    {LearnerKind::kE2EILLite, "e2eil"},
    {LearnerKind::kNcmProxy, "ncm_proxy"},
}};

inline std::string to_string(LearnerKind k) {
  for (const auto& [kind, name] : kLearnerNames)
    if (kind == k) return std::string(name);
  return "?";
}

inline LearnerKind learner_from_string(std::string_view s) {
  for (const auto& [kind, name] : kLearnerNames)
    if (name == s) return kind;
  throw ConfigError("unknown learner \"" + std::string(s) + "\"");
}

struct TrainHyper {
  int epochs = 5;
  std::size_t batch_size = 32;
  std::string optimizer = "adam";  // "adam" | "sgd"
  double lr = 1e-3;
  double momentum = 0.9;
  double weight_decay = 0.0;

  std::string lr_schedule = "constant";  // "constant" | "cosine" (decay to 0 over each training call)

  nn::Optimizer make_optimizer(double lr_scale = 1.0) const {
    if (optimizer == "adam") return nn::Optimizer(nn::AdamConfig{lr * lr_scale, 0.9, 0.999, 1e-8, weight_decay});
    if (optimizer == "sgd") return nn::Optimizer(nn::SgdConfig{lr * lr_scale, momentum, weight_decay});
    throw ConfigError("unknown optimizer \"" + optimizer + "\"");
  }
};

/// Per-step learning rate of one training call; cosine decays from the base rate to 0.
struct LrSchedule {
  nn::Optimizer* opt = nullptr;
  bool cosine = false;
  double base = 0;

  void apply(std::uint64_t step, std::uint64_t total) const {
    if (opt == nullptr || !cosine || total == 0) return;
    opt->set_lr(std::max(base * 0.5 * (1 + std::cos(std::numbers::pi * double(step) / double(total))), 1e-12));
  }
};

inline LrSchedule schedule_for(const TrainHyper& h, nn::Optimizer& opt) {
  if (h.lr_schedule != "constant" && h.lr_schedule != "cosine")
    throw ConfigError("unknown lr_schedule \"" + h.lr_schedule + "\"");
  return {&opt, h.lr_schedule == "cosine", opt.lr()};
}

struct LearnerOptions {
  LearnerKind kind = LearnerKind::kNaive;
  std::size_t budget = 0;  // exemplar slots K
  double bic_val_fraction = 0.1;
  int bic_epochs = 200;
  double bic_lr = 0.05;
  int finetune_epochs = 5;
  double finetune_lr_scale = 0.1;
  std::size_t proxy_exemplars = 20;

  bool use_exemplars() const {
    return kind != LearnerKind::kNaive && kind != LearnerKind::kNcmProxy;
  }
  bool use_wg() const { return kind == LearnerKind::kYass; }
  bool episodic() const { return kind == LearnerKind::kGDumb; }
  bool classification_only() const {
    return kind == LearnerKind::kClassifierWithExemplars || kind == LearnerKind::kICaRLLite ||
           kind == LearnerKind::kBiCLite || kind == LearnerKind::kE2EILLite;
  }

  void validate(TaskKind task) const {
    if (use_exemplars() && budget == 0) throw ConfigError("learner " + to_string(kind) + " needs an exemplar budget");
    if (classification_only() && task != TaskKind::kClassification)
      throw ConfigError("learner " + to_string(kind) + " only supports classification");
    if (kind == LearnerKind::kNcmProxy && task == TaskKind::kClassification)
      throw ConfigError("ncm_proxy needs a reconstruction task");
    if (!(bic_val_fraction > 0 && bic_val_fraction < 1)) throw ConfigError("bic_val_fraction must be in (0,1)");
    if (finetune_epochs < 0) throw ConfigError("finetune_epochs must be >= 0");
  }
};

struct ExposureResult {
  int exposure = 0;  // 1-based
  std::vector<metrics::CurvePoint> curves;
  double wall_seconds = 0;
  std::uint64_t steps = 0;
  std::size_t memory_size = 0;
};

/// Minibatch epochs over `pool`, reshuffled each epoch. `step(idx, w)` performs one update;
/// `weights` is aligned with `pool` (empty: all ones). Returns the number of steps.
template <typename StepFn>
std::uint64_t run_epochs(std::span<const std::size_t> pool, std::span<const Real> weights, int epochs,
                         std::size_t batch_size, RngStream& rng, StepFn&& step, const LrSchedule& sched = {}) {
  if (pool.empty()) throw DegenerateError("training pool is empty");
  if (batch_size == 0) throw ConfigError("batch_size must be >= 1");
  const std::uint64_t total = std::uint64_t(std::max(epochs, 0)) * ((pool.size() + batch_size - 1) / batch_size);
  std::vector<std::size_t> order(pool.size());
  std::uint64_t steps = 0;
  std::vector<std::size_t> idx;
  std::vector<Real> w;
  for (int e = 0; e < epochs; ++e) {
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
    rng.shuffle(order);
    for (std::size_t b = 0; b < order.size(); b += batch_size) {
      idx.clear();
      w.clear();
      for (std::size_t k = b; k < std::min(order.size(), b + batch_size); ++k) {
        idx.push_back(pool[order[k]]);
        w.push_back(weights.empty() ? Real{1} : weights[order[k]]);
      }
      sched.apply(steps, total);
      step(std::span<const std::size_t>(idx), std::span<const Real>(w));
      ++steps;
    }
  }
  return steps;
}

/// Exactly `steps` updates of plain training over `pool` (the step-matched batch oracle).
inline void train_steps(TaskNet& net, std::span<const std::size_t> pool, std::uint64_t steps,
                        const TrainHyper& hyper, RngStream rng) {
  if (pool.empty()) throw DegenerateError("training pool is empty");
  auto opt = hyper.make_optimizer();
  const auto sched = schedule_for(hyper, opt);
  std::vector<std::size_t> order(pool.begin(), pool.end());
  std::uint64_t done = 0;
  while (done < steps) {
    rng.shuffle(order);
    for (std::size_t b = 0; b < order.size() && done < steps; b += hyper.batch_size, ++done) {
      const std::span<const std::size_t> idx(order.data() + b, std::min(hyper.batch_size, order.size() - b));
      sched.apply(done, steps);
      net.train_batch(idx, {}, opt);
    }
  }
}

/// Optimal affine correction of the `new_slots` logits, z' = alpha z + beta, by gradient
/// descent on mean softmax cross entropy over held-out samples.
inline std::pair<double, double> fit_bias_correction(const Tensor& logits, std::span<const int> slots,
                                                     std::span<const int> new_slots, int epochs, double lr) {
  if (logits.rows() == 0) throw DegenerateError("bias correction: empty validation split");
  double alpha = 1, beta = 0;
  const std::size_t n = logits.rows(), c = logits.cols();
  std::vector<bool> is_new(c, false);
  for (int s : new_slots) is_new[std::size_t(s)] = true;
  std::vector<double> z(c);
  for (int e = 0; e < epochs; ++e) {
    double ga = 0, gb = 0;
    for (std::size_t i = 0; i < n; ++i) {
      double zmax = -1e300;
      for (std::size_t j = 0; j < c; ++j) {
        z[j] = is_new[j] ? alpha * double(logits.at(i, j)) + beta : double(logits.at(i, j));
        zmax = std::max(zmax, z[j]);
      }
      double sum = 0;
      for (std::size_t j = 0; j < c; ++j) sum += std::exp(z[j] - zmax);
      for (std::size_t j = 0; j < c; ++j) {
        if (!is_new[j]) continue;
        const double g = std::exp(z[j] - zmax) / sum - (int(j) == slots[i] ? 1.0 : 0.0);
        ga += g * double(logits.at(i, j));
        gb += g;
      }
    }
    alpha -= lr * ga / double(n);
    beta -= lr * gb / double(n);
  }
  return {alpha, beta};
}

/// iCaRL targets: one-hot over slots >= n_old, the teacher's sigmoid outputs below.
inline Tensor icarl_targets(std::span<const int> slots, std::size_t width, const Tensor* teacher_logits,
                            std::size_t n_old) {
  Tensor t({slots.size(), width});
  for (std::size_t i = 0; i < slots.size(); ++i) {
    for (std::size_t j = 0; j < n_old; ++j) t.at(i, j) = nn::Sigmoid::apply(teacher_logits->at(i, j));
    for (std::size_t j = n_old; j < width; ++j) t.at(i, j) = std::size_t(slots[i]) == j ? Real{1} : Real{0};
  }
  return t;
}

/// (1 - lambda) CE over all slots + lambda KD, KD being teacher-vs-student softmax cross
/// entropy over the first n_old slots; lambda = n_old / slots.
inline nn::LossResult ce_with_distillation(const Tensor& logits, std::span<const int> slots, const Tensor* teacher,
                                           std::size_t n_old) {
  auto ce = nn::softmax_cross_entropy(logits, slots);
  if (n_old == 0 || teacher == nullptr) return ce;
  const std::size_t b = logits.rows();
  const Real lambda = Real(double(n_old) / double(logits.cols()));
  nn::LossResult r{(1 - lambda) * ce.loss, ce.grad};
  for (auto& g : r.grad.values()) g *= (1 - lambda);
  auto softmax = [&](const Tensor& z, std::size_t i) {
    std::vector<double> p(n_old);
    double m = -1e300, s = 0;
    for (std::size_t j = 0; j < n_old; ++j) m = std::max(m, double(z.at(i, j)));
    for (std::size_t j = 0; j < n_old; ++j) s += (p[j] = std::exp(double(z.at(i, j)) - m));
    for (double& v : p) v /= s;
    return p;
  };
  for (std::size_t i = 0; i < b; ++i) {
    const auto pt = softmax(*teacher, i), ps = softmax(logits, i);
    for (std::size_t j = 0; j < n_old; ++j) {
      r.loss += lambda * Real(-pt[j] * std::log(std::max(ps[j], 1e-300)) / double(b));
      r.grad.at(i, j) += lambda * Real((ps[j] - pt[j]) / double(b));
    }
  }
  return r;
}

/// Nearest-class-mean accuracy over frozen features: class means from `exemplars`, test
/// samples of `seen` classes. Classes without exemplars are skipped.
inline EvalResult proxy_accuracy(const TaskNet& net, const std::map<int, std::vector<std::size_t>>& exemplars,
                                 std::span<const int> seen) {
  ClassMeans means;
  std::vector<int> scored;
  for (int c : seen) {
    auto it = exemplars.find(c);
    if (it == exemplars.end() || it->second.empty()) {
      log::warn("proxy: class " + std::to_string(c) + " has no exemplars; excluded");
      continue;
    }
    scored.push_back(c);
    const Tensor f = net.train_features(it->second);
    std::vector<int> labels(it->second.size(), c);
    auto mu = class_means(f, labels).at(c);
    if (std::all_of(mu.begin(), mu.end(), [](double v) { return v == 0.0; })) {
      log::warn("proxy: class " + std::to_string(c) + " has a zero feature mean; it cannot be predicted");
      continue;
    }
    means[c] = std::move(mu);
  }
  const auto rows = net.test_indices_for(scored);
  const Tensor f = net.test_features(rows);
  std::vector<int> labels, pred(rows.size(), -1);
  std::vector<std::size_t> live;
  for (std::size_t i = 0; i < rows.size(); ++i) {
    labels.push_back(net.data().test_labels[rows[i]]);
    const auto r = f.row(i);
    if (std::any_of(r.begin(), r.end(), [](Real v) { return v != Real{0}; })) live.push_back(i);
  }
  if (!means.empty() && !live.empty()) {
    const auto p = ncm_classify(gather_rows(f, live), means);
    for (std::size_t k = 0; k < live.size(); ++k) pred[live[k]] = p[k];
  }
  const auto acc = metrics::accuracy(pred, labels);
  return {"proxy_accuracy", acc.per_class, metrics::mean_over_classes(acc.per_class), true};
}

/// Drives one learner through a schedule, one exposure at a time.
class Learner {
 public:
  Learner(std::unique_ptr<TaskNet> net, LearnerOptions opt, TrainHyper hyper, std::uint64_t seed)
      : net_(std::move(net)), opt_(opt), hyper_(std::move(hyper)), root_(seed, 0xC1ULL), memory_(opt.budget) {
    opt_.validate(net_->data().opt.kind);
    net_->reset(root_.fork("init"));
  }

  const TaskNet& net() const { return *net_; }
  TaskNet& net() { return *net_; }
  const ExemplarMemory& memory() const { return memory_; }
  const LearnerOptions& options() const { return opt_; }
  const std::vector<int>& seen_classes() const { return seen_; }
  std::uint64_t total_steps() const { return steps_; }
  int exposures_done() const { return t_; }

  /// Trains on one exposure's samples (indices into the training split), then evaluates.
  ExposureResult run_exposure(const Exposure& e, std::span<const std::size_t> samples) {
    const auto start = std::chrono::steady_clock::now();
    const int t = t_;
    for (int c : e.classes) {
      if (std::find(seen_.begin(), seen_.end(), c) == seen_.end()) seen_.push_back(c);
      memory_.register_class(c, t + 1);
    }
    std::uint64_t steps = 0;
    switch (opt_.kind) {
      case LearnerKind::kGDumb:
      case LearnerKind::kGDumbPlusPlus: steps = gdumb_exposure(t, samples); break;
      case LearnerKind::kICaRLLite: steps = icarl_exposure(t, e, samples); break;
      case LearnerKind::kBiCLite: steps = bic_exposure(t, e, samples); break;
      case LearnerKind::kE2EILLite: steps = e2eil_exposure(t, e, samples); break;
      default: steps = continuous_exposure(t, e, samples); break;
    }
    steps_ += steps;
    ++t_;

    ExposureResult r;
    r.exposure = t_;
    r.steps = steps;
    r.memory_size = memory_.size();
    r.curves.push_back(net_->evaluate(seen_).point(t_));
    if (opt_.kind == LearnerKind::kNcmProxy) r.curves.push_back(proxy_accuracy(*net_, proxy_sets_, seen_).point(t_));
    r.wall_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    return r;
  }

 private:
  std::vector<int> labels_of(std::span<const std::size_t> idx) const {
    std::vector<int> y(idx.size());
    for (std::size_t i = 0; i < idx.size(); ++i) y[i] = net_->data().train_labels[idx[i]];
    return y;
  }

  std::map<int, std::vector<std::size_t>> group(std::span<const std::size_t> idx) const {
    std::map<int, std::vector<std::size_t>> g;
    for (auto i : idx) g[net_->data().train_labels[i]].push_back(i);
    return g;
  }

  std::vector<std::size_t> with_memory(std::span<const std::size_t> samples) const {
    std::vector<std::size_t> pool(samples.begin(), samples.end());
    const auto mem = memory_.all_items();
    pool.insert(pool.end(), mem.begin(), mem.end());
    return pool;
  }

  ClassifierNet& classifier() { return dynamic_cast<ClassifierNet&>(*net_); }

  ExemplarMemory::FeatureFn feature_fn() const {
    return [this](std::span<const std::size_t> idx) { return net_->train_features(idx); };
  }

  std::uint64_t plain_epochs(int t, std::span<const std::size_t> pool, std::span<const Real> w) {
    auto opt = hyper_.make_optimizer();
    RngStream rng = root_.fork("train", std::uint64_t(t));
    return run_epochs(
        pool, w, hyper_.epochs, hyper_.batch_size, rng, [&](auto idx, auto bw) { net_->train_batch(idx, bw, opt); },
        schedule_for(hyper_, opt));
  }

  std::uint64_t continuous_exposure(int t, const Exposure& e, std::span<const std::size_t> samples) {
    RngStream head = root_.fork("head", std::uint64_t(t));
    net_->add_classes(e.classes, head);
    if (opt_.kind == LearnerKind::kNcmProxy) {
      const auto g = group(samples);
      for (int c : e.classes) {
        auto it = g.find(c);
        if (proxy_sets_.contains(c) || it == g.end()) continue;
        RngStream rng = root_.fork("proxy", std::uint64_t(c));
        for (auto k : rng.sample_without_replacement(it->second.size(), opt_.proxy_exemplars))
          proxy_sets_[c].push_back(it->second[k]);
      }
    }
    const auto pool = opt_.use_exemplars() ? with_memory(samples) : std::vector<std::size_t>(samples.begin(), samples.end());
    const auto w = opt_.use_wg() ? class_balance_weights(labels_of(pool)) : std::vector<Real>{};
    const auto steps = plain_epochs(t, pool, w);
    if (opt_.use_exemplars()) {
      RngStream rng = root_.fork("memory", std::uint64_t(t));
      memory_.update_random(group(samples), rng);
    }
    return steps;
  }

  // GDumb redraws every exposure from the streams of a first exposure, so its parameters
  // depend only on the seed and the memory content.
  std::uint64_t gdumb_exposure(int t, std::span<const std::size_t> samples) {
    RngStream mem_rng = root_.fork("memory", std::uint64_t(t));
    std::vector<std::size_t> order(samples.begin(), samples.end());
    mem_rng.shuffle(order);
    for (auto i : order) memory_.balanced_insert(net_->data().train_labels[i], i, t + 1, mem_rng);
    if (memory_.empty()) throw DegenerateError("gdumb: exemplar memory is empty");
    const int stream = opt_.episodic() ? 0 : t;
    if (opt_.episodic()) net_->reset(root_.fork("init"));
    RngStream head = root_.fork("head", std::uint64_t(stream));
    net_->add_classes(memory_.classes(), head);
    return plain_epochs(stream, memory_.all_items(), {});
  }

  std::uint64_t icarl_exposure(int t, const Exposure& e, std::span<const std::size_t> samples) {
    auto& net = classifier();
    net.set_ncm_means({});
    std::unique_ptr<TaskNet> teacher_net = t > 0 ? net.clone() : nullptr;
    const auto* teacher = static_cast<const ClassifierNet*>(teacher_net.get());
    const std::size_t n_old = net.slots();
    RngStream head = root_.fork("head", std::uint64_t(t));
    net.add_classes(e.classes, head);
    const auto pool = with_memory(samples);
    auto opt = hyper_.make_optimizer();
    RngStream rng = root_.fork("train", std::uint64_t(t));
    const auto steps = run_epochs(pool, {}, hyper_.epochs, hyper_.batch_size, rng, [&](auto idx, auto) {
      std::optional<Tensor> tl;
      if (teacher) tl = teacher->logits(gather_rows(net.data().train_images, idx));
      net.train_batch_with(idx, opt, [&](const Tensor& z, std::span<const int> slots) {
        auto r = nn::sigmoid_bce(z, icarl_targets(slots, z.cols(), tl ? &*tl : nullptr, n_old));
        // sum over classes, mean over the batch
        const Real s = Real(z.cols());
        r.loss *= s;
        for (auto& g : r.grad.values()) g *= s;
        return r;
      });
    }, schedule_for(hyper_, opt));
    memory_.update_herding(group(samples), feature_fn());
    ClassMeans means;
    for (int c : memory_.classes()) {
      const auto& items = memory_.items(c);
      if (items.empty()) continue;
      std::vector<int> labels(items.size(), c);
      means[c] = class_means(net.train_features(items), labels).at(c);
    }
    net.set_ncm_means(std::move(means));
    return steps;
  }

  std::uint64_t distill_epochs(int t, ClassifierNet& net, const ClassifierNet* teacher, std::size_t n_old,
                               std::span<const std::size_t> pool, int epochs, double lr_scale, const char* stream) {
    auto opt = hyper_.make_optimizer(lr_scale);
    RngStream rng = root_.fork(stream, std::uint64_t(t));
    return run_epochs(pool, {}, epochs, hyper_.batch_size, rng, [&](auto idx, auto) {
      std::optional<Tensor> tl;
      if (teacher) tl = teacher->logits(gather_rows(net.data().train_images, idx));
      net.train_batch_with(idx, opt, [&](const Tensor& z, std::span<const int> slots) {
        return ce_with_distillation(z, slots, tl ? &*tl : nullptr, n_old);
      });
    }, schedule_for(hyper_, opt));
  }

  std::uint64_t bic_exposure(int t, const Exposure& e, std::span<const std::size_t> samples) {
    auto& net = classifier();
    std::unique_ptr<TaskNet> teacher_net = t > 0 ? net.clone() : nullptr;
    const auto* teacher = static_cast<const ClassifierNet*>(teacher_net.get());
    const std::size_t n_old = net.slots();
    RngStream head = root_.fork("head", std::uint64_t(t));
    net.add_classes(e.classes, head);

    // held-out balanced validation split: new classes from fresh data, old ones from memory
    RngStream vrng = root_.fork("bic-val", std::uint64_t(t));
    const auto fresh = group(samples);
    std::vector<std::size_t> val;
    for (int c : memory_.classes()) {
      const auto v = std::max<std::size_t>(1, std::size_t(std::lround(opt_.bic_val_fraction * double(memory_.quota(c)))));
      auto it = fresh.find(c);
      const auto& src = it != fresh.end() ? it->second : memory_.items(c);
      for (auto k : vrng.sample_without_replacement(src.size(), std::min(v, src.size() > 1 ? src.size() - 1 : 0)))
        val.push_back(src[k]);
    }
    std::sort(val.begin(), val.end());
    std::vector<std::size_t> pool;
    for (auto i : with_memory(samples))
      if (!std::binary_search(val.begin(), val.end(), i)) pool.push_back(i);

    net.clear_corrections();
    const auto steps = distill_epochs(t, net, teacher, n_old, pool, hyper_.epochs, 1.0, "train");
    if (n_old > 0 && !val.empty()) {
      std::vector<int> new_slots;
      for (std::size_t s = n_old; s < net.slots(); ++s) new_slots.push_back(int(s));
      const Tensor z = net.logits(gather_rows(net.data().train_images, val));
      const auto [alpha, beta] = fit_bias_correction(z, net.slots_for(val), new_slots, opt_.bic_epochs, opt_.bic_lr);
      net.set_correction(new_slots, alpha, beta);
    }
    RngStream mrng = root_.fork("memory", std::uint64_t(t));
    memory_.update_random(group(samples), mrng);
    return steps;
  }

  std::uint64_t e2eil_exposure(int t, const Exposure& e, std::span<const std::size_t> samples) {
    auto& net = classifier();
    std::unique_ptr<TaskNet> teacher_net = t > 0 ? net.clone() : nullptr;
    const auto* teacher = static_cast<const ClassifierNet*>(teacher_net.get());
    const std::size_t n_old = net.slots();
    RngStream head = root_.fork("head", std::uint64_t(t));
    net.add_classes(e.classes, head);
    auto steps = distill_epochs(t, net, teacher, n_old, with_memory(samples), hyper_.epochs, 1.0, "train");
    memory_.update_herding(group(samples), feature_fn());
    if (opt_.finetune_epochs > 0) {
      const std::size_t m = memory_.smallest_class_size();
      std::vector<std::size_t> balanced;
      for (int c : memory_.classes()) {
        const auto& items = memory_.items(c);
        balanced.insert(balanced.end(), items.begin(), items.begin() + long(std::min(m, items.size())));
      }
      if (balanced.empty()) throw DegenerateError("e2eil: balanced exemplar set is empty");
      steps += distill_epochs(t, net, teacher, n_old, balanced, opt_.finetune_epochs, opt_.finetune_lr_scale,
                              "finetune");
      std::map<int, std::vector<std::size_t>> reselect = group(samples);
      for (int c : memory_.classes())
        if (!reselect.contains(c)) reselect[c] = memory_.items(c);
      memory_.update_herding(reselect, feature_fn());
    }
    return steps;
  }

  std::unique_ptr<TaskNet> net_;
  LearnerOptions opt_;
  TrainHyper hyper_;
  RngStream root_;
  ExemplarMemory memory_;
  std::vector<int> seen_;
  std::map<int, std::vector<std::size_t>> proxy_sets_;
  std::uint64_t steps_ = 0;
  int t_ = 0;
};

}  // namespace flab::cl
