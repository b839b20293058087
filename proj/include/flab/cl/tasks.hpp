#pragma once

#include <map>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "flab/cl/ncm.hpp"
#include "flab/core/rng.hpp"
#include "flab/data/dataset.hpp"
#include "flab/data/sampling.hpp"
#include "flab/metrics/metrics.hpp"
#include "flab/nn/losses.hpp"
#include "flab/nn/model.hpp"
#include "flab/nn/optim.hpp"

namespace flab::cl {

enum class TaskKind { kClassification, kSdf, kSilhouette, kAutoencoder };

inline std::string to_string(TaskKind k) {
  switch (k) {
    case TaskKind::kClassification: return "classification";
    case TaskKind::kSdf: return "sdf_recon";
    case TaskKind::kSilhouette: return "silhouette";
    case TaskKind::kAutoencoder: return "autoencoder";
  }
  return "?";
}

struct TaskOptions {
  TaskKind kind = TaskKind::kClassification;
  data::SdfFrame frame = data::SdfFrame::kViewer;
  std::size_t feature_width = 64;
  std::size_t code_width = 32;
  std::size_t decoder_width = 64;
  std::size_t points_per_image = 128;
  std::size_t eval_per_class = 16;  // reconstruction metrics use this many test images per class
  std::size_t pred_grid = 64;
  std::size_t gt_grid = 128;
  std::size_t pred_points = 2048;
  std::size_t gt_points = 1024;
  double tau = 0.02;
};

/// Tensors and precomputed targets for one task over one dataset.
struct TaskData {
  TaskOptions opt;
  int num_classes = 0;
  Tensor train_images;  // [N,1,32,32]
  Tensor test_images;
  Tensor val_images;
  std::vector<int> train_labels;
  std::vector<int> test_labels;
  std::vector<int> val_labels;
  std::map<int, std::vector<std::size_t>> train_by_class;
  std::map<int, std::vector<std::size_t>> test_by_class;

  Tensor train_points;  // [N*P, 2], P = points_per_image
  Tensor train_sdf;     // [N*P, 1]
  std::vector<std::size_t> eval_test;  // test subset for reconstruction metrics
  std::vector<std::vector<data::Point>> eval_gt;  // ground-truth boundary per eval_test entry

  Tensor train_targets;  // [N, 1024] silhouettes or images
  Tensor test_targets;
};

namespace detail {

inline Tensor image_tensor(const std::vector<data::Example>& xs) {
  Tensor t({xs.size(), 1, data::kImageSide, data::kImageSide});
  for (std::size_t i = 0; i < xs.size(); ++i)
    std::copy(xs[i].image.begin(), xs[i].image.end(), t.data() + i * data::kImagePixels);
  return t;
}

inline Tensor target_tensor(const std::vector<data::Example>& xs, bool silhouette) {
  Tensor t({xs.size(), data::kImagePixels});
  for (std::size_t i = 0; i < xs.size(); ++i) {
    if (silhouette && xs[i].silhouette.size() != data::kImagePixels)
      throw ConfigError("silhouette task needs rendered silhouettes");
    for (std::size_t p = 0; p < data::kImagePixels; ++p)
      t[i * data::kImagePixels + p] = silhouette ? Real(xs[i].silhouette[p]) : Real(xs[i].image[p]);
  }
  return t;
}

inline const data::ShapeSpec& shape_of(const data::Example& ex) {
  if (!ex.shape) throw ConfigError("sdf task needs synthetic shapes; external images carry no geometry");
  return *ex.shape;
}

}  // namespace detail

inline TaskData make_task_data(const data::DatasetSplit& ds, const TaskOptions& opt, std::uint64_t seed) {
  TaskData td;
  td.opt = opt;
  td.num_classes = ds.num_classes;
  td.train_images = detail::image_tensor(ds.train);
  td.test_images = detail::image_tensor(ds.test);
  for (const auto& ex : ds.train) td.train_labels.push_back(ex.label);
  for (const auto& ex : ds.test) td.test_labels.push_back(ex.label);
  if (!ds.val.empty()) td.val_images = detail::image_tensor(ds.val);
  for (const auto& ex : ds.val) td.val_labels.push_back(ex.label);
  td.train_by_class = data::DatasetSplit::by_class(ds.train);
  td.test_by_class = data::DatasetSplit::by_class(ds.test);
  const RngStream root(seed, 0x7A5CULL);

  if (opt.kind == TaskKind::kSdf) {
    const std::size_t p = opt.points_per_image;
    td.train_points = Tensor({ds.train.size() * p, 2});
    td.train_sdf = Tensor({ds.train.size() * p, 1});
    for (std::size_t i = 0; i < ds.train.size(); ++i) {
      RngStream rng = root.fork("sdf-points", i);
      const auto s = data::sample_sdf_points(detail::shape_of(ds.train[i]), p, rng, opt.frame);
      for (std::size_t k = 0; k < p; ++k) {
        td.train_points.at(i * p + k, 0) = Real(s.points[k].x);
        td.train_points.at(i * p + k, 1) = Real(s.points[k].y);
        td.train_sdf[i * p + k] = Real(s.sdf[k]);
      }
    }
    for (const auto& [c, idx] : td.test_by_class)
      for (std::size_t k = 0; k < std::min(opt.eval_per_class, idx.size()); ++k) {
        RngStream rng = root.fork("gt-boundary", idx[k]);
        auto gt = data::extract_boundary_points(detail::shape_of(ds.test[idx[k]]), opt.frame, opt.gt_grid,
                                                opt.gt_points, rng);
        if (!gt) throw DegenerateError("test shape " + std::to_string(idx[k]) + " has no boundary");
        td.eval_test.push_back(idx[k]);
        td.eval_gt.push_back(std::move(*gt));
      }
  }
  if (opt.kind == TaskKind::kSilhouette || opt.kind == TaskKind::kAutoencoder) {
    const bool sil = opt.kind == TaskKind::kSilhouette;
    td.train_targets = detail::target_tensor(ds.train, sil);
    td.test_targets = detail::target_tensor(ds.test, sil);
  }
  return td;
}

/// Conv encoder shared by every task: three conv+ReLU stages with pooling down to a global
/// average, then a dense layer. Features are tapped at the pooled output (index 9).
inline std::vector<nn::Layer> encoder_trunk(std::size_t width) {
  return {nn::Conv2d(1, 12, 3, 1, 1),  nn::ReLU{}, nn::AvgPool2d{2},
          nn::Conv2d(12, 24, 3, 1, 1), nn::ReLU{}, nn::AvgPool2d{2},
          nn::Conv2d(24, 48, 3, 1, 1), nn::ReLU{}, nn::AvgPool2d{8},
          nn::Flatten{},               nn::Linear(48, width), nn::ReLU{}};
}
inline constexpr std::size_t kEncoderTap = 9;

struct EvalResult {
  std::string metric;
  std::map<int, double> per_class;
  double overall = 0;
  bool higher_is_better = true;

  metrics::CurvePoint point(int exposure) const {
    return {exposure, metric, overall, per_class, int(per_class.size())};
  }
};

/// A trainable network bound to a task's data. Indices refer to the training split.
class TaskNet {
 public:
  explicit TaskNet(std::shared_ptr<const TaskData> data) : data_(std::move(data)) {}
  virtual ~TaskNet() = default;

  virtual std::unique_ptr<TaskNet> clone() const = 0;
  /// Fresh parameters. Classifiers also forget their class slots.
  virtual void reset(RngStream rng) = 0;
  /// Registers output slots for unseen classes (classifiers only).
  virtual void add_classes(std::span<const int> /*classes*/, RngStream& /*rng*/) {}
  /// One optimizer step on train examples `idx` with per-sample weights `w`; returns the loss.
  virtual Real train_batch(std::span<const std::size_t> idx, std::span<const Real> w, nn::Optimizer& opt) = 0;
  /// Test-set metric restricted to `seen` classes.
  virtual EvalResult evaluate(std::span<const int> seen) const = 0;
  virtual const nn::Model& feature_model() const = 0;
  virtual std::vector<const nn::Model*> models() const = 0;
  virtual std::vector<nn::Model*> mutable_models() = 0;

  const TaskData& data() const noexcept { return *data_; }
  std::shared_ptr<const TaskData> data_ptr() const noexcept { return data_; }

  Tensor features(const Tensor& images) const {
    constexpr std::size_t kChunk = 256;
    const std::size_t n = images.rows();
    Tensor out;
    for (std::size_t b = 0; b < n; b += kChunk) {
      Tensor f = feature_model().features(slice_rows(images, b, std::min(n, b + kChunk)));
      if (out.empty()) out = Tensor({n, f.cols()});
      std::copy_n(f.data(), f.size(), out.data() + b * f.cols());
    }
    return out;
  }
  Tensor train_features(std::span<const std::size_t> idx) const {
    return features(gather_rows(data_->train_images, idx));
  }
  Tensor test_features(std::span<const std::size_t> idx) const {
    return features(gather_rows(data_->test_images, idx));
  }

  std::vector<std::size_t> test_indices_for(std::span<const int> seen) const {
    std::vector<std::size_t> idx;
    for (int c : seen) {
      auto it = data_->test_by_class.find(c);
      if (it != data_->test_by_class.end()) idx.insert(idx.end(), it->second.begin(), it->second.end());
    }
    std::sort(idx.begin(), idx.end());
    return idx;
  }

 protected:
  static std::vector<Tensor*> all_parameters(std::span<nn::Model* const> ms) {
    std::vector<Tensor*> out;
    for (auto* m : ms)
      for (auto* p : m->parameters()) out.push_back(p);
    return out;
  }

  std::shared_ptr<const TaskData> data_;
};

/// Single-head classifier; output slot k belongs to the k-th class registered.
class ClassifierNet : public TaskNet {
 public:
  using LossFn = std::function<nn::LossResult(const Tensor& logits, std::span<const int> slots)>;

  explicit ClassifierNet(std::shared_ptr<const TaskData> data) : TaskNet(std::move(data)) {}

  std::unique_ptr<TaskNet> clone() const override { return std::make_unique<ClassifierNet>(*this); }

  void reset(RngStream rng) override {
    slot_class_.clear();
    class_slot_.clear();
    clear_corrections();
    auto layers = encoder_trunk(data_->opt.feature_width);
    layers.push_back(nn::Linear(data_->opt.feature_width, 0));
    model_ = nn::Model(std::move(layers), kEncoderTap);
    model_.init(rng);
  }

  void add_classes(std::span<const int> classes, RngStream& rng) override {
    std::size_t added = 0;
    for (int c : classes)
      if (!class_slot_.contains(c)) {
        class_slot_[c] = int(slot_class_.size());
        slot_class_.push_back(c);
        ++added;
      }
    model_.grow_outputs(added, rng);
  }

  const std::vector<int>& slot_classes() const noexcept { return slot_class_; }
  int slot_of(int c) const { return class_slot_.at(c); }
  std::size_t slots() const noexcept { return slot_class_.size(); }

  std::vector<int> slots_for(std::span<const std::size_t> idx) const {
    std::vector<int> s(idx.size());
    for (std::size_t i = 0; i < idx.size(); ++i) s[i] = class_slot_.at(data_->train_labels[idx[i]]);
    return s;
  }

  Real train_batch(std::span<const std::size_t> idx, std::span<const Real> w, nn::Optimizer& opt) override {
    return train_batch_with(idx, opt, [&](const Tensor& logits, std::span<const int> slots) {
      if (w.empty()) return nn::softmax_cross_entropy(logits, slots);
      return nn::weighted_softmax_cross_entropy(logits, slots, w);
    });
  }

  /// One step with a caller-supplied loss over the head logits.
  Real train_batch_with(std::span<const std::size_t> idx, nn::Optimizer& opt, const LossFn& loss_fn) {
    if (slots() == 0) throw UsageError("classifier has no class slots");
    const auto fwd = model_.forward(gather_rows(data_->train_images, idx));
    const auto loss = loss_fn(fwd.outputs, slots_for(idx));
    auto grads = model_.backward(fwd.cache, loss.grad);
    opt.step(model_.parameters(), grads.params);
    return loss.loss;
  }

  Tensor logits(const Tensor& images) const {
    constexpr std::size_t kChunk = 256;
    const std::size_t n = images.rows();
    Tensor out({n, slots()});
    for (std::size_t b = 0; b < n; b += kChunk) {
      Tensor z = model_.forward(slice_rows(images, b, std::min(n, b + kChunk))).outputs;
      std::copy_n(z.data(), z.size(), out.data() + b * slots());
    }
    apply_corrections(out);
    return out;
  }

  /// Affine correction z' = alpha z + beta on the given slots at inference.
  void set_correction(std::vector<int> slots, double alpha, double beta) {
    corrected_ = std::move(slots);
    alpha_ = alpha;
    beta_ = beta;
  }
  void clear_corrections() {
    corrected_.clear();
    alpha_ = 1;
    beta_ = 0;
  }
  void apply_corrections(Tensor& z) const {
    for (std::size_t i = 0; i < z.rows(); ++i)
      for (int s : corrected_) z.at(i, std::size_t(s)) = Real(alpha_ * double(z.at(i, std::size_t(s))) + beta_);
  }

  /// Switches inference to nearest class mean over these means; empty restores the head.
  void set_ncm_means(ClassMeans means) { ncm_means_ = std::move(means); }

  std::vector<int> predict(const Tensor& images) const {
    if (!ncm_means_.empty()) return ncm_classify(features(images), ncm_means_);
    const Tensor z = logits(images);
    std::vector<int> out(z.rows());
    for (std::size_t i = 0; i < z.rows(); ++i) {
      const auto r = z.row(i);
      out[i] = slot_class_[std::size_t(std::max_element(r.begin(), r.end()) - r.begin())];
    }
    return out;
  }

  EvalResult evaluate(std::span<const int> seen) const override {
    const auto rows = test_indices_for(seen);
    std::vector<int> labels;
    for (auto i : rows) labels.push_back(data_->test_labels[i]);
    const auto acc = metrics::accuracy(predict(gather_rows(data_->test_images, rows)), labels);
    return {"accuracy", acc.per_class, metrics::mean_over_classes(acc.per_class), true};
  }

  const nn::Model& feature_model() const override { return model_; }
  nn::Model& model() { return model_; }
  std::vector<const nn::Model*> models() const override { return {&model_}; }
  std::vector<nn::Model*> mutable_models() override { return {&model_}; }

 private:
  nn::Model model_;
  std::vector<int> slot_class_;
  std::map<int, int> class_slot_;
  std::vector<int> corrected_;
  double alpha_ = 1;
  double beta_ = 0;
  ClassMeans ncm_means_;
};

/// Image encoder producing a shape code, plus an MLP decoder mapping (code, x, y) to a
/// signed distance.
class SdfNet : public TaskNet {
 public:
  explicit SdfNet(std::shared_ptr<const TaskData> data) : TaskNet(std::move(data)) {}

  std::unique_ptr<TaskNet> clone() const override { return std::make_unique<SdfNet>(*this); }

  void reset(RngStream rng) override {
    const auto& o = data_->opt;
    auto enc = encoder_trunk(o.feature_width);
    enc.push_back(nn::Linear(o.feature_width, o.code_width));
    encoder_ = nn::Model(std::move(enc), kEncoderTap);
    decoder_ = nn::Model({nn::Linear(o.code_width + 2, o.decoder_width), nn::ReLU{},
                          nn::Linear(o.decoder_width, o.decoder_width), nn::ReLU{},
                          nn::Linear(o.decoder_width, 1)},
                         3);
    RngStream e = rng.fork("encoder"), d = rng.fork("decoder");
    encoder_.init(e);
    decoder_.init(d);
  }

  Real train_batch(std::span<const std::size_t> idx, std::span<const Real> w, nn::Optimizer& opt) override {
    const std::size_t b = idx.size(), p = data_->opt.points_per_image, cw = data_->opt.code_width;
    const auto enc = encoder_.forward(gather_rows(data_->train_images, idx));
    Tensor in({b * p, cw + 2}), gt({b * p, 1});
    std::vector<Real> row_w(b * p);
    for (std::size_t i = 0; i < b; ++i)
      for (std::size_t k = 0; k < p; ++k) {
        const std::size_t r = i * p + k, src = idx[i] * p + k;
        std::copy_n(enc.outputs.data() + i * cw, cw, in.data() + r * (cw + 2));
        in.at(r, cw) = data_->train_points.at(src, 0);
        in.at(r, cw + 1) = data_->train_points.at(src, 1);
        gt[r] = data_->train_sdf[src];
        row_w[r] = w.empty() ? Real{1} : w[i];
      }
    const auto dec = decoder_.forward(in);
    const auto loss = nn::weighted_l1_sdf_loss(dec.outputs, gt, row_w);
    auto dg = decoder_.backward(dec.cache, loss.grad);
    Tensor code_grad({b, cw});
    for (std::size_t r = 0; r < b * p; ++r)
      for (std::size_t j = 0; j < cw; ++j) code_grad.at(r / p, j) += dg.input.at(r, j);
    auto eg = encoder_.backward(enc.cache, code_grad);
    std::vector<nn::Model*> ms{&encoder_, &decoder_};
    std::vector<Tensor> grads = std::move(eg.params);
    for (auto& g : dg.params) grads.push_back(std::move(g));
    opt.step(all_parameters(ms), grads);
    return loss.loss;
  }

  /// Predicted field of one image on the R x R evaluation lattice.
  data::SdfGrid predict_grid(const Tensor& image, std::size_t resolution) const {
    const std::size_t cw = data_->opt.code_width;
    const Tensor code = encoder_.forward(image).outputs;
    data::SdfGrid g{resolution, std::vector<double>(resolution * resolution)};
    Tensor in({resolution * resolution, cw + 2});
    for (std::size_t i = 0; i < resolution; ++i)
      for (std::size_t j = 0; j < resolution; ++j) {
        const std::size_t r = i * resolution + j;
        std::copy_n(code.data(), cw, in.data() + r * (cw + 2));
        const auto pt = g.node(i, j);
        in.at(r, cw) = Real(pt.x);
        in.at(r, cw + 1) = Real(pt.y);
      }
    const Tensor out = decoder_.forward(in).outputs;
    for (std::size_t r = 0; r < out.size(); ++r) g.values[r] = double(out[r]);
    return g;
  }

  /// FS@tau of one test image's predicted boundary; a field without a surface scores 0.
  double test_fscore(std::size_t eval_slot) const {
    const auto& o = data_->opt;
    const std::size_t ti = data_->eval_test[eval_slot];
    const auto grid = predict_grid(slice_rows(data_->test_images, ti, ti + 1), o.pred_grid);
    RngStream rng = RngStream(0, 0x5DFULL).fork("pred-boundary", ti);
    const auto pred = data::extract_boundary_points(grid, o.pred_points, rng);
    if (!pred) return 0.0;
    return metrics::fscore_at_tau(*pred, data_->eval_gt[eval_slot], o.tau).fscore;
  }

  EvalResult evaluate(std::span<const int> seen) const override {
    std::map<int, std::pair<double, std::size_t>> acc;
    for (std::size_t k = 0; k < data_->eval_test.size(); ++k) {
      const int c = data_->test_labels[data_->eval_test[k]];
      if (std::find(seen.begin(), seen.end(), c) == seen.end()) continue;
      auto& a = acc[c];
      a.first += test_fscore(k);
      ++a.second;
    }
    EvalResult r{"fscore", {}, 0, true};
    for (auto& [c, a] : acc) r.per_class[c] = a.first / double(a.second);
    r.overall = metrics::mean_over_classes(r.per_class);
    return r;
  }

  const nn::Model& feature_model() const override { return encoder_; }
  std::vector<const nn::Model*> models() const override { return {&encoder_, &decoder_}; }
  std::vector<nn::Model*> mutable_models() override { return {&encoder_, &decoder_}; }

 private:
  nn::Model encoder_;
  nn::Model decoder_;
};

/// Encoder with a dense per-pixel head: silhouette logits (BCE, IoU at 0.5) or a sigmoid
/// image reconstruction (MSE).
class PixelNet : public TaskNet {
 public:
  explicit PixelNet(std::shared_ptr<const TaskData> data) : TaskNet(std::move(data)) {}

  std::unique_ptr<TaskNet> clone() const override { return std::make_unique<PixelNet>(*this); }

  bool autoencoder() const { return data_->opt.kind == TaskKind::kAutoencoder; }

  void reset(RngStream rng) override {
    auto layers = encoder_trunk(data_->opt.feature_width);
    layers.push_back(nn::Linear(data_->opt.feature_width, data::kImagePixels));
    if (autoencoder()) layers.push_back(nn::Sigmoid{});
    model_ = nn::Model(std::move(layers), kEncoderTap);
    model_.init(rng);
  }

  Real train_batch(std::span<const std::size_t> idx, std::span<const Real> w, nn::Optimizer& opt) override {
    const auto fwd = model_.forward(gather_rows(data_->train_images, idx));
    const Tensor target = gather_rows(data_->train_targets, idx);
    const auto loss = autoencoder() ? nn::mse_loss(fwd.outputs, target, w) : nn::sigmoid_bce(fwd.outputs, target, w);
    auto grads = model_.backward(fwd.cache, loss.grad);
    opt.step(model_.parameters(), grads.params);
    return loss.loss;
  }

  EvalResult evaluate(std::span<const int> seen) const override {
    const auto rows = test_indices_for(seen);
    const Tensor out = model_.forward(gather_rows(data_->test_images, rows)).outputs;
    std::map<int, std::pair<double, std::size_t>> acc;
    for (std::size_t i = 0; i < rows.size(); ++i) {
      const auto pred = out.row(i);
      const auto target = data_->test_targets.row(rows[i]);
      double v;
      if (autoencoder()) {
        v = metrics::mse_image(pred, target);
      } else {
        std::vector<std::uint8_t> mask(pred.size());
        for (std::size_t p = 0; p < pred.size(); ++p) mask[p] = pred[p] > 0 ? 1 : 0;
        v = metrics::iou_mask(mask, target);
      }
      auto& a = acc[data_->test_labels[rows[i]]];
      a.first += v;
      ++a.second;
    }
    EvalResult r{autoencoder() ? "mse" : "iou", {}, 0, !autoencoder()};
    for (auto& [c, a] : acc) r.per_class[c] = a.first / double(a.second);
    r.overall = metrics::mean_over_classes(r.per_class);
    return r;
  }

  const nn::Model& feature_model() const override { return model_; }
  std::vector<const nn::Model*> models() const override { return {&model_}; }
  std::vector<nn::Model*> mutable_models() override { return {&model_}; }

 private:
  nn::Model model_;
};

inline std::unique_ptr<TaskNet> make_task_net(std::shared_ptr<const TaskData> data) {
  switch (data->opt.kind) {
    case TaskKind::kClassification: return std::make_unique<ClassifierNet>(std::move(data));
    case TaskKind::kSdf: return std::make_unique<SdfNet>(std::move(data));
    case TaskKind::kSilhouette:
    case TaskKind::kAutoencoder: return std::make_unique<PixelNet>(std::move(data));
  }
  throw ConfigError("unknown task kind");
}

}  // namespace flab::cl
