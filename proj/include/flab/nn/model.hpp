#pragma once

#include <atomic>
#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "flab/nn/layers.hpp"

namespace flab::nn {

/// Activations recorded by Model::forward; inputs[i] is the input to layer i.
struct ForwardCache {
  std::uint64_t model_uid = 0;
  std::uint64_t model_version = 0;
  std::vector<Tensor> inputs;
};

struct ForwardResult {
  Tensor outputs;
  Tensor features;
  ForwardCache cache;
};

struct Gradients {
  std::vector<Tensor> params;  // aligned with Model::parameters()
  Tensor input;
};

/// Sequential network over a fixed layer menu.
///
/// feature_tap is the index of the layer whose output is the model's representation
/// (the penultimate activation ahead of the head). Copies are independent models with
/// their own identity, so a cache never validates against a copy.
class Model {
 public:
  Model() : uid_(next_uid()) {}
  Model(std::vector<Layer> layers, std::size_t feature_tap)
      : layers_(std::move(layers)), feature_tap_(feature_tap), uid_(next_uid()) {
    validate();
  }
  Model(const Model& other)
      : layers_(other.layers_), feature_tap_(other.feature_tap_), uid_(next_uid()) {}
  Model& operator=(const Model& other) {
    if (this != &other) {
      layers_ = other.layers_;
      feature_tap_ = other.feature_tap_;
      uid_ = next_uid();
      version_ = 0;
    }
    return *this;
  }
  Model(Model&&) noexcept = default;
  Model& operator=(Model&&) noexcept = default;

  const std::vector<Layer>& layers() const noexcept { return layers_; }
  std::size_t feature_tap() const noexcept { return feature_tap_; }

  /// He-style fan-in uniform init for layers feeding a ReLU, LeCun-style otherwise.
  void init(RngStream& rng) {
    for (std::size_t i = 0; i < layers_.size(); ++i) {
      const bool relu_next = i + 1 < layers_.size() && std::holds_alternative<ReLU>(layers_[i + 1]);
      const double gain = relu_next ? std::sqrt(6.0) : std::sqrt(3.0);
      if (auto* lin = std::get_if<Linear>(&layers_[i])) lin->init(rng, gain);
      if (auto* conv = std::get_if<Conv2d>(&layers_[i])) conv->init(rng, gain);
    }
    ++version_;
  }

  /// Mutable parameter handles; order is (weight, bias) per parametric layer.
  std::vector<Tensor*> parameters() {
    ++version_;
    std::vector<Tensor*> out;
    for (auto& layer : layers_) {
      if (auto* lin = std::get_if<Linear>(&layer)) {
        out.push_back(&lin->weight);
        if (lin->has_bias) out.push_back(&lin->bias);
      } else if (auto* conv = std::get_if<Conv2d>(&layer)) {
        out.push_back(&conv->weight);
        out.push_back(&conv->bias);
      }
    }
    return out;
  }

  std::vector<const Tensor*> parameters() const {
    std::vector<const Tensor*> out;
    for (const auto& layer : layers_) {
      if (const auto* lin = std::get_if<Linear>(&layer)) {
        out.push_back(&lin->weight);
        if (lin->has_bias) out.push_back(&lin->bias);
      } else if (const auto* conv = std::get_if<Conv2d>(&layer)) {
        out.push_back(&conv->weight);
        out.push_back(&conv->bias);
      }
    }
    return out;
  }

  std::size_t parameter_count() const {
    std::size_t n = 0;
    for (const auto* p : parameters()) n += p->size();
    return n;
  }

  std::string topology() const {
    std::string s;
    for (const auto& layer : layers_) s += describe(layer) + ";";
    return s + "tap=" + std::to_string(feature_tap_);
  }

  ForwardResult forward(const Tensor& batch) const {
    ForwardResult r;
    r.cache.model_uid = uid_;
    r.cache.model_version = version_;
    r.cache.inputs.reserve(layers_.size());
    Tensor x = batch;
    for (std::size_t i = 0; i < layers_.size(); ++i) {
      Tensor y = std::visit([&](const auto& l) { return l.forward(x); }, layers_[i]);
      if (!y.all_finite()) throw NumericError("non-finite activation", i);
      r.cache.inputs.push_back(std::move(x));
      if (i == feature_tap_) r.features = y;
      x = std::move(y);
    }
    r.outputs = std::move(x);
    return r;
  }

  /// Output of the feature tap only; skips the head.
  Tensor features(const Tensor& batch) const {
    Tensor x = batch;
    for (std::size_t i = 0; i <= feature_tap_; ++i) {
      x = std::visit([&](const auto& l) { return l.forward(x); }, layers_[i]);
      if (!x.all_finite()) throw NumericError("non-finite activation", i);
    }
    return x;
  }

  Gradients backward(const ForwardCache& cache, const Tensor& output_grad) const {
    if (cache.model_uid != uid_ || cache.model_version != version_ ||
        cache.inputs.size() != layers_.size())
      throw UsageError("backward called with a cache from a different or modified model");
    Gradients g;
    std::vector<std::vector<Tensor>> per_layer(layers_.size());
    Tensor dy = output_grad;
    for (std::size_t i = layers_.size(); i-- > 0;) {
      const Tensor& x = cache.inputs[i];
      dy = std::visit(
          [&](const auto& l) -> Tensor {
            using T = std::decay_t<decltype(l)>;
            if constexpr (std::is_same_v<T, Linear> || std::is_same_v<T, Conv2d>)
              return l.backward(x, dy, per_layer[i]);
            else
              return l.backward(x, dy);
          },
          layers_[i]);
      if (!dy.all_finite()) throw NumericError("non-finite gradient", i);
    }
    for (auto& lg : per_layer)
      for (auto& t : lg) g.params.push_back(std::move(t));
    g.input = std::move(dy);
    return g;
  }

  /// Adds `count` outputs to the final Linear layer; new rows are drawn from rng.
  void grow_outputs(std::size_t count, RngStream& rng) {
    if (count == 0) return;
    auto* head = layers_.empty() ? nullptr : std::get_if<Linear>(&layers_.back());
    if (head == nullptr) throw UsageError("grow_outputs requires a Linear head");
    Linear grown(head->in, head->out + count, head->has_bias);
    std::copy(head->weight.values().begin(), head->weight.values().end(), grown.weight.data());
    if (head->has_bias)
      std::copy(head->bias.values().begin(), head->bias.values().end(), grown.bias.data());
    const double bound = std::sqrt(3.0 / static_cast<double>(head->in));
    for (std::size_t i = head->weight.size(); i < grown.weight.size(); ++i)
      grown.weight[i] = static_cast<Real>(rng.uniform(-bound, bound));
    *head = std::move(grown);
    ++version_;
  }

  std::size_t output_width() const {
    for (auto it = layers_.rbegin(); it != layers_.rend(); ++it) {
      if (const auto* lin = std::get_if<Linear>(&*it)) return lin->out;
      if (std::holds_alternative<Conv2d>(*it)) break;
    }
    return 0;
  }

 private:
  static std::uint64_t next_uid() {
    static std::atomic<std::uint64_t> counter{1};
    return counter.fetch_add(1);
  }

  void validate() const {
    if (layers_.empty()) throw ConfigError("model has no layers");
    if (feature_tap_ >= layers_.size()) throw ConfigError("feature tap out of range");
    bool param_after_tap = false;
    for (std::size_t i = feature_tap_ + 1; i < layers_.size(); ++i)
      param_after_tap |= std::holds_alternative<Linear>(layers_[i]);
    if (!param_after_tap) throw ConfigError("feature tap must precede the head");
    std::size_t width = 0;
    for (const auto& layer : layers_) {
      if (const auto* lin = std::get_if<Linear>(&layer)) {
        if (width != 0 && lin->in != width)
          throw ConfigError("Linear(" + std::to_string(lin->in) + ",...) follows width " +
                            std::to_string(width));
        width = lin->out;
      } else if (std::holds_alternative<Conv2d>(layer)) {
        width = 0;  // spatial size only known at runtime
      }
    }
  }

  std::vector<Layer> layers_;
  std::size_t feature_tap_ = 0;
  std::uint64_t uid_;
  std::uint64_t version_ = 0;
};

}  // namespace flab::nn
