#pragma once

#include <cmath>
#include <cstddef>
#include <string>
#include <variant>
#include <vector>

#include "flab/core/rng.hpp"
#include "flab/nn/tensor.hpp"

namespace flab::nn {

/// Fully connected layer, y = x W^T + b. weight is [out x in].
struct Linear {
  std::size_t in = 0;
  std::size_t out = 0;
  bool has_bias = true;
  Tensor weight;
  Tensor bias;

  Linear() = default;
  Linear(std::size_t in_features, std::size_t out_features, bool bias_enabled = true)
      : in(in_features), out(out_features), has_bias(bias_enabled),
        weight({out_features, in_features}), bias({bias_enabled ? out_features : 0}) {}

  void init(RngStream& rng, double gain) {
    const double bound = gain * std::sqrt(1.0 / static_cast<double>(in));
    for (auto& w : weight.values()) w = static_cast<Real>(rng.uniform(-bound, bound));
    bias.fill(Real{0});
  }

  Tensor forward(const Tensor& x) const {
    if (x.rank() != 2 || x.cols() != in)
      throw ConfigError("Linear(" + std::to_string(in) + "," + std::to_string(out) +
                        ") got input " + shape_str(x.shape()));
    Tensor y({x.rows(), out});
    y.mat().noalias() = x.mat() * weight.mat().transpose();
    if (has_bias)
      y.mat().rowwise() += Eigen::Map<const Eigen::Matrix<Real, 1, Eigen::Dynamic>>(
          bias.data(), Eigen::Index(out));
    return y;
  }

  /// Appends gradients for (weight, bias) to grads and returns dL/dx.
  Tensor backward(const Tensor& x, const Tensor& dy, std::vector<Tensor>& grads) const {
    Tensor dw({out, in});
    dw.mat().noalias() = dy.mat().transpose() * x.mat();
    grads.push_back(std::move(dw));
    if (has_bias) {
      Tensor db({out});
      db.mat().reshaped(1, Eigen::Index(out)) = dy.mat().colwise().sum();
      grads.push_back(std::move(db));
    }
    Tensor dx(x.shape());
    dx.mat().noalias() = dy.mat() * weight.mat();
    return dx;
  }
};

/// 2-D convolution over [B x C x H x W] input, square kernel, im2col + GEMM.
struct Conv2d {
  std::size_t in_channels = 0;
  std::size_t out_channels = 0;
  std::size_t kernel = 3;
  std::size_t stride = 1;
  std::size_t padding = 0;
  Tensor weight;  // [out_channels x in_channels*kernel*kernel]
  Tensor bias;    // [out_channels]

  Conv2d() = default;
  Conv2d(std::size_t in_c, std::size_t out_c, std::size_t k, std::size_t s = 1, std::size_t p = 0)
      : in_channels(in_c), out_channels(out_c), kernel(k), stride(s), padding(p),
        weight({out_c, in_c * k * k}), bias({out_c}) {}

  std::size_t fan_in() const { return in_channels * kernel * kernel; }

  void init(RngStream& rng, double gain) {
    const double bound = gain * std::sqrt(1.0 / static_cast<double>(fan_in()));
    for (auto& w : weight.values()) w = static_cast<Real>(rng.uniform(-bound, bound));
    bias.fill(Real{0});
  }

  std::size_t out_size(std::size_t n) const { return (n + 2 * padding - kernel) / stride + 1; }

  void check_input(const Tensor& x) const {
    if (x.rank() != 4 || x.dim(1) != in_channels || x.dim(2) + 2 * padding < kernel ||
        x.dim(3) + 2 * padding < kernel)
      throw ConfigError("Conv2d(" + std::to_string(in_channels) + "," +
                        std::to_string(out_channels) + ") got input " + shape_str(x.shape()));
  }

  // cols is [in_channels*k*k x B*Ho*Wo]; sample n owns columns [n*Ho*Wo, (n+1)*Ho*Wo).
  void im2col(const Tensor& x, RowMatrix& cols) const {
    const std::size_t b = x.dim(0), h = x.dim(2), w = x.dim(3);
    const std::size_t ho = out_size(h), wo = out_size(w), hw = ho * wo;
    cols.resize(Eigen::Index(fan_in()), Eigen::Index(b * hw));
    for (std::size_t c = 0; c < in_channels; ++c)
      for (std::size_t ki = 0; ki < kernel; ++ki)
        for (std::size_t kj = 0; kj < kernel; ++kj) {
          Real* dst = cols.data() + ((c * kernel + ki) * kernel + kj) * b * hw;
          for (std::size_t n = 0; n < b; ++n) {
            const Real* img = x.data() + (n * in_channels + c) * h * w;
            for (std::size_t oi = 0; oi < ho; ++oi) {
              const long ii = long(oi * stride + ki) - long(padding);
              Real* out = dst + n * hw + oi * wo;
              if (ii < 0 || ii >= long(h)) {
                std::fill(out, out + wo, Real{0});
                continue;
              }
              const Real* src = img + std::size_t(ii) * w;
              for (std::size_t oj = 0; oj < wo; ++oj) {
                const long jj = long(oj * stride + kj) - long(padding);
                out[oj] = jj >= 0 && jj < long(w) ? src[jj] : Real{0};
              }
            }
          }
        }
  }

  void col2im(const RowMatrix& cols, Tensor& dx) const {
    const std::size_t b = dx.dim(0), h = dx.dim(2), w = dx.dim(3);
    const std::size_t ho = out_size(h), wo = out_size(w), hw = ho * wo;
    for (std::size_t c = 0; c < in_channels; ++c)
      for (std::size_t ki = 0; ki < kernel; ++ki)
        for (std::size_t kj = 0; kj < kernel; ++kj) {
          const Real* src = cols.data() + ((c * kernel + ki) * kernel + kj) * b * hw;
          for (std::size_t n = 0; n < b; ++n) {
            Real* img = dx.data() + (n * in_channels + c) * h * w;
            for (std::size_t oi = 0; oi < ho; ++oi) {
              const long ii = long(oi * stride + ki) - long(padding);
              if (ii < 0 || ii >= long(h)) continue;
              const Real* in = src + n * hw + oi * wo;
              Real* row = img + std::size_t(ii) * w;
              for (std::size_t oj = 0; oj < wo; ++oj) {
                const long jj = long(oj * stride + kj) - long(padding);
                if (jj >= 0 && jj < long(w)) row[jj] += in[oj];
              }
            }
          }
        }
  }

  Tensor forward(const Tensor& x) const {
    check_input(x);
    const std::size_t b = x.dim(0), hw = out_size(x.dim(2)) * out_size(x.dim(3));
    RowMatrix cols;
    im2col(x, cols);
    RowMatrix all = weight.mat() * cols;
    all.colwise() += Eigen::Map<const Eigen::Matrix<Real, Eigen::Dynamic, 1>>(bias.data(), Eigen::Index(out_channels));
    Tensor y({b, out_channels, out_size(x.dim(2)), out_size(x.dim(3))});
    for (std::size_t n = 0; n < b; ++n)
      MatrixMap(y.data() + n * out_channels * hw, Eigen::Index(out_channels), Eigen::Index(hw)) =
          all.middleCols(Eigen::Index(n * hw), Eigen::Index(hw));
    return y;
  }

  Tensor backward(const Tensor& x, const Tensor& dy, std::vector<Tensor>& grads) const {
    const std::size_t b = x.dim(0), hw = out_size(x.dim(2)) * out_size(x.dim(3));
    RowMatrix g(Eigen::Index(out_channels), Eigen::Index(b * hw));
    for (std::size_t n = 0; n < b; ++n)
      g.middleCols(Eigen::Index(n * hw), Eigen::Index(hw)) =
          ConstMatrixMap(dy.data() + n * out_channels * hw, Eigen::Index(out_channels), Eigen::Index(hw));
    RowMatrix cols;
    im2col(x, cols);
    Tensor dw(weight.shape());
    Tensor db(bias.shape());
    dw.mat().noalias() = g * cols.transpose();
    db.mat().reshaped(Eigen::Index(out_channels), 1) = g.rowwise().sum();
    cols.noalias() = weight.mat().transpose() * g;
    Tensor dx(x.shape());
    col2im(cols, dx);
    grads.push_back(std::move(dw));
    grads.push_back(std::move(db));
    return dx;
  }
};

/// ReLU; the subgradient at 0 is 0.
struct ReLU {
  Tensor forward(const Tensor& x) const {
    Tensor y(x.shape());
    for (std::size_t i = 0; i < x.size(); ++i) y[i] = x[i] > Real{0} ? x[i] : Real{0};
    return y;
  }
  Tensor backward(const Tensor& x, const Tensor& dy) const {
    Tensor dx(x.shape());
    for (std::size_t i = 0; i < x.size(); ++i) dx[i] = x[i] > Real{0} ? dy[i] : Real{0};
    return dx;
  }
};

struct Sigmoid {
  static Real apply(Real z) {
    if (z >= 0) return Real{1} / (Real{1} + std::exp(-z));
    const Real e = std::exp(z);
    return e / (Real{1} + e);
  }
  Tensor forward(const Tensor& x) const {
    Tensor y(x.shape());
    for (std::size_t i = 0; i < x.size(); ++i) y[i] = apply(x[i]);
    return y;
  }
  Tensor backward(const Tensor& x, const Tensor& dy) const {
    Tensor dx(x.shape());
    for (std::size_t i = 0; i < x.size(); ++i) {
      const Real s = apply(x[i]);
      dx[i] = dy[i] * s * (Real{1} - s);
    }
    return dx;
  }
};

struct Tanh {
  Tensor forward(const Tensor& x) const {
    Tensor y(x.shape());
    for (std::size_t i = 0; i < x.size(); ++i) y[i] = std::tanh(x[i]);
    return y;
  }
  Tensor backward(const Tensor& x, const Tensor& dy) const {
    Tensor dx(x.shape());
    for (std::size_t i = 0; i < x.size(); ++i) {
      const Real t = std::tanh(x[i]);
      dx[i] = dy[i] * (Real{1} - t * t);
    }
    return dx;
  }
};

/// [B x ...] -> [B x prod(...)].
struct Flatten {
  Tensor forward(const Tensor& x) const { return x.reshaped({x.rows(), x.cols()}); }
  Tensor backward(const Tensor& x, const Tensor& dy) const { return dy.reshaped(x.shape()); }
};

/// Non-overlapping k x k mean pooling over [B x C x H x W]; H and W must be multiples of k.
struct AvgPool2d {
  std::size_t kernel = 2;

  void check_input(const Tensor& x) const {
    if (x.rank() != 4 || kernel == 0 || x.dim(2) % kernel != 0 || x.dim(3) % kernel != 0)
      throw ConfigError("AvgPool2d(" + std::to_string(kernel) + ") got input " + shape_str(x.shape()));
  }

  Tensor forward(const Tensor& x) const {
    check_input(x);
    const std::size_t planes = x.dim(0) * x.dim(1), h = x.dim(2), w = x.dim(3);
    const std::size_t ho = h / kernel, wo = w / kernel;
    Tensor y({x.dim(0), x.dim(1), ho, wo});
    const Real inv = Real{1} / static_cast<Real>(kernel * kernel);
    for (std::size_t p = 0; p < planes; ++p)
      for (std::size_t i = 0; i < h; ++i) {
        const Real* src = x.data() + (p * h + i) * w;
        Real* dst = y.data() + (p * ho + i / kernel) * wo;
        for (std::size_t oj = 0; oj < wo; ++oj) {
          Real s = 0;
          for (std::size_t k = 0; k < kernel; ++k) s += src[oj * kernel + k];
          dst[oj] += s * inv;
        }
      }
    return y;
  }

  Tensor backward(const Tensor& x, const Tensor& dy) const {
    const std::size_t planes = x.dim(0) * x.dim(1), h = x.dim(2), w = x.dim(3);
    const std::size_t ho = h / kernel, wo = w / kernel;
    Tensor dx(x.shape());
    const Real inv = Real{1} / static_cast<Real>(kernel * kernel);
    for (std::size_t p = 0; p < planes; ++p)
      for (std::size_t i = 0; i < h; ++i) {
        const Real* src = dy.data() + (p * ho + i / kernel) * wo;
        Real* dst = dx.data() + (p * h + i) * w;
        for (std::size_t j = 0; j < w; ++j) dst[j] = src[j / kernel] * inv;
      }
    return dx;
  }
};

using Layer = std::variant<Linear, Conv2d, ReLU, Sigmoid, Tanh, Flatten, AvgPool2d>;

inline std::string describe(const Layer& layer) {
  return std::visit(
      [](const auto& l) -> std::string {
        using T = std::decay_t<decltype(l)>;
        if constexpr (std::is_same_v<T, Linear>)
          return "Linear(" + std::to_string(l.in) + "," + std::to_string(l.out) +
                 (l.has_bias ? ")" : ",nobias)");
        else if constexpr (std::is_same_v<T, Conv2d>)
          return "Conv2d(" + std::to_string(l.in_channels) + "," + std::to_string(l.out_channels) +
                 ",k" + std::to_string(l.kernel) + ",s" + std::to_string(l.stride) + ",p" +
                 std::to_string(l.padding) + ")";
        else if constexpr (std::is_same_v<T, ReLU>)
          return "ReLU";
        else if constexpr (std::is_same_v<T, Sigmoid>)
          return "Sigmoid";
        else if constexpr (std::is_same_v<T, Tanh>)
          return "Tanh";
        else if constexpr (std::is_same_v<T, AvgPool2d>)
          return "AvgPool2d(" + std::to_string(l.kernel) + ")";
        else
          return "Flatten";
      },
      layer);
}

}  // namespace flab::nn
