#pragma once

#include <cmath>
#include <map>
#include <string>
#include <vector>

#include "flab/core/error.hpp"
#include "flab/nn/tensor.hpp"

namespace flab::cl {

using ClassMeans = std::map<int, std::vector<double>>;

/// Mean feature row per class.
inline ClassMeans class_means(const Tensor& features, std::span<const int> labels) {
  if (features.rows() != labels.size()) throw ConfigError("class_means: feature rows and labels differ");
  ClassMeans sums;
  std::map<int, std::size_t> counts;
  const std::size_t d = features.cols();
  for (std::size_t i = 0; i < labels.size(); ++i) {
    auto& s = sums[labels[i]];
    s.resize(d, 0.0);
    const auto row = features.row(i);
    for (std::size_t j = 0; j < d; ++j) s[j] += double(row[j]);
    ++counts[labels[i]];
  }
  for (auto& [c, s] : sums)
    for (double& v : s) v /= double(counts[c]);
  return sums;
}

/// Nearest class mean under cosine distance; ties go to the lowest class id.
inline std::vector<int> ncm_classify(const Tensor& features, const ClassMeans& means) {
  if (means.empty()) throw DegenerateError("ncm_classify: no class means");
  const std::size_t d = features.cols();
  std::map<int, double> mean_norm;
  for (const auto& [c, m] : means) {
    if (m.size() != d)
      throw ConfigError("ncm_classify: mean of class " + std::to_string(c) + " has dimension " +
                        std::to_string(m.size()) + ", features have " + std::to_string(d));
    double n = 0;
    for (double v : m) n += v * v;
    if (n == 0) throw DegenerateError("ncm_classify: mean of class " + std::to_string(c) + " is zero");
    mean_norm[c] = std::sqrt(n);
  }
  std::vector<int> out(features.rows());
  for (std::size_t i = 0; i < features.rows(); ++i) {
    const auto f = features.row(i);
    double fn = 0;
    for (Real v : f) fn += double(v) * double(v);
    if (fn == 0) throw DegenerateError("ncm_classify: sample " + std::to_string(i) + " has a zero feature vector");
    fn = std::sqrt(fn);
    double best = 0;
    bool first = true;
    for (const auto& [c, m] : means) {
      double dot = 0;
      for (std::size_t j = 0; j < d; ++j) dot += double(f[j]) * m[j];
      const double dist = 1.0 - dot / (fn * mean_norm[c]);
      if (first || dist < best) {
        best = dist;
        out[i] = c;
        first = false;
      }
    }
  }
  return out;
}

}  // namespace flab::cl
