#pragma once

#include <cmath>
#include <algorithm>
#include <cstdint>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

#include "flab/core/error.hpp"
#include "flab/data/shapes.hpp"

namespace flab::metrics {

using data::Point;

struct FScore {
  double precision = 0;
  double recall = 0;
  double fscore = 0;
};

namespace detail {

/// Uniform hash grid with cell size tau; "is any point within tau of q" checks the 3x3
/// neighbourhood of q's cell.
class RadiusIndex {
 public:
  RadiusIndex(std::span<const Point> pts, double tau) : pts_(pts), tau_(tau) {
    for (std::size_t i = 0; i < pts.size(); ++i) cells_[key(cell(pts[i].x), cell(pts[i].y))].push_back(i);
  }

  bool any_within(Point q) const {
    const std::int64_t cx = cell(q.x), cy = cell(q.y);
    const double t2 = tau_ * tau_;
    for (std::int64_t dx = -1; dx <= 1; ++dx)
      for (std::int64_t dy = -1; dy <= 1; ++dy) {
        auto it = cells_.find(key(cx + dx, cy + dy));
        if (it == cells_.end()) continue;
        for (std::size_t i : it->second) {
          const double ex = pts_[i].x - q.x, ey = pts_[i].y - q.y;
          if (ex * ex + ey * ey <= t2) return true;
        }
      }
    return false;
  }

 private:
  std::int64_t cell(double v) const { return static_cast<std::int64_t>(std::floor(v / tau_)); }
  static std::uint64_t key(std::int64_t x, std::int64_t y) {
    return (static_cast<std::uint64_t>(x) * 0x9E3779B97F4A7C15ULL) ^ static_cast<std::uint64_t>(y);
  }

  std::span<const Point> pts_;
  double tau_;
  std::unordered_map<std::uint64_t, std::vector<std::size_t>> cells_;
};

inline double fraction_within(std::span<const Point> queries, const RadiusIndex& index) {
  std::size_t hit = 0;
  for (const Point& q : queries) hit += index.any_within(q) ? 1 : 0;
  return static_cast<double>(hit) / static_cast<double>(queries.size());
}

}  // namespace detail

/// Precision: share of predicted points within tau of a ground-truth point. Recall: share of
/// ground-truth points within tau of a prediction. An empty prediction scores 0.
inline FScore fscore_at_tau(std::span<const Point> pred, std::span<const Point> gt, double tau) {
  if (!(tau > 0)) throw ConfigError("fscore_at_tau: tau must be positive");
  if (gt.empty()) throw ConfigError("fscore_at_tau: ground truth point set is empty");
  if (pred.empty()) return {};
  FScore f;
  f.precision = detail::fraction_within(pred, detail::RadiusIndex(gt, tau));
  f.recall = detail::fraction_within(gt, detail::RadiusIndex(pred, tau));
  const double s = f.precision + f.recall;
  f.fscore = s > 0 ? 2 * f.precision * f.recall / s : 0.0;
  return f;
}

/// |a & b| / |a | b|; two empty masks agree perfectly (1.0).
template <typename MaskA, typename MaskB>
double iou_mask(const MaskA& a, const MaskB& b) {
  if (std::size(a) != std::size(b)) throw ConfigError("iou_mask: mask sizes differ");
  std::size_t inter = 0, uni = 0;
  for (std::size_t i = 0; i < std::size(a); ++i) {
    const bool x = a[i] != 0, y = b[i] != 0;
    inter += (x && y) ? 1 : 0;
    uni += (x || y) ? 1 : 0;
  }
  return uni == 0 ? 1.0 : static_cast<double>(inter) / static_cast<double>(uni);
}

template <typename A, typename B>
double mse_image(const A& pred, const B& target) {
  if (std::size(pred) != std::size(target)) throw ConfigError("mse_image: sizes differ");
  if (std::size(pred) == 0) throw ConfigError("mse_image: empty image");
  double s = 0;
  for (std::size_t i = 0; i < std::size(pred); ++i) {
    const double d = double(pred[i]) - double(target[i]);
    s += d * d;
  }
  return s / static_cast<double>(std::size(pred));
}

struct Accuracy {
  double overall = 0;
  std::map<int, double> per_class;
};

/// Exact-match rates restricted to samples whose label is in `classes` (all labels when empty).
inline Accuracy accuracy(std::span<const int> preds, std::span<const int> labels,
                         std::span<const int> classes = {}) {
  if (preds.size() != labels.size()) throw ConfigError("accuracy: predictions and labels differ in length");
  std::map<int, std::pair<std::size_t, std::size_t>> counts;  // class -> (correct, total)
  std::size_t correct = 0, total = 0;
  for (std::size_t i = 0; i < labels.size(); ++i) {
    if (!classes.empty() && std::find(classes.begin(), classes.end(), labels[i]) == classes.end()) continue;
    auto& c = counts[labels[i]];
    const bool ok = preds[i] == labels[i];
    c.first += ok;
    ++c.second;
    correct += ok;
    ++total;
  }
  if (total == 0) throw DegenerateError("accuracy: no samples match the class filter");
  Accuracy a;
  a.overall = static_cast<double>(correct) / static_cast<double>(total);
  for (auto& [cls, c] : counts) a.per_class[cls] = static_cast<double>(c.first) / static_cast<double>(c.second);
  return a;
}

/// One point of a learning curve: a metric after an exposure, overall and per seen class.
struct CurvePoint {
  int exposure = 0;  // 1-based
  std::string metric;
  double overall = 0;
  std::map<int, double> per_class;
  int classes_seen = 0;
};

/// Overall value as the mean over seen classes.
inline double mean_over_classes(const std::map<int, double>& per_class) {
  if (per_class.empty()) throw DegenerateError("mean over an empty class set");
  double s = 0;
  for (const auto& [c, v] : per_class) s += v;
  return s / static_cast<double>(per_class.size());
}

struct ClassForgetting {
  int first_exposure = 0;
  double just_learned = 0;
  double final_value = 0;
  double drop = 0;
};

/// Per class: value at the first exposure where it appears in the curve, final value, and
/// their difference. `classes` restricts the report (every class in the curve when empty).
inline std::map<int, ClassForgetting> forgetting_summary(std::span<const CurvePoint> curve,
                                                         std::span<const int> classes = {}) {
  if (curve.empty()) throw DegenerateError("forgetting_summary: empty curve");
  std::map<int, ClassForgetting> out;
  for (const auto& pt : curve)
    for (const auto& [c, v] : pt.per_class)
      if (!out.contains(c)) out[c] = {pt.exposure, v, 0, 0};
  for (int c : classes)
    if (!out.contains(c)) throw DegenerateError("forgetting_summary: class " + std::to_string(c) + " never learned");
  const auto& last = curve.back().per_class;
  for (auto it = out.begin(); it != out.end();) {
    if (!classes.empty() && std::find(classes.begin(), classes.end(), it->first) == classes.end()) {
      it = out.erase(it);
      continue;
    }
    auto f = last.find(it->first);
    it->second.final_value = f == last.end() ? 0.0 : f->second;
    it->second.drop = it->second.just_learned - it->second.final_value;
    ++it;
  }
  return out;
}

}  // namespace flab::metrics
