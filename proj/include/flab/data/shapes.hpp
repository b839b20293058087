#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <numbers>
#include <span>
#include <string_view>
#include <vector>

#include "flab/core/error.hpp"

namespace flab::data {

struct Point {
  double x = 0;
  double y = 0;
  bool operator==(const Point&) const = default;
};

inline Point operator+(Point a, Point b) { return {a.x + b.x, a.y + b.y}; }
inline Point operator-(Point a, Point b) { return {a.x - b.x, a.y - b.y}; }
inline Point operator*(double s, Point a) { return {s * a.x, s * a.y}; }
inline double dot(Point a, Point b) { return a.x * b.x + a.y * b.y; }
inline double norm(Point a) { return std::hypot(a.x, a.y); }

enum class ShapeClass : int {
  kDisk = 0,
  kRing,
  kSquare,
  kDiamond,
  kTriangle,
  kCross,
  kCapsule,
  kStar5,
};

inline constexpr int kNumShapeClasses = 8;

inline constexpr std::array<std::string_view, kNumShapeClasses> kShapeNames = {
    "disk", "ring", "square", "diamond", "triangle", "cross", "capsule", "star5"};

/// Scene coordinates span [-1,1]^2. `size` is the shape's characteristic radius in scene
/// units (base size times pose scale); the primitive is defined at radius 1.
struct ShapeSpec {
  int class_id = 0;
  double tx = 0;
  double ty = 0;
  double theta = 0;
  double size = 0.5;

  bool operator==(const ShapeSpec&) const = default;
};

/// Scene size of a shape at pose scale 1.
inline constexpr double kBaseSize = 0.5;

enum class SdfFrame { kViewer, kCanonical };

namespace primitives {

inline double segment_distance(Point p, Point a, Point b) {
  const Point pa = p - a, ba = b - a;
  const double h = std::clamp(dot(pa, ba) / dot(ba, ba), 0.0, 1.0);
  return norm(pa - h * ba);
}

/// Exact signed distance to a simple polygon: min edge distance, sign from even-odd crossing.
inline double polygon(Point p, std::span<const Point> v) {
  double d = std::numeric_limits<double>::infinity();
  bool inside = false;
  for (std::size_t i = 0, j = v.size() - 1; i < v.size(); j = i++) {
    d = std::min(d, segment_distance(p, v[j], v[i]));
    const bool crosses = (v[i].y > p.y) != (v[j].y > p.y);
    if (crosses && p.x < (v[j].x - v[i].x) * (p.y - v[i].y) / (v[j].y - v[i].y) + v[i].x) inside = !inside;
  }
  return inside ? -d : d;
}

inline double disk(Point p, double r) { return norm(p) - r; }

inline double ring(Point p, double r_outer, double r_inner) {
  const double mid = 0.5 * (r_outer + r_inner), half = 0.5 * (r_outer - r_inner);
  return std::abs(norm(p) - mid) - half;
}

inline double capsule(Point p, Point a, Point b, double r) { return segment_distance(p, a, b) - r; }

}  // namespace primitives

/// Unit-radius geometry for each class.
namespace geometry {

inline constexpr double kRingInner = 0.55;
inline constexpr double kSquareHalf = 0.75;
inline constexpr double kDiamondHalfX = 1.0;
inline constexpr double kDiamondHalfY = 0.55;
inline constexpr double kCrossArm = 1.0;
inline constexpr double kCrossHalfWidth = 0.3;
inline constexpr double kCapsuleHalfLength = 0.6;
inline constexpr double kCapsuleRadius = 0.4;
inline constexpr double kStarInner = 0.45;

/// Counter-clockwise vertices for the polygonal classes; empty for curved ones.
inline std::vector<Point> polygon_vertices(ShapeClass c) {
  using std::numbers::pi;
  switch (c) {
    case ShapeClass::kSquare:
      return {{-kSquareHalf, -kSquareHalf}, {kSquareHalf, -kSquareHalf}, {kSquareHalf, kSquareHalf},
              {-kSquareHalf, kSquareHalf}};
    case ShapeClass::kDiamond:
      return {{0, -kDiamondHalfY}, {kDiamondHalfX, 0}, {0, kDiamondHalfY}, {-kDiamondHalfX, 0}};
    case ShapeClass::kTriangle: {
      std::vector<Point> v;
      for (int k = 0; k < 3; ++k) {
        const double a = pi / 2 + 2 * pi * k / 3;
        v.push_back({std::cos(a), std::sin(a)});
      }
      return v;
    }
    case ShapeClass::kCross: {
      const double a = kCrossArm, w = kCrossHalfWidth;
      return {{w, -a}, {w, -w}, {a, -w}, {a, w}, {w, w}, {w, a},
              {-w, a}, {-w, w}, {-a, w}, {-a, -w}, {-w, -w}, {-w, -a}};
    }
    case ShapeClass::kStar5: {
      std::vector<Point> v;
      for (int k = 0; k < 10; ++k) {
        const double a = pi / 2 + pi * k / 5;
        const double r = k % 2 == 0 ? 1.0 : kStarInner;
        v.push_back({r * std::cos(a), r * std::sin(a)});
      }
      return v;
    }
    default:
      return {};
  }
}

inline ShapeClass to_class(int id) {
  if (id < 0 || id >= kNumShapeClasses)
    throw ConfigError("shape class id " + std::to_string(id) + " outside [0,8)");
  return static_cast<ShapeClass>(id);
}

/// Signed distance for the unit-radius primitive of class c at the local origin.
inline double unit_sdf(ShapeClass c, Point p) {
  switch (c) {
    case ShapeClass::kDisk:
      return primitives::disk(p, 1.0);
    case ShapeClass::kRing:
      return primitives::ring(p, 1.0, kRingInner);
    case ShapeClass::kCapsule:
      return primitives::capsule(p, {-kCapsuleHalfLength, 0}, {kCapsuleHalfLength, 0}, kCapsuleRadius);
    default: {
      thread_local std::array<std::vector<Point>, kNumShapeClasses> cache;
      auto& v = cache[static_cast<int>(c)];
      if (v.empty()) v = polygon_vertices(c);
      return primitives::polygon(p, v);
    }
  }
}

}  // namespace geometry

/// Maps a scene point into the shape's local unit frame (inverse pose).
inline Point to_local(const ShapeSpec& s, Point p) {
  const Point d = p - Point{s.tx, s.ty};
  const double c = std::cos(s.theta), sn = std::sin(s.theta);
  return {(c * d.x + sn * d.y) / s.size, (-sn * d.x + c * d.y) / s.size};
}

inline Point to_scene(const ShapeSpec& s, Point local) {
  const double c = std::cos(s.theta), sn = std::sin(s.theta);
  const Point r{s.size * (c * local.x - sn * local.y), s.size * (sn * local.x + c * local.y)};
  return r + Point{s.tx, s.ty};
}

/// Exact signed distance (negative inside).
///
/// Viewer frame queries the posed shape in scene coordinates. Canonical frame queries the
/// same class centered, upright and at base size, i.e. with the whole pose inverted.
inline double sdf_oracle(const ShapeSpec& shape, SdfFrame frame, Point p) {
  const ShapeClass c = geometry::to_class(shape.class_id);
  if (frame == SdfFrame::kCanonical) return kBaseSize * geometry::unit_sdf(c, (1.0 / kBaseSize) * p);
  return shape.size * geometry::unit_sdf(c, to_local(shape, p));
}

inline std::vector<double> sdf_oracle(const ShapeSpec& shape, SdfFrame frame,
                                      std::span<const Point> points) {
  std::vector<double> out(points.size());
  for (std::size_t i = 0; i < points.size(); ++i) out[i] = sdf_oracle(shape, frame, points[i]);
  return out;
}

/// 1 iff sdf <= isosurface (non-strict).
inline int occupancy_from_sdf(double sdf, double isosurface = 0.0) { return sdf <= isosurface ? 1 : 0; }

struct Box {
  double xmin, xmax, ymin, ymax;
};

/// Axis-aligned bounds of the posed shape in scene coordinates.
inline Box scene_bounds(const ShapeSpec& s) {
  const ShapeClass c = geometry::to_class(s.class_id);
  std::vector<Point> pts = geometry::polygon_vertices(c);
  double pad = 0;
  if (c == ShapeClass::kDisk || c == ShapeClass::kRing) {
    pts = {{0, 0}};
    pad = s.size;
  } else if (c == ShapeClass::kCapsule) {
    pts = {{-geometry::kCapsuleHalfLength, 0}, {geometry::kCapsuleHalfLength, 0}};
    pad = s.size * geometry::kCapsuleRadius;
  }
  Box b{1e300, -1e300, 1e300, -1e300};
  for (const Point& l : pts) {
    const Point q = to_scene(s, l);
    b.xmin = std::min(b.xmin, q.x - pad);
    b.xmax = std::max(b.xmax, q.x + pad);
    b.ymin = std::min(b.ymin, q.y - pad);
    b.ymax = std::max(b.ymax, q.y + pad);
  }
  return b;
}

inline bool fits_in_scene(const ShapeSpec& s) {
  const Box b = scene_bounds(s);
  return b.xmin >= -1 && b.xmax <= 1 && b.ymin >= -1 && b.ymax <= 1;
}

}  // namespace flab::data
