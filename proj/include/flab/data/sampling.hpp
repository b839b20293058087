#pragma once

#include <array>
#include <cmath>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "flab/core/log.hpp"
#include "flab/core/rng.hpp"
#include "flab/data/shapes.hpp"

namespace flab::data {

/// |sdf| bands used for training points: near [0, 0.03), mid [0.03, 0.1), far [0.1, 1.1).
struct SdfBand {
  double lo;
  double hi;
};
inline constexpr std::array<SdfBand, 3> kSdfBands = {{{0.0, 0.03}, {0.03, 0.1}, {0.1, 1.1}}};
inline constexpr std::size_t kMaxTriesPerPoint = 10000;

/// Points per band: mid and far get round(0.3 n) and round(0.2 n); the near band takes the rest.
inline std::array<std::size_t, 3> band_counts(std::size_t n) {
  const auto mid = static_cast<std::size_t>(std::llround(0.3 * double(n)));
  const auto far = static_cast<std::size_t>(std::llround(0.2 * double(n)));
  return {n - mid - far, mid, far};
}

struct SdfSamples {
  std::vector<Point> points;
  std::vector<double> sdf;
  std::vector<int> band;  // band each point was drawn for
  std::size_t fallbacks = 0;
};

/// Band-stratified rejection sampling of query points in [-1,1]^2.
///
/// A band that yields nothing within kMaxTriesPerPoint draws is treated as unreachable for
/// this shape; its remaining points come from the nearest band that still produces samples.
inline SdfSamples sample_sdf_points(const ShapeSpec& shape, std::size_t n, RngStream& rng,
                                    SdfFrame frame = SdfFrame::kViewer) {
  if (n < 10) throw ConfigError("sample_sdf_points needs n >= 10, got " + std::to_string(n));
  SdfSamples out;
  out.points.reserve(n);
  out.sdf.reserve(n);
  out.band.reserve(n);
  const auto counts = band_counts(n);
  std::array<bool, 3> reachable{true, true, true};

  auto draw = [&](int b) -> bool {
    for (std::size_t t = 0; t < kMaxTriesPerPoint; ++t) {
      const Point p{rng.uniform(-1.0, 1.0), rng.uniform(-1.0, 1.0)};
      const double s = sdf_oracle(shape, frame, p);
      const double a = std::abs(s);
      if (a >= kSdfBands[b].lo && a < kSdfBands[b].hi) {
        out.points.push_back(p);
        out.sdf.push_back(s);
        out.band.push_back(b);
        return true;
      }
    }
    return false;
  };

  for (int b = 0; b < 3; ++b) {
    for (std::size_t k = 0; k < counts[b]; ++k) {
      if (reachable[b] && draw(b)) continue;
      if (reachable[b]) {
        reachable[b] = false;
        log::warn("sdf band " + std::to_string(b) + " unreachable for class " +
                  std::to_string(shape.class_id) + "; falling back to the nearest band");
      }
      bool ok = false;
      for (int step = 1; step < 3 && !ok; ++step)
        for (int nb : {b - step, b + step})
          if (!ok && nb >= 0 && nb < 3 && reachable[nb]) {
            ok = draw(nb);
            if (!ok) reachable[nb] = false;
          }
      if (!ok) throw DegenerateError("no sdf band reachable for class " + std::to_string(shape.class_id));
      ++out.fallbacks;
    }
  }
  return out;
}

/// Scalar field sampled at the nodes of an R x R lattice spanning [-1,1]^2;
/// node (i, j) sits at x = -1 + 2j/(R-1), y = -1 + 2i/(R-1).
struct SdfGrid {
  std::size_t resolution = 0;
  std::vector<double> values;

  double spacing() const { return 2.0 / static_cast<double>(resolution - 1); }
  Point node(std::size_t i, std::size_t j) const {
    return {-1.0 + spacing() * double(j), -1.0 + spacing() * double(i)};
  }
  double at(std::size_t i, std::size_t j) const { return values[i * resolution + j]; }
};

inline SdfGrid make_grid(std::size_t resolution, const std::function<double(Point)>& field) {
  SdfGrid g{resolution, std::vector<double>(resolution * resolution)};
  for (std::size_t i = 0; i < resolution; ++i)
    for (std::size_t j = 0; j < resolution; ++j) g.values[i * resolution + j] = field(g.node(i, j));
  return g;
}

inline SdfGrid sdf_grid(const ShapeSpec& shape, SdfFrame frame, std::size_t resolution) {
  return make_grid(resolution, [&](Point p) { return sdf_oracle(shape, frame, p); });
}

/// Zero-level-set points: one per grid edge whose endpoints differ in occupancy
/// (sdf <= 0 vs > 0), placed by linear interpolation. Returns nullopt when the field has
/// no surface. When more than m crossings exist, m of them are kept uniformly at random.
inline std::optional<std::vector<Point>> extract_boundary_points(const SdfGrid& grid, std::size_t m,
                                                                 RngStream& rng) {
  if (grid.resolution < 64)
    throw ConfigError("boundary extraction needs resolution >= 64, got " +
                      std::to_string(grid.resolution));
  std::vector<Point> pts;
  const std::size_t r = grid.resolution;
  auto crossing = [&](std::size_t i0, std::size_t j0, std::size_t i1, std::size_t j1) {
    const double a = grid.at(i0, j0), b = grid.at(i1, j1);
    if ((a <= 0) == (b <= 0)) return;
    const double t = a / (a - b);
    const Point p0 = grid.node(i0, j0), p1 = grid.node(i1, j1);
    pts.push_back(p0 + t * (p1 - p0));
  };
  for (std::size_t i = 0; i < r; ++i)
    for (std::size_t j = 0; j < r; ++j) {
      if (j + 1 < r) crossing(i, j, i, j + 1);
      if (i + 1 < r) crossing(i, j, i + 1, j);
    }
  if (pts.empty()) return std::nullopt;
  if (pts.size() <= m) return pts;
  auto keep = rng.sample_without_replacement(pts.size(), m);
  std::sort(keep.begin(), keep.end());
  std::vector<Point> out;
  out.reserve(m);
  for (std::size_t k : keep) out.push_back(pts[k]);
  return out;
}

inline std::optional<std::vector<Point>> extract_boundary_points(const ShapeSpec& shape, SdfFrame frame,
                                                                 std::size_t resolution, std::size_t m,
                                                                 RngStream& rng) {
  return extract_boundary_points(sdf_grid(shape, frame, resolution), m, rng);
}

}  // namespace flab::data
