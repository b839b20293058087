#pragma once

#include <cstdint>
#include <optional>
#include <vector>

#include "flab/core/rng.hpp"
#include "flab/data/shapes.hpp"

namespace flab::data {

inline constexpr std::size_t kImageSide = 32;
inline constexpr std::size_t kImagePixels = kImageSide * kImageSide;

/// Scene coordinates of pixel (row, col); row 0 is the top of the image (y = +1).
inline Point pixel_center(std::size_t row, std::size_t col, std::size_t side = kImageSide) {
  const double step = 2.0 / static_cast<double>(side);
  return {-1.0 + (static_cast<double>(col) + 0.5) * step, 1.0 - (static_cast<double>(row) + 0.5) * step};
}

struct Example {
  std::vector<float> image;           // kImagePixels grayscale values in [0,1], row-major
  std::vector<std::uint8_t> silhouette;  // kImagePixels, empty for external images
  int label = 0;
  std::optional<ShapeSpec> shape;     // absent for external (IDX) images

  bool operator==(const Example&) const = default;
};

struct RenderOptions {
  double noise_sigma = 0.05;
  double brightness_min = 0.7;  // foreground intensity drawn from [brightness_min, 1]
  bool antialias = true;
};

/// Renders the silhouette (sdf <= 0 at pixel centers) and a grayscale image.
///
/// With antialiasing, pixels outside the silhouette get the fractional coverage
/// clamp(0.5 - sdf/pixel, 0, 1); pixels inside are always fully lit.
inline Example render_example(const ShapeSpec& shape, RngStream& rng, const RenderOptions& opt = {}) {
  Example ex;
  ex.label = shape.class_id;
  ex.shape = shape;
  ex.image.resize(kImagePixels);
  ex.silhouette.resize(kImagePixels);
  const double brightness = opt.brightness_min >= 1.0 ? 1.0 : rng.uniform(opt.brightness_min, 1.0);
  const double pixel = 2.0 / static_cast<double>(kImageSide);
  for (std::size_t r = 0; r < kImageSide; ++r) {
    for (std::size_t c = 0; c < kImageSide; ++c) {
      const std::size_t i = r * kImageSide + c;
      const double s = sdf_oracle(shape, SdfFrame::kViewer, pixel_center(r, c));
      ex.silhouette[i] = static_cast<std::uint8_t>(occupancy_from_sdf(s));
      double coverage = ex.silhouette[i] ? 1.0 : 0.0;
      if (opt.antialias && !ex.silhouette[i]) coverage = std::clamp(0.5 - s / pixel, 0.0, 1.0);
      double v = brightness * coverage;
      if (opt.noise_sigma > 0) v += rng.normal(0.0, opt.noise_sigma);
      ex.image[i] = static_cast<float>(std::clamp(v, 0.0, 1.0));
    }
  }
  return ex;
}

/// Draws a pose for class_id, rejection-resampling until the shape lies inside the scene.
inline ShapeSpec sample_shape(int class_id, RngStream& rng) {
  geometry::to_class(class_id);
  for (;;) {
    ShapeSpec s;
    s.class_id = class_id;
    s.tx = rng.uniform(-0.4, 0.4);
    s.ty = rng.uniform(-0.4, 0.4);
    s.theta = rng.uniform(0.0, 2.0 * std::numbers::pi);
    s.size = kBaseSize * rng.uniform(0.5, 1.0);
    if (fits_in_scene(s)) return s;
  }
}

}  // namespace flab::data
