#pragma once

#include <filesystem>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "flab/core/binary_io.hpp"
#include "flab/core/files.hpp"
#include "flab/data/dataset.hpp"

namespace flab::data {

inline constexpr std::uint32_t kIdxImagesMagic = 0x00000803;  // ubyte, 3 dims
inline constexpr std::uint32_t kIdxLabelsMagic = 0x00000801;  // ubyte, 1 dim

namespace detail {

inline std::string hex32(std::uint32_t v) {
  std::ostringstream os;
  os << "0x" << std::hex;
  os.width(8);
  os.fill('0');
  os << v;
  return os.str();
}

}  // namespace detail

/// Bilinear resample of a rows x cols 8-bit image to the 32 x 32 working resolution.
inline std::vector<float> resample_to_working(std::string_view pixels, std::size_t rows, std::size_t cols) {
  std::vector<float> out(kImagePixels);
  auto at = [&](std::size_t r, std::size_t c) {
    return static_cast<float>(static_cast<unsigned char>(pixels[r * cols + c])) / 255.0f;
  };
  for (std::size_t r = 0; r < kImageSide; ++r)
    for (std::size_t c = 0; c < kImageSide; ++c) {
      const double y = std::clamp((double(r) + 0.5) * double(rows) / kImageSide - 0.5, 0.0, double(rows - 1));
      const double x = std::clamp((double(c) + 0.5) * double(cols) / kImageSide - 0.5, 0.0, double(cols - 1));
      const auto r0 = std::size_t(y), c0 = std::size_t(x);
      const std::size_t r1 = std::min(r0 + 1, rows - 1), c1 = std::min(c0 + 1, cols - 1);
      const double fy = y - double(r0), fx = x - double(c0);
      const double v = (1 - fy) * ((1 - fx) * at(r0, c0) + fx * at(r0, c1)) +
                       fy * ((1 - fx) * at(r1, c0) + fx * at(r1, c1));
      out[r * kImageSide + c] = static_cast<float>(v);
    }
  return out;
}

/// Parses IDX image and label buffers (big-endian headers, unsigned byte payload).
/// Images other than 32 x 32 are bilinearly resampled; pixels are scaled to [0,1].
inline std::vector<Example> parse_idx(std::string_view images, std::string_view labels) {
  io::ByteReader ir(images), lr(labels);
  const std::uint32_t im = ir.u32_be();
  if (im != kIdxImagesMagic)
    throw ParseError("bad IDX image magic " + detail::hex32(im) + ", expected 0x00000803", 0);
  const std::uint32_t lm = lr.u32_be();
  if (lm != kIdxLabelsMagic)
    throw ParseError("bad IDX label magic " + detail::hex32(lm) + ", expected 0x00000801", 0);
  const std::uint32_t n_images = ir.u32_be();
  const std::uint32_t rows = ir.u32_be();
  const std::uint32_t cols = ir.u32_be();
  const std::uint32_t n_labels = lr.u32_be();
  if (n_images != n_labels)
    throw ParseError("image count " + std::to_string(n_images) + " != label count " +
                         std::to_string(n_labels),
                     4);
  if (rows == 0 || cols == 0) throw ParseError("zero image dimension", 8);
  std::vector<Example> out;
  out.reserve(n_images);
  for (std::uint32_t i = 0; i < n_images; ++i) {
    Example ex;
    const auto px = ir.raw(std::size_t(rows) * cols);
    ex.image = resample_to_working(px, rows, cols);
    ex.label = lr.u8();
    out.push_back(std::move(ex));
  }
  if (ir.remaining() != 0) throw ParseError("trailing bytes in IDX image file", ir.offset());
  if (lr.remaining() != 0) throw ParseError("trailing bytes in IDX label file", lr.offset());
  return out;
}

inline std::vector<Example> load_idx_examples(const std::filesystem::path& images_path,
                                              const std::filesystem::path& labels_path) {
  return parse_idx(files::read_all(images_path), files::read_all(labels_path));
}

/// Per-class 0.7/0.1/0.2 split in file order. Labels are remapped to 0..C-1 by ascending value.
inline DatasetSplit split_examples(std::vector<Example> examples) {
  DatasetSplit ds;
  std::map<int, std::vector<std::size_t>> groups;
  for (std::size_t i = 0; i < examples.size(); ++i) groups[examples[i].label].push_back(i);
  int next = 0;
  for (auto& [label, idx] : groups) {
    const int mapped = next++;
    const std::size_t n = idx.size();
    const auto n_train = std::size_t(std::lround(0.7 * double(n)));
    const auto n_val = std::size_t(std::lround(0.1 * double(n)));
    for (std::size_t k = 0; k < n; ++k) {
      Example ex = examples[idx[k]];
      ex.label = mapped;
      (k < n_train ? ds.train : k < n_train + n_val ? ds.val : ds.test).push_back(std::move(ex));
    }
  }
  ds.num_classes = next;
  return ds;
}

inline DatasetSplit load_idx(const std::filesystem::path& images_path, const std::filesystem::path& labels_path) {
  return split_examples(load_idx_examples(images_path, labels_path));
}

}  // namespace flab::data
