#pragma once

#include <cmath>
#include <filesystem>
#include <map>
#include <nlohmann/json.hpp>
#include <string>
#include <vector>

#include "flab/core/binary_io.hpp"
#include "flab/core/files.hpp"
#include "flab/core/rng.hpp"
#include "flab/data/example.hpp"

namespace flab::data {

struct DatasetConfig {
  int num_classes = kNumShapeClasses;
  int per_class_train = 200;
  int per_class_val = -1;   // -1: derived from the 0.7/0.1/0.2 split ratios
  int per_class_test = -1;  // -1: derived from the 0.7/0.1/0.2 split ratios
  std::uint64_t seed = 0;
  RenderOptions render{};

  int resolved_val() const {
    return per_class_val >= 0 ? per_class_val : int(std::lround(per_class_train * 0.1 / 0.7));
  }
  int resolved_test() const {
    return per_class_test >= 0 ? per_class_test : int(std::lround(per_class_train * 0.2 / 0.7));
  }

  bool operator==(const DatasetConfig& o) const {
    return num_classes == o.num_classes && per_class_train == o.per_class_train &&
           resolved_val() == o.resolved_val() && resolved_test() == o.resolved_test() && seed == o.seed &&
           render.noise_sigma == o.render.noise_sigma && render.brightness_min == o.render.brightness_min &&
           render.antialias == o.render.antialias;
  }
};

struct DatasetSplit {
  std::vector<Example> train;
  std::vector<Example> val;
  std::vector<Example> test;
  int num_classes = 0;
  std::uint64_t seed = 0;

  /// Indices into `split` grouped by label.
  static std::map<int, std::vector<std::size_t>> by_class(const std::vector<Example>& split) {
    std::map<int, std::vector<std::size_t>> out;
    for (std::size_t i = 0; i < split.size(); ++i) out[split[i].label].push_back(i);
    return out;
  }
};

namespace detail {
enum class SplitId : std::uint64_t { kTrain = 1, kVal = 2, kTest = 3 };
}

/// Generates the sprite dataset. Example k of class c in split s is a pure function of
/// (seed, s, c, k), so the splits are disjoint draws and generation order does not matter.
inline DatasetSplit make_dataset(const DatasetConfig& cfg) {
  if (cfg.num_classes < 1 || cfg.num_classes > kNumShapeClasses)
    throw ConfigError("num_classes must be in [1,8], got " + std::to_string(cfg.num_classes));
  if (cfg.per_class_train < 1) throw ConfigError("per_class_train must be >= 1");
  if (cfg.resolved_test() < 1) throw ConfigError("per_class_test must be >= 1");
  if (cfg.resolved_val() < 0) throw ConfigError("per_class_val must be >= 0");

  DatasetSplit ds;
  ds.num_classes = cfg.num_classes;
  ds.seed = cfg.seed;
  const RngStream root(cfg.seed, 0x5A11D5ULL);
  auto fill = [&](std::vector<Example>& out, detail::SplitId split, int per_class) {
    for (int c = 0; c < cfg.num_classes; ++c)
      for (int k = 0; k < per_class; ++k) {
        RngStream rng = root.fork(std::uint64_t(split)).fork(std::uint64_t(c)).fork(std::uint64_t(k));
        out.push_back(render_example(sample_shape(c, rng), rng, cfg.render));
      }
  };
  fill(ds.train, detail::SplitId::kTrain, cfg.per_class_train);
  fill(ds.val, detail::SplitId::kVal, cfg.resolved_val());
  fill(ds.test, detail::SplitId::kTest, cfg.resolved_test());
  return ds;
}

// ---- dataset cache ("FLAB-DS v1") ----
//
// Line 1: "FLAB-DS v1". Line 2: compact JSON config echo (includes the seed).
// Then train, val, test; each is u64 count followed by records:
//   i32 label | u8 has_shape [i32 class, f64 tx, ty, theta, size] |
//   u32 pixels, f32 x pixels | u32 mask, u8 x mask        (all little-endian)

inline constexpr std::string_view kDatasetMagic = "FLAB-DS v1";

inline nlohmann::json dataset_config_json(const DatasetConfig& cfg) {
  return {{"num_classes", cfg.num_classes},
          {"per_class_train", cfg.per_class_train},
          {"per_class_val", cfg.resolved_val()},
          {"per_class_test", cfg.resolved_test()},
          {"seed", cfg.seed},
          {"noise_sigma", cfg.render.noise_sigma},
          {"brightness_min", cfg.render.brightness_min},
          {"antialias", cfg.render.antialias}};
}

inline std::string serialize_dataset(const DatasetSplit& ds, const DatasetConfig& cfg) {
  io::ByteWriter w;
  w.bytes(std::string(kDatasetMagic) + "\n" + dataset_config_json(cfg).dump() + "\n");
  for (const auto* split : {&ds.train, &ds.val, &ds.test}) {
    w.u64(split->size());
    for (const Example& ex : *split) {
      w.i32(ex.label);
      w.u8(ex.shape.has_value());
      if (ex.shape) {
        w.i32(ex.shape->class_id);
        w.f64(ex.shape->tx);
        w.f64(ex.shape->ty);
        w.f64(ex.shape->theta);
        w.f64(ex.shape->size);
      }
      w.u32(std::uint32_t(ex.image.size()));
      for (float v : ex.image) w.f32(v);
      w.u32(std::uint32_t(ex.silhouette.size()));
      for (auto v : ex.silhouette) w.u8(v);
    }
  }
  return w.take();
}

struct LoadedDataset {
  DatasetSplit split;
  DatasetConfig config;
};

inline LoadedDataset parse_dataset(std::string_view bytes) {
  io::ByteReader r(bytes);
  const std::string magic = r.line();
  if (magic != kDatasetMagic) throw ParseError("expected header \"FLAB-DS v1\", got \"" + magic + "\"", 0);
  const std::size_t json_at = r.offset();
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(r.line());
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(std::string("bad config echo: ") + e.what(), json_at);
  }
  LoadedDataset out;
  auto& cfg = out.config;
  try {
    cfg.num_classes = j.at("num_classes").get<int>();
    cfg.per_class_train = j.at("per_class_train").get<int>();
    cfg.per_class_val = j.at("per_class_val").get<int>();
    cfg.per_class_test = j.at("per_class_test").get<int>();
    cfg.seed = j.at("seed").get<std::uint64_t>();
    cfg.render.noise_sigma = j.at("noise_sigma").get<double>();
    cfg.render.brightness_min = j.at("brightness_min").get<double>();
    cfg.render.antialias = j.at("antialias").get<bool>();
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(std::string("bad config echo: ") + e.what(), json_at);
  }
  out.split.num_classes = cfg.num_classes;
  out.split.seed = cfg.seed;
  for (auto* split : {&out.split.train, &out.split.val, &out.split.test}) {
    const std::uint64_t n = r.u64();
    for (std::uint64_t i = 0; i < n; ++i) {
      Example ex;
      ex.label = r.i32();
      if (r.u8()) {
        ShapeSpec s;
        s.class_id = r.i32();
        s.tx = r.f64();
        s.ty = r.f64();
        s.theta = r.f64();
        s.size = r.f64();
        ex.shape = s;
      }
      const std::size_t at = r.offset();
      const std::uint32_t px = r.u32();
      if (px != kImagePixels) throw ParseError("image has " + std::to_string(px) + " pixels", at);
      ex.image.resize(px);
      for (auto& v : ex.image) v = r.f32();
      const std::uint32_t mask = r.u32();
      ex.silhouette.resize(mask);
      for (auto& v : ex.silhouette) v = r.u8();
      split->push_back(std::move(ex));
    }
  }
  if (r.remaining() != 0) throw ParseError("trailing bytes after dataset", r.offset());
  return out;
}

inline void save_dataset(const std::filesystem::path& path, const DatasetSplit& ds, const DatasetConfig& cfg) {
  files::write_atomic(path, serialize_dataset(ds, cfg));
}

inline LoadedDataset load_dataset(const std::filesystem::path& path) {
  return parse_dataset(files::read_all(path));
}

}  // namespace flab::data
