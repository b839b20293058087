#pragma once

#include <nlohmann/json.hpp>

#include <cmath>
#include <filesystem>
#include <set>
#include <string>
#include <vector>

#include "flab/analysis/rep.hpp"
#include "flab/cl/learners.hpp"
#include "flab/core/error.hpp"
#include "flab/core/files.hpp"
#include "flab/data/dataset.hpp"

namespace flab::harness {

using nlohmann::json;

inline constexpr std::string_view kConfigSchema = "flab-config/1";

struct DatasetSpec {
  std::string source = "sprites";  // sprites | file | idx
  data::DatasetConfig sprites;     // seed is replaced by the run seed
  std::string path;                // source = file
  std::string images, labels;      // source = idx
};

struct ScheduleSpec {
  std::string protocol = "single";  // single | repeated
  std::size_t per_exposure = 1;
  int repetitions = 1;
  std::size_t samples_per_class = 0;  // 0: every sample of the class
};

struct OracleSpec {
  bool enabled = true;
  std::string budget = "step_matched";  // step_matched | epochs
  int epochs = 0;                       // budget = epochs
};

struct AnalysisSpec {
  bool enabled = false;
  std::vector<int> exposures;  // empty: every exposure
  std::size_t samples = 512;
  double theta = 1.0;
  double sigma_fraction = 1.0;
  analysis::ProbeHyper probe;
  analysis::ProbeHyper finetune{1000, 32, 3e-2, 100};
};

struct ExperimentConfig {
  std::string task = "classification";  // classification | sdf | silhouette | autoencoder | proxy
  cl::TaskOptions task_options;
  DatasetSpec dataset;
  cl::LearnerOptions learner;
  ScheduleSpec schedule;
  cl::TrainHyper train;
  OracleSpec oracle;
  AnalysisSpec analysis;
  bool snapshots = false;
  std::vector<std::uint64_t> seeds{1, 2, 3};
  std::string output_dir = "runs/experiment";
};

namespace detail {

/// Typed field access over one JSON object; every key must be consumed, and errors carry the
/// JSON pointer of the offending value.
class ObjectReader {
 public:
  ObjectReader(const json& j, std::string path) : j_(j), path_(std::move(path)) {
    if (!j_.is_object()) throw ConfigError(where() + ": expected an object");
  }

  bool has(const std::string& key) const { return j_.contains(key); }
  std::string child(const std::string& key) const { return path_ + "/" + key; }

  const json* raw(const std::string& key) {
    seen_.insert(key);
    const auto it = j_.find(key);
    return it == j_.end() ? nullptr : &*it;
  }

  template <typename T>
  void read(const std::string& key, T& out) {
    const json* v = raw(key);
    if (v == nullptr) return;
    out = convert<T>(*v, child(key));
  }

  template <typename T>
  T required(const std::string& key) {
    const json* v = raw(key);
    if (v == nullptr) throw ConfigError(child(key) + ": missing required field");
    return convert<T>(*v, child(key));
  }

  void finish() const {
    for (const auto& [k, v] : j_.items())
      if (!seen_.contains(k)) throw ConfigError(child(k) + ": unknown key");
  }

  template <typename T>
  static T convert(const json& v, const std::string& at) {
    if constexpr (std::is_same_v<T, bool>) {
      if (!v.is_boolean()) throw ConfigError(at + ": expected a boolean");
      return v.get<bool>();
    } else if constexpr (std::is_same_v<T, std::string>) {
      if (!v.is_string()) throw ConfigError(at + ": expected a string");
      return v.get<std::string>();
    } else if constexpr (std::is_floating_point_v<T>) {
      if (!v.is_number()) throw ConfigError(at + ": expected a number");
      return v.get<T>();
    } else if constexpr (std::is_unsigned_v<T>) {
      if (!v.is_number_integer() || (v.is_number_integer() && !v.is_number_unsigned() && v.get<std::int64_t>() < 0))
        throw ConfigError(at + ": expected a non-negative integer");
      return v.get<T>();
    } else if constexpr (std::is_integral_v<T>) {
      if (!v.is_number_integer()) throw ConfigError(at + ": expected an integer");
      return v.get<T>();
    } else {
      if (!v.is_array()) throw ConfigError(at + ": expected an array");
      T out;
      for (std::size_t i = 0; i < v.size(); ++i)
        out.push_back(convert<typename T::value_type>(v[i], at + "/" + std::to_string(i)));
      return out;
    }
  }

 private:
  std::string where() const { return path_.empty() ? "/" : path_; }
  const json& j_;
  std::string path_;
  std::set<std::string> seen_;
};

inline void read_probe(ObjectReader& parent, const std::string& key, analysis::ProbeHyper& h) {
  const json* v = parent.raw(key);
  if (v == nullptr) return;
  ObjectReader r(*v, parent.child(key));
  r.read("epochs", h.epochs);
  r.read("batch_size", h.batch_size);
  r.read("lr", h.lr);
  r.read("patience", h.patience);
  r.finish();
  if (h.epochs < 1 || h.batch_size < 1 || !(h.lr > 0) || h.patience < 1)
    throw ConfigError(parent.child(key) + ": epochs, batch_size, lr and patience must be positive");
}

inline json probe_json(const analysis::ProbeHyper& h) {
  return {{"epochs", h.epochs}, {"batch_size", h.batch_size}, {"lr", h.lr}, {"patience", h.patience}};
}

inline const std::set<std::string>& task_names() {
  static const std::set<std::string> names{"classification", "sdf", "silhouette", "autoencoder", "proxy"};
  return names;
}

}  // namespace detail

inline cl::TaskKind task_kind(const std::string& task) {
  if (task == "classification") return cl::TaskKind::kClassification;
  if (task == "sdf" || task == "proxy") return cl::TaskKind::kSdf;
  if (task == "silhouette") return cl::TaskKind::kSilhouette;
  if (task == "autoencoder") return cl::TaskKind::kAutoencoder;
  throw ConfigError("/task: unknown task \"" + task + "\"");
}

/// Validates and materializes every default.
inline ExperimentConfig parse_config(const json& j) {
  using detail::ObjectReader;
  ExperimentConfig c;
  ObjectReader root(j, "");
  const auto schema = root.required<std::string>("schema");
  if (schema != kConfigSchema) throw ConfigError("/schema: expected \"" + std::string(kConfigSchema) + "\"");

  c.task = root.required<std::string>("task");
  if (!detail::task_names().contains(c.task)) throw ConfigError("/task: unknown task \"" + c.task + "\"");
  const bool recon = c.task != "classification";
  c.task_options.kind = task_kind(c.task);
  c.train.epochs = recon ? 50 : 5;

  if (const json* v = root.raw("model")) {
    ObjectReader r(*v, "/model");
    std::string frame = "viewer";
    r.read("frame", frame);
    if (frame != "viewer" && frame != "canonical") throw ConfigError("/model/frame: expected viewer or canonical");
    c.task_options.frame = frame == "viewer" ? data::SdfFrame::kViewer : data::SdfFrame::kCanonical;
    r.read("feature_width", c.task_options.feature_width);
    r.read("code_width", c.task_options.code_width);
    r.read("decoder_width", c.task_options.decoder_width);
    r.read("points_per_image", c.task_options.points_per_image);
    r.read("eval_per_class", c.task_options.eval_per_class);
    r.read("tau", c.task_options.tau);
    r.finish();
    if (c.task_options.feature_width == 0 || c.task_options.code_width == 0 || c.task_options.decoder_width == 0 ||
        c.task_options.points_per_image == 0 || c.task_options.eval_per_class == 0 || !(c.task_options.tau > 0))
      throw ConfigError("/model: widths, point counts and tau must be positive");
  }

  if (const json* v = root.raw("dataset")) {
    ObjectReader r(*v, "/dataset");
    r.read("source", c.dataset.source);
    r.read("num_classes", c.dataset.sprites.num_classes);
    r.read("per_class_train", c.dataset.sprites.per_class_train);
    r.read("per_class_val", c.dataset.sprites.per_class_val);
    r.read("per_class_test", c.dataset.sprites.per_class_test);
    r.read("noise_sigma", c.dataset.sprites.render.noise_sigma);
    r.read("antialias", c.dataset.sprites.render.antialias);
    r.read("path", c.dataset.path);
    r.read("images", c.dataset.images);
    r.read("labels", c.dataset.labels);
    r.finish();
    const auto& s = c.dataset.source;
    if (s != "sprites" && s != "file" && s != "idx") throw ConfigError("/dataset/source: expected sprites, file or idx");
    if (s == "file" && c.dataset.path.empty()) throw ConfigError("/dataset/path: required for source file");
    if (s == "idx" && (c.dataset.images.empty() || c.dataset.labels.empty()))
      throw ConfigError("/dataset: source idx needs images and labels");
    if (s == "idx" && c.task != "classification" && c.task != "autoencoder")
      throw ConfigError("/dataset/source: idx data has no shapes, so only classification and autoencoder apply");
    if (c.dataset.sprites.num_classes < 1 || c.dataset.sprites.num_classes > data::kNumShapeClasses)
      throw ConfigError("/dataset/num_classes: must be in [1, " + std::to_string(data::kNumShapeClasses) + "]");
    if (c.dataset.sprites.per_class_train < 1) throw ConfigError("/dataset/per_class_train: must be >= 1");
  }

  bool budget_given = false;
  {
    const json* v = root.raw("learner");
    if (v == nullptr) throw ConfigError("/learner: missing required field");
    ObjectReader r(*v, "/learner");
    const auto kind = r.required<std::string>("kind");
    try {
      c.learner.kind = cl::learner_from_string(kind);
    } catch (const ConfigError&) {
      throw ConfigError("/learner/kind: unknown learner \"" + kind + "\"");
    }
    budget_given = r.has("budget");
    r.read("budget", c.learner.budget);
    bool use_wg = c.learner.use_wg();
    r.read("use_wg", use_wg);
    if (use_wg != c.learner.use_wg())
      throw ConfigError("/learner/use_wg: " + kind + (use_wg ? " does not support" : " always uses") +
                        " the weighted gradient");
    r.read("bic_val_fraction", c.learner.bic_val_fraction);
    r.read("bic_epochs", c.learner.bic_epochs);
    r.read("bic_lr", c.learner.bic_lr);
    r.read("finetune_epochs", c.learner.finetune_epochs);
    r.read("finetune_lr_scale", c.learner.finetune_lr_scale);
    r.read("proxy_exemplars", c.learner.proxy_exemplars);
    r.finish();
  }
  if (c.task == "proxy" && c.learner.kind != cl::LearnerKind::kNcmProxy)
    throw ConfigError("/learner/kind: task proxy requires learner ncm_proxy");
  if (!budget_given && c.learner.use_exemplars()) {
    const auto train = std::size_t(c.dataset.sprites.num_classes) * std::size_t(c.dataset.sprites.per_class_train);
    c.learner.budget = std::max<std::size_t>(1, std::size_t(std::lround(0.02 * double(train))));
  }
  try {
    c.learner.validate(c.task_options.kind);
  } catch (const ConfigError& e) {
    throw ConfigError(std::string("/learner: ") + e.what());
  }

  if (const json* v = root.raw("schedule")) {
    ObjectReader r(*v, "/schedule");
    r.read("protocol", c.schedule.protocol);
    r.read("per_exposure", c.schedule.per_exposure);
    r.read("repetitions", c.schedule.repetitions);
    r.read("samples_per_class", c.schedule.samples_per_class);
    r.finish();
    if (c.schedule.protocol != "single" && c.schedule.protocol != "repeated")
      throw ConfigError("/schedule/protocol: expected single or repeated");
    if (c.schedule.per_exposure < 1) throw ConfigError("/schedule/per_exposure: must be >= 1");
    if (c.schedule.repetitions < 1) throw ConfigError("/schedule/repetitions: must be >= 1");
    if (c.schedule.protocol == "single" && c.schedule.repetitions != 1)
      throw ConfigError("/schedule/repetitions: single protocol has exactly one repetition");
  }

  if (const json* v = root.raw("train")) {
    ObjectReader r(*v, "/train");
    r.read("epochs", c.train.epochs);
    r.read("batch_size", c.train.batch_size);
    r.read("optimizer", c.train.optimizer);
    r.read("lr", c.train.lr);
    r.read("momentum", c.train.momentum);
    r.read("weight_decay", c.train.weight_decay);
    r.read("lr_schedule", c.train.lr_schedule);
    r.finish();
    if (c.train.epochs < 0) throw ConfigError("/train/epochs: must be >= 0");
    if (c.train.batch_size < 1) throw ConfigError("/train/batch_size: must be >= 1");
    if (c.train.optimizer != "adam" && c.train.optimizer != "sgd") throw ConfigError("/train/optimizer: expected adam or sgd");
    if (!(c.train.lr > 0)) throw ConfigError("/train/lr: must be positive");
    if (c.train.lr_schedule != "constant" && c.train.lr_schedule != "cosine")
      throw ConfigError("/train/lr_schedule: expected constant or cosine");
  }

  if (const json* v = root.raw("batch_oracle")) {
    ObjectReader r(*v, "/batch_oracle");
    r.read("enabled", c.oracle.enabled);
    r.read("budget", c.oracle.budget);
    r.read("epochs", c.oracle.epochs);
    r.finish();
    if (c.oracle.budget != "step_matched" && c.oracle.budget != "epochs")
      throw ConfigError("/batch_oracle/budget: expected step_matched or epochs");
    if (c.oracle.budget == "epochs" && c.oracle.epochs < 1)
      throw ConfigError("/batch_oracle/epochs: must be >= 1 when budget is epochs");
  }

  root.read("snapshots", c.snapshots);
  if (const json* v = root.raw("analysis")) {
    ObjectReader r(*v, "/analysis");
    r.read("enabled", c.analysis.enabled);
    r.read("exposures", c.analysis.exposures);
    r.read("samples", c.analysis.samples);
    r.read("theta", c.analysis.theta);
    r.read("sigma_fraction", c.analysis.sigma_fraction);
    detail::read_probe(r, "probe", c.analysis.probe);
    detail::read_probe(r, "finetune", c.analysis.finetune);
    r.finish();
    if (c.analysis.samples < 4) throw ConfigError("/analysis/samples: must be >= 4");
    if (!(c.analysis.sigma_fraction > 0)) throw ConfigError("/analysis/sigma_fraction: must be positive");
    for (int e : c.analysis.exposures)
      if (e < 1) throw ConfigError("/analysis/exposures: exposure indices start at 1");
  }
  if (c.analysis.enabled) {
    if (!c.snapshots) throw ConfigError("/analysis/enabled: rep-analysis requires \"snapshots\": true");
    if (!c.oracle.enabled) throw ConfigError("/analysis/enabled: rep-analysis compares against the batch oracle");
  }

  root.read("seeds", c.seeds);
  if (c.seeds.empty()) throw ConfigError("/seeds: at least one seed is required");
  root.read("output_dir", c.output_dir);
  root.finish();
  return c;
}

inline json to_json(const ExperimentConfig& c) {
  const auto& t = c.task_options;
  const auto& d = c.dataset;
  const auto& l = c.learner;
  json out = {
      {"schema", kConfigSchema},
      {"task", c.task},
      {"model",
       {{"frame", t.frame == data::SdfFrame::kViewer ? "viewer" : "canonical"},
        {"feature_width", t.feature_width},
        {"code_width", t.code_width},
        {"decoder_width", t.decoder_width},
        {"points_per_image", t.points_per_image},
        {"eval_per_class", t.eval_per_class},
        {"tau", t.tau}}},
      {"dataset",
       {{"source", d.source},
        {"num_classes", d.sprites.num_classes},
        {"per_class_train", d.sprites.per_class_train},
        {"per_class_val", d.sprites.resolved_val()},
        {"per_class_test", d.sprites.resolved_test()},
        {"noise_sigma", d.sprites.render.noise_sigma},
        {"antialias", d.sprites.render.antialias},
        {"path", d.path},
        {"images", d.images},
        {"labels", d.labels}}},
      {"learner",
       {{"kind", cl::to_string(l.kind)},
        {"budget", l.budget},
        {"use_wg", l.use_wg()},
        {"bic_val_fraction", l.bic_val_fraction},
        {"bic_epochs", l.bic_epochs},
        {"bic_lr", l.bic_lr},
        {"finetune_epochs", l.finetune_epochs},
        {"finetune_lr_scale", l.finetune_lr_scale},
        {"proxy_exemplars", l.proxy_exemplars}}},
      {"schedule",
       {{"protocol", c.schedule.protocol},
        {"per_exposure", c.schedule.per_exposure},
        {"repetitions", c.schedule.repetitions},
        {"samples_per_class", c.schedule.samples_per_class}}},
      {"train",
       {{"epochs", c.train.epochs},
        {"batch_size", c.train.batch_size},
        {"optimizer", c.train.optimizer},
        {"lr", c.train.lr},
        {"momentum", c.train.momentum},
        {"weight_decay", c.train.weight_decay},
        {"lr_schedule", c.train.lr_schedule}}},
      {"batch_oracle", {{"enabled", c.oracle.enabled}, {"budget", c.oracle.budget}, {"epochs", c.oracle.epochs}}},
      {"snapshots", c.snapshots},
      {"analysis",
       {{"enabled", c.analysis.enabled},
        {"exposures", c.analysis.exposures},
        {"samples", c.analysis.samples},
        {"theta", c.analysis.theta},
        {"sigma_fraction", c.analysis.sigma_fraction},
        {"probe", detail::probe_json(c.analysis.probe)},
        {"finetune", detail::probe_json(c.analysis.finetune)}}},
      {"seeds", c.seeds},
      {"output_dir", c.output_dir},
  };
  return out;
}

inline ExperimentConfig parse_config_text(std::string_view text) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::parse_error& e) {
    throw ConfigError(std::string("config is not valid JSON: ") + e.what());
  }
  return parse_config(j);
}

inline ExperimentConfig parse_config_file(const std::filesystem::path& path) {
  return parse_config_text(files::read_all(path));
}

}  // namespace flab::harness
