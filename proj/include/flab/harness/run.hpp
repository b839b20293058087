#pragma once

#include <nlohmann/json.hpp>

#include <atomic>
#include <chrono>
#include <filesystem>
#include <map>
#include <set>
#include <string>
#include <thread>
#include <vector>

#include "flab/analysis/rep.hpp"
#include "flab/cl/learners.hpp"
#include "flab/cl/schedule.hpp"
#include "flab/core/files.hpp"
#include "flab/core/log.hpp"
#include "flab/data/dataset.hpp"
#include "flab/data/idx.hpp"
#include "flab/harness/config.hpp"
#include "flab/harness/records.hpp"
#include "flab/nn/checkpoint.hpp"

namespace flab::harness {

namespace fs = std::filesystem;

inline constexpr std::string_view kEngineVersion = "0.1.0";
inline constexpr std::string_view kManifestSchema = "flab-manifest/1";

inline data::DatasetSplit load_data(const ExperimentConfig& c, std::uint64_t seed) {
  if (c.dataset.source == "file") return data::load_dataset(c.dataset.path).split;
  if (c.dataset.source == "idx") return data::load_idx(c.dataset.images, c.dataset.labels);
  data::DatasetConfig dc = c.dataset.sprites;
  dc.seed = seed;
  return data::make_dataset(dc);
}

inline cl::ExposureSchedule make_schedule(const ExperimentConfig& c, std::vector<int> classes, std::uint64_t seed) {
  const auto rule = c.schedule.samples_per_class == 0 ? cl::SampleRule::all()
                                                      : cl::SampleRule::with_replacement(c.schedule.samples_per_class);
  if (c.schedule.protocol == "repeated")
    return cl::schedule_repeated(std::move(classes), c.schedule.per_exposure, c.schedule.repetitions, rule, seed);
  auto s = cl::schedule_single(std::move(classes), c.schedule.per_exposure, seed);
  for (auto& e : s.exposures) e.rule = rule;
  return s;
}

inline fs::path seed_dir(const fs::path& out, std::uint64_t seed) { return out / ("seed_" + std::to_string(seed)); }
inline fs::path snapshot_path(const fs::path& dir, int exposure) {
  return dir / "snapshots" / ("exposure_" + std::to_string(exposure) + ".ckpt");
}
inline fs::path batch_snapshot_path(const fs::path& dir) { return dir / "snapshots" / "batch.ckpt"; }

/// Feature-tap output of a loaded snapshot, in chunks.
inline Tensor snapshot_features(const nn::Model& m, const Tensor& images, std::span<const std::size_t> rows) {
  constexpr std::size_t kChunk = 256;
  Tensor out;
  for (std::size_t b = 0; b < rows.size(); b += kChunk) {
    const std::span<const std::size_t> part = rows.subspan(b, std::min(kChunk, rows.size() - b));
    Tensor f = m.features(gather_rows(images, part));
    if (f.rank() != 2) f = std::move(f).reshaped({f.dim(0), f.size() / f.dim(0)});
    if (out.empty()) out = Tensor({rows.size(), f.cols()});
    std::copy_n(f.data(), f.size(), out.data() + b * f.cols());
  }
  return out;
}

namespace detail {

inline std::vector<std::size_t> iota_rows(std::size_t n) {
  std::vector<std::size_t> v(n);
  std::iota(v.begin(), v.end(), 0);
  return v;
}

inline double cka_or_nan(const Tensor& x, const Tensor& y, const analysis::Kernel& k) {
  try {
    return analysis::cka(x, y, k);
  } catch (const DegenerateError& e) {
    log::warn(std::string("cka skipped: ") + e.what());
    return std::nan("");
  }
}

}  // namespace detail

/// CKA to the batch model, VF probes and FC finetuning for every probed snapshot of one seed.
inline std::vector<MetricRecord> analyze_seed(const ExperimentConfig& c, const cl::TaskData& td, const fs::path& dir,
                                              std::uint64_t seed, int exposures) {
  const auto& a = c.analysis;
  std::vector<MetricRecord> out;
  const RngStream root(seed, 0xA11AULL);
  const nn::Model batch = nn::load_checkpoint(batch_snapshot_path(dir));

  const std::size_t n_train = td.train_labels.size(), n_test = td.test_labels.size();
  RngStream pick = root.fork("probe-rows");
  auto probe_rows = pick.sample_without_replacement(n_train, std::min(a.samples, n_train));
  std::sort(probe_rows.begin(), probe_rows.end());
  auto test_rows = pick.sample_without_replacement(n_test, std::min(a.samples, n_test));
  std::sort(test_rows.begin(), test_rows.end());
  std::map<int, std::vector<std::size_t>> test_pos_by_class;
  for (std::size_t i = 0; i < test_rows.size(); ++i) test_pos_by_class[td.test_labels[test_rows[i]]].push_back(i);
  const auto all_train = detail::iota_rows(n_train), all_val = detail::iota_rows(td.val_labels.size()),
             all_test = detail::iota_rows(n_test);

  const Tensor b_probe = snapshot_features(batch, td.train_images, probe_rows);
  const Tensor b_test = snapshot_features(batch, td.test_images, test_rows);
  const auto y_probe = analysis::vf_targets(b_probe, a.theta), y_test = analysis::vf_targets(b_test, a.theta);
  const analysis::Kernel kernel{analysis::KernelKind::kRbf, a.sigma_fraction};

  auto finetune = [&](const nn::Model& m, std::uint64_t id) {
    analysis::LabeledFeatures tr{snapshot_features(m, td.train_images, all_train), td.train_labels};
    analysis::LabeledFeatures va{td.val_labels.empty() ? Tensor({0, tr.x.cols()})
                                                       : snapshot_features(m, td.val_images, all_val),
                                 td.val_labels};
    analysis::LabeledFeatures te{snapshot_features(m, td.test_images, all_test), td.test_labels};
    return analysis::finetune_fc_accuracy(tr, va, te, td.num_classes, a.finetune, root.fork("finetune", id));
  };
  out.push_back({exposures, seed, "fc_finetune", "analysis:batch", finetune(batch, 0)});

  std::vector<int> probed = a.exposures;
  if (probed.empty())
    for (int t = 1; t <= exposures; ++t) probed.push_back(t);
  for (int t : probed) {
    if (t > exposures) throw ConfigError("/analysis/exposures: exposure " + std::to_string(t) + " was never run");
    const nn::Model m = nn::load_checkpoint(snapshot_path(dir, t));
    const Tensor f_probe = snapshot_features(m, td.train_images, probe_rows);
    const Tensor f_test = snapshot_features(m, td.test_images, test_rows);

    out.push_back({t, seed, "cka", "analysis:cka", detail::cka_or_nan(f_test, b_test, kernel)});
    for (const auto& [cls, pos] : test_pos_by_class) {
      if (pos.size() < 4) continue;
      out.push_back({t, seed, "cka", class_scope(cls),
                     detail::cka_or_nan(gather_rows(f_test, pos), gather_rows(b_test, pos), kernel)});
    }

    try {
      const auto vf = analysis::train_vf_probes(f_probe, y_probe.y, f_test, y_test.y, a.probe,
                                                root.fork("vf", std::uint64_t(t)));
      out.push_back({t, seed, "vf_probe", "analysis:vf_probe", vf.mean_accuracy});
      out.push_back({t, seed, "vf_degenerate_units", "analysis:vf_probe", double(vf.degenerate_count)});
      for (const auto& [cls, pos] : test_pos_by_class)
        out.push_back({t, seed, "vf_probe", class_scope(cls), analysis::vf_accuracy_on(vf, y_test.y, pos)});
    } catch (const DegenerateError& e) {
      log::warn(std::string("vf probes skipped: ") + e.what());
      out.push_back({t, seed, "vf_probe", "analysis:vf_probe", std::nan("")});
    }

    out.push_back({t, seed, "fc_finetune", "analysis:fc_finetune", finetune(m, std::uint64_t(t))});
  }
  return out;
}

struct SeedOutcome {
  std::uint64_t seed = 0;
  bool ok = false;
  std::string error;
  double wall_seconds = 0;
  std::uint64_t steps = 0;
};

/// Runs one seed end to end and writes its metrics file; returns the records.
inline std::vector<MetricRecord> run_seed(const ExperimentConfig& c, const fs::path& out, std::uint64_t seed,
                                          SeedOutcome& outcome) {
  const fs::path dir = seed_dir(out, seed);
  const auto ds = load_data(c, seed);
  cl::TaskOptions opt = c.task_options;
  opt.kind = task_kind(c.task);
  const auto td = std::make_shared<const cl::TaskData>(cl::make_task_data(ds, opt, seed));

  std::vector<int> classes;
  for (const auto& [cls, idx] : td->train_by_class) classes.push_back(cls);
  const auto sched = make_schedule(c, classes, seed);
  cl::Learner learner(cl::make_task_net(td), c.learner, c.train, seed);
  RngStream sample_rng(seed, 0x5A3D1EULL);

  std::vector<MetricRecord> records;
  for (const auto& e : sched.exposures) {
    const auto samples = cl::exposure_samples(e, td->train_by_class, sample_rng);
    const auto r = learner.run_exposure(e, samples);
    for (const auto& p : r.curves)
      for (auto& rec : curve_records(p, seed)) records.push_back(std::move(rec));
    log::info("seed " + std::to_string(seed) + " exposure " + std::to_string(r.exposure) + "/" +
              std::to_string(sched.exposures.size()) + " " + r.curves.front().metric + "=" +
              format_value(r.curves.front().overall) + " (" + format_value(r.wall_seconds) + " s)");
    if (c.snapshots) nn::save_checkpoint(learner.net().feature_model(), snapshot_path(dir, r.exposure));
  }
  const int exposures = learner.exposures_done();
  outcome.steps = learner.total_steps();

  if (c.oracle.enabled) {
    auto batch = cl::make_task_net(td);
    const RngStream root(seed, 0xBA7CULL);
    batch->reset(root.fork("init"));
    RngStream slots = root.fork("slots");
    batch->add_classes(classes, slots);
    const auto pool = detail::iota_rows(td->train_labels.size());
    const std::size_t per_epoch = (pool.size() + c.train.batch_size - 1) / c.train.batch_size;
    const std::uint64_t steps =
        c.oracle.budget == "step_matched" ? learner.total_steps() : std::uint64_t(c.oracle.epochs) * per_epoch;
    if (steps > 0) cl::train_steps(*batch, pool, steps, c.train, root.fork("train"));
    const auto ev = batch->evaluate(classes);
    records.push_back({exposures, seed, ev.metric, "analysis:batch", ev.overall});
    records.push_back({exposures, seed, "batch_steps", "analysis:batch", double(steps)});
    if (c.snapshots) nn::save_checkpoint(batch->feature_model(), batch_snapshot_path(dir));
  }

  if (c.analysis.enabled)
    for (auto& rec : analyze_seed(c, *td, dir, seed, exposures)) records.push_back(std::move(rec));

  write_metrics_csv(dir / "metrics.csv", records);
  return records;
}

struct RunManifest {
  json config;
  std::vector<SeedOutcome> seeds;
  std::vector<std::pair<std::string, std::string>> files;  // path relative to the run dir, sha256

  bool all_ok() const {
    return std::all_of(seeds.begin(), seeds.end(), [](const SeedOutcome& s) { return s.ok; });
  }
};

inline json to_json(const RunManifest& m) {
  json seeds = json::array(), inventory = json::array();
  for (const auto& s : m.seeds)
    seeds.push_back({{"seed", s.seed},
                     {"status", s.ok ? "ok" : "failed"},
                     {"error", s.error},
                     {"wall_seconds", s.wall_seconds},
                     {"steps", s.steps}});
  for (const auto& [p, h] : m.files) inventory.push_back({{"path", p}, {"sha256", h}});
  return {{"schema", kManifestSchema},
          {"engine_version", kEngineVersion},
          {"config", m.config},
          {"seeds", seeds},
          {"files", inventory}};
}

/// Every seed runs in isolation on up to `jobs` threads (0: one per core): a failing seed is
/// recorded and the others continue. The manifest is written last, with hashes of every file
/// under the run directory.
inline RunManifest run_experiment(const ExperimentConfig& c, const fs::path& out, unsigned jobs = 0) {
  RunManifest m;
  m.config = to_json(c);
  for (const auto& input : {c.dataset.path, c.dataset.images, c.dataset.labels})
    if (!input.empty() && !fs::exists(input)) throw IoError("input file not found", input);
  fs::create_directories(out);
  const std::size_t n = c.seeds.size();
  if (jobs == 0) jobs = std::max(1u, std::thread::hardware_concurrency());
  std::vector<SeedOutcome> outcomes(n);
  std::vector<std::vector<MetricRecord>> results(n);
  std::atomic<std::size_t> next{0};

  auto worker = [&] {
    for (std::size_t i = next++; i < n; i = next++) {
      SeedOutcome& s = outcomes[i];
      s.seed = c.seeds[i];
      const auto start = std::chrono::steady_clock::now();
      try {
        results[i] = run_seed(c, out, s.seed, s);
        s.ok = true;
      } catch (const std::exception& e) {
        s.error = e.what();
        log::error("seed " + std::to_string(s.seed) + " failed: " + s.error);
        std::error_code ec;
        fs::remove(seed_dir(out, s.seed) / "metrics.csv", ec);
      }
      s.wall_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    }
  };
  {
    std::vector<std::jthread> pool;
    for (unsigned t = 1; t < std::min<std::size_t>(jobs, n); ++t) pool.emplace_back(worker);
    worker();
  }
  m.seeds = outcomes;
  std::vector<MetricRecord> all;
  for (const auto& r : results) all.insert(all.end(), r.begin(), r.end());
  if (!all.empty()) files::write_atomic(out / "mean_curve.csv", mean_curve_csv(all));

  std::vector<fs::path> paths;
  for (const auto& entry : fs::recursive_directory_iterator(out))
    if (entry.is_regular_file() && entry.path().filename() != "manifest.json") paths.push_back(entry.path());
  std::sort(paths.begin(), paths.end());
  for (const auto& p : paths) m.files.emplace_back(fs::relative(p, out).generic_string(), files::sha256_file(p));
  files::write_atomic(out / "manifest.json", to_json(m).dump(2) + "\n");
  return m;
}

inline json read_manifest(const fs::path& run_dir) {
  const fs::path p = run_dir / "manifest.json";
  try {
    return json::parse(files::read_all(p));
  } catch (const json::parse_error& e) {
    throw ConfigError(p.string() + ": " + e.what());
  }
}

/// All metric records of a completed run, read back from its per-seed CSVs.
inline std::vector<MetricRecord> read_run_records(const fs::path& run_dir) {
  const json m = read_manifest(run_dir);
  std::vector<MetricRecord> out;
  for (const auto& s : m.at("seeds")) {
    if (s.at("status") != "ok") continue;
    const auto recs = read_metrics_csv(seed_dir(run_dir, s.at("seed").get<std::uint64_t>()) / "metrics.csv");
    out.insert(out.end(), recs.begin(), recs.end());
  }
  return out;
}

/// Re-runs rep-analysis on an existing run from its snapshots, replacing analysis records.
inline void analyze_run(const fs::path& run_dir, const AnalysisSpec& spec) {
  const json m = read_manifest(run_dir);
  ExperimentConfig c = parse_config(m.at("config"));
  if (!c.snapshots) throw ConfigError("/snapshots: run " + run_dir.string() + " has no snapshots");
  c.analysis = spec;
  c.analysis.enabled = true;
  for (const auto& s : m.at("seeds")) {
    if (s.at("status") != "ok") continue;
    const auto seed = s.at("seed").get<std::uint64_t>();
    const fs::path dir = seed_dir(run_dir, seed);
    auto recs = read_metrics_csv(dir / "metrics.csv");
    std::erase_if(recs, [](const MetricRecord& r) {
      return r.metric == "cka" || r.metric == "vf_probe" || r.metric == "vf_degenerate_units" ||
             r.metric == "fc_finetune";
    });
    int exposures = 0;
    for (const auto& r : recs) exposures = std::max(exposures, r.exposure);
    cl::TaskOptions opt = c.task_options;
    opt.kind = task_kind(c.task);
    const auto td = cl::make_task_data(load_data(c, seed), opt, seed);
    for (auto& r : analyze_seed(c, td, dir, seed, exposures)) recs.push_back(std::move(r));
    write_metrics_csv(dir / "metrics.csv", recs);
  }
}

struct FigureSpec {
  std::string id;
  std::vector<std::string> metrics;  // first metric present in a run is used
  std::vector<std::string> required;  // learner names
  std::vector<std::string> analysis_series;  // analysis tools drawn as extra series
};

inline const std::vector<FigureSpec>& figure_specs() {
  static const std::vector<FigureSpec> specs{
      {"fig2a", {"fscore", "iou"}, {"naive"}, {}},
      {"fig2b", {"fscore", "accuracy"}, {}, {}},
      {"fig5", {"mse"}, {"naive"}, {}},
      {"fig6a", {"accuracy"}, {"yass", "gdumb", "naive"}, {}},
      {"fig6b", {"proxy_accuracy", "accuracy"}, {"ncm_proxy", "naive"}, {}},
      {"fig7", {"fscore", "iou", "mse"}, {"gdumb", "gdumb++"}, {}},
      {"fig8", {"accuracy"}, {"naive"}, {"cka", "vf_probe", "fc_finetune"}},
  };
  return specs;
}

/// Tidy per-figure rows: one series per learner run (plus "batch" and any analysis tools),
/// x = exposure index from 1, mean and standard error over seeds. The batch reference comes
/// from the first run that has one.
inline std::vector<FigureRow> export_figure_data(const std::vector<fs::path>& run_dirs, const std::string& figure) {
  const auto& specs = figure_specs();
  const auto it = std::find_if(specs.begin(), specs.end(), [&](const FigureSpec& s) { return s.id == figure; });
  if (it == specs.end()) {
    std::string known;
    for (const auto& s : specs) known += (known.empty() ? "" : ", ") + s.id;
    throw ConfigError("unknown figure \"" + figure + "\" (known: " + known + ")");
  }
  const FigureSpec& spec = *it;

  std::map<std::string, std::map<int, std::vector<double>>> series;
  std::map<int, std::vector<double>> batch;
  std::set<std::string> present;
  int max_x = 0;
  for (const auto& dir : run_dirs) {
    const json m = read_manifest(dir);
    const std::string learner = m.at("config").at("learner").at("kind").get<std::string>();
    if (!present.insert(learner).second) throw ConfigError("two runs for learner \"" + learner + "\"");
    const auto recs = read_run_records(dir);
    std::string metric;
    for (const auto& cand : spec.metrics)
      if (std::any_of(recs.begin(), recs.end(), [&](const MetricRecord& r) { return r.metric == cand; })) {
        metric = cand;
        break;
      }
    if (metric.empty()) throw ConfigError(dir.string() + ": no metric usable for " + figure);
    const bool take_batch = batch.empty();
    for (const auto& r : recs) {
      max_x = std::max(max_x, r.exposure);
      if (r.metric == metric && r.scope == "overall") series[learner][r.exposure].push_back(r.value);
      if (take_batch && r.metric == metric && r.scope == "analysis:batch") batch[0].push_back(r.value);
      for (const auto& tool : spec.analysis_series)
        if (r.metric == tool && r.scope == "analysis:" + tool) series[tool][r.exposure].push_back(r.value);
    }
  }
  std::vector<std::string> missing;
  for (const auto& r : spec.required)
    if (!present.contains(r)) missing.push_back(r);
  if (!missing.empty()) {
    std::string list;
    for (const auto& r : missing) list += (list.empty() ? "" : ", ") + r;
    throw ConfigError(figure + " is missing runs for: " + list);
  }
  if (series.empty()) throw ConfigError(figure + ": no data in the given runs");

  std::vector<FigureRow> rows;
  for (const auto& [name, by_x] : series)
    for (const auto& [x, vals] : by_x) {
      const auto s = summarize(vals);
      rows.push_back({x, name, s.mean, s.stderr_});
    }
  if (!batch.empty()) {
    const auto s = summarize(batch[0]);
    for (int x = 1; x <= max_x; ++x) rows.push_back({x, "batch", s.mean, s.stderr_});
  }
  std::stable_sort(rows.begin(), rows.end(), [](const FigureRow& a, const FigureRow& b) {
    return std::tie(a.series, a.x) < std::tie(b.series, b.x);
  });
  return rows;
}

}  // namespace flab::harness
