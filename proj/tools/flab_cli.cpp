#include <CLI11.hpp>

#include <iostream>
#include <string>
#include <vector>

#include "flab/core/log.hpp"
#include "flab/harness/run.hpp"

using namespace flab;
namespace fs = std::filesystem;

namespace {

enum Exit { kOk = 0, kConfig = 2, kRuntime = 3, kIo = 4 };

harness::ExperimentConfig load_config(const std::string& path, const std::string& out,
                                      const std::vector<std::uint64_t>& extra_seeds) {
  auto c = harness::parse_config_file(path);
  if (!out.empty()) c.output_dir = out;
  c.seeds.insert(c.seeds.end(), extra_seeds.begin(), extra_seeds.end());
  return c;
}

int cmd_gen_data(const std::string& config, const std::string& out, const std::vector<std::uint64_t>& seeds) {
  if (out.empty()) throw UsageError("gen-data needs --out FILE");
  data::DatasetConfig dc;
  if (!config.empty()) {
    const auto c = harness::parse_config_file(config);
    if (c.dataset.source != "sprites") throw ConfigError("/dataset/source: gen-data only generates sprites");
    dc = c.dataset.sprites;
    dc.seed = c.seeds.front();
  }
  if (!seeds.empty()) dc.seed = seeds.back();
  const auto ds = data::make_dataset(dc);
  data::save_dataset(out, ds, dc);
  log::info("wrote " + std::to_string(ds.train.size() + ds.val.size() + ds.test.size()) + " examples to " + out);
  return kOk;
}

int cmd_run(const std::string& config, const std::string& out, const std::vector<std::uint64_t>& seeds,
            unsigned jobs) {
  if (config.empty()) throw UsageError("run needs --config PATH");
  const auto c = load_config(config, out, seeds);
  const auto m = harness::run_experiment(c, c.output_dir, jobs);
  for (const auto& s : m.seeds)
    std::cout << "seed " << s.seed << ": " << (s.ok ? "ok" : "failed: " + s.error) << " ("
              << harness::format_value(s.wall_seconds) << " s)\n";
  return m.all_ok() ? kOk : kRuntime;
}

int cmd_analyze(const std::string& config, const std::string& run_dir) {
  harness::AnalysisSpec spec;
  if (!config.empty()) {
    spec = harness::parse_config_file(config).analysis;
  } else {
    spec = harness::parse_config(harness::read_manifest(run_dir).at("config")).analysis;
  }
  harness::analyze_run(run_dir, spec);
  return kOk;
}

int cmd_export(const std::string& figure, const std::string& out, const std::vector<std::string>& runs) {
  if (out.empty()) throw UsageError("export-fig needs --out FILE");
  std::vector<fs::path> dirs(runs.begin(), runs.end());
  files::write_atomic(out, harness::figure_csv(harness::export_figure_data(dirs, figure)));
  return kOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Continual-learning experiment engine"};
  app.require_subcommand(1);
  std::string config, out;
  std::vector<std::uint64_t> seeds;
  bool quiet = false;
  app.add_option("--config", config, "Experiment config (flab-config/1 JSON)");
  app.add_option("--out", out, "Output directory or file");
  app.add_option("--seed", seeds, "Seed appended to the config's seed list")->take_all();
  app.add_flag("--quiet", quiet, "Only print warnings and errors");

  auto* gen = app.add_subcommand("gen-data", "Generate a sprite dataset file");
  auto* run = app.add_subcommand("run", "Run an experiment");
  unsigned jobs = 0;
  run->add_option("--jobs", jobs, "Seeds run in parallel (0: one per core)");
  auto* analyze = app.add_subcommand("analyze", "Rerun representation analysis on a run with snapshots");
  std::string run_dir;
  analyze->add_option("run_dir", run_dir, "Run directory")->required();
  auto* exp = app.add_subcommand("export-fig", "Export tidy figure data from completed runs");
  std::string figure;
  std::vector<std::string> runs;
  exp->add_option("--figure", figure, "Figure id (fig2a, fig2b, fig5, fig6a, fig6b, fig7, fig8)")->required();
  exp->add_option("runs", runs, "Run directories")->required();
  for (auto* sub : {gen, run, analyze, exp}) {
    sub->add_option("--config", config, "Experiment config (flab-config/1 JSON)");
    sub->add_option("--out", out, "Output directory or file");
    sub->add_option("--seed", seeds, "Seed appended to the config's seed list")->take_all();
    sub->add_flag("--quiet", quiet, "Only print warnings and errors");
  }

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kOk : kConfig;
  }
  log::set_level(quiet ? log::Level::kWarn : log::Level::kInfo);

  try {
    if (gen->parsed()) return cmd_gen_data(config, out, seeds);
    if (run->parsed()) return cmd_run(config, out, seeds, jobs);
    if (analyze->parsed()) return cmd_analyze(config, run_dir);
    return cmd_export(figure, out, runs);
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return kConfig;
  } catch (const UsageError& e) {
    std::cerr << "usage error: " << e.what() << "\n";
    return kConfig;
  } catch (const IoError& e) {
    std::cerr << "i/o error: " << e.what() << "\n";
    return kIo;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kRuntime;
  }
}
