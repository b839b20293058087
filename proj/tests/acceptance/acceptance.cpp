#include <CLI11.hpp>

#include <sys/wait.h>

#include <chrono>
#include <cstdio>
#include <cstdlib>
#include <iostream>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "flab/core/log.hpp"
#include "flab/harness/run.hpp"

using namespace flab;
using namespace flab::harness;

namespace {

struct Verdict {
  std::string name;
  bool pass = false;
  std::string detail;
};

std::vector<Verdict> g_verdicts;

void report(const std::string& name, bool pass, const std::string& detail) {
  g_verdicts.push_back({name, pass, detail});
  std::cout << (pass ? "PASS " : "FAIL ") << name << ": " << detail << std::endl;
}

std::string fmt(double v, int digits = 3) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.*f", digits, v);
  return buf;
}

double mean(const std::vector<double>& v) {
  double s = 0;
  for (double x : v) s += x / double(v.size());
  return v.empty() ? std::nan("") : s;
}

// Unit-level criteria reuse the oracle tests; each runs one test binary with a filter and
// returns the number of tests that passed (0 if any failed or none matched).
int run_gtest(const std::string& binary, const std::string& filter, double& seconds) {
  const auto start = std::chrono::steady_clock::now();
  FILE* pipe = popen((binary + " --gtest_filter='" + filter + "' 2>&1").c_str(), "r");
  if (pipe == nullptr) return 0;
  std::string output;
  char buf[4096];
  while (std::fgets(buf, sizeof buf, pipe) != nullptr) output += buf;
  const int status = pclose(pipe);
  seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  const auto at = output.find("[  PASSED  ] ");
  if (!WIFEXITED(status) || WEXITSTATUS(status) != 0 || at == std::string::npos) return 0;
  return std::atoi(output.c_str() + at + 13);
}

void unit_criterion(const std::string& name, const std::vector<std::pair<std::string, std::string>>& runs,
                    double time_limit = 0) {
  bool ok = true;
  double total = 0;
  std::string which;
  for (const auto& [bin, filter] : runs) {
    double s = 0;
    const int passed = run_gtest(bin, filter, s);
    ok &= passed > 0;
    total += s;
    which += (which.empty() ? "" : ", ") + fs::path(bin).filename().string() + " " + std::to_string(passed) +
             (passed > 0 ? " passed" : " FAILED");
  }
  std::string detail = which + " in " + fmt(total, 1) + " s";
  if (time_limit > 0) {
    ok &= total < time_limit;
    detail += " (limit " + fmt(time_limit, 0) + " s)";
  }
  report(name, ok, detail);
}

// ---- experiment runs ----

struct Options {
  fs::path out = "acceptance_runs";
  unsigned jobs = 0;
  bool fresh = false;
};

Options g_opt;

json base(const std::string& task, const std::string& learner, int epochs, double lr) {
  return {{"schema", "flab-config/1"},
          {"task", task},
          {"learner", {{"kind", learner}}},
          {"train", {{"epochs", epochs}, {"lr", lr}}},
          {"seeds", {1, 2, 3}}};
}

json classification(const std::string& learner, int epochs = 30) {
  json j = base("classification", learner, epochs, 5e-3);
  j["train"]["lr_schedule"] = "cosine";
  return j;
}

json sdf(const std::string& learner) {
  json j = base("sdf", learner, 10, 1e-3);
  j["model"] = {{"points_per_image", 128}, {"decoder_width", 64}};
  return j;
}

json repeated(json j) {
  j["schedule"] = {{"protocol", "repeated"}, {"repetitions", 5}, {"samples_per_class", 100}};
  return j;
}

struct Run {
  fs::path dir;
  std::vector<MetricRecord> recs;
  std::vector<std::uint64_t> seeds;
};

Run run(const std::string& name, json j, bool reuse = true) {
  const fs::path dir = g_opt.out / name;
  j["output_dir"] = dir.string();
  const auto cfg = parse_config(j);
  bool have = false;
  if (reuse && !g_opt.fresh && fs::exists(dir / "manifest.json")) {
    const json m = read_manifest(dir);
    have = m.at("config") == to_json(cfg) &&
           std::all_of(m.at("seeds").begin(), m.at("seeds").end(), [](const json& s) { return s.at("status") == "ok"; });
  }
  const auto start = std::chrono::steady_clock::now();
  if (!have) {
    fs::remove_all(dir);
    const auto m = run_experiment(cfg, dir, g_opt.jobs);
    for (const auto& s : m.seeds)
      if (!s.ok) std::cout << "  " << name << " seed " << s.seed << " failed: " << s.error << std::endl;
  }
  const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  std::cout << "  run " << name << (have ? " (reused)" : " (" + fmt(secs, 0) + " s)") << std::endl;
  return {dir, read_run_records(dir), cfg.seeds};
}

std::optional<double> value(const Run& r, std::uint64_t seed, int t, const std::string& metric,
                            const std::string& scope) {
  for (const auto& rec : r.recs)
    if (rec.seed == seed && rec.exposure == t && rec.metric == metric && rec.scope == scope) return rec.value;
  return std::nullopt;
}

double need(const Run& r, std::uint64_t seed, int t, const std::string& metric, const std::string& scope) {
  const auto v = value(r, seed, t, metric, scope);
  if (!v) throw DegenerateError(r.dir.string() + ": no " + metric + "/" + scope + " at exposure " + std::to_string(t) +
                                " for seed " + std::to_string(seed));
  return *v;
}

int last_exposure(const Run& r, std::uint64_t seed) {
  int t = 0;
  for (const auto& rec : r.recs)
    if (rec.seed == seed) t = std::max(t, rec.exposure);
  return t;
}

// Exposure at which each class first appears in the per-class curve of `metric`.
std::map<int, int> learned_at(const Run& r, std::uint64_t seed, const std::string& metric) {
  std::map<int, int> at;
  for (const auto& rec : r.recs)
    if (rec.seed == seed && rec.metric == metric && rec.scope.rfind("class:", 0) == 0) {
      const int c = std::stoi(rec.scope.substr(6));
      if (!at.contains(c) || rec.exposure < at[c]) at[c] = rec.exposure;
    }
  return at;
}

int first_class(const Run& r, std::uint64_t seed, const std::string& metric) {
  for (const auto& [c, t] : learned_at(r, seed, metric))
    if (t == 1) return c;
  throw DegenerateError(r.dir.string() + ": no class evaluated at exposure 1");
}

double final_mean(const Run& r, const std::string& metric, const std::string& scope = "overall") {
  std::vector<double> v;
  for (auto s : r.seeds) v.push_back(need(r, s, last_exposure(r, s), metric, scope));
  return mean(v);
}

// ---- criteria ----

void forgetting_exists(const Run& naive) {
  std::vector<double> just, fin, batch;
  for (auto s : naive.seeds) {
    const int c = first_class(naive, s, "accuracy");
    const int T = last_exposure(naive, s);
    just.push_back(need(naive, s, 1, "accuracy", class_scope(c)));
    fin.push_back(need(naive, s, T, "accuracy", class_scope(c)));
    batch.push_back(need(naive, s, T, "accuracy", "analysis:batch"));
  }
  const double j = mean(just), f = mean(fin), b = mean(batch);
  report("naive classification forgets", f <= 0.3 * j && b >= 0.9,
         "first class " + fmt(j) + " -> " + fmt(f) + " (bar <= " + fmt(0.3 * j) + "), batch " + fmt(b) +
             " (bar >= 0.900)");
}

void reconstruction_stable(const Run& sdf_run, const Run& ae) {
  const double fs = final_mean(sdf_run, "fscore"), fs_batch = final_mean(sdf_run, "fscore", "analysis:batch");
  double worst_drop = -1e300;
  int worst_t = 0;
  for (int t = 2; t <= last_exposure(sdf_run, sdf_run.seeds.front()); ++t) {
    std::vector<double> prev, cur;
    for (auto s : sdf_run.seeds) {
      prev.push_back(need(sdf_run, s, t - 1, "fscore", "overall"));
      cur.push_back(need(sdf_run, s, t, "fscore", "overall"));
    }
    if (mean(prev) - mean(cur) > worst_drop) {
      worst_drop = mean(prev) - mean(cur);
      worst_t = t;
    }
  }
  const bool sdf_ok = fs >= 0.85 * fs_batch && worst_drop <= 0.15;

  std::vector<double> just, fin;
  for (auto s : ae.seeds) {
    const int c = first_class(ae, s, "mse");
    just.push_back(need(ae, s, 1, "mse", class_scope(c)));
    fin.push_back(need(ae, s, last_exposure(ae, s), "mse", class_scope(c)));
  }
  const double mse = final_mean(ae, "mse"), mse_batch = final_mean(ae, "mse", "analysis:batch");
  const double j = mean(just), f = mean(fin);
  const bool ae_ok = mse <= 1.25 * mse_batch && f <= 1.5 * j;
  report("continual reconstruction does not collapse", sdf_ok && ae_ok,
         "sdf FS@0.02 " + fmt(fs) + " vs 0.85*batch " + fmt(0.85 * fs_batch) + ", largest drop " + fmt(worst_drop) +
             " at exposure " + std::to_string(worst_t) + " (bar <= 0.150); autoencoder MSE " + fmt(mse, 5) +
             " vs 1.25*batch " + fmt(1.25 * mse_batch, 5) + ", first class " + fmt(j, 5) + " -> " + fmt(f, 5) +
             " (bar <= " + fmt(1.5 * j, 5) + ")");
}

// Gap to batch after the first repetition and at the end, per seed.
std::string repetition_gaps(const Run& r, const std::string& metric, int block, int& shrunk) {
  shrunk = 0;
  std::string detail;
  for (auto s : r.seeds) {
    const int T = last_exposure(r, s);
    const double b = need(r, s, T, metric, "analysis:batch");
    const double first = b - need(r, s, block, metric, "overall"), last = b - need(r, s, T, metric, "overall");
    if (last < first) ++shrunk;
    detail += (detail.empty() ? "" : ", ") + std::string("seed ") + std::to_string(s) + " " + fmt(first) + "->" +
              fmt(last);
  }
  return detail;
}

void repetition_closes_gap(const Run& sdf_rep, const Run& yass_rep, int block) {
  int a = 0, b = 0;
  const auto da = repetition_gaps(sdf_rep, "fscore", block, a);
  const auto db = repetition_gaps(yass_rep, "accuracy", block, b);
  report("repeated exposures shrink the gap to batch", a >= 2 && b >= 2,
         "sdf FS gap " + da + " (" + std::to_string(a) + "/3 shrink); yass accuracy gap " + db + " (" +
             std::to_string(b) + "/3 shrink), bar >= 2/3 each");
}

void gdumbpp_beats_gdumb(const Run& g, const Run& gpp) {
  const double a = final_mean(g, "fscore"), b = final_mean(gpp, "fscore");
  report("gdumb++ beats gdumb on reconstruction", b >= a + 0.05,
         "final FS@0.02 gdumb++ " + fmt(b) + " vs gdumb " + fmt(a) + " + 0.05");
}

void yass_beats_baselines(const Run& yass, const Run& gdumb, const Run& naive) {
  const double y = final_mean(yass, "accuracy"), g = final_mean(gdumb, "accuracy"), n = final_mean(naive, "accuracy");
  report("yass beats gdumb and naive", y >= g && y >= n + 0.2,
         "final accuracy yass " + fmt(y) + " vs gdumb " + fmt(g) + ", vs naive " + fmt(n) + " + 0.20");
}

void proxy_beats_chance(const Run& proxy, const Run& naive_same_schedule) {
  const double p = final_mean(proxy, "proxy_accuracy"), n = final_mean(naive_same_schedule, "accuracy");
  report("reconstruction features support an NCM proxy", p >= 0.375 && p >= n,
         "final proxy accuracy " + fmt(p) + " vs 3x chance 0.375 and naive classifier " + fmt(n));
}

// Mean over classes of (v(t_c) - v(T)) / v(t_c) for classes learned before the final exposure.
double class_decline(const Run& r, std::uint64_t s, const std::string& metric, const std::map<int, int>& at, int T) {
  std::vector<double> d;
  for (const auto& [c, t] : at) {
    if (t >= T) continue;
    const double j = need(r, s, t, metric, class_scope(c)), f = need(r, s, T, metric, class_scope(c));
    d.push_back((j - f) / j);
  }
  return mean(d);
}

void features_outlast_outputs(const Run& r) {
  std::vector<double> acc, vf, cka, batch;
  std::map<int, std::vector<double>> fc;
  for (auto s : r.seeds) {
    const int T = last_exposure(r, s);
    const auto at = learned_at(r, s, "accuracy");
    acc.push_back(class_decline(r, s, "accuracy", at, T));
    vf.push_back(class_decline(r, s, "vf_probe", at, T));
    cka.push_back(class_decline(r, s, "cka", at, T));
    batch.push_back(need(r, s, T, "accuracy", "analysis:batch"));
    for (int t = 1; t <= T; ++t)
      if (auto v = value(r, s, t, "fc_finetune", "analysis:fc_finetune")) fc[t].push_back(*v);
  }
  const double a = mean(acc), v = mean(vf), k = mean(cka), b = mean(batch);
  bool fc_ok = !fc.empty();
  std::string fc_detail;
  for (const auto& [t, vals] : fc) {
    fc_ok &= mean(vals) >= 0.8 * b;
    fc_detail += (fc_detail.empty() ? "" : " ") + fmt(mean(vals));
  }
  report("features outlast output forgetting", v <= 0.5 * a && k <= 0.5 * a && fc_ok,
         "relative decline accuracy " + fmt(a) + ", vf " + fmt(v) + ", cka " + fmt(k) + " (bar <= " + fmt(0.5 * a) +
             "); fc finetune per exposure " + fc_detail + " vs 0.8*batch " + fmt(0.8 * b));
}

void determinism(const Run& original, json j, const std::string& name) {
  const Run again = run(name + "_repeat", std::move(j), false);
  bool same = files::sha256_file(original.dir / "mean_curve.csv") == files::sha256_file(again.dir / "mean_curve.csv");
  for (auto s : original.seeds)
    same &= files::sha256_file(seed_dir(original.dir, s) / "metrics.csv") ==
            files::sha256_file(seed_dir(again.dir, s) / "metrics.csv");
  report("runs are deterministic", same, name + " rerun: per-seed metrics.csv and mean_curve.csv hashes " +
                                             (same ? "identical" : "differ"));
}

void export_figures(const std::map<std::string, std::vector<fs::path>>& figs) {
  for (const auto& [id, dirs] : figs) {
    const fs::path out = g_opt.out / "figures" / (id + ".csv");
    files::write_atomic(out, figure_csv(export_figure_data(dirs, id)));
  }
  std::cout << "  figure data in " << (g_opt.out / "figures").string() << std::endl;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Acceptance suite: one PASS/FAIL line per criterion"};
  app.add_option("--out", g_opt.out, "Directory for acceptance runs");
  app.add_option("--jobs", g_opt.jobs, "Seeds run in parallel (0: one per core)");
  app.add_flag("--fresh", g_opt.fresh, "Rerun experiments even when a matching completed run exists");
  CLI11_PARSE(app, argc, argv);
  log::set_level(log::Level::kWarn);

  std::cout << "unit-level" << std::endl;
  unit_criterion("gradient checks (64-bit)",
                 {{FLAB_TEST_NN, "GradCheck.*"}, {FLAB_TEST_CL, "Distillation.GradientMatchesFiniteDifferences"}}, 30);
  unit_criterion("exemplar quotas", {{FLAB_TEST_CL, "Quota.*:Memory.QuotaFollowsFirstSeenOrder"}});
  unit_criterion("metric oracles (FS, IoU, HSIC, NCM, CKA symmetry)",
                 {{FLAB_TEST_METRICS, "FScore.MatchesBruteForceOnRandomFixtures:Iou.MatchesSetOracleOnRandomMasks"},
                  {FLAB_TEST_ANALYSIS, "Hsic.MatchesDoubleCenteringOracle:Gram.RbfMatchesBruteForce:"
                                       "Cka.SelfSimilarityAndSymmetry"},
                  {FLAB_TEST_CL, "Ncm.MatchesBruteForceOnRandomFixtures"}});
  unit_criterion("cka invariances", {{FLAB_TEST_ANALYSIS, "Cka.SelfSimilarityAndSymmetry:Cka.LinearInvariances:"
                                                          "Cka.RbfScaleInvariance"}});

  std::cout << "directional analogs" << std::endl;
  int failed_runs = 0;
  auto guarded = [&](auto&& f) {
    try {
      f();
    } catch (const std::exception& e) {
      ++failed_runs;
      std::cout << "  error: " << e.what() << std::endl;
    }
  };

  std::optional<Run> naive_cls, naive_pairs, naive_sdf, naive_ae, yass_cls, gdumb_cls, gdumb_sdf, gdumbpp_sdf, proxy,
      rep_sdf, rep_yass;
  json pairs = classification("naive");
  pairs["schedule"] = {{"per_exposure", 2}};
  pairs["snapshots"] = true;
  pairs["analysis"] = {{"enabled", true}};
  json proxy_cfg = sdf("ncm_proxy");
  proxy_cfg["task"] = "proxy";
  proxy_cfg["model"]["frame"] = "canonical";
  proxy_cfg["learner"]["proxy_exemplars"] = 20;
  proxy_cfg["schedule"] = {{"per_exposure", 2}};
  auto exemplars = [](json j, int k) {
    j["learner"]["budget"] = k;
    j["batch_oracle"] = {{"enabled", false}};
    return j;
  };
  json ae_cfg = base("autoencoder", "naive", 5, 1e-3);

  guarded([&] { naive_cls = run("naive_classification", classification("naive")); });
  guarded([&] { naive_ae = run("naive_autoencoder", ae_cfg); });
  guarded([&] { naive_sdf = run("naive_sdf", sdf("naive")); });
  guarded([&] { yass_cls = run("yass_classification", exemplars(classification("yass"), 32)); });
  guarded([&] { gdumb_cls = run("gdumb_classification", exemplars(classification("gdumb"), 32)); });
  guarded([&] { gdumb_sdf = run("gdumb_sdf", exemplars(sdf("gdumb"), 400)); });
  guarded([&] { gdumbpp_sdf = run("gdumbpp_sdf", exemplars(sdf("gdumb++"), 400)); });
  guarded([&] { naive_pairs = run("naive_classification_pairs", pairs); });
  guarded([&] { proxy = run("proxy_sdf", proxy_cfg); });
  guarded([&] { rep_sdf = run("repeated_sdf", repeated(sdf("naive"))); });
  guarded([&] {
    json j = repeated(classification("yass", 10));
    j["learner"]["budget"] = 32;
    rep_yass = run("repeated_yass", j);
  });

  auto criterion = [&](const std::string& name, bool ready, auto&& f) {
    if (!ready) {
      report(name, false, "required runs did not complete");
      return;
    }
    try {
      f();
    } catch (const std::exception& e) {
      report(name, false, e.what());
    }
  };
  criterion("naive classification forgets", bool(naive_cls), [&] { forgetting_exists(*naive_cls); });
  criterion("continual reconstruction does not collapse", naive_sdf && naive_ae,
            [&] { reconstruction_stable(*naive_sdf, *naive_ae); });
  criterion("repeated exposures shrink the gap to batch", rep_sdf && rep_yass,
            [&] { repetition_closes_gap(*rep_sdf, *rep_yass, 8); });
  criterion("gdumb++ beats gdumb on reconstruction", gdumb_sdf && gdumbpp_sdf,
            [&] { gdumbpp_beats_gdumb(*gdumb_sdf, *gdumbpp_sdf); });
  criterion("yass beats gdumb and naive", yass_cls && gdumb_cls && naive_cls,
            [&] { yass_beats_baselines(*yass_cls, *gdumb_cls, *naive_cls); });
  criterion("reconstruction features support an NCM proxy", proxy && naive_pairs,
            [&] { proxy_beats_chance(*proxy, *naive_pairs); });
  criterion("features outlast output forgetting", bool(naive_pairs), [&] { features_outlast_outputs(*naive_pairs); });
  criterion("runs are deterministic", bool(naive_ae), [&] {
    json j = ae_cfg;
    determinism(*naive_ae, j, "naive_autoencoder");
  });

  guarded([&] {
    std::map<std::string, std::vector<fs::path>> figs;
    if (naive_sdf) figs["fig2a"] = {naive_sdf->dir};
    if (rep_sdf) figs["fig2b"] = {rep_sdf->dir};
    if (naive_ae) figs["fig5"] = {naive_ae->dir};
    if (yass_cls && gdumb_cls && naive_cls) figs["fig6a"] = {yass_cls->dir, gdumb_cls->dir, naive_cls->dir};
    if (proxy && naive_pairs) figs["fig6b"] = {proxy->dir, naive_pairs->dir};
    if (gdumb_sdf && gdumbpp_sdf) figs["fig7"] = {gdumb_sdf->dir, gdumbpp_sdf->dir};
    if (naive_pairs) figs["fig8"] = {naive_pairs->dir};
    export_figures(figs);
  });

  const auto passed = std::count_if(g_verdicts.begin(), g_verdicts.end(), [](const Verdict& v) { return v.pass; });
  std::cout << passed << "/" << g_verdicts.size() << " criteria passed" << std::endl;
  return passed == std::ptrdiff_t(g_verdicts.size()) && failed_runs == 0 ? 0 : 1;
}
