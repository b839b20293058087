#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <numeric>
#include <set>

#include "flab/cl/learners.hpp"

using namespace flab;
using namespace flab::cl;

namespace {

std::vector<int> iota_classes(int n) {
  std::vector<int> c(std::size_t(n), 0);
  std::iota(c.begin(), c.end(), 0);
  return c;
}

std::map<int, int> class_histogram(const ExposureSchedule& s) {
  std::map<int, int> h;
  for (const auto& e : s.exposures)
    for (int c : e.classes) ++h[c];
  return h;
}

std::shared_ptr<const TaskData> tiny_data(TaskKind kind, int classes = 4, int per_class = 12) {
  data::DatasetConfig dc;
  dc.num_classes = classes;
  dc.per_class_train = per_class;
  dc.per_class_val = 2;
  dc.per_class_test = 6;
  dc.seed = 11;
  TaskOptions to;
  to.kind = kind;
  to.eval_per_class = 2;
  to.points_per_image = 16;
  return std::make_shared<TaskData>(make_task_data(data::make_dataset(dc), to, 11));
}

TrainHyper tiny_hyper() {
  TrainHyper h;
  h.epochs = 1;
  h.batch_size = 8;
  return h;
}

std::vector<std::size_t> samples_of(const TaskData& td, std::initializer_list<int> classes) {
  std::vector<std::size_t> idx;
  for (int c : classes) idx.insert(idx.end(), td.train_by_class.at(c).begin(), td.train_by_class.at(c).end());
  return idx;
}

std::vector<std::vector<Real>> snapshot(const TaskNet& net) {
  std::vector<std::vector<Real>> out;
  for (const auto* m : net.models())
    for (const auto* p : m->parameters()) out.emplace_back(p->values().begin(), p->values().end());
  return out;
}

Tensor matrix(std::size_t rows, std::size_t cols, std::initializer_list<double> v) {
  Tensor t({rows, cols});
  std::size_t i = 0;
  for (double x : v) t[i++] = Real(x);
  return t;
}

// Cosine-distance NCM computed from unit-normalized vectors and squared Euclidean distance,
// which ranks identically to 1 - cos.
std::vector<int> brute_ncm(const Tensor& f, const ClassMeans& means) {
  std::vector<int> out;
  for (std::size_t i = 0; i < f.rows(); ++i) {
    double fn = 0;
    for (std::size_t j = 0; j < f.cols(); ++j) fn += double(f.at(i, j)) * double(f.at(i, j));
    fn = std::sqrt(fn);
    int best = -1;
    double best_d = 0;
    for (const auto& [c, m] : means) {
      double mn = 0;
      for (double v : m) mn += v * v;
      mn = std::sqrt(mn);
      double d = 0;
      for (std::size_t j = 0; j < m.size(); ++j) {
        const double e = double(f.at(i, j)) / fn - m[j] / mn;
        d += e * e;
      }
      if (best < 0 || d < best_d - 1e-12) {
        best = c;
        best_d = d;
      }
    }
    out.push_back(best);
  }
  return out;
}

// Herding by explicit recomputation of the candidate selection mean at every step.
std::vector<std::size_t> brute_herding(const std::vector<std::vector<double>>& x, std::size_t k) {
  const std::size_t d = x[0].size();
  std::vector<double> mu(d, 0);
  for (const auto& r : x)
    for (std::size_t j = 0; j < d; ++j) mu[j] += r[j] / double(x.size());
  std::vector<std::size_t> sel;
  for (std::size_t step = 0; step < std::min(k, x.size()); ++step) {
    std::size_t best = x.size();
    double best_d = 0;
    for (std::size_t i = 0; i < x.size(); ++i) {
      if (std::find(sel.begin(), sel.end(), i) != sel.end()) continue;
      std::vector<std::size_t> trial = sel;
      trial.push_back(i);
      double dist = 0;
      for (std::size_t j = 0; j < d; ++j) {
        double m = 0;
        for (auto t : trial) m += x[t][j];
        m /= double(trial.size());
        dist += (mu[j] - m) * (mu[j] - m);
      }
      if (best == x.size() || dist < best_d) {
        best = i;
        best_d = dist;
      }
    }
    sel.push_back(best);
  }
  return sel;
}

}  // namespace

// ---- schedules ----

TEST(Schedule, SingleExposureCounts) {
  EXPECT_EQ(schedule_single(iota_classes(55), 5, 1).size(), 11u);
  EXPECT_EQ(schedule_single(iota_classes(100), 1, 1).size(), 100u);
  const auto s = schedule_single(iota_classes(8), 3, 1);
  ASSERT_EQ(s.size(), 3u);
  EXPECT_EQ(s.exposures[0].classes.size(), 3u);
  EXPECT_EQ(s.exposures[1].classes.size(), 3u);
  EXPECT_EQ(s.exposures[2].classes.size(), 2u);
  for (const auto& [c, n] : class_histogram(s)) EXPECT_EQ(n, 1) << c;
  EXPECT_EQ(class_histogram(s).size(), 8u);
  for (const auto& e : s.exposures) EXPECT_EQ(e.rule, SampleRule::all());
}

TEST(Schedule, SingleIsSeeded) {
  const auto a = schedule_single(iota_classes(20), 1, 7), b = schedule_single(iota_classes(20), 1, 7);
  const auto c = schedule_single(iota_classes(20), 1, 8);
  std::vector<int> oa, ob, oc;
  for (const auto& e : a.exposures) oa.push_back(e.classes[0]);
  for (const auto& e : b.exposures) ob.push_back(e.classes[0]);
  for (const auto& e : c.exposures) oc.push_back(e.classes[0]);
  EXPECT_EQ(oa, ob);
  EXPECT_NE(oa, oc);
}

TEST(Schedule, SingleErrors) {
  EXPECT_THROW(schedule_single({}, 1, 0), ConfigError);
  EXPECT_THROW(schedule_single({1, 2}, 0, 0), ConfigError);
}

TEST(Schedule, RepeatedThirteenClassesTenRepetitions) {
  const auto s = schedule_repeated(iota_classes(13), 2, 10, SampleRule::all(), 3);
  EXPECT_EQ(s.size(), 65u);
  EXPECT_EQ(s.repetitions, 10);
  for (const auto& [c, n] : class_histogram(s)) EXPECT_EQ(n, 10) << c;
  EXPECT_EQ(class_histogram(s).size(), 13u);
  for (const auto& e : s.exposures) {
    std::set<int> u(e.classes.begin(), e.classes.end());
    EXPECT_EQ(u.size(), e.classes.size());
  }
}

TEST(Schedule, RepeatedLongRun) {
  const auto s = schedule_repeated(iota_classes(60), 1, 50, SampleRule::with_replacement(100), 4);
  EXPECT_EQ(s.size(), 3000u);
  for (const auto& [c, n] : class_histogram(s)) EXPECT_EQ(n, 50);
  for (const auto& e : s.exposures) EXPECT_EQ(e.rule, SampleRule::with_replacement(100));
}

TEST(Schedule, RepeatedMultisetPropertyAndNoDuplicates) {
  RngStream rng(5, 0);
  for (int trial = 0; trial < 200; ++trial) {
    const int n = 1 + int(rng.uniform_int(15));
    const std::size_t per = 1 + rng.uniform_int(std::uint64_t(n));
    const int reps = 1 + int(rng.uniform_int(6));
    const auto s = schedule_repeated(iota_classes(n), per, reps, SampleRule::all(), std::uint64_t(trial));
    const auto h = class_histogram(s);
    ASSERT_EQ(h.size(), std::size_t(n));
    for (const auto& [c, k] : h) ASSERT_EQ(k, reps);
    for (const auto& e : s.exposures) {
      std::set<int> u(e.classes.begin(), e.classes.end());
      ASSERT_EQ(u.size(), e.classes.size()) << "n=" << n << " per=" << per << " reps=" << reps;
    }
  }
}

TEST(Schedule, RepeatedOnceIsAPermutation) {
  const auto s = schedule_repeated(iota_classes(9), 2, 1, SampleRule::all(), 2);
  EXPECT_EQ(s.size(), 5u);
  for (const auto& [c, k] : class_histogram(s)) EXPECT_EQ(k, 1);
}

TEST(Schedule, RepeatedErrors) {
  EXPECT_THROW(schedule_repeated({1, 2, 3}, 4, 2, SampleRule::all(), 0), ConfigError);
  EXPECT_THROW(schedule_repeated({1, 2, 3}, 1, 0, SampleRule::all(), 0), ConfigError);
  EXPECT_THROW(schedule_repeated({}, 1, 1, SampleRule::all(), 0), ConfigError);
}

TEST(Schedule, ExposureSamples) {
  const std::map<int, std::vector<std::size_t>> by_class{{0, {0, 1, 2}}, {1, {3, 4}}, {2, {5}}};
  RngStream rng(1, 0);
  const auto all = exposure_samples({{0, 1}, SampleRule::all()}, by_class, rng);
  EXPECT_EQ(all, (std::vector<std::size_t>{0, 1, 2, 3, 4}));
  const auto drawn = exposure_samples({{1, 2}, SampleRule::with_replacement(100)}, by_class, rng);
  ASSERT_EQ(drawn.size(), 200u);
  for (std::size_t i = 0; i < 100; ++i) EXPECT_TRUE(drawn[i] == 3 || drawn[i] == 4);
  for (std::size_t i = 100; i < 200; ++i) EXPECT_EQ(drawn[i], 5u);
  EXPECT_THROW(exposure_samples({{9}, SampleRule::all()}, by_class, rng), ConfigError);
}

// ---- quotas and memory ----

TEST(Quota, TwoThousandSlotsOverNinetyOneClasses) {
  const auto q = class_quotas(2000, 91);
  EXPECT_EQ(std::count(q.begin(), q.end(), 22u), 89);
  EXPECT_EQ(std::count(q.begin(), q.end(), 21u), 2);
  EXPECT_EQ(std::accumulate(q.begin(), q.end(), std::size_t{0}), 2000u);
  EXPECT_EQ(q.front(), 22u);
  EXPECT_EQ(q.back(), 21u);
}

TEST(Quota, SmallCases) {
  EXPECT_EQ(class_quotas(10, 3), (std::vector<std::size_t>{4, 3, 3}));
  EXPECT_EQ(class_quotas(5, 8), (std::vector<std::size_t>{1, 1, 1, 1, 1, 0, 0, 0}));
  EXPECT_TRUE(class_quotas(5, 0).empty());
}

TEST(Quota, RandomProperty) {
  RngStream rng(3, 0);
  for (int trial = 0; trial < 1000; ++trial) {
    const std::size_t k = rng.uniform_int(5000), c = 1 + rng.uniform_int(200);
    const auto q = class_quotas(k, c);
    ASSERT_EQ(std::accumulate(q.begin(), q.end(), std::size_t{0}), k);
    ASSERT_TRUE(std::is_sorted(q.rbegin(), q.rend())) << "earlier classes get the remainder";
    ASSERT_LE(q.front() - q.back(), 1u);
  }
}

TEST(Memory, QuotaFollowsFirstSeenOrder) {
  ExemplarMemory m(10);
  m.register_class(7, 1);
  m.register_class(2, 2);
  m.register_class(5, 2);
  EXPECT_EQ(m.quota(7), 4u);
  EXPECT_EQ(m.quota(2), 3u);
  EXPECT_EQ(m.quota(5), 3u);
  EXPECT_EQ(m.first_seen(2), 2);
  EXPECT_THROW(m.quota(99), UsageError);
}

TEST(Memory, RandomUpdateInvariants) {
  RngStream rng(9, 0);
  ExemplarMemory m(20);
  std::map<int, std::vector<std::size_t>> pool;
  std::size_t next = 0;
  for (int t = 0; t < 6; ++t) {
    std::map<int, std::vector<std::size_t>> fresh;
    for (int c = 2 * t; c < 2 * t + 2; ++c) {
      m.register_class(c, t + 1);
      for (int k = 0; k < 15; ++k) fresh[c].push_back(next++);
      pool[c] = fresh[c];
    }
    m.update_random(fresh, rng);
    ASSERT_LE(m.size(), 20u);
    for (int c : m.classes()) {
      const auto& items = m.items(c);
      EXPECT_EQ(items.size(), m.quota(c)) << "class " << c << " after exposure " << t;
      std::set<std::size_t> u(items.begin(), items.end());
      EXPECT_EQ(u.size(), items.size());
      for (auto i : items) EXPECT_NE(std::find(pool[c].begin(), pool[c].end(), i), pool[c].end());
    }
  }
  EXPECT_EQ(m.size(), 20u);
}

TEST(Memory, RandomUpdateIsSeeded) {
  auto run = [](std::uint64_t seed) {
    RngStream rng(seed, 0);
    ExemplarMemory m(6);
    m.register_class(0, 1);
    m.register_class(1, 1);
    std::map<int, std::vector<std::size_t>> fresh{{0, {0, 1, 2, 3, 4}}, {1, {5, 6, 7, 8, 9}}};
    m.update_random(fresh, rng);
    return m.all_items();
  };
  EXPECT_EQ(run(1), run(1));
  EXPECT_NE(run(1), run(2));
}

TEST(Memory, ClassWithoutSamplesStaysEmpty) {
  RngStream rng(1, 0);
  ExemplarMemory m(4);
  m.register_class(0, 1);
  m.register_class(1, 1);
  m.update_random({{0, {1, 2, 3}}}, rng);
  EXPECT_EQ(m.items(0).size(), 2u);
  EXPECT_TRUE(m.items(1).empty());
}

TEST(Memory, DuplicateDrawsAreStoredOnce) {
  RngStream rng(1, 0);
  ExemplarMemory m(10);
  m.register_class(0, 1);
  m.update_random({{0, {4, 4, 4, 5}}}, rng);
  EXPECT_EQ(m.items(0).size(), 2u);
}

TEST(Herding, OneDimensionalExample) {
  const Tensor f = matrix(3, 1, {0, 1, 2});
  EXPECT_EQ(herding_select(f, 2), (std::vector<std::size_t>{1, 0}));
  EXPECT_EQ(herding_select(f, 5), (std::vector<std::size_t>{1, 0, 2}));
}

TEST(Herding, IdenticalFeaturesKeepIndexOrder) {
  const Tensor f = matrix(4, 2, {1, 1, 1, 1, 1, 1, 1, 1});
  EXPECT_EQ(herding_select(f, 4), (std::vector<std::size_t>{0, 1, 2, 3}));
}

TEST(Herding, MatchesBruteForceOnRandomFixtures) {
  RngStream rng(21, 0);
  for (int trial = 0; trial < 100; ++trial) {
    const std::size_t n = 2 + rng.uniform_int(12), d = 1 + rng.uniform_int(5), k = 1 + rng.uniform_int(n);
    std::vector<std::vector<double>> x(n, std::vector<double>(d));
    Tensor f({n, d});
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = 0; j < d; ++j) f.at(i, j) = Real(x[i][j] = rng.normal());
    ASSERT_EQ(herding_select(f, k), brute_herding(x, k)) << "trial " << trial;
  }
}

TEST(Herding, MemoryTruncationDropsLastChosen) {
  ExemplarMemory m(4);
  m.register_class(0, 1);
  const Tensor f = matrix(4, 1, {0, 1, 2, 3});
  auto features = [&](std::span<const std::size_t> idx) { return gather_rows(f, idx); };
  m.update_herding({{0, {0, 1, 2, 3}}}, features);
  const auto first = m.items(0);
  ASSERT_EQ(first.size(), 4u);
  m.register_class(1, 2);
  m.update_herding({}, features);
  EXPECT_EQ(m.items(0), std::vector<std::size_t>(first.begin(), first.begin() + 2));
}

TEST(Gdumb, BalancedInsertKeepsClassesWithinOne) {
  RngStream rng(4, 0);
  for (std::size_t budget : {5u, 7u, 12u, 30u}) {
    ExemplarMemory m(budget);
    std::size_t item = 0;
    for (int c = 0; c < 5; ++c)
      for (int k = 0; k < 20; ++k) {
        m.balanced_insert(c, item++, c + 1, rng);
        ASSERT_LE(m.size(), budget);
      }
    std::size_t lo = budget, hi = 0;
    for (int c : m.classes()) {
      lo = std::min(lo, m.items(c).size());
      hi = std::max(hi, m.items(c).size());
    }
    EXPECT_LE(hi - lo, 1u) << "budget " << budget;
    EXPECT_EQ(m.size(), budget);
  }
}

// ---- weighted gradient ----

TEST(Wg, TwoClassExample) {
  std::vector<int> labels(90, 0);
  labels.insert(labels.end(), 10, 1);
  const auto w = class_balance_weights(labels);
  EXPECT_NEAR(w.front(), 100.0 / 180.0, 1e-12);
  EXPECT_NEAR(w.back(), 5.0, 1e-12);
  EXPECT_NEAR(90 * w.front(), 50.0, 1e-9);
  EXPECT_NEAR(10 * w.back(), 50.0, 1e-9);
}

TEST(Wg, BalancedPoolGivesOnes) {
  const auto w = class_balance_weights(std::vector<int>{0, 1, 2, 0, 1, 2});
  for (Real v : w) EXPECT_NEAR(v, 1.0, 1e-12);
}

TEST(Wg, MassBalanceProperty) {
  RngStream rng(12, 0);
  for (int trial = 0; trial < 100; ++trial) {
    const std::size_t classes = 1 + rng.uniform_int(8);
    std::vector<int> labels;
    for (std::size_t c = 0; c < classes; ++c)
      for (std::size_t k = 0, n = 1 + rng.uniform_int(60); k < n; ++k) labels.push_back(int(c));
    const auto w = class_balance_weights(labels);
    std::map<int, double> mass;
    for (std::size_t i = 0; i < labels.size(); ++i) mass[labels[i]] += w[i];
    for (const auto& [c, m] : mass) ASSERT_NEAR(m, double(labels.size()) / double(classes), 1e-9);
  }
}

TEST(Wg, ThreeClassMass) {
  std::vector<int> labels(50, 0);
  labels.insert(labels.end(), 30, 1);
  labels.insert(labels.end(), 20, 2);
  const auto w = class_balance_weights(labels);
  std::map<int, double> mass;
  for (std::size_t i = 0; i < labels.size(); ++i) mass[labels[i]] += w[i];
  for (const auto& [c, m] : mass) EXPECT_NEAR(m, 100.0 / 3.0, 1e-9);
}

TEST(Wg, LabelOutsidePoolIsAnError) {
  const auto counts = class_counts(std::vector<int>{0, 0, 1});
  EXPECT_THROW(class_balance_weights(std::vector<int>{0, 2}, counts), ConfigError);
}

// ---- NCM ----

TEST(Ncm, BasicAndScaleInvariance) {
  const ClassMeans means{{0, {1, 0}}, {1, {0, 1}}};
  EXPECT_EQ(ncm_classify(matrix(1, 2, {1, 0}), means), std::vector<int>{0});
  EXPECT_EQ(ncm_classify(matrix(2, 2, {2, 0, 1, 0}), means), (std::vector<int>{0, 0}));
  EXPECT_EQ(ncm_classify(matrix(1, 2, {1, 1}), means), std::vector<int>{0}) << "tie goes to the lowest id";
}

TEST(Ncm, Errors) {
  const ClassMeans means{{0, {1, 0}}, {1, {0, 1}}};
  EXPECT_THROW(ncm_classify(matrix(1, 2, {0, 0}), means), DegenerateError);
  EXPECT_THROW(ncm_classify(matrix(1, 2, {1, 0}), ClassMeans{{0, {0, 0}}}), DegenerateError);
  EXPECT_THROW(ncm_classify(matrix(1, 3, {1, 0, 0}), means), ConfigError);
  EXPECT_THROW(ncm_classify(matrix(1, 2, {1, 0}), ClassMeans{}), DegenerateError);
}

TEST(Ncm, ClusteredGaussians) {
  RngStream rng(2, 0);
  const std::vector<std::vector<double>> centers{{5, 0, 0}, {0, 5, 0}, {0, 0, 5}};
  Tensor f({90, 3});
  std::vector<int> labels;
  for (std::size_t i = 0; i < 90; ++i) {
    labels.push_back(int(i % 3));
    for (std::size_t j = 0; j < 3; ++j) f.at(i, j) = Real(centers[i % 3][j] + rng.normal());
  }
  const auto means = class_means(f, labels);
  EXPECT_EQ(ncm_classify(f, means), brute_ncm(f, means));
}

TEST(Ncm, MatchesBruteForceOnRandomFixtures) {
  RngStream rng(31, 0);
  for (int trial = 0; trial < 150; ++trial) {
    const std::size_t n = 1 + rng.uniform_int(40), d = 1 + rng.uniform_int(8), c = 1 + rng.uniform_int(6);
    ClassMeans means;
    for (std::size_t k = 0; k < c; ++k) {
      std::vector<double> m(d);
      for (double& v : m) v = rng.normal();
      means[int(k * 3)] = m;
    }
    Tensor f({n, d});
    for (auto& v : f.values()) v = Real(rng.normal());
    ASSERT_EQ(ncm_classify(f, means), brute_ncm(f, means)) << "trial " << trial;
  }
}

TEST(Ncm, ClassMeansAverageRows) {
  const auto m = class_means(matrix(3, 2, {1, 2, 3, 4, 10, 10}), std::vector<int>{0, 0, 1});
  EXPECT_EQ(m.at(0), (std::vector<double>{2, 3}));
  EXPECT_EQ(m.at(1), (std::vector<double>{10, 10}));
}

// ---- iCaRL / BiC / E2EIL mechanics ----

TEST(Icarl, DistillationBceExample) {
  const Real logit = Real(std::log(0.8 / 0.2));
  const Tensor teacher = matrix(1, 1, {logit});
  const Tensor t = icarl_targets(std::vector<int>{0}, 1, &teacher, 1);
  EXPECT_NEAR(t[0], 0.8, 1e-12);
  const auto r = nn::sigmoid_bce(matrix(1, 1, {logit}), t);
  EXPECT_NEAR(r.loss, -(0.8 * std::log(0.8) + 0.2 * std::log(0.2)), 1e-12);
  EXPECT_NEAR(r.loss, 0.5004, 1e-4);
  for (double eps : {-0.3, 0.3})
    EXPECT_GT(nn::sigmoid_bce(matrix(1, 1, {logit + eps}), t).loss, r.loss) << "matching the teacher is minimal";
}

TEST(Icarl, TargetsAreOneHotOnNewSlots) {
  const Tensor teacher = matrix(2, 1, {0, 0});
  const Tensor t = icarl_targets(std::vector<int>{1, 2}, 3, &teacher, 1);
  EXPECT_NEAR(t.at(0, 0), 0.5, 1e-12);
  EXPECT_EQ(t.at(0, 1), 1);
  EXPECT_EQ(t.at(0, 2), 0);
  EXPECT_EQ(t.at(1, 1), 0);
  EXPECT_EQ(t.at(1, 2), 1);
}

TEST(Bic, CorrectionIdentityAndAffine) {
  auto td = tiny_data(TaskKind::kClassification);
  ClassifierNet net(td);
  Tensor z = matrix(1, 2, {2.0, 1.0});
  net.set_correction({1}, 1.0, 0.0);
  net.apply_corrections(z);
  EXPECT_EQ(z.at(0, 0), 2.0);
  EXPECT_EQ(z.at(0, 1), 1.0);
  net.set_correction({1}, 0.5, 0.2);
  net.apply_corrections(z);
  EXPECT_EQ(z.at(0, 0), 2.0);
  EXPECT_NEAR(z.at(0, 1), 0.7, 1e-12);
}

TEST(Bic, FitOnBalancedUnbiasedSetStaysNearIdentity) {
  // logits already calibrated: each sample's true slot is the clear winner
  const Tensor z = matrix(4, 2, {4, -4, 4, -4, -4, 4, -4, 4});
  const auto [a, b] = fit_bias_correction(z, std::vector<int>{0, 0, 1, 1}, std::vector<int>{1}, 200, 0.05);
  EXPECT_GT(a, 0.99);
  EXPECT_LT(std::abs(b), 0.05);
}

TEST(Bic, OverconfidentNewClassesShrinkAlpha) {
  // the new slot outscores the old one on every sample, whatever the label
  const Tensor z = matrix(4, 2, {1, 2, 1, 4, 1, 2, 1, 4});
  const auto [a, b] = fit_bias_correction(z, std::vector<int>{0, 0, 1, 1}, std::vector<int>{1}, 500, 0.1);
  EXPECT_LT(a, 1.0);
  double ce_before = 0, ce_after = 0;
  for (std::size_t i = 0; i < 4; ++i) {
    const int y = i < 2 ? 0 : 1;
    auto ce = [&](double alpha, double beta) {
      const double z0 = z.at(i, 0), z1 = alpha * z.at(i, 1) + beta;
      const double m = std::max(z0, z1), lse = m + std::log(std::exp(z0 - m) + std::exp(z1 - m));
      return lse - (y == 0 ? z0 : z1);
    };
    ce_before += ce(1, 0);
    ce_after += ce(a, b);
  }
  EXPECT_LT(ce_after, ce_before);
}

TEST(Bic, EmptyValidationIsAnError) {
  EXPECT_THROW(fit_bias_correction(Tensor({0, 2}), {}, std::vector<int>{1}, 10, 0.1), DegenerateError);
}

TEST(Distillation, NoOldClassesReducesToCrossEntropy) {
  const Tensor z = matrix(2, 3, {1, 2, 3, 0, -1, 1});
  const std::vector<int> y{2, 0};
  const auto a = ce_with_distillation(z, y, nullptr, 0);
  const auto b = nn::softmax_cross_entropy(z, y);
  EXPECT_EQ(a.loss, b.loss);
}

TEST(Distillation, GradientMatchesFiniteDifferences) {
  const Tensor z = matrix(2, 3, {0.3, -0.2, 0.5, 1.0, 0.1, -0.4});
  const Tensor teacher = matrix(2, 3, {0.9, -0.1, 0.0, -0.5, 0.8, 0.0});
  const std::vector<int> y{2, 1};
  const auto r = ce_with_distillation(z, y, &teacher, 2);
  for (std::size_t e = 0; e < z.size(); ++e) {
    Tensor p = z, m = z;
    p[e] += 1e-6;
    m[e] -= 1e-6;
    const double fd = (ce_with_distillation(p, y, &teacher, 2).loss - ce_with_distillation(m, y, &teacher, 2).loss) / 2e-6;
    EXPECT_NEAR(r.grad[e], fd, 1e-6);
  }
}

TEST(RunEpochs, ZeroEpochsTakesNoSteps) {
  RngStream rng(1, 0);
  const std::vector<std::size_t> pool{1, 2, 3};
  int calls = 0;
  EXPECT_EQ(run_epochs(pool, {}, 0, 2, rng, [&](auto, auto) { ++calls; }), 0u);
  EXPECT_EQ(calls, 0);
  EXPECT_EQ(run_epochs(pool, {}, 3, 2, rng, [&](auto, auto) { ++calls; }), 6u);
  EXPECT_EQ(calls, 6);
}

// ---- learners ----

TEST(Learner, OptionIdentities) {
  LearnerOptions naive{LearnerKind::kNaive}, yass{LearnerKind::kYass};
  EXPECT_FALSE(naive.use_exemplars());
  EXPECT_FALSE(naive.use_wg());
  EXPECT_TRUE(yass.use_exemplars());
  EXPECT_TRUE(yass.use_wg());
  for (const auto& name : kLearnerNames) EXPECT_EQ(to_string(learner_from_string(std::string(name.second))), name.second);
  EXPECT_THROW(learner_from_string("nope"), ConfigError);
}

TEST(Learner, ValidationErrors) {
  auto td = tiny_data(TaskKind::kClassification);
  LearnerOptions o{LearnerKind::kYass};
  EXPECT_THROW(Learner(make_task_net(td), o, tiny_hyper(), 1), ConfigError) << "exemplars need a budget";
  auto ae = tiny_data(TaskKind::kAutoencoder);
  LearnerOptions icarl{LearnerKind::kICaRLLite};
  icarl.budget = 8;
  EXPECT_THROW(Learner(make_task_net(ae), icarl, tiny_hyper(), 1), ConfigError);
  EXPECT_THROW(Learner(make_task_net(td), LearnerOptions{LearnerKind::kNcmProxy}, tiny_hyper(), 1), ConfigError);
}

TEST(Learner, SameSeedSameParameters) {
  auto td = tiny_data(TaskKind::kClassification);
  LearnerOptions o{LearnerKind::kYass};
  o.budget = 8;
  auto run = [&] {
    Learner l(make_task_net(td), o, tiny_hyper(), 5);
    l.run_exposure({{0}, SampleRule::all()}, samples_of(*td, {0}));
    l.run_exposure({{1, 2}, SampleRule::all()}, samples_of(*td, {1, 2}));
    return snapshot(l.net());
  };
  EXPECT_EQ(run(), run());
}

TEST(Learner, YassMemoryRespectsBudget) {
  auto td = tiny_data(TaskKind::kClassification);
  LearnerOptions o{LearnerKind::kYass};
  o.budget = 10;
  Learner l(make_task_net(td), o, tiny_hyper(), 5);
  for (int c = 0; c < 4; ++c) {
    const auto r = l.run_exposure({{c}, SampleRule::all()}, samples_of(*td, {c}));
    EXPECT_LE(r.memory_size, 10u);
    EXPECT_EQ(r.exposure, c + 1);
    ASSERT_EQ(r.curves.size(), 1u);
    EXPECT_EQ(r.curves[0].per_class.size(), std::size_t(c + 1));
  }
  EXPECT_EQ(l.memory().size(), 10u);
}

TEST(Learner, YassDependsOnHistory) {
  auto td = tiny_data(TaskKind::kClassification);
  LearnerOptions o{LearnerKind::kYass};
  o.budget = 8;
  auto run = [&](int first, int second) {
    Learner l(make_task_net(td), o, tiny_hyper(), 5);
    l.run_exposure({{first}, SampleRule::all()}, samples_of(*td, {first}));
    l.run_exposure({{second}, SampleRule::all()}, samples_of(*td, {second}));
    return snapshot(l.net());
  };
  EXPECT_NE(run(0, 1), run(1, 0));
}

TEST(Learner, GdumbIsEpisodic) {
  auto td = tiny_data(TaskKind::kClassification);
  LearnerOptions o{LearnerKind::kGDumb};
  o.budget = 1000;  // holds everything, so repeating the data leaves memory unchanged
  Learner l(make_task_net(td), o, tiny_hyper(), 3);
  const auto s = samples_of(*td, {0, 1});
  l.run_exposure({{0, 1}, SampleRule::all()}, s);
  const auto after_first = snapshot(l.net());
  const auto mem = l.memory().all_items();
  l.run_exposure({{0, 1}, SampleRule::all()}, s);
  EXPECT_EQ(l.memory().all_items(), mem);
  EXPECT_EQ(snapshot(l.net()), after_first);
}

TEST(Learner, GdumbMemoryIsBalanced) {
  auto td = tiny_data(TaskKind::kClassification);
  LearnerOptions o{LearnerKind::kGDumb};
  o.budget = 10;
  Learner l(make_task_net(td), o, tiny_hyper(), 3);
  for (int c = 0; c < 4; ++c) l.run_exposure({{c}, SampleRule::all()}, samples_of(*td, {c}));
  std::size_t lo = 100, hi = 0;
  for (int c : l.memory().classes()) {
    lo = std::min(lo, l.memory().items(c).size());
    hi = std::max(hi, l.memory().items(c).size());
  }
  EXPECT_LE(hi - lo, 1u);
  EXPECT_EQ(l.memory().size(), 10u);
}

TEST(Learner, GdumbPlusPlusFirstExposureEqualsGdumb) {
  auto td = tiny_data(TaskKind::kSdf);
  auto first = [&](LearnerKind k) {
    LearnerOptions o{k};
    o.budget = 12;
    Learner l(make_task_net(td), o, tiny_hyper(), 8);
    l.run_exposure({{0, 1}, SampleRule::all()}, samples_of(*td, {0, 1}));
    return std::pair{snapshot(l.net()), l.memory().all_items()};
  };
  EXPECT_EQ(first(LearnerKind::kGDumb), first(LearnerKind::kGDumbPlusPlus));
}

TEST(Learner, GdumbPlusPlusCarriesParameters) {
  auto td = tiny_data(TaskKind::kClassification);
  LearnerOptions o{LearnerKind::kGDumbPlusPlus};
  o.budget = 1000;
  Learner l(make_task_net(td), o, tiny_hyper(), 3);
  const auto s = samples_of(*td, {0, 1});
  l.run_exposure({{0, 1}, SampleRule::all()}, s);
  const auto after_first = snapshot(l.net());
  l.run_exposure({{0, 1}, SampleRule::all()}, s);
  EXPECT_NE(snapshot(l.net()), after_first);
}

TEST(Learner, IcarlUsesNcmOverHerdedExemplars) {
  auto td = tiny_data(TaskKind::kClassification);
  LearnerOptions o{LearnerKind::kICaRLLite};
  o.budget = 8;
  Learner l(make_task_net(td), o, tiny_hyper(), 4);
  l.run_exposure({{0, 1}, SampleRule::all()}, samples_of(*td, {0, 1}));
  const auto r = l.run_exposure({{2}, SampleRule::all()}, samples_of(*td, {2}));
  EXPECT_EQ(l.memory().size(), 8u);
  // inference must equal ncm_classify over exemplar means of the current features
  auto& net = dynamic_cast<const ClassifierNet&>(l.net());
  ClassMeans means;
  for (int c : l.memory().classes()) {
    const auto& items = l.memory().items(c);
    means[c] = class_means(net.train_features(items), std::vector<int>(items.size(), c)).at(c);
  }
  const std::vector<int> seen{0, 1, 2};
  const auto rows = net.test_indices_for(seen);
  const Tensor f = net.test_features(rows);
  EXPECT_EQ(net.predict(gather_rows(td->test_images, rows)), ncm_classify(f, means));
  EXPECT_EQ(r.curves[0].per_class.size(), 3u);
}

TEST(Learner, BicAndE2eilRun) {
  auto td = tiny_data(TaskKind::kClassification);
  for (auto k : {LearnerKind::kBiCLite, LearnerKind::kE2EILLite}) {
    LearnerOptions o{k};
    o.budget = 12;
    o.finetune_epochs = 1;
    Learner l(make_task_net(td), o, tiny_hyper(), 4);
    for (int c = 0; c < 3; ++c) l.run_exposure({{c}, SampleRule::all()}, samples_of(*td, {c}));
    EXPECT_LE(l.memory().size(), 12u);
    EXPECT_EQ(l.seen_classes().size(), 3u);
  }
}

TEST(Learner, E2eilZeroFinetuneAddsNoSteps) {
  auto td = tiny_data(TaskKind::kClassification);
  LearnerOptions o{LearnerKind::kE2EILLite};
  o.budget = 8;
  o.finetune_epochs = 0;
  Learner l(make_task_net(td), o, tiny_hyper(), 4);
  const auto r = l.run_exposure({{0}, SampleRule::all()}, samples_of(*td, {0}));
  EXPECT_EQ(r.steps, 2u);  // 12 samples, batch 8, one epoch
  o.finetune_epochs = 1;
  Learner l2(make_task_net(td), o, tiny_hyper(), 4);
  EXPECT_GT(l2.run_exposure({{0}, SampleRule::all()}, samples_of(*td, {0})).steps, 2u);
}

TEST(Learner, ProxySingleClassIsPerfect) {
  auto td = tiny_data(TaskKind::kAutoencoder);
  LearnerOptions o{LearnerKind::kNcmProxy};
  o.proxy_exemplars = 5;
  Learner l(make_task_net(td), o, tiny_hyper(), 2);
  const auto r = l.run_exposure({{1}, SampleRule::all()}, samples_of(*td, {1}));
  ASSERT_EQ(r.curves.size(), 2u);
  EXPECT_EQ(r.curves[1].metric, "proxy_accuracy");
  EXPECT_EQ(r.curves[1].overall, 1.0);
  const auto r2 = l.run_exposure({{2}, SampleRule::all()}, samples_of(*td, {2}));
  EXPECT_EQ(r2.curves[1].per_class.size(), 2u);
}

TEST(Learner, StepMatchedOracleTakesExactSteps) {
  auto td = tiny_data(TaskKind::kClassification);
  auto net = make_task_net(td);
  RngStream rng(1, 0);
  net->reset(rng.fork("init"));
  RngStream head = rng.fork("head");
  net->add_classes(std::vector<int>{0, 1, 2, 3}, head);
  std::vector<std::size_t> pool(td->train_labels.size());
  std::iota(pool.begin(), pool.end(), 0);
  const auto before = snapshot(*net);
  train_steps(*net, pool, 0, tiny_hyper(), rng.fork("b"));
  EXPECT_EQ(snapshot(*net), before);
  train_steps(*net, pool, 3, tiny_hyper(), rng.fork("b"));
  EXPECT_NE(snapshot(*net), before);
}

TEST(LrSchedule, CosineDecaysToZeroOverTheCall) {
  TrainHyper h;
  h.lr = 0.02;
  h.batch_size = 2;
  h.lr_schedule = "cosine";
  auto opt = h.make_optimizer();
  std::vector<std::size_t> pool(8);
  std::iota(pool.begin(), pool.end(), 0);
  RngStream rng(1, 0);
  std::vector<double> seen;
  const auto steps =
      run_epochs(pool, {}, 2, h.batch_size, rng, [&](auto, auto) { seen.push_back(opt.lr()); }, schedule_for(h, opt));
  ASSERT_EQ(steps, 8u);
  for (std::size_t i = 0; i < seen.size(); ++i)
    EXPECT_NEAR(seen[i], 0.02 * 0.5 * (1 + std::cos(M_PI * double(i) / 8.0)), 1e-15);
  EXPECT_NEAR(seen[4], 0.01, 1e-15);

  h.lr_schedule = "constant";
  auto flat = h.make_optimizer();
  seen.clear();
  run_epochs(pool, {}, 1, h.batch_size, rng, [&](auto, auto) { seen.push_back(flat.lr()); }, schedule_for(h, flat));
  for (double v : seen) EXPECT_EQ(v, 0.02);

  h.lr_schedule = "step";
  EXPECT_THROW(schedule_for(h, flat), ConfigError);
}
