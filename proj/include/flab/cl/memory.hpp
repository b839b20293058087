#pragma once

#include <algorithm>
#include <functional>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "flab/core/error.hpp"
#include "flab/core/log.hpp"
#include "flab/core/rng.hpp"
#include "flab/nn/tensor.hpp"

namespace flab::cl {

/// Slots per class for budget K over C classes, indexed by first-seen rank:
/// floor(K/C) each, plus one for the first K mod C classes.
inline std::vector<std::size_t> class_quotas(std::size_t budget, std::size_t classes) {
  std::vector<std::size_t> q(classes, 0);
  if (classes == 0) return q;
  for (std::size_t r = 0; r < classes; ++r) q[r] = budget / classes + (r < budget % classes ? 1 : 0);
  return q;
}

/// Greedy herding: step k picks the candidate whose addition brings the running mean of the
/// selection closest to the class mean. Candidates are used once; ties go to the lowest index.
inline std::vector<std::size_t> herding_select(const Tensor& features, std::size_t k) {
  const std::size_t n = features.rows(), d = features.cols();
  k = std::min(k, n);
  std::vector<double> mu(d, 0.0), sum(d, 0.0);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < d; ++j) mu[j] += double(features.at(i, j));
  for (double& v : mu) v /= double(n);
  std::vector<bool> used(n, false);
  std::vector<std::size_t> order;
  order.reserve(k);
  for (std::size_t step = 1; step <= k; ++step) {
    std::size_t best = n;
    double best_dist = 0;
    for (std::size_t i = 0; i < n; ++i) {
      if (used[i]) continue;
      double dist = 0;
      for (std::size_t j = 0; j < d; ++j) {
        const double e = mu[j] - (sum[j] + double(features.at(i, j))) / double(step);
        dist += e * e;
      }
      if (best == n || dist < best_dist) {
        best = i;
        best_dist = dist;
      }
    }
    used[best] = true;
    order.push_back(best);
    for (std::size_t j = 0; j < d; ++j) sum[j] += double(features.at(best, j));
  }
  return order;
}

/// Budgeted exemplar store. Items are indices into the training split; classes are ranked by
/// the order in which they were first registered.
class ExemplarMemory {
 public:
  using FeatureFn = std::function<Tensor(std::span<const std::size_t>)>;

  explicit ExemplarMemory(std::size_t budget) : budget_(budget) {}

  std::size_t budget() const noexcept { return budget_; }
  const std::vector<int>& classes() const noexcept { return order_; }
  bool knows(int c) const { return first_seen_.contains(c); }
  int first_seen(int c) const { return first_seen_.at(c); }

  void register_class(int c, int exposure) {
    if (knows(c)) return;
    first_seen_[c] = exposure;
    order_.push_back(c);
    items_[c];
  }

  std::size_t quota(int c) const {
    const auto it = std::find(order_.begin(), order_.end(), c);
    if (it == order_.end()) throw UsageError("quota requested for unregistered class " + std::to_string(c));
    return class_quotas(budget_, order_.size())[std::size_t(it - order_.begin())];
  }

  const std::vector<std::size_t>& items(int c) const { return items_.at(c); }
  void set_items(int c, std::vector<std::size_t> items) {
    if (!knows(c)) throw UsageError("set_items on unregistered class " + std::to_string(c));
    items_[c] = std::move(items);
  }

  std::size_t size() const {
    std::size_t n = 0;
    for (const auto& [c, v] : items_) n += v.size();
    return n;
  }
  bool empty() const { return size() == 0; }

  /// All stored items, classes in first-seen order.
  std::vector<std::size_t> all_items() const {
    std::vector<std::size_t> out;
    for (int c : order_) out.insert(out.end(), items_.at(c).begin(), items_.at(c).end());
    return out;
  }

  std::size_t smallest_class_size() const {
    std::size_t m = budget_;
    for (int c : order_) m = std::min(m, items_.at(c).size());
    return order_.empty() ? 0 : m;
  }

  /// Random policy: over-quota classes lose uniformly chosen items; under-quota classes are
  /// topped up from `available` (not yet stored) by uniform sampling without replacement.
  void update_random(const std::map<int, std::vector<std::size_t>>& available, RngStream& rng) {
    warn_if_starved();
    for (int c : order_) {
      auto& mine = items_[c];
      const std::size_t q = quota(c);
      if (mine.size() > q) {
        auto keep = rng.sample_without_replacement(mine.size(), q);
        std::sort(keep.begin(), keep.end());
        std::vector<std::size_t> kept;
        for (auto k : keep) kept.push_back(mine[k]);
        mine = std::move(kept);
      }
      const auto it = available.find(c);
      if (mine.size() < q && it != available.end()) {
        std::vector<std::size_t> fresh;
        for (auto i : it->second)
          if (std::find(mine.begin(), mine.end(), i) == mine.end() &&
              std::find(fresh.begin(), fresh.end(), i) == fresh.end())
            fresh.push_back(i);
        for (auto k : rng.sample_without_replacement(fresh.size(), q - mine.size())) mine.push_back(fresh[k]);
      }
      if (mine.empty() && q > 0) log::warn("exemplar memory: class " + std::to_string(c) + " has no samples");
    }
  }

  /// Herding policy: classes present in `available` are re-selected by herding over their
  /// stored and new items; others are truncated to quota, dropping the last-chosen first.
  void update_herding(const std::map<int, std::vector<std::size_t>>& available, const FeatureFn& features) {
    warn_if_starved();
    for (int c : order_) {
      auto& mine = items_[c];
      const std::size_t q = quota(c);
      const auto it = available.find(c);
      if (it != available.end() && q > 0) {
        std::vector<std::size_t> pool = mine;
        for (auto i : it->second)
          if (std::find(pool.begin(), pool.end(), i) == pool.end()) pool.push_back(i);
        if (pool.empty()) continue;
        std::vector<std::size_t> picked;
        for (auto k : herding_select(features(pool), q)) picked.push_back(pool[k]);
        mine = std::move(picked);
      } else if (mine.size() > q) {
        mine.resize(q);
      }
      if (mine.empty() && q > 0) log::warn("exemplar memory: class " + std::to_string(c) + " has no samples");
    }
  }

  /// Balanced stream insertion: store while there is room; once full, accept a sample only if
  /// its class holds fewer than K/|classes| items, evicting a random item of the largest class.
  void balanced_insert(int c, std::size_t item, int exposure, RngStream& rng) {
    register_class(c, exposure);
    if (budget_ == 0) return;
    auto& mine = items_[c];
    if (std::find(mine.begin(), mine.end(), item) != mine.end()) return;
    if (size() < budget_) {
      mine.push_back(item);
      return;
    }
    if (double(mine.size()) >= double(budget_) / double(order_.size())) return;
    int largest = order_.front();
    for (int k : order_)
      if (items_[k].size() > items_[largest].size()) largest = k;
    auto& victim = items_[largest];
    victim.erase(victim.begin() + long(rng.uniform_int(victim.size())));
    mine.push_back(item);
  }

 private:
  void warn_if_starved() const {
    if (!order_.empty() && budget_ < order_.size())
      log::warn("exemplar budget " + std::to_string(budget_) + " is below the class count " +
                std::to_string(order_.size()) + "; later classes get no slots");
  }

  std::size_t budget_;
  std::vector<int> order_;
  std::map<int, int> first_seen_;
  std::map<int, std::vector<std::size_t>> items_;
};

}  // namespace flab::cl
