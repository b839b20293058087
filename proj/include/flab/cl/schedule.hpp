#pragma once

#include <algorithm>
#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "flab/core/error.hpp"
#include "flab/core/rng.hpp"

namespace flab::cl {

/// How an exposure draws its training samples: every sample of its classes, or k draws
/// per class with replacement.
struct SampleRule {
  enum class Kind { kAll, kWithReplacement };
  Kind kind = Kind::kAll;
  std::size_t k = 0;

  static SampleRule all() { return {}; }
  static SampleRule with_replacement(std::size_t k) { return {Kind::kWithReplacement, k}; }
  bool operator==(const SampleRule&) const = default;
};

struct Exposure {
  std::vector<int> classes;
  SampleRule rule;
};

struct ExposureSchedule {
  std::vector<Exposure> exposures;
  int repetitions = 1;
  std::uint64_t seed = 0;

  std::size_t size() const noexcept { return exposures.size(); }
};

namespace detail {

inline std::vector<Exposure> chunk(const std::vector<int>& order, std::size_t per_exposure, SampleRule rule) {
  std::vector<Exposure> out;
  for (std::size_t i = 0; i < order.size(); i += per_exposure) {
    const auto end = std::min(order.size(), i + per_exposure);
    out.push_back({std::vector<int>(order.begin() + long(i), order.begin() + long(end)), rule});
  }
  return out;
}

}  // namespace detail

/// Every class exactly once, in a seeded random order, per_exposure classes at a time.
inline ExposureSchedule schedule_single(std::vector<int> classes, std::size_t per_exposure, std::uint64_t seed) {
  if (classes.empty()) throw ConfigError("schedule_single: empty class list");
  if (per_exposure < 1) throw ConfigError("schedule_single: per_exposure must be >= 1");
  RngStream rng = RngStream(seed, 0).fork("class-order");
  rng.shuffle(classes);
  return {detail::chunk(classes, per_exposure, SampleRule::all()), 1, seed};
}

/// `repetitions` shuffled copies of the class pool cut into exposures, then the exposure
/// order is permuted. A chunk never holds the same class twice: a duplicate that lands in
/// a chunk across a copy boundary is swapped with the next later class not yet in it.
inline ExposureSchedule schedule_repeated(std::vector<int> classes, std::size_t per_exposure, int repetitions,
                                          SampleRule rule, std::uint64_t seed) {
  if (classes.empty()) throw ConfigError("schedule_repeated: empty class list");
  if (repetitions < 1) throw ConfigError("schedule_repeated: repetitions must be >= 1");
  if (per_exposure < 1 || per_exposure > classes.size())
    throw ConfigError("schedule_repeated: per_exposure " + std::to_string(per_exposure) + " not in [1," +
                      std::to_string(classes.size()) + "]");
  const RngStream root(seed, 0);
  std::vector<int> pool;
  for (int r = 0; r < repetitions; ++r) {
    std::vector<int> copy = classes;
    RngStream rng = root.fork("repetition", std::uint64_t(r));
    rng.shuffle(copy);
    pool.insert(pool.end(), copy.begin(), copy.end());
  }
  auto contains = [&](std::size_t from, std::size_t to, int c) {
    return std::find(pool.begin() + long(from), pool.begin() + long(to), c) != pool.begin() + long(to);
  };
  for (std::size_t start = 0; start < pool.size(); start += per_exposure) {
    const std::size_t end = std::min(pool.size(), start + per_exposure);
    for (std::size_t i = start + 1; i < end; ++i) {
      if (!contains(start, i, pool[i])) continue;
      for (std::size_t j = end; j < pool.size(); ++j)
        if (!contains(start, end, pool[j])) {
          std::swap(pool[i], pool[j]);
          break;
        }
    }
  }
  ExposureSchedule s{detail::chunk(pool, per_exposure, rule), repetitions, seed};
  RngStream order = root.fork("exposure-order");
  order.shuffle(s.exposures);
  return s;
}

/// Training indices for one exposure: every sample of its classes, or k uniform draws with
/// replacement per class. `by_class` maps class id to its training indices.
inline std::vector<std::size_t> exposure_samples(const Exposure& e,
                                                 const std::map<int, std::vector<std::size_t>>& by_class,
                                                 RngStream& rng) {
  std::vector<std::size_t> out;
  for (int c : e.classes) {
    const auto it = by_class.find(c);
    if (it == by_class.end() || it->second.empty())
      throw ConfigError("exposure_samples: class " + std::to_string(c) + " has no training samples");
    const auto& pool = it->second;
    if (e.rule.kind == SampleRule::Kind::kAll) {
      out.insert(out.end(), pool.begin(), pool.end());
    } else {
      for (std::size_t k = 0; k < e.rule.k; ++k) out.push_back(pool[rng.uniform_int(pool.size())]);
    }
  }
  return out;
}

}  // namespace flab::cl
