#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <limits>
#include <numeric>
#include <span>
#include <string>
#include <vector>

#include "adafm/dataset.hpp"
#include "adafm/error.hpp"
#include "adafm/rng.hpp"

namespace adafm {

enum class SamplerKind { Uniform, Static, Dynamic, RankAware };

inline std::string to_string(SamplerKind k) {
  switch (k) {
    case SamplerKind::Uniform: return "uniform";
    case SamplerKind::Static: return "static";
    case SamplerKind::Dynamic: return "dynamic";
    case SamplerKind::RankAware: return "rank-aware";
  }
  return "?";
}

inline SamplerKind parse_sampler_kind(const std::string& s) {
  if (s == "uniform") return SamplerKind::Uniform;
  if (s == "static") return SamplerKind::Static;
  if (s == "dynamic") return SamplerKind::Dynamic;
  if (s == "rank-aware") return SamplerKind::RankAware;
  throw ConfigError("unknown sampler '" + s + "' (expected uniform, static, dynamic or rank-aware)");
}

struct SamplerConfig {
  SamplerKind kind = SamplerKind::Uniform;
  double rho = 0.3;
  std::size_t m = 10;
  double epsilon = 1.0;
  std::size_t max_trials = 0;  // 0: catalog size

  void validate() const {
    if (!(rho > 0.0 && rho <= 1.0)) throw ConfigError("rho must lie in (0, 1], got " + std::to_string(rho));
    if (m < 1) throw ConfigError("dynamic sampler needs m >= 1");
    if (!(epsilon >= 0.0)) throw ConfigError("epsilon must be non-negative");
  }

  std::size_t trials_cap(std::size_t catalog_size) const {
    return max_trials ? max_trials : std::max<std::size_t>(catalog_size, 1);
  }
};

namespace detail {

/// Index drawn from unnormalized non-negative weights by inverse CDF.
inline std::size_t draw_categorical(std::span<const double> weights, Rng& rng) {
  const double total = std::accumulate(weights.begin(), weights.end(), 0.0);
  const double target = rng.uniform_real() * total;
  double acc = 0.0;
  for (std::size_t i = 0; i < weights.size(); ++i) {
    acc += weights[i];
    if (target < acc) return i;
  }
  // Rounding can leave target == total; fall back to the last positive weight.
  for (std::size_t i = weights.size(); i-- > 0;) {
    if (weights[i] > 0.0) return i;
  }
  return weights.size() - 1;
}

/// Sampling weight exp(-(rank + 1) / (n rho)) shared by the static and
/// dynamic samplers.
inline double rank_weight(std::size_t rank, std::size_t n, double rho) {
  return std::exp(-(static_cast<double>(rank) + 1.0) / (static_cast<double>(n) * rho));
}

}  // namespace detail

inline ItemId sample_uniform(const ItemPool& pool, Rng& rng) { return pool.draw_uniform(rng); }

/// Popularity-based sampler: item j has weight exp(-(r_j + 1) / (|I| rho)),
/// renormalized over the pool it is asked to draw from.
class StaticSampler {
 public:
  StaticSampler(std::span<const std::uint32_t> popularity_rank, double rho)
      : rank_(popularity_rank.begin(), popularity_rank.end()), rho_(rho) {
    if (!(rho > 0.0 && rho <= 1.0)) throw ConfigError("rho must lie in (0, 1], got " + std::to_string(rho));
    if (rank_.empty()) throw SamplingError("static sampler over an empty catalog");
    cumulative_.resize(rank_.size());
    double acc = 0.0;
    for (std::size_t j = 0; j < rank_.size(); ++j) {
      acc += detail::rank_weight(rank_[j], rank_.size(), rho_);
      cumulative_[j] = acc;
    }
  }

  std::size_t catalog_size() const noexcept { return rank_.size(); }

  /// Unnormalized weight of item j.
  double weight(ItemId j) const { return detail::rank_weight(rank_.at(j), rank_.size(), rho_); }

  ItemId draw(const ItemPool& pool, Rng& rng) const {
    if (pool.empty()) throw SamplingError("cannot sample from an empty item pool");
    if (pool.catalog_size() != rank_.size()) throw ShapeError("pool and popularity index disagree on |I|");
    const double total = cumulative_.back();
    for (int attempt = 0; attempt < kMaxRejections; ++attempt) {
      const double target = rng.uniform_real() * total;
      auto it = std::upper_bound(cumulative_.begin(), cumulative_.end(), target);
      if (it == cumulative_.end()) --it;
      const auto j = static_cast<ItemId>(it - cumulative_.begin());
      if (pool.contains(j)) return j;
    }
    // The pool carries little mass: draw from it directly. Weights are taken
    // relative to the best-ranked member so that none underflows to zero.
    const auto members = pool.materialize();
    std::uint32_t best = std::numeric_limits<std::uint32_t>::max();
    for (ItemId j : members) best = std::min(best, rank_[j]);
    std::vector<double> w(members.size());
    for (std::size_t i = 0; i < members.size(); ++i) {
      w[i] = std::exp(-static_cast<double>(rank_[members[i]] - best) /
                      (static_cast<double>(rank_.size()) * rho_));
    }
    return members[detail::draw_categorical(w, rng)];
  }

 private:
  static constexpr int kMaxRejections = 256;
  std::vector<std::uint32_t> rank_;
  double rho_;
  std::vector<double> cumulative_;
};

inline ItemId sample_static(std::span<const std::uint32_t> popularity_rank, double rho,
                            const ItemPool& pool, Rng& rng) {
  return StaticSampler(popularity_rank, rho).draw(pool, rng);
}

struct DynamicDraw {
  ItemId item;
  std::size_t candidates;  // m actually used (shrunk to the pool size if needed)
};

/// Draws m distinct candidates uniformly from the pool, ranks them by
/// descending score (ties: ascending item id), and picks rank r with
/// probability proportional to exp(-(r + 1) / (m rho)).
template <class ScoreFn>
DynamicDraw sample_dynamic(ScoreFn&& score, const ItemPool& pool, std::size_t m, double rho, Rng& rng) {
  if (pool.empty()) throw SamplingError("cannot sample from an empty item pool");
  if (m < 1) throw ConfigError("dynamic sampler needs m >= 1");
  if (!(rho > 0.0 && rho <= 1.0)) throw ConfigError("rho must lie in (0, 1], got " + std::to_string(rho));
  const std::size_t size = pool.size();
  m = std::min(m, size);

  std::vector<ItemId> cand;
  cand.reserve(m);
  if (2 * m <= size) {
    while (cand.size() < m) {
      const ItemId j = pool.draw_uniform(rng);
      if (std::find(cand.begin(), cand.end(), j) == cand.end()) cand.push_back(j);
    }
  } else {
    auto all = pool.materialize();
    for (std::size_t i = 0; i < m; ++i) {
      const auto pick = i + static_cast<std::size_t>(rng.uniform_int(all.size() - i));
      std::swap(all[i], all[pick]);
      cand.push_back(all[i]);
    }
  }
  if (m == 1) return {cand.front(), 1};

  struct Scored {
    double score;
    ItemId item;
  };
  std::vector<Scored> ranked;
  ranked.reserve(m);
  for (ItemId j : cand) ranked.push_back({score(j), j});
  std::sort(ranked.begin(), ranked.end(), [](const Scored& a, const Scored& b) {
    if (a.score != b.score) return a.score > b.score;
    return a.item < b.item;
  });
  std::vector<double> w(m);
  for (std::size_t r = 0; r < m; ++r) w[r] = detail::rank_weight(r, m, rho);
  return {ranked[detail::draw_categorical(w, rng)].item, m};
}

struct RankAwareDraw {
  ItemId item;
  std::size_t trials;
  std::size_t gamma_weight;  // ceil((|I| - 1) / trials), at least 1
};

/// ceil((|I| - 1) / trials), the rank estimate of the positive item.
inline std::size_t trial_rank_estimate(std::size_t catalog_size, std::size_t trials) {
  const std::size_t above = catalog_size > 0 ? catalog_size - 1 : 0;
  return std::max<std::size_t>(1, (above + trials - 1) / trials);
}

/// Draws uniformly (with replacement) until a candidate j satisfies
/// score(i) - score(j) <= epsilon, or max_trials draws have been made.
template <class ScoreFn>
RankAwareDraw sample_rank_aware(ScoreFn&& score, double positive_score, const ItemPool& pool,
                                double epsilon, std::size_t max_trials, Rng& rng) {
  if (pool.empty()) throw SamplingError("cannot sample from an empty item pool");
  if (max_trials < 1) throw ConfigError("max_trials must be at least 1");
  ItemId j = 0;
  std::size_t t = 0;
  while (t < max_trials) {
    j = pool.draw_uniform(rng);
    ++t;
    if (positive_score - score(j) <= epsilon) break;
  }
  return {j, t, trial_rank_estimate(pool.catalog_size(), t)};
}

/// Rank-aware pair weight: (sum_{s=0}^{r} 1/(s+1)) / (sum_{s=0}^{|I|} 1/(s+1)).
inline double gamma_exact(std::size_t rank, std::size_t catalog_size) {
  if (rank > catalog_size) {
    throw RangeError("rank " + std::to_string(rank) + " exceeds catalog size " +
                     std::to_string(catalog_size));
  }
  long double partial = 0.0L;
  long double full = 0.0L;
  for (std::size_t s = 0; s <= catalog_size; ++s) {
    full += 1.0L / static_cast<long double>(s + 1);
    if (s == rank) partial = full;
  }
  return static_cast<double>(partial / full);
}

}  // namespace adafm
