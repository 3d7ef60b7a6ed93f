#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <functional>
#include <numeric>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "adafm/dataset.hpp"
#include "adafm/error.hpp"
#include "adafm/rng.hpp"

namespace adafm {

/// Scores and grades of one user's evaluation items. `items` is used only to
/// break score ties; when empty the position in the list stands in for it.
struct RankedList {
  std::vector<double> scores;
  std::vector<Grade> grades;
  std::vector<ItemId> items;

  void validate() const {
    if (scores.size() != grades.size() || (!items.empty() && items.size() != scores.size())) {
      throw ShapeError("ranked list fields have different lengths");
    }
    for (double s : scores) {
      if (!std::isfinite(s)) throw ShapeError("ranked list holds a non-finite score");
    }
  }
};

/// Ranking quality measure E: AUC, or NDCG over the full list / top K.
struct Measure {
  enum class Kind { Auc, Ndcg };
  Kind kind = Kind::Auc;
  std::optional<std::size_t> cutoff;

  static Measure auc() { return {Kind::Auc, std::nullopt}; }
  static Measure ndcg(std::optional<std::size_t> k = std::nullopt) { return {Kind::Ndcg, k}; }

  /// "auc", "ndcg" or "ndcg@K".
  static Measure parse(const std::string& text) {
    if (text == "auc") return auc();
    if (text == "ndcg") return ndcg();
    if (text.rfind("ndcg@", 0) == 0) {
      const auto k = text.substr(5);
      if (!k.empty() && std::all_of(k.begin(), k.end(), [](char c) { return c >= '0' && c <= '9'; })) {
        const auto value = std::stoul(k);
        if (value > 0) return ndcg(value);
      }
    }
    throw ConfigError("unknown metric '" + text + "' (expected auc, ndcg or ndcg@K)");
  }

  std::string name() const {
    if (kind == Kind::Auc) return "auc";
    return cutoff ? "ndcg@" + std::to_string(*cutoff) : "ndcg";
  }

  friend bool operator==(const Measure&, const Measure&) = default;
};

/// Per-user AUC over H_a = {(b, c) : grade_b > grade_c}; a tied score counts
/// one half. nullopt when H_a is empty.
inline std::optional<double> user_auc(const RankedList& rl) {
  rl.validate();
  const std::size_t n = rl.scores.size();
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::sort(order.begin(), order.end(),
            [&](std::size_t a, std::size_t b) { return rl.scores[a] < rl.scores[b]; });

  std::vector<Grade> levels(rl.grades.begin(), rl.grades.end());
  std::sort(levels.begin(), levels.end());
  levels.erase(std::unique(levels.begin(), levels.end()), levels.end());
  auto level_of = [&](Grade g) {
    return static_cast<std::size_t>(std::lower_bound(levels.begin(), levels.end(), g) - levels.begin());
  };

  // below[g]: items with strictly smaller score seen so far, per grade level.
  std::vector<std::uint64_t> below(levels.size(), 0);
  std::vector<std::uint64_t> group(levels.size(), 0);
  std::uint64_t twice_hits = 0;  // 2 per ordered pair, 1 per tie
  for (std::size_t start = 0; start < n;) {
    std::size_t end = start;
    while (end < n && rl.scores[order[end]] == rl.scores[order[start]]) ++end;
    std::fill(group.begin(), group.end(), 0);
    for (std::size_t i = start; i < end; ++i) ++group[level_of(rl.grades[order[i]])];
    for (std::size_t i = start; i < end; ++i) {
      const std::size_t g = level_of(rl.grades[order[i]]);
      for (std::size_t lower = 0; lower < g; ++lower) twice_hits += 2 * below[lower] + group[lower];
    }
    for (std::size_t g = 0; g < levels.size(); ++g) below[g] += group[g];
    start = end;
  }
  std::uint64_t pairs = 0;
  std::uint64_t seen = 0;
  for (std::size_t g = 0; g < levels.size(); ++g) {
    pairs += below[g] * seen;
    seen += below[g];
  }
  if (pairs == 0) return std::nullopt;
  return static_cast<double>(twice_hits) / (2.0 * static_cast<double>(pairs));
}

/// NDCG with gain 2^grade - 1 and discount 1 / log2(rank + 1), ranks from 1.
/// Ties in score are broken by ascending item id. nullopt when no item has
/// a positive grade.
inline std::optional<double> user_ndcg(const RankedList& rl,
                                       std::optional<std::size_t> cutoff = std::nullopt) {
  rl.validate();
  const std::size_t n = rl.scores.size();
  auto item_of = [&](std::size_t i) -> std::size_t { return rl.items.empty() ? i : rl.items[i]; };
  auto gain = [](Grade g) { return std::exp2(static_cast<double>(g)) - 1.0; };
  const std::size_t depth = cutoff ? std::min(*cutoff, n) : n;

  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    if (rl.scores[a] != rl.scores[b]) return rl.scores[a] > rl.scores[b];
    return item_of(a) < item_of(b);
  });
  std::vector<Grade> ideal(rl.grades.begin(), rl.grades.end());
  std::sort(ideal.begin(), ideal.end(), std::greater<>());

  if (ideal.empty() || ideal.front() <= 0) return std::nullopt;
  double dcg = 0.0;
  double idcg = 0.0;
  for (std::size_t r = 0; r < depth; ++r) {
    const double discount = 1.0 / std::log2(static_cast<double>(r) + 2.0);
    dcg += gain(rl.grades[order[r]]) * discount;
    idcg += gain(ideal[r]) * discount;
  }
  return dcg / idcg;
}

inline std::optional<double> user_measure(const RankedList& rl, const Measure& m) {
  return m.kind == Measure::Kind::Auc ? user_auc(rl) : user_ndcg(rl, m.cutoff);
}

/// Per-user E values; nullopt marks a user for whom E is undefined.
struct PerUserPerformance {
  std::vector<std::optional<double>> values;
  Measure measure;

  std::size_t defined_count() const {
    return static_cast<std::size_t>(
        std::count_if(values.begin(), values.end(), [](const auto& v) { return v.has_value(); }));
  }

  /// Unweighted mean over defined users (0 when none are defined).
  double mean() const {
    double sum = 0.0;
    std::size_t count = 0;
    for (const auto& v : values) {
      if (v) {
        sum += *v;
        ++count;
      }
    }
    return count ? sum / static_cast<double>(count) : 0.0;
  }
};

/// sum_a p_a E_a over users with a defined E, with the weights renormalized
/// over those users. `weights` must be a distribution aligned with the users.
inline double weighted_auc(const PerUserPerformance& perf, std::span<const double> weights) {
  if (weights.size() != perf.values.size()) {
    throw ShapeError("weights cover " + std::to_string(weights.size()) + " users, performance covers " +
                     std::to_string(perf.values.size()));
  }
  const double total = std::accumulate(weights.begin(), weights.end(), 0.0);
  if (std::abs(total - 1.0) > 1e-9) throw ShapeError("weights do not sum to 1");
  double num = 0.0;
  double mass = 0.0;
  for (std::size_t a = 0; a < weights.size(); ++a) {
    if (!perf.values[a]) continue;
    num += weights[a] * *perf.values[a];
    mass += weights[a];
  }
  return mass > 0.0 ? num / mass : 0.0;
}

/// Per-user evaluation items: the split's own graded items plus sampled
/// unobserved items at grade 0.
struct EvalCandidates {
  std::vector<std::vector<ItemGrade>> lists;

  std::size_t n_users() const noexcept { return lists.size(); }
};

/// For every user: all of `target`'s items for that user, plus up to
/// `n_negatives` distinct items unobserved in `target` and in every dataset
/// of `exclude`, drawn with a per-user seeded stream. Users without target
/// items get an empty list.
inline EvalCandidates build_eval_candidates(const InteractionDataset& target,
                                            std::span<const InteractionDataset* const> exclude,
                                            std::size_t n_negatives, std::uint64_t seed) {
  EvalCandidates cands;
  cands.lists.resize(target.n_users());
  const std::size_t n_items = target.n_items();
  for (UserId u = 0; u < target.n_users(); ++u) {
    const auto own = target.items_of(u);
    if (own.empty()) continue;
    auto& list = cands.lists[u];
    list.assign(own.begin(), own.end());
    auto blocked = [&](ItemId i) {
      if (target.observed(u, i)) return true;
      for (const auto* ds : exclude) {
        if (u < ds->n_users() && ds->observed(u, i)) return true;
      }
      return false;
    };
    std::vector<ItemId> free_items;
    for (ItemId i = 0; i < n_items; ++i) {
      if (!blocked(i)) free_items.push_back(i);
    }
    Rng rng(derive_seed(seed, u));
    const std::size_t take = std::min(n_negatives, free_items.size());
    for (std::size_t j = 0; j < take; ++j) {
      const auto pick = j + static_cast<std::size_t>(rng.uniform_int(free_items.size() - j));
      std::swap(free_items[j], free_items[pick]);
      list.push_back({free_items[j], 0});
    }
  }
  return cands;
}

inline EvalCandidates build_eval_candidates(const InteractionDataset& target,
                                            std::initializer_list<const InteractionDataset*> exclude,
                                            std::size_t n_negatives, std::uint64_t seed) {
  std::vector<const InteractionDataset*> ex(exclude);
  return build_eval_candidates(target, std::span<const InteractionDataset* const>(ex), n_negatives, seed);
}

struct EvalReport {
  double aggregate = 0.0;
  PerUserPerformance per_user;
  std::size_t users = 0;    // users with a defined measure
  std::size_t skipped = 0;  // users with candidates but an undefined measure
};

/// Scores every candidate with `score(user, item)` and aggregates E either
/// uniformly or with `weights` (renormalized over users with a defined E).
template <class ScoreFn>
EvalReport evaluate_model(ScoreFn&& score, const EvalCandidates& cands, const Measure& measure,
                          std::span<const double> weights = {}) {
  EvalReport report;
  report.per_user.measure = measure;
  report.per_user.values.resize(cands.n_users());
  RankedList rl;
  for (UserId u = 0; u < cands.n_users(); ++u) {
    const auto& list = cands.lists[u];
    if (list.empty()) continue;
    rl.scores.clear();
    rl.grades.clear();
    rl.items.clear();
    for (const auto& ig : list) {
      rl.scores.push_back(score(u, ig.item));
      rl.grades.push_back(ig.grade);
      rl.items.push_back(ig.item);
    }
    report.per_user.values[u] = user_measure(rl, measure);
    if (report.per_user.values[u]) {
      ++report.users;
    } else {
      ++report.skipped;
    }
  }
  report.aggregate = weights.empty() ? report.per_user.mean() : weighted_auc(report.per_user, weights);
  return report;
}

}  // namespace adafm
