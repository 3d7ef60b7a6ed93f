#pragma once

#include <algorithm>
#include <cstddef>
#include <cstdint>
#include <numeric>
#include <optional>
#include <span>
#include <string>
#include <unordered_map>
#include <utility>
#include <vector>

#include "adafm/error.hpp"
#include "adafm/rng.hpp"
#include "adafm/sparse_vector.hpp"

namespace adafm {

using UserId = std::uint32_t;
using ItemId = std::uint32_t;
using Grade = std::int32_t;

struct Interaction {
  UserId user;
  ItemId item;
  Grade relevance;

  friend bool operator==(const Interaction&, const Interaction&) = default;
};

struct ItemGrade {
  ItemId item;
  Grade grade;

  friend bool operator==(const ItemGrade&, const ItemGrade&) = default;
};

/// Rank of every item by descending interaction count; rank 0 is the most
/// popular item and ties go to the smaller item id.
inline std::vector<std::uint32_t> build_popularity_index(std::span<const std::size_t> counts) {
  std::vector<ItemId> order(counts.size());
  std::iota(order.begin(), order.end(), ItemId{0});
  std::stable_sort(order.begin(), order.end(),
                   [&](ItemId a, ItemId b) { return counts[a] > counts[b]; });
  std::vector<std::uint32_t> rank(counts.size());
  for (std::size_t r = 0; r < order.size(); ++r) rank[order[r]] = static_cast<std::uint32_t>(r);
  return rank;
}

/// Users, items and per-user graded item lists S = {(u_a, I_a, Y_a)}.
/// Immutable after construction.
class InteractionDataset {
 public:
  InteractionDataset() = default;

  /// Token tables give the external name of every dense id. Each per-user
  /// list is sorted by item id; duplicates, out-of-range items and grades
  /// outside `grade_set` are rejected.
  InteractionDataset(std::vector<std::string> user_tokens, std::vector<std::string> item_tokens,
                     std::vector<std::vector<ItemGrade>> lists, std::vector<Grade> grade_set = {0, 1})
      : user_tokens_(std::move(user_tokens)),
        item_tokens_(std::move(item_tokens)),
        lists_(std::move(lists)),
        grade_set_(std::move(grade_set)) {
    if (lists_.size() != user_tokens_.size()) {
      throw ShapeError("user token table has " + std::to_string(user_tokens_.size()) +
                       " entries but there are " + std::to_string(lists_.size()) + " user lists");
    }
    std::sort(grade_set_.begin(), grade_set_.end());
    grade_set_.erase(std::unique(grade_set_.begin(), grade_set_.end()), grade_set_.end());

    counts_.assign(item_tokens_.size(), 0);
    for (UserId u = 0; u < lists_.size(); ++u) {
      auto& list = lists_[u];
      std::sort(list.begin(), list.end(),
                [](const ItemGrade& a, const ItemGrade& b) { return a.item < b.item; });
      for (std::size_t j = 0; j < list.size(); ++j) {
        const auto& ig = list[j];
        if (ig.item >= item_tokens_.size()) {
          throw IdRangeError("item id " + std::to_string(ig.item) + " out of range for user " +
                             std::to_string(u));
        }
        if (j > 0 && list[j - 1].item == ig.item) {
          throw LookupError("duplicate item " + std::to_string(ig.item) + " for user " +
                            std::to_string(u));
        }
        if (!std::binary_search(grade_set_.begin(), grade_set_.end(), ig.grade)) {
          throw ConfigError("grade " + std::to_string(ig.grade) + " not in the declared grade set");
        }
        ++counts_[ig.item];
      }
      entries_ += list.size();
    }
    popularity_rank_ = build_popularity_index(counts_);
    for (UserId u = 0; u < user_tokens_.size(); ++u) user_index_.emplace(user_tokens_[u], u);
    for (ItemId i = 0; i < item_tokens_.size(); ++i) item_index_.emplace(item_tokens_[i], i);
  }

  /// Dataset whose tokens are the decimal ids themselves.
  static InteractionDataset from_lists(std::size_t n_items, std::vector<std::vector<ItemGrade>> lists,
                                       std::vector<Grade> grade_set = {0, 1}) {
    std::vector<std::string> users(lists.size());
    std::vector<std::string> items(n_items);
    for (std::size_t u = 0; u < users.size(); ++u) users[u] = std::to_string(u);
    for (std::size_t i = 0; i < items.size(); ++i) items[i] = std::to_string(i);
    return InteractionDataset(std::move(users), std::move(items), std::move(lists),
                              std::move(grade_set));
  }

  std::size_t n_users() const noexcept { return lists_.size(); }
  std::size_t n_items() const noexcept { return item_tokens_.size(); }
  std::size_t n_entries() const noexcept { return entries_; }

  std::span<const ItemGrade> items_of(UserId u) const { return lists_.at(u); }

  std::optional<Grade> grade_of(UserId u, ItemId i) const {
    const auto& list = lists_.at(u);
    auto it = std::lower_bound(list.begin(), list.end(), i,
                               [](const ItemGrade& a, ItemId b) { return a.item < b; });
    if (it == list.end() || it->item != i) return std::nullopt;
    return it->grade;
  }

  bool observed(UserId u, ItemId i) const { return grade_of(u, i).has_value(); }

  std::optional<Grade> top_grade(UserId u) const {
    const auto& list = lists_.at(u);
    if (list.empty()) return std::nullopt;
    return std::max_element(list.begin(), list.end(),
                            [](const ItemGrade& a, const ItemGrade& b) { return a.grade < b.grade; })
        ->grade;
  }

  std::span<const std::size_t> item_counts() const noexcept { return counts_; }
  std::span<const std::uint32_t> popularity_rank() const noexcept { return popularity_rank_; }
  std::span<const Grade> grade_set() const noexcept { return grade_set_; }

  const std::vector<std::string>& user_tokens() const noexcept { return user_tokens_; }
  const std::vector<std::string>& item_tokens() const noexcept { return item_tokens_; }

  std::optional<UserId> find_user(const std::string& token) const {
    auto it = user_index_.find(token);
    return it == user_index_.end() ? std::nullopt : std::optional<UserId>(it->second);
  }
  std::optional<ItemId> find_item(const std::string& token) const {
    auto it = item_index_.find(token);
    return it == item_index_.end() ? std::nullopt : std::optional<ItemId>(it->second);
  }

  /// All interactions in (user, item) order.
  std::vector<Interaction> interactions() const {
    std::vector<Interaction> out;
    out.reserve(entries_);
    for (UserId u = 0; u < lists_.size(); ++u) {
      for (const auto& ig : lists_[u]) out.push_back({u, ig.item, ig.grade});
    }
    return out;
  }

 private:
  std::vector<std::string> user_tokens_;
  std::vector<std::string> item_tokens_;
  std::vector<std::vector<ItemGrade>> lists_;
  std::vector<Grade> grade_set_;
  std::vector<std::size_t> counts_;
  std::vector<std::uint32_t> popularity_rank_;
  std::unordered_map<std::string, UserId> user_index_;
  std::unordered_map<std::string, ItemId> item_index_;
  std::size_t entries_ = 0;
};

inline std::vector<std::uint32_t> build_popularity_index(const InteractionDataset& ds) {
  if (ds.n_items() == 0 || ds.n_entries() == 0) throw EmptyDatasetError("popularity index of an empty dataset");
  return build_popularity_index(ds.item_counts());
}

/// One-hot user block followed by one-hot item block: d = n_users + n_items.
struct FeatureEncoder {
  std::size_t n_users = 0;
  std::size_t n_items = 0;

  static FeatureEncoder for_dataset(const InteractionDataset& ds) {
    return {ds.n_users(), ds.n_items()};
  }

  std::size_t dim() const noexcept { return n_users + n_items; }
  std::size_t user_feature(UserId u) const noexcept { return u; }
  std::size_t item_feature(ItemId i) const noexcept { return n_users + i; }

  void check(UserId u, ItemId i) const {
    if (u >= n_users) {
      throw IdRangeError("user id " + std::to_string(u) + " >= " + std::to_string(n_users));
    }
    if (i >= n_items) {
      throw IdRangeError("item id " + std::to_string(i) + " >= " + std::to_string(n_items));
    }
  }

  SparseVector encode(UserId u, ItemId i) const {
    check(u, i);
    return SparseVector(dim(), {{user_feature(u), 1.0}, {item_feature(i), 1.0}});
  }

  /// Inverse of encode(); rejects vectors that are not a user/item pair.
  std::pair<UserId, ItemId> decode(const SparseVector& x) const {
    const auto e = x.entries();
    if (x.dim() != dim() || e.size() != 2 || e[0].index >= n_users || e[1].index < n_users ||
        e[0].value != 1.0 || e[1].value != 1.0) {
      throw ShapeError("vector is not an encoded user/item pair");
    }
    return {static_cast<UserId>(e[0].index), static_cast<ItemId>(e[1].index - n_users)};
  }
};

inline SparseVector encode_pair(UserId user, ItemId item, const FeatureEncoder& enc) {
  return enc.encode(user, item);
}

/// Candidate items for a sampler: either an explicit item list, or the lazy
/// set I^-_ab of one user, i.e. the user's observed items graded strictly
/// below an anchor grade plus every unobserved item of the catalog.
class ItemPool {
 public:
  static ItemPool of(std::vector<ItemId> items, std::size_t catalog_size) {
    std::sort(items.begin(), items.end());
    items.erase(std::unique(items.begin(), items.end()), items.end());
    for (ItemId i : items) {
      if (i >= catalog_size) throw IdRangeError("pool item " + std::to_string(i) + " out of catalog");
    }
    ItemPool p;
    p.catalog_size_ = catalog_size;
    p.lower_ = std::move(items);
    return p;
  }

  /// Observed items with grade < `anchor` plus all unobserved items.
  static ItemPool below_grade(std::span<const ItemGrade> observed, Grade anchor,
                              std::size_t catalog_size) {
    ItemPool p;
    p.catalog_size_ = catalog_size;
    p.observed_ = observed;
    p.lazy_ = true;
    for (const auto& ig : observed) {
      if (ig.grade < anchor) p.lower_.push_back(ig.item);
    }
    return p;
  }

  std::size_t catalog_size() const noexcept { return catalog_size_; }
  std::size_t size() const noexcept { return lower_.size() + unobserved_count(); }
  bool empty() const noexcept { return size() == 0; }

  std::size_t unobserved_count() const noexcept {
    return lazy_ ? catalog_size_ - observed_.size() : 0;
  }
  std::span<const ItemId> observed_lower() const noexcept { return lower_; }

  bool contains(ItemId i) const {
    if (i >= catalog_size_) return false;
    if (std::binary_search(lower_.begin(), lower_.end(), i)) return true;
    if (!lazy_) return false;
    return !std::binary_search(observed_.begin(), observed_.end(), ItemGrade{i, 0},
                               [](const ItemGrade& a, const ItemGrade& b) { return a.item < b.item; });
  }

  /// The n-th pool member in a fixed enumeration (observed-lower items
  /// first, then unobserved items by ascending id); n < size().
  ItemId nth(std::size_t n) const {
    if (n < lower_.size()) return lower_[n];
    std::size_t j = n - lower_.size();
    for (const auto& ig : observed_) {
      if (ig.item <= j) {
        ++j;
      } else {
        break;
      }
    }
    return static_cast<ItemId>(j);
  }

  ItemId draw_uniform(Rng& rng) const {
    if (empty()) throw SamplingError("cannot sample from an empty item pool");
    return nth(static_cast<std::size_t>(rng.uniform_int(size())));
  }

  std::vector<ItemId> materialize() const {
    std::vector<ItemId> out;
    out.reserve(size());
    for (std::size_t n = 0; n < size(); ++n) out.push_back(nth(n));
    return out;
  }

 private:
  std::size_t catalog_size_ = 0;
  std::vector<ItemId> lower_;  // sorted (explicit items, or observed lower-grade items)
  std::span<const ItemGrade> observed_;
  bool lazy_ = false;
};

struct GradeSets {
  std::vector<ItemId> same_grade;  // I_ab, includes the anchor itself
  ItemPool lower;                  // I^-_ab
};

inline GradeSets positive_and_negative_sets(const InteractionDataset& ds, UserId user,
                                            ItemId anchor_item) {
  if (user >= ds.n_users()) throw LookupError("unknown user " + std::to_string(user));
  const auto anchor = ds.grade_of(user, anchor_item);
  if (!anchor) {
    throw LookupError("pair (" + std::to_string(user) + ", " + std::to_string(anchor_item) +
                      ") is not observed");
  }
  GradeSets sets;
  for (const auto& ig : ds.items_of(user)) {
    if (ig.grade == *anchor) sets.same_grade.push_back(ig.item);
  }
  sets.lower = ItemPool::below_grade(ds.items_of(user), *anchor, ds.n_items());
  return sets;
}

}  // namespace adafm
