#pragma once

#include <algorithm>
#include <cstddef>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "adafm/error.hpp"

namespace adafm {

struct SparseEntry {
  std::size_t index;
  double value;

  friend bool operator==(const SparseEntry&, const SparseEntry&) = default;
};

/// Feature vector of dimension `dim` stored as (index, value) pairs.
/// Indices are strictly increasing and in range; zeros are never stored.
class SparseVector {
 public:
  SparseVector() = default;

  SparseVector(std::size_t dim, std::vector<SparseEntry> entries)
      : dim_(dim), entries_(std::move(entries)) {
    for (std::size_t i = 0; i < entries_.size(); ++i) {
      const auto& e = entries_[i];
      if (e.index >= dim_) {
        throw ShapeError("sparse index " + std::to_string(e.index) + " out of range for dim " +
                         std::to_string(dim_));
      }
      if (i > 0 && entries_[i - 1].index >= e.index) {
        throw ShapeError("sparse indices must be strictly increasing");
      }
      if (e.value == 0.0) {
        throw ShapeError("explicit zero stored at index " + std::to_string(e.index));
      }
    }
  }

  /// Builds from arbitrary (index, value) pairs: sorts, sums duplicates and
  /// drops zeros.
  static SparseVector from_pairs(std::size_t dim, std::vector<SparseEntry> pairs) {
    std::sort(pairs.begin(), pairs.end(),
              [](const SparseEntry& a, const SparseEntry& b) { return a.index < b.index; });
    std::vector<SparseEntry> merged;
    merged.reserve(pairs.size());
    for (const auto& p : pairs) {
      if (!merged.empty() && merged.back().index == p.index) {
        merged.back().value += p.value;
      } else {
        merged.push_back(p);
      }
    }
    std::erase_if(merged, [](const SparseEntry& e) { return e.value == 0.0; });
    return SparseVector(dim, std::move(merged));
  }

  std::size_t dim() const noexcept { return dim_; }
  std::size_t nnz() const noexcept { return entries_.size(); }
  std::span<const SparseEntry> entries() const noexcept { return entries_; }

  /// Value at `index` (0 when not stored).
  double at(std::size_t index) const {
    auto it = std::lower_bound(entries_.begin(), entries_.end(), index,
                               [](const SparseEntry& e, std::size_t i) { return e.index < i; });
    return (it != entries_.end() && it->index == index) ? it->value : 0.0;
  }

  friend bool operator==(const SparseVector&, const SparseVector&) = default;

 private:
  std::size_t dim_ = 0;
  std::vector<SparseEntry> entries_;
};

}  // namespace adafm
