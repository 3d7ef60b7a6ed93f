#pragma once

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <fstream>
#include <istream>
#include <map>
#include <ostream>
#include <string>
#include <string_view>
#include <system_error>
#include <unordered_map>
#include <utility>
#include <vector>

#include "adafm/dataset.hpp"
#include "adafm/error.hpp"
#include "adafm/rng.hpp"

namespace adafm {

/// Accumulates `user<TAB>item<TAB>grade` lines into a dataset. Tokens get
/// dense ids in first-seen order; a repeated (user, item) keeps the maximum
/// grade. Several sources can feed one builder so that they share id tables.
class DatasetBuilder {
 public:
  void add(const std::string& user, const std::string& item, Grade grade) {
    const UserId u = intern(users_, user_tokens_, user);
    const ItemId i = intern(items_, item_tokens_, item);
    if (lists_.size() <= u) lists_.resize(u + 1);
    auto [it, inserted] = lists_[u].emplace(i, grade);
    if (!inserted) it->second = std::max(it->second, grade);
    grades_.push_back(grade);
  }

  /// Reads one tab-separated stream; '#' lines and blank lines are skipped.
  void read(std::istream& in, const std::string& source) {
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
      ++line_no;
      if (!line.empty() && line.back() == '\r') line.pop_back();
      if (line.empty() || line.front() == '#') continue;
      const auto t1 = line.find('\t');
      const auto t2 = t1 == std::string::npos ? t1 : line.find('\t', t1 + 1);
      if (t2 == std::string::npos || line.find('\t', t2 + 1) != std::string::npos) {
        throw FormatError(source, line_no, "expected user<TAB>item<TAB>grade");
      }
      const std::string_view grade_text(line.data() + t2 + 1, line.size() - t2 - 1);
      Grade grade = 0;
      auto [ptr, ec] = std::from_chars(grade_text.data(), grade_text.data() + grade_text.size(), grade);
      if (ec != std::errc() || ptr != grade_text.data() + grade_text.size() || grade < 0) {
        throw FormatError(source, line_no, "grade must be a non-negative integer");
      }
      if (t1 == 0 || t2 == t1 + 1) throw FormatError(source, line_no, "empty user or item token");
      add(line.substr(0, t1), line.substr(t1 + 1, t2 - t1 - 1), grade);
    }
  }

  void read_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw ConfigError("cannot open dataset " + path);
    read(in, path);
  }

  std::size_t n_users() const noexcept { return user_tokens_.size(); }

  InteractionDataset build() const {
    if (user_tokens_.empty()) throw EmptyDatasetError("dataset has no interactions");
    std::vector<std::vector<ItemGrade>> lists(user_tokens_.size());
    for (std::size_t u = 0; u < lists_.size(); ++u) {
      for (const auto& [item, grade] : lists_[u]) lists[u].push_back({item, grade});
    }
    std::vector<Grade> grade_set(grades_.begin(), grades_.end());
    grade_set.push_back(0);
    return InteractionDataset(user_tokens_, item_tokens_, std::move(lists), std::move(grade_set));
  }

 private:
  template <class Id>
  static Id intern(std::unordered_map<std::string, Id>& index, std::vector<std::string>& tokens,
                   const std::string& token) {
    auto [it, inserted] = index.emplace(token, static_cast<Id>(tokens.size()));
    if (inserted) tokens.push_back(token);
    return it->second;
  }

  std::unordered_map<std::string, UserId> users_;
  std::unordered_map<std::string, ItemId> items_;
  std::vector<std::string> user_tokens_;
  std::vector<std::string> item_tokens_;
  std::vector<std::map<ItemId, Grade>> lists_;
  std::vector<Grade> grades_;
};

inline InteractionDataset parse_dataset(std::istream& in, const std::string& source = "<dataset>") {
  DatasetBuilder b;
  b.read(in, source);
  return b.build();
}

inline InteractionDataset load_dataset(const std::string& path) {
  DatasetBuilder b;
  b.read_file(path);
  return b.build();
}

/// Writes `user<TAB>item<TAB>grade` lines in (user id, item id) order.
inline void write_dataset(std::ostream& out, const InteractionDataset& ds) {
  for (UserId u = 0; u < ds.n_users(); ++u) {
    for (const auto& ig : ds.items_of(u)) {
      out << ds.user_tokens()[u] << '\t' << ds.item_tokens()[ig.item] << '\t' << ig.grade << '\n';
    }
  }
}

inline void write_dataset(const std::string& path, const InteractionDataset& ds) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw ConfigError("cannot open " + path + " for writing");
  write_dataset(out, ds);
}

/// Every positive grade becomes 1; grade 0 stays 0.
inline InteractionDataset binarize(const InteractionDataset& ds) {
  std::vector<std::vector<ItemGrade>> lists(ds.n_users());
  for (UserId u = 0; u < ds.n_users(); ++u) {
    for (const auto& ig : ds.items_of(u)) lists[u].push_back({ig.item, ig.grade > 0 ? 1 : 0});
  }
  return InteractionDataset(ds.user_tokens(), ds.item_tokens(), std::move(lists), {0, 1});
}

/// Drops users with fewer than `threshold` interactions, then items left
/// without interactions; surviving ids are re-densified in their old order.
inline InteractionDataset filter_min_interactions(const InteractionDataset& ds, std::size_t threshold) {
  if (threshold == 0) return ds;
  std::vector<UserId> keep_users;
  for (UserId u = 0; u < ds.n_users(); ++u) {
    if (ds.items_of(u).size() >= threshold) keep_users.push_back(u);
  }
  if (keep_users.empty()) {
    throw EmptyDatasetError("no user has at least " + std::to_string(threshold) + " interactions");
  }
  std::vector<char> item_used(ds.n_items(), 0);
  for (UserId u : keep_users) {
    for (const auto& ig : ds.items_of(u)) item_used[ig.item] = 1;
  }
  std::vector<ItemId> new_item(ds.n_items(), 0);
  std::vector<std::string> item_tokens;
  for (ItemId i = 0; i < ds.n_items(); ++i) {
    if (!item_used[i]) continue;
    new_item[i] = static_cast<ItemId>(item_tokens.size());
    item_tokens.push_back(ds.item_tokens()[i]);
  }
  std::vector<std::string> user_tokens;
  std::vector<std::vector<ItemGrade>> lists;
  for (UserId u : keep_users) {
    user_tokens.push_back(ds.user_tokens()[u]);
    auto& list = lists.emplace_back();
    for (const auto& ig : ds.items_of(u)) list.push_back({new_item[ig.item], ig.grade});
  }
  return InteractionDataset(std::move(user_tokens), std::move(item_tokens), std::move(lists),
                            std::vector<Grade>(ds.grade_set().begin(), ds.grade_set().end()));
}

struct SplitSpec {
  enum class Method { LeaveOneOut, RandomHoldout };
  Method method = Method::RandomHoldout;
  double fraction = 0.2;
  std::uint64_t seed = 42;
  std::size_t min_user_interactions = 0;

  void validate() const {
    if (method == Method::RandomHoldout && !(fraction > 0.0 && fraction < 1.0)) {
      throw ConfigError("holdout fraction must lie in (0, 1)");
    }
  }
};

struct SplitResult {
  InteractionDataset train;
  InteractionDataset test;
  std::vector<UserId> flagged;  // users kept entirely in train
};

/// Per-user split. LeaveOneOut holds out one random positive;
/// RandomHoldout holds out ceil(fraction * n_a) random items, never all of
/// them. Users that cannot give up an item stay in train and are flagged.
/// Both halves share the id tables of `ds`.
inline SplitResult split(const InteractionDataset& ds, const SplitSpec& spec) {
  spec.validate();
  std::vector<std::vector<ItemGrade>> train(ds.n_users());
  std::vector<std::vector<ItemGrade>> test(ds.n_users());
  std::vector<UserId> flagged;
  for (UserId u = 0; u < ds.n_users(); ++u) {
    const auto items = ds.items_of(u);
    std::vector<std::size_t> eligible;
    for (std::size_t j = 0; j < items.size(); ++j) {
      if (spec.method == SplitSpec::Method::RandomHoldout || items[j].grade > 0) eligible.push_back(j);
    }
    std::size_t hold = 0;
    if (items.size() >= 2) {
      hold = spec.method == SplitSpec::Method::LeaveOneOut
                 ? std::min<std::size_t>(1, eligible.size())
                 : static_cast<std::size_t>(std::ceil(spec.fraction * static_cast<double>(items.size())));
      hold = std::min({hold, items.size() - 1, eligible.size()});
    }
    if (hold == 0) {
      flagged.push_back(u);
      train[u].assign(items.begin(), items.end());
      continue;
    }
    Rng rng(derive_seed(spec.seed, u));
    for (std::size_t j = 0; j < hold; ++j) {
      const auto pick = j + static_cast<std::size_t>(rng.uniform_int(eligible.size() - j));
      std::swap(eligible[j], eligible[pick]);
    }
    std::vector<char> held(items.size(), 0);
    for (std::size_t j = 0; j < hold; ++j) held[eligible[j]] = 1;
    for (std::size_t j = 0; j < items.size(); ++j) (held[j] ? test[u] : train[u]).push_back(items[j]);
  }
  std::vector<Grade> grades(ds.grade_set().begin(), ds.grade_set().end());
  return {InteractionDataset(ds.user_tokens(), ds.item_tokens(), std::move(train), grades),
          InteractionDataset(ds.user_tokens(), ds.item_tokens(), std::move(test), grades),
          std::move(flagged)};
}

/// Train and test files read into one shared id table (train first).
struct PreparedData {
  InteractionDataset train;
  InteractionDataset test;
};

inline PreparedData load_prepared(const std::string& train_path, const std::string& test_path) {
  DatasetBuilder all;
  all.read_file(train_path);
  all.read_file(test_path);
  const auto joint = all.build();

  auto restrict_to = [&](const std::string& path) {
    DatasetBuilder part;
    part.read_file(path);
    const auto ds = part.build();
    std::vector<std::vector<ItemGrade>> lists(joint.n_users());
    for (UserId u = 0; u < ds.n_users(); ++u) {
      const UserId ju = *joint.find_user(ds.user_tokens()[u]);
      for (const auto& ig : ds.items_of(u)) {
        lists[ju].push_back({*joint.find_item(ds.item_tokens()[ig.item]), ig.grade});
      }
    }
    return InteractionDataset(joint.user_tokens(), joint.item_tokens(), std::move(lists),
                              std::vector<Grade>(joint.grade_set().begin(), joint.grade_set().end()));
  };
  return {restrict_to(train_path), restrict_to(test_path)};
}

}  // namespace adafm
