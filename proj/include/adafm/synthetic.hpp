#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <numeric>
#include <vector>

#include "adafm/dataset.hpp"
#include "adafm/error.hpp"
#include "adafm/rng.hpp"

namespace adafm {

/// Implicit-feedback data with a planted low-rank preference structure.
///
/// Users and items get i.i.d. N(0, 1) factors of dimension `rank` and items a
/// N(0, popularity_sd^2) bias. User a scores item j as
/// <u_a, v_j> / sqrt(rank) + b_j and interacts with n_a items drawn without
/// replacement with probability proportional to exp(score / temperature)
/// (Gumbel top-n_a), where n_a is uniform in [min_items, max_items].
struct PlantedConfig {
  std::size_t n_users = 500;
  std::size_t n_items = 300;
  std::size_t rank = 6;
  std::size_t min_items = 20;
  std::size_t max_items = 40;
  double temperature = 0.5;
  double popularity_sd = 0.5;
  std::uint64_t seed = 1;
};

inline InteractionDataset make_planted_dataset(const PlantedConfig& cfg) {
  if (cfg.rank == 0 || cfg.n_users == 0 || cfg.n_items == 0) {
    throw ConfigError("planted dataset needs positive users, items and rank");
  }
  if (cfg.min_items == 0 || cfg.min_items > cfg.max_items || cfg.max_items >= cfg.n_items) {
    throw ConfigError("planted dataset needs 0 < min_items <= max_items < n_items");
  }
  if (!(cfg.temperature > 0.0)) throw ConfigError("temperature must be positive");
  Rng rng(cfg.seed);
  const std::size_t r = cfg.rank;
  std::vector<double> users(cfg.n_users * r);
  std::vector<double> items(cfg.n_items * r);
  std::vector<double> bias(cfg.n_items);
  for (double& x : users) x = rng.gaussian(0.0, 1.0);
  for (double& x : items) x = rng.gaussian(0.0, 1.0);
  for (double& x : bias) x = rng.gaussian(0.0, cfg.popularity_sd);
  const double scale = 1.0 / std::sqrt(static_cast<double>(r));

  std::vector<std::vector<ItemGrade>> lists(cfg.n_users);
  std::vector<std::pair<double, ItemId>> keys(cfg.n_items);
  for (std::size_t a = 0; a < cfg.n_users; ++a) {
    const std::size_t n_a =
        cfg.min_items + static_cast<std::size_t>(rng.uniform_int(cfg.max_items - cfg.min_items + 1));
    for (std::size_t j = 0; j < cfg.n_items; ++j) {
      double s = bias[j];
      for (std::size_t m = 0; m < r; ++m) s += scale * users[a * r + m] * items[j * r + m];
      double u = rng.uniform_real();
      while (u == 0.0) u = rng.uniform_real();
      const double gumbel = -std::log(-std::log(u));
      keys[j] = {s / cfg.temperature + gumbel, static_cast<ItemId>(j)};
    }
    std::partial_sort(keys.begin(), keys.begin() + static_cast<std::ptrdiff_t>(n_a), keys.end(),
                      [](const auto& x, const auto& y) { return x.first > y.first; });
    for (std::size_t j = 0; j < n_a; ++j) lists[a].push_back({keys[j].second, 1});
  }
  return InteractionDataset::from_lists(cfg.n_items, std::move(lists));
}

}  // namespace adafm
