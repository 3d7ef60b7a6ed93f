#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <optional>
#include <ostream>
#include <span>
#include <string>
#include <vector>

#include "adafm/dataset.hpp"
#include "adafm/error.hpp"
#include "adafm/fm_model.hpp"
#include "adafm/metrics.hpp"
#include "adafm/model_io.hpp"
#include "adafm/rng.hpp"
#include "adafm/trainers.hpp"

namespace adafm {

enum class ComponentTrainer {
  Pointwise,  // FM on logistic loss (AdaFM-O)
  Pairwise,   // PRFM / LambdaFM, sampler chosen by TrainConfig (AdaFM-P/S/D/W)
};

struct BoostConfig {
  std::size_t rounds = 4;
  TrainConfig component;
  ComponentTrainer trainer = ComponentTrainer::Pairwise;
  Measure measure = Measure::auc();
  double e_clamp = 1e-6;
  std::optional<std::size_t> patience;
  std::size_t eval_negatives = 100;
  std::uint64_t eval_seed = 7;
  std::size_t max_retries = 3;

  void validate() const {
    if (rounds < 1) throw ConfigError("boosting needs at least one round");
    if (!(e_clamp > 0.0 && e_clamp < 0.5)) throw ConfigError("e_clamp must lie in (0, 0.5)");
    if (patience && *patience < 1) throw ConfigError("patience must be at least 1");
    component.validate();
  }
};

/// alpha = 1/2 ln( sum_a p_a (1 + E_a) / sum_a p_a (1 - E_a) ), with each E_a
/// clamped to [e_clamp, 1 - e_clamp]. Users with undefined E are skipped.
inline double compute_alpha(std::span<const double> weights, const PerUserPerformance& perf,
                            double e_clamp) {
  if (weights.size() != perf.values.size()) throw ShapeError("weights and performances differ in length");
  double num = 0.0;
  double den = 0.0;
  for (std::size_t a = 0; a < weights.size(); ++a) {
    if (!perf.values[a]) continue;
    const double e = std::clamp(*perf.values[a], e_clamp, 1.0 - e_clamp);
    num += weights[a] * (1.0 + e);
    den += weights[a] * (1.0 - e);
  }
  if (!(den > 0.0)) throw BoostingError("no user with a defined measure carries weight");
  return 0.5 * std::log(num / den);
}

/// p_a proportional to exp(-E_a) of the current ensemble; users with an
/// undefined E get weight 0.
inline std::vector<double> update_weights(const PerUserPerformance& ensemble_perf) {
  std::vector<double> p(ensemble_perf.values.size(), 0.0);
  double total = 0.0;
  for (std::size_t a = 0; a < p.size(); ++a) {
    if (!ensemble_perf.values[a]) continue;
    p[a] = std::exp(-*ensemble_perf.values[a]);
    total += p[a];
  }
  if (total == 0.0) throw BoostingError("every user has an undefined measure");
  for (double& x : p) x /= total;
  return p;
}

struct RoundRecord {
  std::size_t round = 0;
  double alpha = 0.0;
  double component_weighted_e = 0.0;
  double ensemble_train_e = 0.0;
  std::optional<double> ensemble_holdout_e;
  std::size_t retries = 0;
};

struct BoostResult {
  EnsembleModel model;
  std::vector<RoundRecord> history;
  std::vector<double> weights;  // distribution after the last round
  bool stopped_early = false;
};

inline void write_round_log(std::ostream& out, std::span<const RoundRecord> history) {
  out << "round,alpha,component_weighted_E,ensemble_train_E,ensemble_holdout_E\n";
  for (const auto& r : history) {
    out << r.round << ',' << format_decimal(r.alpha) << ',' << format_decimal(r.component_weighted_e)
        << ',' << format_decimal(r.ensemble_train_e) << ','
        << (r.ensemble_holdout_e ? format_decimal(*r.ensemble_holdout_e) : std::string()) << '\n';
  }
}

/// Seed of the component trained in round `round` (1-based), attempt
/// `attempt`. Round 1's first attempt uses the configured seed unchanged, so
/// a one-round run reproduces the base learner.
inline std::uint64_t component_seed(std::uint64_t seed, std::size_t round, std::size_t attempt) {
  if (round == 1 && attempt == 0) return seed;
  return derive_seed(seed, 1000003ULL * round + attempt);
}

inline TrainResult train_with(const InteractionDataset& ds, std::span<const double> weights,
                              const TrainConfig& cfg, ComponentTrainer trainer, std::ostream* log) {
  return trainer == ComponentTrainer::Pointwise ? train_pointwise_fm(ds, weights, cfg, log)
                                                : train_component(ds, weights, cfg, log);
}

namespace detail {

/// Scores of a fixed candidate set, kept per user.
struct CandidateScores {
  std::vector<std::vector<double>> scores;

  static CandidateScores zeros(const EvalCandidates& c) {
    CandidateScores s;
    s.scores.resize(c.n_users());
    for (std::size_t u = 0; u < c.n_users(); ++u) s.scores[u].assign(c.lists[u].size(), 0.0);
    return s;
  }

  static CandidateScores of(const FmParams& p, const FeatureEncoder& enc, const EvalCandidates& c) {
    auto s = zeros(c);
    for (UserId u = 0; u < c.n_users(); ++u) {
      for (std::size_t j = 0; j < c.lists[u].size(); ++j) {
        s.scores[u][j] = predict_pair(p, enc, u, c.lists[u][j].item);
      }
    }
    return s;
  }

  void add_scaled(const CandidateScores& other, double alpha) {
    for (std::size_t u = 0; u < scores.size(); ++u) {
      for (std::size_t j = 0; j < scores[u].size(); ++j) scores[u][j] += alpha * other.scores[u][j];
    }
  }

  PerUserPerformance measure(const EvalCandidates& c, const Measure& m) const {
    PerUserPerformance perf;
    perf.measure = m;
    perf.values.resize(c.n_users());
    RankedList rl;
    for (UserId u = 0; u < c.n_users(); ++u) {
      if (c.lists[u].empty()) continue;
      rl.scores = scores[u];
      rl.grades.clear();
      rl.items.clear();
      for (const auto& ig : c.lists[u]) {
        rl.grades.push_back(ig.grade);
        rl.items.push_back(ig.item);
      }
      perf.values[u] = user_measure(rl, m);
    }
    return perf;
  }
};

}  // namespace detail

/// AdaFM: T rounds of (train component on weights p, alpha from its
/// weighted E, add to ensemble, p <- softmax(-E of the ensemble)). Per-user
/// E is measured on the training split; `holdout`, when given, only drives
/// early stopping and the holdout column of the round log.
inline BoostResult run_adafm(const InteractionDataset& train, const BoostConfig& cfg,
                             const InteractionDataset* holdout = nullptr, std::ostream* log = nullptr) {
  cfg.validate();
  const auto enc = FeatureEncoder::for_dataset(train);
  const std::size_t n = train.n_users();
  if (n == 0) throw EmptyDatasetError("boosting on an empty dataset");

  const auto train_cands = build_eval_candidates(train, {}, cfg.eval_negatives, cfg.eval_seed);
  auto train_f = detail::CandidateScores::zeros(train_cands);
  std::optional<EvalCandidates> hold_cands;
  std::optional<detail::CandidateScores> hold_f;
  if (holdout) {
    if (holdout->n_users() != n || holdout->n_items() != train.n_items()) {
      throw ShapeError("holdout split does not share the training id tables");
    }
    hold_cands = build_eval_candidates(*holdout, {&train}, cfg.eval_negatives, derive_seed(cfg.eval_seed, 1));
    hold_f = detail::CandidateScores::zeros(*hold_cands);
  }

  BoostResult result;
  result.weights.assign(n, 1.0 / static_cast<double>(n));
  std::optional<double> best_holdout;
  std::size_t stale = 0;

  for (std::size_t t = 1; t <= cfg.rounds; ++t) {
    std::optional<FmParams> accepted;
    detail::CandidateScores h_scores;
    PerUserPerformance h_perf;
    double alpha = 0.0;
    std::size_t attempt = 0;
    for (; attempt <= cfg.max_retries; ++attempt) {
      TrainConfig round_cfg = cfg.component;
      round_cfg.seed = component_seed(cfg.component.seed, t, attempt);
      auto trained = train_with(train, result.weights, round_cfg, cfg.trainer, log);
      h_scores = detail::CandidateScores::of(trained.params, enc, train_cands);
      h_perf = h_scores.measure(train_cands, cfg.measure);
      alpha = compute_alpha(result.weights, h_perf, cfg.e_clamp);
      if (alpha > 0.0 && std::isfinite(alpha)) {
        accepted = std::move(trained.params);
        break;
      }
    }
    if (!accepted) {
      if (result.model.empty()) throw BoostingError("no component reached a positive weight");
      result.stopped_early = true;
      break;
    }

    RoundRecord rec;
    rec.round = t;
    rec.alpha = alpha;
    rec.retries = attempt;
    rec.component_weighted_e = weighted_auc(h_perf, result.weights);

    train_f.add_scaled(h_scores, alpha);
    const auto f_perf = train_f.measure(train_cands, cfg.measure);
    rec.ensemble_train_e = f_perf.mean();
    if (holdout) {
      hold_f->add_scaled(detail::CandidateScores::of(*accepted, enc, *hold_cands), alpha);
      rec.ensemble_holdout_e = hold_f->measure(*hold_cands, cfg.measure).mean();
    }
    result.model.add(alpha, std::move(*accepted));
    result.weights = update_weights(f_perf);
    result.history.push_back(rec);

    if (cfg.patience && rec.ensemble_holdout_e) {
      if (!best_holdout || *rec.ensemble_holdout_e > *best_holdout) {
        best_holdout = rec.ensemble_holdout_e;
        stale = 0;
      } else if (++stale >= *cfg.patience) {
        result.stopped_early = t < cfg.rounds;
        break;
      }
    }
  }
  return result;
}

}  // namespace adafm
