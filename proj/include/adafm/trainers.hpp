#pragma once

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <numeric>
#include <optional>
#include <ostream>
#include <span>
#include <string>
#include <vector>

#include "adafm/dataset.hpp"
#include "adafm/error.hpp"
#include "adafm/fm_model.hpp"
#include "adafm/model_io.hpp"
#include "adafm/rng.hpp"
#include "adafm/samplers.hpp"
#include "adafm/sparse_vector.hpp"

namespace adafm {

/// How a user's boosting weight p_a scales that user's loss in one SGD step.
enum class UserWeighting {
  Relative,  // n * p_a: 1 for every user under uniform weights
  Literal,   // p_a / n, the coefficient written in the component algorithm
};

/// Multiplier applied to rank-aware (LFM-W) pairs.
enum class RankAwareScaling {
  Harmonic,    // gamma_exact(ceil((|I|-1)/T), |I|), in (0, 1]
  TrialCount,  // ceil((|I|-1)/T) itself
};

struct TrainConfig {
  double eta = 0.05;
  double gamma = 0.05;
  std::size_t max_iter = 100000;
  std::size_t k = 2;
  SamplerConfig sampler;
  std::uint64_t seed = 42;
  UserWeighting weighting = UserWeighting::Relative;
  RankAwareScaling rank_aware_scaling = RankAwareScaling::Harmonic;
  double init_sd = 0.1;
  std::size_t log_interval = 0;  // 0: no progress log

  void validate() const {
    if (!(eta > 0.0) || !std::isfinite(eta)) throw ConfigError("learning rate eta must be positive");
    if (!(gamma >= 0.0) || !std::isfinite(gamma)) throw ConfigError("regularization gamma must be >= 0");
    if (max_iter < 1) throw ConfigError("max_iter must be at least 1");
    if (k < 1) throw ConfigError("latent rank k must be at least 1");
    sampler.validate();
  }
};

/// One sampled pair (a, b, c) and the quantities its update needs.
struct PairStep {
  UserId user = 0;
  ItemId positive = 0;
  ItemId negative = 0;
  double delta = 0.0;        // h(x_ab) - h(x_ac)
  double lambda = 0.0;       // d loss / d delta
  double loss_weight = 1.0;  // coefficient of the pair loss (p_a/n or n p_a)
  double extra_weight = 1.0; // rank-aware multiplier, 1 for other samplers
};

/// ln(1 + exp(-delta)), without overflow for large |delta|.
inline double pairwise_logistic_loss(double delta) {
  return delta > 0.0 ? std::log1p(std::exp(-delta)) : -delta + std::log1p(std::exp(delta));
}

/// -exp(-delta) / (1 + exp(-delta)) = -1 / (1 + exp(delta)).
inline double lambda_grad(double delta) {
  if (delta >= 0.0) {
    const double e = std::exp(-delta);
    return -e / (1.0 + e);
  }
  return -1.0 / (1.0 + std::exp(delta));
}

/// Gradient factor of ln(1 + exp(-y f)) with respect to f: -y sigma(-y f).
inline double pointwise_gradient_factor(double f, double y) { return y * lambda_grad(y * f); }

namespace detail {

inline void check_finite_row(const FmParams& p, std::size_t l, std::size_t step) {
  bool ok = std::isfinite(p.w(l));
  for (double v : p.row(l)) ok = ok && std::isfinite(v);
  if (!ok) {
    throw DivergenceError("non-finite parameter for feature " + std::to_string(l) + " at step " +
                          std::to_string(step));
  }
}

}  // namespace detail

/// theta <- theta - eta [c lambda dDelta/dtheta + gamma theta] for every
/// coordinate of a feature present in x_ab or x_ac, where
/// c = extra_weight * loss_weight and
///   dDelta/dw_l     = x_ab^l - x_ac^l
///   dDelta/dv_{l,m} = sum_r v_{r,m} (x_ab^r x_ab^l - x_ac^r x_ac^l)
///                     - v_{l,m} ((x_ab^l)^2 - (x_ac^l)^2).
/// All gradients are taken at the pre-update parameters.
inline void sgd_pair_update(FmParams& params, const PairStep& step, const SparseVector& x_ab,
                            const SparseVector& x_ac, double eta, double gamma,
                            std::size_t step_index = 0) {
  detail::check_dim(params, x_ab);
  detail::check_dim(params, x_ac);
  if (x_ab == x_ac) throw ConfigError("pair update needs two distinct feature vectors");
  const std::size_t k = params.rank();
  const double coef = step.extra_weight * step.loss_weight * step.lambda;

  std::vector<Accum> s_ab(k, 0);
  std::vector<Accum> s_ac(k, 0);
  for (std::size_t m = 0; m < k; ++m) {
    for (const auto& e : x_ab.entries()) s_ab[m] += static_cast<Accum>(params.v(e.index, m)) * e.value;
    for (const auto& e : x_ac.entries()) s_ac[m] += static_cast<Accum>(params.v(e.index, m)) * e.value;
  }

  auto apply = [&](std::size_t l, double xa, double xc) {
    params.w(l) -= eta * (coef * (xa - xc) + gamma * params.w(l));
    for (std::size_t m = 0; m < k; ++m) {
      const double v = params.v(l, m);
      const auto d = static_cast<double>(xa * s_ab[m] - xc * s_ac[m] -
                                         static_cast<Accum>(v) * (xa * xa - xc * xc));
      params.v(l, m) = v - eta * (coef * d + gamma * v);
    }
    detail::check_finite_row(params, l, step_index);
  };

  const auto a = x_ab.entries();
  const auto c = x_ac.entries();
  std::size_t i = 0;
  std::size_t j = 0;
  while (i < a.size() || j < c.size()) {
    if (j == c.size() || (i < a.size() && a[i].index < c[j].index)) {
      apply(a[i].index, a[i].value, 0.0);
      ++i;
    } else if (i == a.size() || c[j].index < a[i].index) {
      apply(c[j].index, 0.0, c[j].value);
      ++j;
    } else {
      apply(a[i].index, a[i].value, c[j].value);
      ++i;
      ++j;
    }
  }
}

/// sgd_pair_update specialized to one-hot user/item encodings, where
/// x_ab = e_u + e_b and x_ac = e_u + e_c.
inline void sgd_pair_update_onehot(FmParams& params, const FeatureEncoder& enc, UserId u, ItemId b,
                                   ItemId c, double coef, double eta, double gamma,
                                   std::size_t step_index = 0) {
  const std::size_t fu = enc.user_feature(u);
  const std::size_t fb = enc.item_feature(b);
  const std::size_t fc = enc.item_feature(c);
  auto vu = params.row(fu);
  auto vb = params.row(fb);
  auto vc = params.row(fc);
  params.w(fu) -= eta * gamma * params.w(fu);
  params.w(fb) -= eta * (coef + gamma * params.w(fb));
  params.w(fc) -= eta * (-coef + gamma * params.w(fc));
  for (std::size_t m = 0; m < params.rank(); ++m) {
    const double u_m = vu[m];
    const double b_m = vb[m];
    const double c_m = vc[m];
    vu[m] = u_m - eta * (coef * (b_m - c_m) + gamma * u_m);
    vb[m] = b_m - eta * (coef * u_m + gamma * b_m);
    vc[m] = c_m - eta * (-coef * u_m + gamma * c_m);
  }
  detail::check_finite_row(params, fu, step_index);
  detail::check_finite_row(params, fb, step_index);
  detail::check_finite_row(params, fc, step_index);
}

/// One SGD step on loss_weight * ln(1 + exp(-y f(x))) + gamma/2 ||theta||^2,
/// restricted to the features present in x.
inline void pointwise_update(FmParams& params, const SparseVector& x, double y, double loss_weight,
                             double eta, double gamma, std::size_t step_index = 0) {
  const double f = predict_fast(params, x);
  const double coef = loss_weight * pointwise_gradient_factor(f, y);
  const std::size_t k = params.rank();
  std::vector<Accum> s(k, 0);
  for (std::size_t m = 0; m < k; ++m) {
    for (const auto& e : x.entries()) s[m] += static_cast<Accum>(params.v(e.index, m)) * e.value;
  }
  for (const auto& e : x.entries()) {
    const std::size_t l = e.index;
    params.w(l) -= eta * (coef * e.value + gamma * params.w(l));
    for (std::size_t m = 0; m < k; ++m) {
      const double v = params.v(l, m);
      const auto d = static_cast<double>(e.value * s[m] - static_cast<Accum>(v) * e.value * e.value);
      params.v(l, m) = v - eta * (coef * d + gamma * v);
    }
    detail::check_finite_row(params, l, step_index);
  }
}

/// pointwise_update specialized to x = e_u + e_i.
inline void pointwise_update_onehot(FmParams& params, const FeatureEncoder& enc, UserId u, ItemId i,
                                    double y, double loss_weight, double eta, double gamma,
                                    std::size_t step_index = 0) {
  const double f = predict_pair(params, enc, u, i);
  const double coef = loss_weight * pointwise_gradient_factor(f, y);
  const std::size_t fu = enc.user_feature(u);
  const std::size_t fi = enc.item_feature(i);
  auto vu = params.row(fu);
  auto vi = params.row(fi);
  params.w(fu) -= eta * (coef + gamma * params.w(fu));
  params.w(fi) -= eta * (coef + gamma * params.w(fi));
  for (std::size_t m = 0; m < params.rank(); ++m) {
    const double u_m = vu[m];
    const double i_m = vi[m];
    vu[m] = u_m - eta * (coef * i_m + gamma * u_m);
    vi[m] = i_m - eta * (coef * u_m + gamma * i_m);
  }
  detail::check_finite_row(params, fu, step_index);
  detail::check_finite_row(params, fi, step_index);
}

struct TrainResult {
  FmParams params;
  std::vector<double> window_loss;  // mean loss per log interval
  std::size_t shrunk_dynamic_draws = 0;
};

namespace detail {

/// Per-user sampling state shared by the trainers.
class TrainingSet {
 public:
  TrainingSet(const InteractionDataset& ds, std::span<const double> weights, UserWeighting weighting)
  {
    const std::size_t n = ds.n_users();
    if (weights.size() != n) {
      throw ShapeError("weights cover " + std::to_string(weights.size()) + " users, dataset has " +
                       std::to_string(n));
    }
    double total = 0.0;
    for (double p : weights) {
      if (!(p >= 0.0) || !std::isfinite(p)) throw ConfigError("user weights must be non-negative");
      total += p;
    }
    if (std::abs(total - 1.0) > 1e-9) throw ConfigError("user weights must sum to 1");

    loss_weight_.resize(n);
    positives_.resize(n);
    pools_.resize(n);
    const auto nd = static_cast<double>(n);
    for (UserId u = 0; u < n; ++u) {
      loss_weight_[u] = weighting == UserWeighting::Relative ? nd * weights[u] : weights[u] / nd;
      const auto top = ds.top_grade(u);
      if (!top) continue;
      for (const auto& ig : ds.items_of(u)) {
        if (ig.grade == *top) positives_[u].push_back(ig.item);
      }
      pools_[u] = ItemPool::below_grade(ds.items_of(u), *top, ds.n_items());
      if (!pools_[u].empty()) eligible_.push_back(u);
    }
    if (eligible_.empty()) {
      throw EmptyDatasetError("no user has both a positive item and a drawable negative");
    }
  }

  UserId draw_user(Rng& rng) const { return eligible_[rng.uniform_int(eligible_.size())]; }
  ItemId draw_positive(UserId u, Rng& rng) const {
    const auto& pos = positives_[u];
    return pos[rng.uniform_int(pos.size())];
  }
  const ItemPool& pool(UserId u) const { return pools_[u]; }
  double loss_weight(UserId u) const { return loss_weight_[u]; }

 private:
  std::vector<double> loss_weight_;
  std::vector<std::vector<ItemId>> positives_;
  std::vector<ItemPool> pools_;
  std::vector<UserId> eligible_;
};

class LossWindow {
 public:
  LossWindow(std::size_t interval, std::ostream* log) : interval_(interval), log_(log) {}

  void add(std::size_t step, double loss, std::vector<double>& sink) {
    if (interval_ == 0) return;
    sum_ += loss;
    ++count_;
    if (step % interval_ == 0) {
      const double avg = sum_ / static_cast<double>(count_);
      sink.push_back(avg);
      if (log_) *log_ << "step=" << step << " avg_loss=" << format_decimal(avg) << '\n';
      sum_ = 0.0;
      count_ = 0;
    }
  }

 private:
  std::size_t interval_;
  std::ostream* log_;
  double sum_ = 0.0;
  std::size_t count_ = 0;
};

}  // namespace detail

/// Precomputed harmonic partial sums for gamma_exact over a fixed catalog.
class HarmonicTable {
 public:
  explicit HarmonicTable(std::size_t catalog_size) : partial_(catalog_size + 1) {
    double acc = 0.0;
    for (std::size_t s = 0; s <= catalog_size; ++s) {
      acc += 1.0 / static_cast<double>(s + 1);
      partial_[s] = acc;
    }
  }
  double weight(std::size_t rank) const {
    if (rank >= partial_.size()) throw RangeError("rank exceeds catalog size");
    return partial_[rank] / partial_.back();
  }

 private:
  std::vector<double> partial_;
};

/// The component algorithm: user-weighted pairwise SGD. Each step draws a
/// user uniformly, a positive uniformly from the user's top-grade items, and
/// a negative from I^-_ab with the configured sampler.
inline TrainResult train_component(const InteractionDataset& ds, std::span<const double> weights,
                                   const TrainConfig& cfg, std::ostream* log = nullptr) {
  cfg.validate();
  const detail::TrainingSet set(ds, weights, cfg.weighting);
  const auto enc = FeatureEncoder::for_dataset(ds);
  Rng init_rng(derive_seed(cfg.seed, 0));
  Rng rng(derive_seed(cfg.seed, 1));
  TrainResult result{init_params(enc.dim(), cfg.k, init_rng, cfg.init_sd), {}, 0};
  FmParams& params = result.params;

  std::optional<StaticSampler> static_sampler;
  if (cfg.sampler.kind == SamplerKind::Static) static_sampler.emplace(ds.popularity_rank(), cfg.sampler.rho);
  std::optional<HarmonicTable> harmonic;
  if (cfg.sampler.kind == SamplerKind::RankAware) harmonic.emplace(ds.n_items());
  const std::size_t max_trials = cfg.sampler.trials_cap(ds.n_items());

  detail::LossWindow window(cfg.log_interval, log);
  for (std::size_t step = 1; step <= cfg.max_iter; ++step) {
    const UserId u = set.draw_user(rng);
    const ItemId b = set.draw_positive(u, rng);
    const ItemPool& pool = set.pool(u);
    auto score = [&](ItemId j) { return predict_pair(params, enc, u, j); };
    const double pos_score = score(b);

    ItemId c = 0;
    double extra = 1.0;
    switch (cfg.sampler.kind) {
      case SamplerKind::Uniform:
        c = pool.draw_uniform(rng);
        break;
      case SamplerKind::Static:
        c = static_sampler->draw(pool, rng);
        break;
      case SamplerKind::Dynamic: {
        const auto draw = sample_dynamic(score, pool, cfg.sampler.m, cfg.sampler.rho, rng);
        if (draw.candidates < cfg.sampler.m) ++result.shrunk_dynamic_draws;
        c = draw.item;
        break;
      }
      case SamplerKind::RankAware: {
        const auto draw = sample_rank_aware(score, pos_score, pool, cfg.sampler.epsilon, max_trials, rng);
        c = draw.item;
        extra = cfg.rank_aware_scaling == RankAwareScaling::TrialCount
                    ? static_cast<double>(draw.gamma_weight)
                    : harmonic->weight(std::min(draw.gamma_weight, ds.n_items()));
        break;
      }
    }
    const double delta = pos_score - score(c);
    window.add(step, pairwise_logistic_loss(delta), result.window_loss);
    const double coef = extra * set.loss_weight(u) * lambda_grad(delta);
    sgd_pair_update_onehot(params, enc, u, b, c, coef, cfg.eta, cfg.gamma, step);
  }
  return result;
}

/// Pointwise FM on user-weighted logistic loss: each step updates on one
/// positive instance (y = +1) and one uniformly sampled unobserved item
/// (y = -1) of a uniformly drawn user.
inline TrainResult train_pointwise_fm(const InteractionDataset& ds, std::span<const double> weights,
                                      const TrainConfig& cfg, std::ostream* log = nullptr) {
  cfg.validate();
  const detail::TrainingSet set(ds, weights, cfg.weighting);
  const auto enc = FeatureEncoder::for_dataset(ds);
  Rng init_rng(derive_seed(cfg.seed, 0));
  Rng rng(derive_seed(cfg.seed, 1));
  TrainResult result{init_params(enc.dim(), cfg.k, init_rng, cfg.init_sd), {}, 0};
  FmParams& params = result.params;

  detail::LossWindow window(cfg.log_interval, log);
  for (std::size_t step = 1; step <= cfg.max_iter; ++step) {
    const UserId u = set.draw_user(rng);
    const ItemId b = set.draw_positive(u, rng);
    const ItemId c = set.pool(u).draw_uniform(rng);
    const double w = set.loss_weight(u);
    const double loss = 0.5 * (pairwise_logistic_loss(predict_pair(params, enc, u, b)) +
                               pairwise_logistic_loss(-predict_pair(params, enc, u, c)));
    window.add(step, loss, result.window_loss);
    pointwise_update_onehot(params, enc, u, b, +1.0, w, cfg.eta, cfg.gamma, step);
    pointwise_update_onehot(params, enc, u, c, -1.0, w, cfg.eta, cfg.gamma, step);
  }
  return result;
}

}  // namespace adafm
