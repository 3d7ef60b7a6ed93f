#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <sstream>
#include <vector>

#include "adafm/metrics.hpp"
#include "adafm/trainers.hpp"

using namespace adafm;

namespace {

FmParams random_params(std::size_t d, std::size_t k, Rng& rng) {
  FmParams p(d, k);
  for (double& w : p.linear()) w = rng.gaussian(0.0, 0.5);
  for (double& v : p.factors()) v = rng.gaussian(0.0, 0.5);
  return p;
}

SparseVector random_x(std::size_t d, Rng& rng) {
  std::vector<SparseEntry> e;
  for (std::size_t j = 0, n = 1 + rng.uniform_int(d); j < n; ++j) {
    e.push_back({rng.uniform_int(d), rng.gaussian(0.0, 1.0)});
  }
  return SparseVector::from_pairs(d, e);
}

// c * ln(1 + exp(-(h(x_ab) - h(x_ac)))) + gamma/2 * |theta|^2 over the
// coordinates of features present in x_ab or x_ac.
double objective(const FmParams& p, const SparseVector& ab, const SparseVector& ac, double c, double gamma) {
  const double delta = predict_naive(p, ab) - predict_naive(p, ac);
  double reg = 0.0;
  for (std::size_t l = 0; l < p.dim(); ++l) {
    if (ab.at(l) == 0.0 && ac.at(l) == 0.0) continue;
    reg += p.w(l) * p.w(l);
    for (double v : p.row(l)) reg += v * v;
  }
  return c * std::log1p(std::exp(-delta)) + 0.5 * gamma * reg;
}

// Binary dataset with `n` users over `m` items, 3..6 positives each.
InteractionDataset random_binary(std::size_t n, std::size_t m, std::uint64_t seed) {
  Rng rng(seed);
  std::vector<std::vector<ItemGrade>> lists(n);
  for (auto& l : lists) {
    std::vector<char> used(m, 0);
    for (std::size_t j = 0, c = 3 + rng.uniform_int(4); j < c; ++j) {
      const auto i = static_cast<ItemId>(rng.uniform_int(m));
      if (!used[i]) l.push_back({i, 1});
      used[i] = 1;
    }
  }
  return InteractionDataset::from_lists(m, lists);
}

double train_auc(const FmParams& p, const InteractionDataset& ds) {
  const auto enc = FeatureEncoder::for_dataset(ds);
  const auto cands = build_eval_candidates(ds, {}, ds.n_items(), 1);
  return evaluate_model([&](UserId u, ItemId i) { return predict_pair(p, enc, u, i); }, cands, Measure::auc())
      .aggregate;
}

}  // namespace

TEST(Loss, Values) {
  EXPECT_NEAR(pairwise_logistic_loss(0.0), std::log(2.0), 1e-15);
  EXPECT_LT(pairwise_logistic_loss(50.0), 1e-20);
  EXPECT_NEAR(pairwise_logistic_loss(-50.0), 50.0, 1e-12);
  EXPECT_TRUE(std::isfinite(pairwise_logistic_loss(-1000.0)));
}

TEST(Lambda, ValuesAndRange) {
  EXPECT_EQ(lambda_grad(0.0), -0.5);
  EXPECT_GT(lambda_grad(50.0), -1e-20);
  Rng rng(1);
  for (int i = 0; i < 1000; ++i) {
    const double d = rng.gaussian(0.0, 10.0);
    EXPECT_GT(lambda_grad(d), -1.0);
    EXPECT_LT(lambda_grad(d), 0.0);
    const double h = 1e-6;
    const double fd = (pairwise_logistic_loss(d + h) - pairwise_logistic_loss(d - h)) / (2 * h);
    EXPECT_NEAR(lambda_grad(d), fd, 1e-6);
  }
}

TEST(Lambda, PointwiseFactorAtZero) { EXPECT_EQ(pointwise_gradient_factor(0.0, 1.0), -0.5); }

TEST(PairUpdate, RejectsIdenticalVectors) {
  FmParams p(4, 1);
  const SparseVector x(4, {{0, 1.0}, {2, 1.0}});
  EXPECT_THROW(sgd_pair_update(p, PairStep{}, x, x, 0.1, 0.0), ConfigError);
}

TEST(PairUpdate, ZeroLearningRateIsNoOp) {
  Rng rng(2);
  auto p = random_params(5, 2, rng);
  const auto before = p;
  PairStep s;
  s.lambda = -0.3;
  sgd_pair_update(p, s, SparseVector(5, {{0, 1.0}, {2, 1.0}}), SparseVector(5, {{0, 1.0}, {3, 1.0}}), 0.0, 0.1);
  EXPECT_EQ(p, before);
}

TEST(PairUpdate, StepMatchesFiniteDifferenceGradient) {
  Rng rng(3);
  for (int trial = 0; trial < 200; ++trial) {
    const std::size_t d = 2 + rng.uniform_int(5);
    const std::size_t k = 1 + rng.uniform_int(3);
    const auto p = random_params(d, k, rng);
    const auto ab = random_x(d, rng);
    auto ac = random_x(d, rng);
    if (ab == ac) continue;
    const double c = 0.2 + rng.uniform_real();
    const double gamma = 0.1 * rng.uniform_real();
    PairStep s;
    s.delta = predict_fast(p, ab) - predict_fast(p, ac);
    s.lambda = lambda_grad(s.delta);
    s.loss_weight = c;
    const double eta = 1e-3;
    FmParams q = p;
    sgd_pair_update(q, s, ab, ac, eta, gamma);
    const double h = 1e-5;
    for (std::size_t l = 0; l < d; ++l) {
      for (std::size_t m = 0; m <= k; ++m) {
        FmParams up = p;
        FmParams down = p;
        (m == k ? up.w(l) : up.v(l, m)) += h;
        (m == k ? down.w(l) : down.v(l, m)) -= h;
        const double fd = (objective(up, ab, ac, c, gamma) - objective(down, ab, ac, c, gamma)) / (2 * h);
        const double step = ((m == k ? p.w(l) : p.v(l, m)) - (m == k ? q.w(l) : q.v(l, m))) / eta;
        EXPECT_LE(std::abs(step - fd), 1e-4 * std::max(1.0, std::abs(fd))) << "trial " << trial;
      }
    }
  }
}

TEST(PairUpdate, HandInstanceDescentOracle) {
  // d = 4, k = 1: user 0 and items 2 (positive) / 3 (negative) of a 2x2 encoder.
  FmParams p(4, 1);
  p.w(2) = 0.1;
  p.w(3) = -0.2;
  p.v(0, 0) = 0.5;
  p.v(1, 0) = 0.7;
  p.v(2, 0) = -0.3;
  p.v(3, 0) = 0.4;
  const SparseVector ab(4, {{0, 1.0}, {2, 1.0}});
  const SparseVector ac(4, {{0, 1.0}, {3, 1.0}});
  PairStep s;
  s.delta = predict_naive(p, ab) - predict_naive(p, ac);
  s.lambda = lambda_grad(s.delta);
  const double eta = 0.05;
  const double gamma = 0.01;
  FmParams q = p;
  sgd_pair_update(q, s, ab, ac, eta, gamma);
  const double h = 1e-6;
  for (std::size_t l = 0; l < 4; ++l) {
    for (int which = 0; which < 2; ++which) {
      FmParams up = p;
      FmParams down = p;
      (which ? up.v(l, 0) : up.w(l)) += h;
      (which ? down.v(l, 0) : down.w(l)) -= h;
      const double g = (objective(up, ab, ac, 1.0, gamma) - objective(down, ab, ac, 1.0, gamma)) / (2 * h);
      const double expect = (which ? p.v(l, 0) : p.w(l)) - eta * g;
      EXPECT_NEAR(which ? q.v(l, 0) : q.w(l), expect, 1e-5);
    }
  }
  // Feature 1 (the other user) is untouched, regularization included.
  EXPECT_EQ(q.v(1, 0), 0.7);
}

TEST(PairUpdate, OneHotMatchesGeneric) {
  Rng rng(4);
  const FeatureEncoder enc{6, 9};
  for (int trial = 0; trial < 500; ++trial) {
    auto p = random_params(enc.dim(), 1 + rng.uniform_int(4), rng);
    const auto u = static_cast<UserId>(rng.uniform_int(6));
    const auto b = static_cast<ItemId>(rng.uniform_int(9));
    auto c = static_cast<ItemId>(rng.uniform_int(9));
    if (b == c) c = (c + 1) % 9;
    PairStep s;
    s.delta = predict_pair(p, enc, u, b) - predict_pair(p, enc, u, c);
    s.lambda = lambda_grad(s.delta);
    s.loss_weight = 0.5 + rng.uniform_real();
    s.extra_weight = 1.0 + rng.uniform_int(3);
    FmParams q = p;
    sgd_pair_update(p, s, enc.encode(u, b), enc.encode(u, c), 0.1, 0.05);
    sgd_pair_update_onehot(q, enc, u, b, c, s.extra_weight * s.loss_weight * s.lambda, 0.1, 0.05);
    for (std::size_t j = 0; j < p.linear().size(); ++j) EXPECT_NEAR(p.linear()[j], q.linear()[j], 1e-12);
    for (std::size_t j = 0; j < p.factors().size(); ++j) EXPECT_NEAR(p.factors()[j], q.factors()[j], 1e-12);
  }
}

TEST(PairUpdate, DoubleWeightHalfRateWithoutRegularization) {
  Rng rng(5);
  const auto p = random_params(6, 2, rng);
  const SparseVector ab(6, {{0, 1.0}, {3, 1.0}});
  const SparseVector ac(6, {{0, 1.0}, {4, 1.0}});
  PairStep s;
  s.delta = predict_fast(p, ab) - predict_fast(p, ac);
  s.lambda = lambda_grad(s.delta);
  s.loss_weight = 0.3;
  FmParams a = p;
  sgd_pair_update(a, s, ab, ac, 0.2, 0.0);
  s.loss_weight = 0.6;
  FmParams b = p;
  sgd_pair_update(b, s, ab, ac, 0.1, 0.0);
  for (std::size_t j = 0; j < a.factors().size(); ++j) EXPECT_NEAR(a.factors()[j], b.factors()[j], 1e-15);
  for (std::size_t j = 0; j < a.linear().size(); ++j) EXPECT_NEAR(a.linear()[j], b.linear()[j], 1e-15);
}

TEST(PairUpdate, DivergenceNamesStep) {
  FmParams p(4, 1);
  p.v(0, 0) = 1e300;
  p.v(2, 0) = 1e300;
  PairStep s;
  s.lambda = -1.0;
  try {
    sgd_pair_update(p, s, SparseVector(4, {{0, 1.0}, {2, 1.0}}), SparseVector(4, {{0, 1.0}, {3, 1.0}}), 1e10,
                    0.0, 77);
    FAIL() << "expected divergence";
  } catch (const DivergenceError& e) {
    EXPECT_NE(std::string(e.what()).find("77"), std::string::npos);
  }
}

TEST(TrainConfig, Validation) {
  TrainConfig c;
  EXPECT_NO_THROW(c.validate());
  c.eta = 0.0;
  EXPECT_THROW(c.validate(), ConfigError);
  c = {};
  c.max_iter = 0;
  EXPECT_THROW(c.validate(), ConfigError);
  c = {};
  c.k = 0;
  EXPECT_THROW(c.validate(), ConfigError);
  c = {};
  c.gamma = -1;
  EXPECT_THROW(c.validate(), ConfigError);
}

TEST(TrainComponent, ImprovesTrainingAucOnTinyData) {
  const auto ds = InteractionDataset::from_lists(4, {{{0, 1}, {1, 1}}, {{2, 1}, {3, 1}}});
  TrainConfig cfg;
  cfg.max_iter = 5000;
  cfg.seed = 3;
  const std::vector<double> w = {0.5, 0.5};
  Rng init_rng(derive_seed(cfg.seed, 0));
  const auto init = init_params(8, cfg.k, init_rng);
  const auto trained = train_component(ds, w, cfg).params;
  EXPECT_GT(train_auc(trained, ds), train_auc(init, ds));
  EXPECT_EQ(train_auc(trained, ds), 1.0);
}

TEST(TrainComponent, DeterministicForEverySampler) {
  const auto ds = random_binary(16, 30, 6);
  const std::vector<double> w(16, 1.0 / 16);
  for (auto kind : {SamplerKind::Uniform, SamplerKind::Static, SamplerKind::Dynamic, SamplerKind::RankAware}) {
    TrainConfig cfg;
    cfg.max_iter = 3000;
    cfg.sampler.kind = kind;
    const auto a = train_component(ds, w, cfg).params;
    const auto b = train_component(ds, w, cfg).params;
    EXPECT_EQ(a, b) << to_string(kind);
    EXPECT_TRUE(a.all_finite());
    cfg.seed = 43;
    EXPECT_NE(train_component(ds, w, cfg).params, a) << to_string(kind);
  }
}

TEST(TrainComponent, ConcentratedWeightsOnlyMoveThatUsersLoss) {
  const auto ds = random_binary(8, 20, 7);
  std::vector<double> w(8, 0.0);
  w[3] = 1.0;
  TrainConfig cfg;
  cfg.max_iter = 2000;
  cfg.gamma = 0.0;
  const auto trained = train_component(ds, w, cfg).params;
  Rng init_rng(derive_seed(cfg.seed, 0));
  const auto init = init_params(28, cfg.k, init_rng);
  // With gamma = 0 only user 3's pairs change anything; other users' rows stay put.
  for (UserId u = 0; u < 8; ++u) {
    const bool moved = trained.row(u)[0] != init.row(u)[0] || trained.row(u)[1] != init.row(u)[1];
    EXPECT_EQ(moved, u == 3) << "user " << u;
  }
}

// Independent PRFM trainer: same draw order, unweighted loss times `scale`,
// update written from the one-hot gradient formulas.
FmParams reference_prfm(const InteractionDataset& ds, const TrainConfig& cfg, double scale) {
  const std::size_t n = ds.n_users();
  Rng init_rng(derive_seed(cfg.seed, 0));
  FmParams p = init_params(n + ds.n_items(), cfg.k, init_rng, cfg.init_sd);
  Rng rng(derive_seed(cfg.seed, 1));
  std::vector<UserId> users;
  std::vector<std::vector<ItemId>> pos(n);
  std::vector<std::vector<ItemId>> neg(n);
  for (UserId u = 0; u < n; ++u) {
    for (ItemId i = 0; i < ds.n_items(); ++i) (ds.observed(u, i) ? pos[u] : neg[u]).push_back(i);
    if (!pos[u].empty() && !neg[u].empty()) users.push_back(u);
  }
  for (std::size_t step = 0; step < cfg.max_iter; ++step) {
    const UserId u = users[rng.uniform_int(users.size())];
    const ItemId b = pos[u][rng.uniform_int(pos[u].size())];
    const ItemId c = neg[u][rng.uniform_int(neg[u].size())];
    const std::size_t fu = u, fb = n + b, fc = n + c;
    double dot_b = 0.0;
    double dot_c = 0.0;
    for (std::size_t m = 0; m < cfg.k; ++m) {
      dot_b += p.v(fu, m) * p.v(fb, m);
      dot_c += p.v(fu, m) * p.v(fc, m);
    }
    const double delta = (p.w(fb) + dot_b) - (p.w(fc) + dot_c);
    const double g = scale * (-1.0 / (1.0 + std::exp(delta)));
    const double eta = cfg.eta;
    const double gm = cfg.gamma;
    p.w(fu) -= eta * gm * p.w(fu);
    p.w(fb) -= eta * (g + gm * p.w(fb));
    p.w(fc) -= eta * (-g + gm * p.w(fc));
    for (std::size_t m = 0; m < cfg.k; ++m) {
      const double vu = p.v(fu, m), vb = p.v(fb, m), vc = p.v(fc, m);
      p.v(fu, m) = vu - eta * (g * (vb - vc) + gm * vu);
      p.v(fb, m) = vb - eta * (g * vu + gm * vb);
      p.v(fc, m) = vc - eta * (-g * vu + gm * vc);
    }
  }
  return p;
}

TEST(TrainComponent, UniformWeightsReduceToPlainPrfm) {
  const std::size_t n = 16;  // a power of two keeps n * (1/n) exact
  const auto ds = random_binary(n, 25, 8);
  const std::vector<double> w(n, 1.0 / n);
  TrainConfig cfg;
  cfg.max_iter = 4000;
  const auto relative = train_component(ds, w, cfg).params;
  const auto ref1 = reference_prfm(ds, cfg, 1.0);
  for (std::size_t j = 0; j < relative.factors().size(); ++j) {
    ASSERT_NEAR(relative.factors()[j], ref1.factors()[j], 1e-12);
  }
  cfg.weighting = UserWeighting::Literal;
  const auto literal = train_component(ds, w, cfg).params;
  const auto ref2 = reference_prfm(ds, cfg, 1.0 / (n * n));
  for (std::size_t j = 0; j < literal.factors().size(); ++j) {
    ASSERT_NEAR(literal.factors()[j], ref2.factors()[j], 1e-12);
  }
}

TEST(TrainComponent, RejectsBadWeights) {
  const auto ds = random_binary(4, 10, 9);
  TrainConfig cfg;
  const std::vector<double> short_w = {0.5, 0.5};
  const std::vector<double> unnormalized = {0.5, 0.5, 0.5, 0.5};
  EXPECT_THROW(train_component(ds, short_w, cfg), ShapeError);
  EXPECT_THROW(train_component(ds, unnormalized, cfg), ConfigError);
}

TEST(TrainComponent, NeedsAUserWithPositivesAndNegatives) {
  const auto ds = InteractionDataset::from_lists(2, {{{0, 1}, {1, 1}}, {}});
  const std::vector<double> w = {0.5, 0.5};
  EXPECT_THROW(train_component(ds, w, TrainConfig{}), EmptyDatasetError);
}

TEST(TrainComponent, LogsLossWindows) {
  const auto ds = random_binary(8, 20, 10);
  const std::vector<double> w(8, 1.0 / 8);
  TrainConfig cfg;
  cfg.max_iter = 3000;
  cfg.log_interval = 1000;
  std::ostringstream log;
  const auto r = train_component(ds, w, cfg, &log);
  EXPECT_EQ(r.window_loss.size(), 3u);
  EXPECT_EQ(log.str().rfind("step=1000 avg_loss=", 0), 0u);
}

TEST(TrainComponent, RankAwareScalings) {
  const auto ds = random_binary(8, 20, 11);
  const std::vector<double> w(8, 1.0 / 8);
  TrainConfig cfg;
  cfg.max_iter = 2000;
  cfg.sampler.kind = SamplerKind::RankAware;
  const auto harmonic = train_component(ds, w, cfg).params;
  cfg.rank_aware_scaling = RankAwareScaling::TrialCount;
  cfg.eta = 0.005;
  const auto trials = train_component(ds, w, cfg).params;
  EXPECT_TRUE(harmonic.all_finite());
  EXPECT_TRUE(trials.all_finite());
  EXPECT_NE(harmonic, trials);
}

TEST(TrainComponent, DynamicShrinksOnSmallPools) {
  // User 0 has 3 unobserved items; m = 10 must shrink.
  const auto ds = InteractionDataset::from_lists(5, {{{0, 1}, {1, 1}}});
  const std::vector<double> w = {1.0};
  TrainConfig cfg;
  cfg.max_iter = 100;
  cfg.sampler.kind = SamplerKind::Dynamic;
  EXPECT_EQ(train_component(ds, w, cfg).shrunk_dynamic_draws, 100u);
}

TEST(Pointwise, NullStep) {
  const auto ds = random_binary(4, 10, 12);
  const std::vector<double> w(4, 0.25);
  TrainConfig cfg;
  cfg.max_iter = 50;
  cfg.eta = 1e-300;  // eta must be positive; this is numerically zero
  cfg.gamma = 0.0;
  Rng init_rng(derive_seed(cfg.seed, 0));
  const auto init = init_params(14, cfg.k, init_rng);
  const auto trained = train_pointwise_fm(ds, w, cfg).params;
  // Linear weights start at 0, so they move by ~1e-300; factors cannot move.
  EXPECT_TRUE(std::equal(trained.factors().begin(), trained.factors().end(), init.factors().begin()));
  for (double x : trained.linear()) EXPECT_LT(std::abs(x), 1e-290);

  FmParams p = init;
  const FeatureEncoder enc{4, 10};
  pointwise_update(p, enc.encode(1, 2), 1.0, 1.0, 0.0, 0.0);
  EXPECT_EQ(p, init);
}

TEST(Pointwise, OneHotMatchesGeneric) {
  Rng rng(13);
  const FeatureEncoder enc{5, 7};
  for (int trial = 0; trial < 200; ++trial) {
    auto p = random_params(enc.dim(), 3, rng);
    FmParams q = p;
    const auto u = static_cast<UserId>(rng.uniform_int(5));
    const auto i = static_cast<ItemId>(rng.uniform_int(7));
    const double y = rng.uniform_int(2) ? 1.0 : -1.0;
    pointwise_update(p, enc.encode(u, i), y, 0.7, 0.1, 0.02);
    pointwise_update_onehot(q, enc, u, i, y, 0.7, 0.1, 0.02);
    for (std::size_t j = 0; j < p.factors().size(); ++j) EXPECT_NEAR(p.factors()[j], q.factors()[j], 1e-12);
    for (std::size_t j = 0; j < p.linear().size(); ++j) EXPECT_NEAR(p.linear()[j], q.linear()[j], 1e-12);
  }
}

TEST(Pointwise, LossDecreasesOnSeparableData) {
  // Two disjoint taste groups: a rank-1 model separates them.
  std::vector<std::vector<ItemGrade>> lists(20);
  for (UserId u = 0; u < 20; ++u) {
    for (ItemId i = 0; i < 5; ++i) lists[u].push_back({static_cast<ItemId>(u < 10 ? i : 5 + i), 1});
  }
  const auto ds = InteractionDataset::from_lists(10, lists);
  const std::vector<double> w(20, 1.0 / 20);
  TrainConfig cfg;
  cfg.max_iter = 6000;
  cfg.eta = 0.05;
  cfg.gamma = 0.0;
  cfg.log_interval = 1000;
  const auto r = train_pointwise_fm(ds, w, cfg);
  ASSERT_EQ(r.window_loss.size(), 6u);
  for (std::size_t j = 1; j < r.window_loss.size(); ++j) EXPECT_LT(r.window_loss[j], r.window_loss[j - 1]);
}
