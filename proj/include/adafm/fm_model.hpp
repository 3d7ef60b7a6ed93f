#pragma once

#include <cmath>
#include <cstddef>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "adafm/dataset.hpp"
#include "adafm/error.hpp"
#include "adafm/rng.hpp"
#include "adafm/sparse_vector.hpp"

namespace adafm {

/// Accumulator type for predictions.
using Accum = long double;

/// Parameters of one second-order FM: linear weights w (length d) and the
/// factor matrix V (d x k, row-major).
class FmParams {
 public:
  FmParams() = default;

  FmParams(std::size_t d, std::size_t k) : d_(d), k_(k), w_(d, 0.0), v_(d * k, 0.0) {
    if (k == 0) throw ConfigError("latent rank k must be at least 1");
  }

  std::size_t dim() const noexcept { return d_; }
  std::size_t rank() const noexcept { return k_; }

  double& w(std::size_t l) { return w_[l]; }
  double w(std::size_t l) const { return w_[l]; }
  double& v(std::size_t l, std::size_t m) { return v_[l * k_ + m]; }
  double v(std::size_t l, std::size_t m) const { return v_[l * k_ + m]; }

  std::span<double> row(std::size_t l) { return {v_.data() + l * k_, k_}; }
  std::span<const double> row(std::size_t l) const { return {v_.data() + l * k_, k_}; }

  std::span<double> linear() noexcept { return w_; }
  std::span<const double> linear() const noexcept { return w_; }
  std::span<double> factors() noexcept { return v_; }
  std::span<const double> factors() const noexcept { return v_; }

  bool all_finite() const {
    for (double x : w_) {
      if (!std::isfinite(x)) return false;
    }
    for (double x : v_) {
      if (!std::isfinite(x)) return false;
    }
    return true;
  }

  friend bool operator==(const FmParams&, const FmParams&) = default;

 private:
  std::size_t d_ = 0;
  std::size_t k_ = 0;
  std::vector<double> w_;
  std::vector<double> v_;
};

namespace detail {
inline void check_dim(const FmParams& p, const SparseVector& x) {
  if (x.dim() != p.dim()) {
    throw ShapeError("feature vector has dim " + std::to_string(x.dim()) + ", model expects " +
                     std::to_string(p.dim()));
  }
}
}  // namespace detail

/// w.x + sum_{l<m} <v_l, v_m> x_l x_m by an explicit double loop over the
/// nonzero entries. O(k nnz^2); used as the reference predictor.
inline double predict_naive(const FmParams& p, const SparseVector& x) {
  detail::check_dim(p, x);
  const auto e = x.entries();
  Accum sum = 0;
  for (const auto& a : e) sum += static_cast<Accum>(p.w(a.index)) * a.value;
  for (std::size_t i = 0; i < e.size(); ++i) {
    for (std::size_t j = i + 1; j < e.size(); ++j) {
      Accum dot = 0;
      for (std::size_t m = 0; m < p.rank(); ++m) {
        dot += static_cast<Accum>(p.v(e[i].index, m)) * p.v(e[j].index, m);
      }
      sum += dot * e[i].value * e[j].value;
    }
  }
  return static_cast<double>(sum);
}

/// w.x + 1/2 (||V^T x||^2 - sum_s ||v_s o x||^2). O(k nnz).
inline double predict_fast(const FmParams& p, const SparseVector& x) {
  detail::check_dim(p, x);
  const auto e = x.entries();
  Accum linear = 0;
  for (const auto& a : e) linear += static_cast<Accum>(p.w(a.index)) * a.value;
  Accum pairwise = 0;
  for (std::size_t m = 0; m < p.rank(); ++m) {
    Accum s = 0;
    Accum s2 = 0;
    for (const auto& a : e) {
      const Accum t = static_cast<Accum>(p.v(a.index, m)) * a.value;
      s += t;
      s2 += t * t;
    }
    pairwise += s * s - s2;
  }
  return static_cast<double>(linear + pairwise / 2);
}

/// Score of an encoded (user, item) pair without materializing the vector:
/// w_u + w_i + <v_u, v_i>.
inline double predict_pair(const FmParams& p, const FeatureEncoder& enc, UserId u, ItemId i) {
  const std::size_t fu = enc.user_feature(u);
  const std::size_t fi = enc.item_feature(i);
  const double* vu = p.factors().data() + fu * p.rank();
  const double* vi = p.factors().data() + fi * p.rank();
  Accum dot = 0;
  for (std::size_t m = 0; m < p.rank(); ++m) dot += static_cast<Accum>(vu[m]) * vi[m];
  return static_cast<double>(static_cast<Accum>(p.w(fu)) + p.w(fi) + dot);
}

/// A single model coordinate: w_l, or v_{l,m}.
struct ParamCoord {
  enum class Kind { Linear, Factor };
  Kind kind;
  std::size_t feature;
  std::size_t factor = 0;

  static ParamCoord linear(std::size_t l) { return {Kind::Linear, l, 0}; }
  static ParamCoord factor_of(std::size_t l, std::size_t m) { return {Kind::Factor, l, m}; }
};

/// dh/dtheta at x, from multi-linearity:
///   w_l     -> x_l
///   v_{l,m} -> x_l sum_r v_{r,m} x_r - v_{l,m} x_l^2
inline double partial_score(const FmParams& p, const SparseVector& x, ParamCoord c) {
  detail::check_dim(p, x);
  if (c.feature >= p.dim() || (c.kind == ParamCoord::Kind::Factor && c.factor >= p.rank())) {
    throw ShapeError("parameter coordinate out of range");
  }
  const double xl = x.at(c.feature);
  if (c.kind == ParamCoord::Kind::Linear) return xl;
  if (xl == 0.0) return 0.0;
  Accum s = 0;
  for (const auto& a : x.entries()) s += static_cast<Accum>(p.v(a.index, c.factor)) * a.value;
  const Accum vlm = p.v(c.feature, c.factor);
  return static_cast<double>(xl * s - vlm * xl * xl);
}

/// w = 0, v_{l,m} ~ N(0, sd^2) with sd = 0.1.
inline FmParams init_params(std::size_t d, std::size_t k, Rng& rng, double init_sd = 0.1) {
  if (k < 1 || k > d) {
    throw ConfigError("latent rank k=" + std::to_string(k) + " must lie in [1, d=" +
                      std::to_string(d) + "]");
  }
  FmParams p(d, k);
  for (double& v : p.factors()) v = rng.gaussian(0.0, init_sd);
  return p;
}

/// f(x) = sum_t alpha_t h_t(x) over rank-k component FMs sharing d.
class EnsembleModel {
 public:
  struct Component {
    double alpha;
    FmParams params;

    friend bool operator==(const Component&, const Component&) = default;
  };

  EnsembleModel() = default;

  void add(double alpha, FmParams params) {
    if (!(alpha > 0.0) || !std::isfinite(alpha)) {
      throw MergeError("component weight must be positive and finite, got " + std::to_string(alpha));
    }
    if (!components_.empty() && (params.dim() != dim() || params.rank() != component_rank())) {
      throw MergeError("component shape (" + std::to_string(params.dim()) + ", " +
                       std::to_string(params.rank()) + ") differs from the ensemble's");
    }
    components_.push_back({alpha, std::move(params)});
  }

  bool empty() const noexcept { return components_.empty(); }
  std::size_t size() const noexcept { return components_.size(); }
  std::size_t dim() const { return components_.empty() ? 0 : components_.front().params.dim(); }
  std::size_t component_rank() const {
    return components_.empty() ? 0 : components_.front().params.rank();
  }
  std::span<const Component> components() const noexcept { return components_; }

  /// The first `t` components.
  EnsembleModel prefix(std::size_t t) const {
    EnsembleModel e;
    for (std::size_t i = 0; i < t && i < components_.size(); ++i) e.components_.push_back(components_[i]);
    return e;
  }

  friend bool operator==(const EnsembleModel&, const EnsembleModel&) = default;

 private:
  std::vector<Component> components_;
};

/// Single FM equal to the ensemble: w = sum_t alpha_t w_t and
/// V = [sqrt(alpha_1) V_1, ..., sqrt(alpha_T) V_T], of rank k T.
inline FmParams merge_ensemble(const EnsembleModel& e) {
  if (e.empty()) throw MergeError("cannot merge an empty ensemble");
  const std::size_t d = e.dim();
  const std::size_t k = e.component_rank();
  const auto comps = e.components();
  FmParams merged(d, k * comps.size());
  for (std::size_t t = 0; t < comps.size(); ++t) {
    const auto& c = comps[t];
    if (!(c.alpha > 0.0)) throw MergeError("component weight must be positive");
    const double root = std::sqrt(c.alpha);
    for (std::size_t l = 0; l < d; ++l) {
      merged.w(l) += c.alpha * c.params.w(l);
      for (std::size_t m = 0; m < k; ++m) merged.v(l, t * k + m) = root * c.params.v(l, m);
    }
  }
  return merged;
}

inline double ensemble_predict(const EnsembleModel& e, const SparseVector& x) {
  Accum sum = 0;
  for (const auto& c : e.components()) sum += static_cast<Accum>(c.alpha) * predict_fast(c.params, x);
  return static_cast<double>(sum);
}

inline double ensemble_predict_pair(const EnsembleModel& e, const FeatureEncoder& enc, UserId u,
                                    ItemId i) {
  Accum sum = 0;
  for (const auto& c : e.components()) {
    sum += static_cast<Accum>(c.alpha) * predict_pair(c.params, enc, u, i);
  }
  return static_cast<double>(sum);
}

}  // namespace adafm
