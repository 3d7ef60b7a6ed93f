#pragma once

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <istream>
#include <limits>
#include <optional>
#include <ostream>
#include <sstream>
#include <string>
#include <string_view>
#include <system_error>
#include <utility>
#include <vector>

#include "adafm/boosting.hpp"
#include "adafm/data_io.hpp"
#include "adafm/dataset.hpp"
#include "adafm/error.hpp"
#include "adafm/fm_model.hpp"
#include "adafm/metrics.hpp"
#include "adafm/model_io.hpp"
#include "adafm/samplers.hpp"
#include "adafm/trainers.hpp"

namespace adafm {

enum class Algorithm { FM, PRFM, LFM_S, LFM_D, LFM_W, AdaFM_O, AdaFM_P, AdaFM_S, AdaFM_D, AdaFM_W };

inline constexpr Algorithm kAllAlgorithms[] = {
    Algorithm::FM,      Algorithm::PRFM,    Algorithm::LFM_S,   Algorithm::LFM_D,   Algorithm::LFM_W,
    Algorithm::AdaFM_O, Algorithm::AdaFM_P, Algorithm::AdaFM_S, Algorithm::AdaFM_D, Algorithm::AdaFM_W};

inline std::string to_string(Algorithm a) {
  switch (a) {
    case Algorithm::FM: return "FM";
    case Algorithm::PRFM: return "PRFM";
    case Algorithm::LFM_S: return "LFM-S";
    case Algorithm::LFM_D: return "LFM-D";
    case Algorithm::LFM_W: return "LFM-W";
    case Algorithm::AdaFM_O: return "AdaFM-O";
    case Algorithm::AdaFM_P: return "AdaFM-P";
    case Algorithm::AdaFM_S: return "AdaFM-S";
    case Algorithm::AdaFM_D: return "AdaFM-D";
    case Algorithm::AdaFM_W: return "AdaFM-W";
  }
  return "?";
}

inline Algorithm parse_algorithm(const std::string& s) {
  for (Algorithm a : kAllAlgorithms) {
    if (to_string(a) == s) return a;
  }
  throw ConfigError("unknown algorithm '" + s +
                    "' (expected FM, PRFM, LFM-S, LFM-D, LFM-W or AdaFM-{O,P,S,D,W})");
}

inline bool is_boosted(Algorithm a) {
  return a == Algorithm::AdaFM_O || a == Algorithm::AdaFM_P || a == Algorithm::AdaFM_S ||
         a == Algorithm::AdaFM_D || a == Algorithm::AdaFM_W;
}

inline bool is_pointwise(Algorithm a) { return a == Algorithm::FM || a == Algorithm::AdaFM_O; }

/// Negative sampler implied by the algorithm name.
inline SamplerKind sampler_of(Algorithm a) {
  switch (a) {
    case Algorithm::LFM_S:
    case Algorithm::AdaFM_S: return SamplerKind::Static;
    case Algorithm::LFM_D:
    case Algorithm::AdaFM_D: return SamplerKind::Dynamic;
    case Algorithm::LFM_W:
    case Algorithm::AdaFM_W: return SamplerKind::RankAware;
    default: return SamplerKind::Uniform;
  }
}

// ---------------------------------------------------------------------------
// Text helpers shared by the config file, meta file and reports.

/// Shortest decimal that parses back to the same double.
inline std::string format_shortest(double x) {
  char buf[64];
  auto res = std::to_chars(buf, buf + sizeof buf, x);
  return std::string(buf, res.ptr);
}

namespace detail {

inline std::string trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return std::string(s.substr(b, e - b + 1));
}

inline double parse_double(const std::string& key, const std::string& v) {
  double x = 0.0;
  auto [ptr, ec] = std::from_chars(v.data(), v.data() + v.size(), x);
  if (ec != std::errc() || ptr != v.data() + v.size() || !std::isfinite(x)) {
    throw ConfigError(key + ": expected a number, got '" + v + "'");
  }
  return x;
}

inline std::uint64_t parse_u64(const std::string& key, const std::string& v) {
  std::uint64_t x = 0;
  auto [ptr, ec] = std::from_chars(v.data(), v.data() + v.size(), x);
  if (ec != std::errc() || ptr != v.data() + v.size()) {
    throw ConfigError(key + ": expected a non-negative integer, got '" + v + "'");
  }
  return x;
}

inline bool parse_bool(const std::string& key, const std::string& v) {
  if (v == "true" || v == "1") return true;
  if (v == "false" || v == "0") return false;
  throw ConfigError(key + ": expected true or false, got '" + v + "'");
}

template <class T, class Fn>
std::vector<T> parse_list(const std::string& key, const std::string& v, Fn one) {
  std::vector<T> out;
  std::stringstream ss(v);
  std::string item;
  while (std::getline(ss, item, ',')) {
    item = trim(item);
    if (item.empty()) throw ConfigError(key + ": empty list element in '" + v + "'");
    out.push_back(one(key, item));
  }
  return out;
}

template <class T, class Fn>
std::string join(const std::vector<T>& xs, Fn fmt) {
  std::string out;
  for (std::size_t i = 0; i < xs.size(); ++i) out += (i ? "," : "") + fmt(xs[i]);
  return out;
}

}  // namespace detail

// ---------------------------------------------------------------------------

/// Everything a command needs. Every field has a key in the flat
/// `key = value` config format; `entries()` lists them in a fixed order.
struct ExperimentConfig {
  std::string command;

  // model and training
  Algorithm algorithm = Algorithm::PRFM;
  std::size_t k = 2;
  std::size_t rounds = 0;  // 0: 1 for base models, 4 for AdaFM-*
  std::size_t iterations = 100000;
  double eta = 0.05;
  double gamma = 0.05;
  std::optional<SamplerKind> sampler;  // derived from the algorithm when unset
  double rho = 0.3;
  bool rho_set = false;
  std::size_t m = 10;
  double epsilon = 1.0;
  std::size_t max_trials = 0;
  UserWeighting weighting = UserWeighting::Relative;
  RankAwareScaling rank_aware_scaling = RankAwareScaling::Harmonic;
  double init_sd = 0.1;
  std::uint64_t seed = 42;
  std::size_t log_interval = 0;
  std::size_t patience = 0;  // 0: no early stopping
  std::size_t max_retries = 3;
  double e_clamp = 1e-6;

  // evaluation
  Measure metric = Measure::auc();
  std::size_t eval_negatives = 100;  // 0: every unobserved item
  std::uint64_t eval_seed = 7;
  bool per_user = false;

  // paths
  std::string data;
  std::string train;
  std::string test;
  std::string model;
  std::string out = ".";

  // prepare
  bool binarize = false;
  std::size_t min_interactions = 0;
  SplitSpec::Method split = SplitSpec::Method::RandomHoldout;
  double holdout_fraction = 0.2;
  std::uint64_t split_seed = 42;

  // predict
  std::string user;
  std::size_t n = 10;
  bool include_seen = false;

  // sweep
  std::string axis = "rank";
  std::vector<std::size_t> values = {1, 2, 4};
  std::vector<std::uint64_t> seeds = {42};

  // cv-eta
  std::vector<double> eta_grid = {0.5, 0.1, 0.05, 0.01, 0.005};
  std::size_t folds = 5;

  std::size_t resolved_rounds() const { return rounds ? rounds : (is_boosted(algorithm) ? 4 : 1); }
  SamplerKind resolved_sampler() const { return sampler.value_or(sampler_of(algorithm)); }

  /// Applies one `key = value` setting. Keys beginning with `stat.` are
  /// statistics written by earlier runs and are ignored.
  void set(const std::string& key, const std::string& value) {
    using namespace detail;
    if (key.rfind("stat.", 0) == 0) return;
    if (key == "command") command = value;
    else if (key == "algorithm") algorithm = parse_algorithm(value);
    else if (key == "k") k = parse_u64(key, value);
    else if (key == "rounds") rounds = parse_u64(key, value);
    else if (key == "iterations") iterations = parse_u64(key, value);
    else if (key == "eta") eta = parse_double(key, value);
    else if (key == "gamma") gamma = parse_double(key, value);
    else if (key == "sampler") sampler = parse_sampler_kind(value);
    else if (key == "rho") { rho = parse_double(key, value); rho_set = true; }
    else if (key == "m") m = parse_u64(key, value);
    else if (key == "epsilon") epsilon = parse_double(key, value);
    else if (key == "max_trials") max_trials = parse_u64(key, value);
    else if (key == "weighting") {
      if (value == "relative") weighting = UserWeighting::Relative;
      else if (value == "literal") weighting = UserWeighting::Literal;
      else throw ConfigError("weighting: expected relative or literal, got '" + value + "'");
    } else if (key == "rank_aware_scaling") {
      if (value == "harmonic") rank_aware_scaling = RankAwareScaling::Harmonic;
      else if (value == "trial-count") rank_aware_scaling = RankAwareScaling::TrialCount;
      else throw ConfigError("rank_aware_scaling: expected harmonic or trial-count, got '" + value + "'");
    }
    else if (key == "init_sd") init_sd = parse_double(key, value);
    else if (key == "seed") seed = parse_u64(key, value);
    else if (key == "log_interval") log_interval = parse_u64(key, value);
    else if (key == "patience") patience = parse_u64(key, value);
    else if (key == "max_retries") max_retries = parse_u64(key, value);
    else if (key == "e_clamp") e_clamp = parse_double(key, value);
    else if (key == "metric") metric = Measure::parse(value);
    else if (key == "eval_negatives") eval_negatives = parse_u64(key, value);
    else if (key == "eval_seed") eval_seed = parse_u64(key, value);
    else if (key == "per_user") per_user = parse_bool(key, value);
    else if (key == "data") data = value;
    else if (key == "train") train = value;
    else if (key == "test") test = value;
    else if (key == "model") model = value;
    else if (key == "out") out = value;
    else if (key == "binarize") binarize = parse_bool(key, value);
    else if (key == "min_interactions") min_interactions = parse_u64(key, value);
    else if (key == "split") {
      if (value == "holdout") split = SplitSpec::Method::RandomHoldout;
      else if (value == "leave-one-out") split = SplitSpec::Method::LeaveOneOut;
      else throw ConfigError("split: expected holdout or leave-one-out, got '" + value + "'");
    }
    else if (key == "holdout_fraction") holdout_fraction = parse_double(key, value);
    else if (key == "split_seed") split_seed = parse_u64(key, value);
    else if (key == "user") user = value;
    else if (key == "n") n = parse_u64(key, value);
    else if (key == "include_seen") include_seen = parse_bool(key, value);
    else if (key == "axis") axis = value;
    else if (key == "values") values = parse_list<std::size_t>(key, value, parse_u64);
    else if (key == "seeds") seeds = parse_list<std::uint64_t>(key, value, parse_u64);
    else if (key == "eta_grid") eta_grid = parse_list<double>(key, value, parse_double);
    else if (key == "folds") folds = parse_u64(key, value);
    else throw ConfigError("unknown config key '" + key + "'");
  }

  /// The fully resolved configuration, in file order.
  std::vector<std::pair<std::string, std::string>> entries() const {
    auto u = [](auto x) { return std::to_string(x); };
    auto b = [](bool x) { return std::string(x ? "true" : "false"); };
    return {
        {"command", command},
        {"algorithm", to_string(algorithm)},
        {"k", u(k)},
        {"rounds", u(resolved_rounds())},
        {"iterations", u(iterations)},
        {"eta", format_shortest(eta)},
        {"gamma", format_shortest(gamma)},
        {"sampler", to_string(resolved_sampler())},
        {"rho", format_shortest(rho)},
        {"m", u(m)},
        {"epsilon", format_shortest(epsilon)},
        {"max_trials", u(max_trials)},
        {"weighting", weighting == UserWeighting::Relative ? "relative" : "literal"},
        {"rank_aware_scaling", rank_aware_scaling == RankAwareScaling::Harmonic ? "harmonic" : "trial-count"},
        {"init_sd", format_shortest(init_sd)},
        {"seed", u(seed)},
        {"log_interval", u(log_interval)},
        {"patience", u(patience)},
        {"max_retries", u(max_retries)},
        {"e_clamp", format_shortest(e_clamp)},
        {"metric", metric.name()},
        {"eval_negatives", u(eval_negatives)},
        {"eval_seed", u(eval_seed)},
        {"per_user", b(per_user)},
        {"data", data},
        {"train", train},
        {"test", test},
        {"model", model},
        {"out", out},
        {"binarize", b(binarize)},
        {"min_interactions", u(min_interactions)},
        {"split", split == SplitSpec::Method::RandomHoldout ? "holdout" : "leave-one-out"},
        {"holdout_fraction", format_shortest(holdout_fraction)},
        {"split_seed", u(split_seed)},
        {"user", user},
        {"n", u(n)},
        {"include_seen", b(include_seen)},
        {"axis", axis},
        {"values", detail::join(values, u)},
        {"seeds", detail::join(seeds, u)},
        {"eta_grid", detail::join(eta_grid, format_shortest)},
        {"folds", u(folds)},
    };
  }

  /// Cross-field checks; throws ConfigError.
  void validate() const {
    if (k < 1) throw ConfigError("k must be at least 1");
    if (iterations < 1) throw ConfigError("iterations must be at least 1");
    if (!is_boosted(algorithm) && rounds > 1) {
      throw ConfigError(to_string(algorithm) + " is a single model; rounds must be 1");
    }
    if (sampler && *sampler != sampler_of(algorithm)) {
      throw ConfigError("sampler " + to_string(*sampler) + " does not match algorithm " +
                        to_string(algorithm) + " (expects " + to_string(sampler_of(algorithm)) + ")");
    }
    if (!(e_clamp > 0.0 && e_clamp < 0.5)) throw ConfigError("e_clamp must lie in (0, 0.5)");
    if (axis != "rank" && axis != "rounds") throw ConfigError("axis must be rank or rounds");
    if (folds < 2) throw ConfigError("folds must be at least 2");
    if (eta_grid.empty()) throw ConfigError("eta_grid is empty");
    train_config().validate();
  }

  TrainConfig train_config() const {
    TrainConfig tc;
    tc.eta = eta;
    tc.gamma = gamma;
    tc.max_iter = iterations;
    tc.k = k;
    tc.sampler.kind = resolved_sampler();
    tc.sampler.rho = rho;
    tc.sampler.m = m;
    tc.sampler.epsilon = epsilon;
    tc.sampler.max_trials = max_trials;
    tc.seed = seed;
    tc.weighting = weighting;
    tc.rank_aware_scaling = rank_aware_scaling;
    tc.init_sd = init_sd;
    tc.log_interval = log_interval;
    return tc;
  }

  BoostConfig boost_config() const {
    BoostConfig bc;
    bc.rounds = resolved_rounds();
    bc.component = train_config();
    bc.trainer = is_pointwise(algorithm) ? ComponentTrainer::Pointwise : ComponentTrainer::Pairwise;
    bc.measure = metric;
    bc.e_clamp = e_clamp;
    if (patience) bc.patience = patience;
    bc.eval_negatives = negatives();
    bc.eval_seed = eval_seed;
    bc.max_retries = max_retries;
    return bc;
  }

  std::size_t negatives() const {
    return eval_negatives ? eval_negatives : std::numeric_limits<std::size_t>::max();
  }
};

/// Reads `key = value` lines; '#' comments and blank lines are skipped.
inline std::vector<std::pair<std::string, std::string>> parse_config(std::istream& in,
                                                                    const std::string& source) {
  std::vector<std::pair<std::string, std::string>> out;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    const auto text = detail::trim(line);
    if (text.empty() || text.front() == '#') continue;
    const auto eq = text.find('=');
    if (eq == std::string::npos) throw FormatError(source, line_no, "expected key = value");
    auto key = detail::trim(std::string_view(text).substr(0, eq));
    if (key.empty()) throw FormatError(source, line_no, "empty key");
    out.emplace_back(std::move(key), detail::trim(std::string_view(text).substr(eq + 1)));
  }
  return out;
}

inline void apply_config_file(ExperimentConfig& cfg, const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError("cannot open config " + path);
  for (const auto& [key, value] : parse_config(in, path)) cfg.set(key, value);
}

using Stats = std::vector<std::pair<std::string, std::string>>;

inline void write_meta(const std::string& path, const ExperimentConfig& cfg, const Stats& stats = {}) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw ConfigError("cannot open " + path + " for writing");
  for (const auto& [key, value] : cfg.entries()) out << key << " = " << value << '\n';
  for (const auto& [key, value] : stats) out << "stat." << key << " = " << value << '\n';
}

// ---------------------------------------------------------------------------
// Commands. Each writes its fixed-name outputs under cfg.out and its
// resolved configuration to meta.txt.

namespace detail {

inline std::string out_file(const ExperimentConfig& cfg, const char* name) {
  std::filesystem::create_directories(cfg.out);
  return (std::filesystem::path(cfg.out) / name).string();
}

inline void require(const std::string& value, const char* key, const std::string& command) {
  if (value.empty()) throw ConfigError(command + " needs --" + std::string(key));
}

inline std::ofstream open_out(const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw ConfigError("cannot open " + path + " for writing");
  return out;
}

inline std::vector<double> uniform_weights(std::size_t n) {
  return std::vector<double>(n, 1.0 / static_cast<double>(n));
}

/// Aggregate measure of `score` over the test candidates.
template <class ScoreFn>
EvalReport evaluate_split(ScoreFn&& score, const InteractionDataset& train, const InteractionDataset& test,
                          const ExperimentConfig& cfg) {
  const auto cands = build_eval_candidates(test, {&train}, cfg.negatives(), cfg.eval_seed);
  return evaluate_model(score, cands, cfg.metric);
}

inline void announce_defaults(const ExperimentConfig& cfg, std::ostream& log) {
  const auto kind = cfg.resolved_sampler();
  if ((kind == SamplerKind::Static || kind == SamplerKind::Dynamic) && !cfg.rho_set) {
    log << "rho not given; using default rho=" << format_shortest(cfg.rho) << '\n';
  }
}

}  // namespace detail

struct TrainOutcome {
  EnsembleModel model;
  std::vector<RoundRecord> history;
};

/// Trains `cfg.algorithm` on `train`. Base models produce one component
/// with alpha = 1 and a single round record measured like AdaFM's rounds.
inline TrainOutcome train_algorithm(const InteractionDataset& train, const ExperimentConfig& cfg,
                                    const InteractionDataset* holdout = nullptr,
                                    std::ostream* log = nullptr) {
  cfg.validate();
  if (is_boosted(cfg.algorithm)) {
    auto r = run_adafm(train, cfg.boost_config(), cfg.patience ? holdout : nullptr, log);
    return {std::move(r.model), std::move(r.history)};
  }
  const auto weights = detail::uniform_weights(train.n_users());
  const auto tc = cfg.train_config();
  auto trained = train_with(train, weights, tc,
                            is_pointwise(cfg.algorithm) ? ComponentTrainer::Pointwise : ComponentTrainer::Pairwise,
                            log);
  TrainOutcome out;
  const auto enc = FeatureEncoder::for_dataset(train);
  const auto cands = build_eval_candidates(train, {}, cfg.negatives(), cfg.eval_seed);
  const auto scores = detail::CandidateScores::of(trained.params, enc, cands);
  const auto perf = scores.measure(cands, cfg.metric);
  RoundRecord rec;
  rec.round = 1;
  rec.alpha = 1.0;
  rec.component_weighted_e = weighted_auc(perf, weights);
  rec.ensemble_train_e = perf.mean();
  out.history.push_back(rec);
  out.model.add(1.0, std::move(trained.params));
  return out;
}

/// prepare: load, optionally binarize and filter, split; writes train.tsv,
/// test.tsv and meta.txt.
inline void cmd_prepare(const ExperimentConfig& cfg, std::ostream& log) {
  detail::require(cfg.data, "data", "prepare");
  auto ds = load_dataset(cfg.data);
  if (cfg.binarize) ds = binarize(ds);
  ds = filter_min_interactions(ds, cfg.min_interactions);
  SplitSpec spec;
  spec.method = cfg.split;
  spec.fraction = cfg.holdout_fraction;
  spec.seed = cfg.split_seed;
  const auto parts = split(ds, spec);
  write_dataset(detail::out_file(cfg, "train.tsv"), parts.train);
  write_dataset(detail::out_file(cfg, "test.tsv"), parts.test);
  const Stats stats = {{"n_users", std::to_string(ds.n_users())},
                       {"n_items", std::to_string(ds.n_items())},
                       {"entries", std::to_string(ds.n_entries())},
                       {"train_entries", std::to_string(parts.train.n_entries())},
                       {"test_entries", std::to_string(parts.test.n_entries())},
                       {"flagged_users", std::to_string(parts.flagged.size())}};
  write_meta(detail::out_file(cfg, "meta.txt"), cfg, stats);
  log << "users=" << ds.n_users() << " items=" << ds.n_items() << " entries=" << ds.n_entries()
      << " train=" << parts.train.n_entries() << " test=" << parts.test.n_entries()
      << " flagged=" << parts.flagged.size() << '\n';
}

/// train: writes model.txt, rounds.csv and meta.txt.
inline void cmd_train(const ExperimentConfig& cfg, std::ostream& log) {
  detail::require(cfg.train, "train", "train");
  detail::require(cfg.test, "test", "train");
  cfg.validate();
  detail::announce_defaults(cfg, log);
  const auto data = load_prepared(cfg.train, cfg.test);
  auto outcome = train_algorithm(data.train, cfg, &data.test, cfg.log_interval ? &log : nullptr);
  save_model(detail::out_file(cfg, "model.txt"), outcome.model);
  {
    auto out = detail::open_out(detail::out_file(cfg, "rounds.csv"));
    write_round_log(out, outcome.history);
  }
  write_meta(detail::out_file(cfg, "meta.txt"), cfg,
             {{"components", std::to_string(outcome.model.size())},
              {"merged_rank", std::to_string(outcome.model.size() * outcome.model.component_rank())}});
  log << to_string(cfg.algorithm) << ": " << outcome.model.size() << " component(s) of rank "
      << outcome.model.component_rank() << '\n';
}

inline FmParams load_checked_model(const std::string& path, const FeatureEncoder& enc) {
  const auto merged = merge_ensemble(load_model(path));
  if (merged.dim() != enc.dim()) {
    throw ShapeError("model has d=" + std::to_string(merged.dim()) + " but the data needs d=" +
                     std::to_string(enc.dim()));
  }
  return merged;
}

/// evaluate: writes report.txt (and per_user.csv when requested).
inline void cmd_evaluate(const ExperimentConfig& cfg, std::ostream& log) {
  detail::require(cfg.model, "model", "evaluate");
  detail::require(cfg.train, "train", "evaluate");
  detail::require(cfg.test, "test", "evaluate");
  const auto data = load_prepared(cfg.train, cfg.test);
  const auto enc = FeatureEncoder::for_dataset(data.train);
  const auto params = load_checked_model(cfg.model, enc);
  const auto report = detail::evaluate_split(
      [&](UserId u, ItemId i) { return predict_pair(params, enc, u, i); }, data.train, data.test, cfg);
  std::ostringstream line;
  line << "metric=" << cfg.metric.name() << " value=" << format_decimal(report.aggregate)
       << " users=" << report.users << " skipped=" << report.skipped << '\n';
  detail::open_out(detail::out_file(cfg, "report.txt")) << line.str();
  if (cfg.per_user) {
    auto out = detail::open_out(detail::out_file(cfg, "per_user.csv"));
    out << "user,E\n";
    for (UserId u = 0; u < report.per_user.values.size(); ++u) {
      if (report.per_user.values[u]) {
        out << data.train.user_tokens()[u] << ',' << format_decimal(*report.per_user.values[u]) << '\n';
      }
    }
  }
  write_meta(detail::out_file(cfg, "meta.txt"), cfg);
  log << line.str();
}

struct Recommendation {
  std::string item;
  double score;
};

/// Top-n items for `user_token` by merged-model score, ties by ascending
/// item id; items the user has in `train` are skipped unless include_seen.
inline std::vector<Recommendation> recommend(const FmParams& params, const InteractionDataset& train,
                                             const std::string& user_token, std::size_t n,
                                             bool include_seen) {
  const auto u = train.find_user(user_token);
  if (!u) throw LookupError("unknown user '" + user_token + "'");
  const auto enc = FeatureEncoder::for_dataset(train);
  std::vector<std::pair<double, ItemId>> scored;
  for (ItemId i = 0; i < train.n_items(); ++i) {
    if (!include_seen && train.observed(*u, i)) continue;
    scored.emplace_back(predict_pair(params, enc, *u, i), i);
  }
  const auto take = std::min(n, scored.size());
  std::partial_sort(scored.begin(), scored.begin() + static_cast<std::ptrdiff_t>(take), scored.end(),
                    [](const auto& a, const auto& b) { return a.first != b.first ? a.first > b.first : a.second < b.second; });
  std::vector<Recommendation> out;
  for (std::size_t j = 0; j < take; ++j) out.push_back({train.item_tokens()[scored[j].second], scored[j].first});
  return out;
}

/// predict: writes predictions.tsv (`rank<TAB>item<TAB>score`) and echoes it.
inline void cmd_predict(const ExperimentConfig& cfg, std::ostream& log, std::ostream& result) {
  detail::require(cfg.model, "model", "predict");
  detail::require(cfg.train, "train", "predict");
  detail::require(cfg.test, "test", "predict");
  detail::require(cfg.user, "user", "predict");
  const auto data = load_prepared(cfg.train, cfg.test);
  const auto enc = FeatureEncoder::for_dataset(data.train);
  const auto params = load_checked_model(cfg.model, enc);
  const auto recs = recommend(params, data.train, cfg.user, cfg.n, cfg.include_seen);
  std::ostringstream text;
  for (std::size_t r = 0; r < recs.size(); ++r) {
    text << r + 1 << '\t' << recs[r].item << '\t' << format_decimal(recs[r].score) << '\n';
  }
  detail::open_out(detail::out_file(cfg, "predictions.tsv")) << text.str();
  write_meta(detail::out_file(cfg, "meta.txt"), cfg);
  result << text.str();
  log << recs.size() << " item(s) for user " << cfg.user << '\n';
}

/// Per-user k-fold partition of `ds`: fold f holds the items at shuffled
/// positions p with p mod folds == f.
inline std::vector<SplitResult> kfold(const InteractionDataset& ds, std::size_t folds, std::uint64_t seed) {
  if (folds < 2) throw ConfigError("folds must be at least 2");
  std::vector<std::vector<std::vector<ItemGrade>>> train(folds, std::vector<std::vector<ItemGrade>>(ds.n_users()));
  auto test = train;
  for (UserId u = 0; u < ds.n_users(); ++u) {
    const auto items = ds.items_of(u);
    std::vector<std::size_t> order(items.size());
    for (std::size_t j = 0; j < order.size(); ++j) order[j] = j;
    Rng rng(derive_seed(seed, u));
    for (std::size_t j = order.size(); j > 1; --j) {
      std::swap(order[j - 1], order[static_cast<std::size_t>(rng.uniform_int(j))]);
    }
    for (std::size_t p = 0; p < order.size(); ++p) {
      for (std::size_t f = 0; f < folds; ++f) (p % folds == f ? test : train)[f][u].push_back(items[order[p]]);
    }
  }
  std::vector<SplitResult> out;
  const std::vector<Grade> grades(ds.grade_set().begin(), ds.grade_set().end());
  for (std::size_t f = 0; f < folds; ++f) {
    for (auto& list : train[f]) std::sort(list.begin(), list.end(), [](auto& a, auto& b) { return a.item < b.item; });
    for (auto& list : test[f]) std::sort(list.begin(), list.end(), [](auto& a, auto& b) { return a.item < b.item; });
    out.push_back({InteractionDataset(ds.user_tokens(), ds.item_tokens(), std::move(train[f]), grades),
                   InteractionDataset(ds.user_tokens(), ds.item_tokens(), std::move(test[f]), grades), {}});
  }
  return out;
}

struct CvResult {
  std::vector<double> mean_by_eta;  // aligned with the grid
  double best_eta = 0.0;
};

/// k-fold CV of FM (k = cfg.k, pointwise) over cfg.eta_grid on `ds`; the
/// first grid value with the highest mean measure wins.
inline CvResult cross_validate_eta(const InteractionDataset& ds, const ExperimentConfig& cfg) {
  ExperimentConfig fm = cfg;
  fm.algorithm = Algorithm::FM;
  fm.sampler.reset();
  fm.rounds = 1;
  const auto parts = kfold(ds, cfg.folds, cfg.seed);
  CvResult res;
  std::optional<double> best;
  for (double eta : cfg.eta_grid) {
    fm.eta = eta;
    double sum = 0.0;
    for (std::size_t f = 0; f < parts.size(); ++f) {
      fm.seed = derive_seed(cfg.seed, f);
      double value = 0.0;
      try {
        const auto outcome = train_algorithm(parts[f].train, fm);
        const auto enc = FeatureEncoder::for_dataset(parts[f].train);
        const auto& params = outcome.model.components().front().params;
        value = detail::evaluate_split([&](UserId u, ItemId i) { return predict_pair(params, enc, u, i); },
                                       parts[f].train, parts[f].test, fm)
                    .aggregate;
      } catch (const DivergenceError&) {
        value = 0.0;  // a diverging rate scores as the worst possible ranking
      }
      sum += value;
    }
    res.mean_by_eta.push_back(sum / static_cast<double>(parts.size()));
    if (!best || res.mean_by_eta.back() > *best) {
      best = res.mean_by_eta.back();
      res.best_eta = eta;
    }
  }
  return res;
}

/// cv-eta: writes report.txt (`eta=<x> metric=<m> value=<v>` per grid
/// value, then `best_eta=<x>`) and meta.txt.
inline void cmd_cv_eta(const ExperimentConfig& cfg, std::ostream& log) {
  detail::require(cfg.train, "train", "cv-eta");
  cfg.validate();
  const auto ds = load_dataset(cfg.train);
  const auto res = cross_validate_eta(ds, cfg);
  std::ostringstream text;
  for (std::size_t j = 0; j < cfg.eta_grid.size(); ++j) {
    text << "eta=" << format_shortest(cfg.eta_grid[j]) << " metric=" << cfg.metric.name()
         << " value=" << format_decimal(res.mean_by_eta[j]) << " folds=" << cfg.folds << '\n';
  }
  text << "best_eta=" << format_shortest(res.best_eta) << '\n';
  detail::open_out(detail::out_file(cfg, "report.txt")) << text.str();
  write_meta(detail::out_file(cfg, "meta.txt"), cfg, {{"best_eta", format_shortest(res.best_eta)}});
  log << text.str();
}

struct SweepRow {
  std::size_t x = 0;
  std::optional<double> value;
  std::string algorithm;
  std::uint64_t seed = 0;
  std::string status;
};

/// One row per (seed, axis value). x is k for base models and k*T for
/// AdaFM-*. On the rounds axis one AdaFM run of max(values) rounds is
/// trained per seed and its prefixes are evaluated. A failing cell is
/// recorded with its error and the sweep continues.
inline std::vector<SweepRow> run_sweep(const InteractionDataset& train, const InteractionDataset& test,
                                       const ExperimentConfig& cfg) {
  cfg.validate();
  if (cfg.values.empty()) throw ConfigError("sweep needs at least one axis value");
  if (cfg.axis == "rounds" && !is_boosted(cfg.algorithm)) {
    throw ConfigError("the rounds axis needs an AdaFM-* algorithm");
  }
  const auto enc = FeatureEncoder::for_dataset(train);
  const std::string name = to_string(cfg.algorithm);
  std::vector<SweepRow> rows;
  auto score_of = [&](const EnsembleModel& model) {
    const auto params = merge_ensemble(model);
    return detail::evaluate_split([&](UserId u, ItemId i) { return predict_pair(params, enc, u, i); }, train,
                                  test, cfg)
        .aggregate;
  };
  for (std::uint64_t seed : cfg.seeds) {
    ExperimentConfig cell = cfg;
    cell.seed = seed;
    if (cfg.axis == "rounds") {
      cell.rounds = *std::max_element(cfg.values.begin(), cfg.values.end());
      std::optional<EnsembleModel> model;
      std::string error;
      try {
        model = train_algorithm(train, cell, &test).model;
      } catch (const Error& e) {
        error = e.what();
      }
      for (std::size_t t : cfg.values) {
        SweepRow row{cfg.k * t, std::nullopt, name, seed, "ok"};
        if (!model) row.status = "error: " + error;
        else if (t == 0) row.status = "error: rounds must be at least 1";
        else if (t > model->size()) row.status = "stopped";
        else row.value = score_of(model->prefix(t));
        rows.push_back(std::move(row));
      }
    } else {
      for (std::size_t k : cfg.values) {
        cell.k = k;
        SweepRow row{k * cell.resolved_rounds(), std::nullopt, name, seed, "ok"};
        try {
          row.value = score_of(train_algorithm(train, cell, &test).model);
        } catch (const Error& e) {
          row.status = std::string("error: ") + e.what();
        }
        rows.push_back(std::move(row));
      }
    }
  }
  return rows;
}

inline void write_sweep_csv(std::ostream& out, const std::vector<SweepRow>& rows) {
  out << "x,metric_value,algorithm,seed,status\n";
  for (const auto& r : rows) {
    std::string status = r.status;
    std::replace(status.begin(), status.end(), ',', ';');
    std::replace(status.begin(), status.end(), '\n', ' ');
    out << r.x << ',' << (r.value ? format_decimal(*r.value) : std::string()) << ',' << r.algorithm << ','
        << r.seed << ',' << status << '\n';
  }
}

/// sweep: writes sweep.csv and meta.txt.
inline void cmd_sweep(const ExperimentConfig& cfg, std::ostream& log) {
  detail::require(cfg.train, "train", "sweep");
  detail::require(cfg.test, "test", "sweep");
  detail::announce_defaults(cfg, log);
  const auto data = load_prepared(cfg.train, cfg.test);
  const auto rows = run_sweep(data.train, data.test, cfg);
  {
    auto out = detail::open_out(detail::out_file(cfg, "sweep.csv"));
    write_sweep_csv(out, rows);
  }
  write_meta(detail::out_file(cfg, "meta.txt"), cfg);
  std::size_t failed = 0;
  for (const auto& r : rows) failed += r.status != "ok";
  log << rows.size() << " cell(s), " << failed << " not ok\n";
}

/// Process exit code for an exception escaping a command.
inline int exit_code_for(const std::exception& e) {
  if (dynamic_cast<const DivergenceError*>(&e) || dynamic_cast<const BoostingError*>(&e)) return 3;
  if (dynamic_cast<const Error*>(&e)) return 2;
  if (dynamic_cast<const std::filesystem::filesystem_error*>(&e)) return 2;
  return 1;
}

}  // namespace adafm
