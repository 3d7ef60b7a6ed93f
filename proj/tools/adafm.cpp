// Command-line front end: prepare, cv-eta, train, evaluate, predict, sweep.
//
// Every setting is a `key = value` config key; --config reads a file of
// them (a previous run's meta.txt works) and flags override it. Exit codes:
// 0 success, 2 bad config or input, 3 numerical failure.

#include <iostream>
#include <map>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "adafm/experiment.hpp"

namespace {

struct Option {
  const char* key;
  const char* help;
};

// Value-taking options; the flag is the key with '_' spelled '-'.
constexpr Option kOptions[] = {
    {"algorithm", "FM, PRFM, LFM-S, LFM-D, LFM-W, AdaFM-O, AdaFM-P, AdaFM-S, AdaFM-D or AdaFM-W"},
    {"k", "latent rank of each model / component"},
    {"rounds", "boosting rounds T (AdaFM-*)"},
    {"iterations", "SGD steps per model"},
    {"eta", "learning rate"},
    {"gamma", "L2 regularization"},
    {"sampler", "uniform, static, dynamic or rank-aware (must match the algorithm)"},
    {"rho", "static/dynamic sampler decay in (0, 1]"},
    {"m", "dynamic sampler candidate count"},
    {"epsilon", "rank-aware sampler margin"},
    {"max_trials", "rank-aware sampler trial cap (0: catalog size)"},
    {"weighting", "per-user loss weight: relative or literal"},
    {"rank_aware_scaling", "rank-aware pair weight: harmonic or trial-count"},
    {"init_sd", "standard deviation of the factor initialization"},
    {"seed", "training seed"},
    {"log_interval", "print the mean loss every N steps (0: off)"},
    {"patience", "AdaFM early-stopping patience on the test split (0: off)"},
    {"max_retries", "AdaFM retries for a component with alpha <= 0"},
    {"e_clamp", "clamp of per-user E in the alpha formula"},
    {"metric", "auc, ndcg or ndcg@K"},
    {"eval_negatives", "sampled unobserved items per user (0: all)"},
    {"eval_seed", "seed of the evaluation negatives"},
    {"data", "raw user<TAB>item<TAB>grade file (prepare)"},
    {"train", "training split"},
    {"test", "test split"},
    {"model", "model file"},
    {"out", "output directory"},
    {"min_interactions", "drop users with fewer interactions (prepare)"},
    {"split", "holdout or leave-one-out (prepare)"},
    {"holdout_fraction", "per-user held-out fraction (prepare)"},
    {"split_seed", "split seed (prepare)"},
    {"user", "user token (predict)"},
    {"n", "list length (predict)"},
    {"axis", "rank or rounds (sweep)"},
    {"values", "comma-separated axis values (sweep)"},
    {"seeds", "comma-separated seeds (sweep)"},
    {"eta_grid", "comma-separated learning rates (cv-eta)"},
    {"folds", "cross-validation folds (cv-eta)"},
};

constexpr Option kFlags[] = {
    {"binarize", "map every positive grade to 1 (prepare)"},
    {"per_user", "also write per_user.csv (evaluate)"},
    {"include_seen", "rank the user's training items too (predict)"},
};

std::string flag_name(const char* key) {
  std::string s = key;
  for (char& c : s) {
    if (c == '_') c = '-';
  }
  return "--" + s;
}

struct Settings {
  std::string config;
  std::map<std::string, std::string> values;
  std::map<std::string, bool> flags;
};

void add_settings(CLI::App* sub, Settings& s) {
  sub->add_option("--config", s.config, "key = value file; flags override it");
  for (const auto& o : kOptions) sub->add_option(flag_name(o.key), s.values[o.key], o.help);
  for (const auto& f : kFlags) sub->add_flag(flag_name(f.key), s.flags[f.key], f.help);
}

adafm::ExperimentConfig resolve(const CLI::App* sub, const Settings& s) {
  adafm::ExperimentConfig cfg;
  if (!s.config.empty()) adafm::apply_config_file(cfg, s.config);
  if (!cfg.command.empty() && cfg.command != sub->get_name()) {
    throw adafm::ConfigError("config was written by '" + cfg.command + "', not '" + sub->get_name() + "'");
  }
  cfg.command = sub->get_name();
  for (const auto& o : kOptions) {
    if (sub->count(flag_name(o.key)) > 0) cfg.set(o.key, s.values.at(o.key));
  }
  for (const auto& f : kFlags) {
    if (sub->count(flag_name(f.key)) > 0) cfg.set(f.key, "true");
  }
  return cfg;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Factorization machines, pairwise ranking FMs and AdaFM boosting"};
  app.require_subcommand(1);
  Settings settings;
  const char* commands[][2] = {
      {"prepare", "binarize/filter/split a dataset into train.tsv and test.tsv"},
      {"cv-eta", "k-fold cross-validation of the FM learning rate"},
      {"train", "train a model; writes model.txt and rounds.csv"},
      {"evaluate", "score a model on the test split; writes report.txt"},
      {"predict", "top-n items for one user"},
      {"sweep", "metric over a rank or rounds axis; writes sweep.csv"},
  };
  for (const auto& c : commands) add_settings(app.add_subcommand(c[0], c[1]), settings);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 2;
  }

  const CLI::App* sub = app.get_subcommands().front();
  try {
    const auto cfg = resolve(sub, settings);
    const auto& name = sub->get_name();
    if (name == "prepare") adafm::cmd_prepare(cfg, std::cerr);
    else if (name == "cv-eta") adafm::cmd_cv_eta(cfg, std::cerr);
    else if (name == "train") adafm::cmd_train(cfg, std::cerr);
    else if (name == "evaluate") adafm::cmd_evaluate(cfg, std::cerr);
    else if (name == "predict") adafm::cmd_predict(cfg, std::cerr, std::cout);
    else if (name == "sweep") adafm::cmd_sweep(cfg, std::cerr);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return adafm::exit_code_for(e);
  }
  return 0;
}
