#pragma once

// Benchmark protocol: repeated shuffled train/test splits, k-fold grid search
// on the training part, final fit, and result tables.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include "dtree/cart.hpp"
#include "dtree/dataset.hpp"
#include "dtree/error.hpp"
#include "dtree/metrics.hpp"
#include "dtree/parallel.hpp"
#include "dtree/tao.hpp"
#include "dtree/tree.hpp"

namespace dtree {

enum class Algorithm { cart, tao_axis, tao_oblique };

inline std::string to_string(Algorithm a) {
  switch (a) {
    case Algorithm::cart: return "cart";
    case Algorithm::tao_axis: return "tao_axis";
    case Algorithm::tao_oblique: return "tao_oblique";
  }
  return "?";
}

inline Algorithm parse_algorithm(std::string_view s) {
  if (s == "cart") return Algorithm::cart;
  if (s == "tao_axis" || s == "tao-axis") return Algorithm::tao_axis;
  if (s == "tao_oblique" || s == "tao-oblique") return Algorithm::tao_oblique;
  throw ConfigError("unknown algorithm '" + std::string(s) + "' (expected cart, tao-axis or tao-oblique)");
}

/// One point of a hyperparameter grid.
struct HyperParams {
  double lambda = 0.0;          // tao_oblique
  int depth = 4;                // tao_oblique: depth of the random initial tree
  PruneRule rule = PruneRule::one_se;  // cart, and the CART init of tao_axis

  std::string describe(Algorithm a) const {
    switch (a) {
      case Algorithm::cart: return "rule=" + to_string(rule);
      case Algorithm::tao_axis: return "init_rule=" + to_string(rule);
      case Algorithm::tao_oblique: return "depth=" + std::to_string(depth) + " lambda=" + detail::format_number(lambda);
    }
    return {};
  }
  bool operator==(const HyperParams&) const = default;
};

struct ExperimentConfig {
  std::string name;
  std::string dataset;                  // display name
  std::string path;                     // CSV (header row) or LIBSVM file
  std::string test_path;                // optional fixed test set
  std::string target;                   // CSV target column (name or 0-based index)
  TaskKind task = TaskKind::classification;
  std::vector<std::string> categorical;
  Algorithm algorithm = Algorithm::cart;
  std::size_t repeats = 10;
  std::size_t folds = 10;
  std::uint64_t seed = 0;
  double test_fraction = 0.2;
  bool scale = false;                   // min-max scale features on the training split
  int iters = 30;
  double tol = 1e-5;
  L1LogisticOptions solver;
  HyperParams defaults;                 // values for keys without a grid
  std::vector<double> grid_lambda;
  std::vector<int> grid_depth;
  std::vector<PruneRule> grid_rule;

  /// Cartesian product in the order lambda, depth, rule (outermost first);
  /// an empty grid yields the single default point.
  std::vector<HyperParams> grid() const {
    std::vector<double> ls = grid_lambda.empty() ? std::vector<double>{defaults.lambda} : grid_lambda;
    std::vector<int> ds = grid_depth.empty() ? std::vector<int>{defaults.depth} : grid_depth;
    std::vector<PruneRule> rs = grid_rule.empty() ? std::vector<PruneRule>{defaults.rule} : grid_rule;
    std::vector<HyperParams> out;
    for (double l : ls) {
      for (int d : ds) {
        for (PruneRule r : rs) out.push_back({l, d, r});
      }
    }
    return out;
  }

  void validate() const {
    if (path.empty()) throw ConfigError("[" + name + "] missing 'path'");
    if (repeats < 1) throw ConfigError("[" + name + "] repeats must be at least 1");
    if (folds < 2) throw ConfigError("[" + name + "] folds must be at least 2");
    if (!(test_fraction > 0.0 && test_fraction < 1.0)) throw ConfigError("[" + name + "] test_fraction must be in (0,1)");
    if (iters < 1) throw ConfigError("[" + name + "] iters must be at least 1");
    for (int d : grid_depth) {
      if (d < 0 || d > 20) throw ConfigError("[" + name + "] depth grid values must be in 0..20");
    }
    for (double l : grid_lambda) {
      if (!(l >= 0.0)) throw ConfigError("[" + name + "] lambda grid values must be non-negative");
    }
  }
};

// ---------------------------------------------------------------------------
// Config files: INI-style sections, one experiment per "[name]" section.
//
//   [iris-tao-axis]
//   dataset = Iris
//   path = ../data/iris.csv        # relative to the config file
//   target = species
//   algorithm = tao_axis
//   grid.lambda = 0.001, 0.01, 0.1
//
// Keys before the first section are defaults for every section.

namespace detail {

inline std::vector<std::string> split_list(std::string_view s) {
  std::vector<std::string> out;
  std::size_t start = 0;
  while (start <= s.size()) {
    const auto comma = s.find(',', start);
    const auto item = trim(s.substr(start, comma == std::string_view::npos ? std::string_view::npos : comma - start));
    if (!item.empty()) out.emplace_back(item);
    if (comma == std::string_view::npos) break;
    start = comma + 1;
  }
  return out;
}

inline double config_double(const std::string& section, const std::string& key, const std::string& v) {
  auto d = parse_double(v);
  if (!d) throw ConfigError("[" + section + "] " + key + ": '" + v + "' is not a number");
  return *d;
}

inline long config_long(const std::string& section, const std::string& key, const std::string& v) {
  auto d = parse_long(v);
  if (!d) throw ConfigError("[" + section + "] " + key + ": '" + v + "' is not an integer");
  return *d;
}

inline bool config_bool(const std::string& section, const std::string& key, const std::string& v) {
  if (v == "true" || v == "yes" || v == "1" || v == "on") return true;
  if (v == "false" || v == "no" || v == "0" || v == "off") return false;
  throw ConfigError("[" + section + "] " + key + ": '" + v + "' is not a boolean");
}

inline void apply_key(ExperimentConfig& c, const std::string& key, const std::string& value,
                      const std::filesystem::path& base, std::map<std::string, bool>& seen) {
  const std::string& s = c.name;
  seen[key] = true;
  auto resolve = [&](const std::string& p) {
    std::filesystem::path fp(p);
    return (fp.is_absolute() || base.empty() ? fp : base / fp).lexically_normal().string();
  };
  if (key == "dataset") c.dataset = value;
  else if (key == "path") c.path = resolve(value);
  else if (key == "test_path") c.test_path = value.empty() ? "" : resolve(value);
  else if (key == "target") c.target = value;
  else if (key == "task") {
    try {
      c.task = parse_task_kind(value);
    } catch (const DataError& e) {
      throw ConfigError("[" + s + "] " + e.what());
    }
  }
  else if (key == "categorical") c.categorical = split_list(value);
  else if (key == "algorithm") c.algorithm = parse_algorithm(value);
  else if (key == "repeats") c.repeats = static_cast<std::size_t>(std::max(0L, config_long(s, key, value)));
  else if (key == "folds") c.folds = static_cast<std::size_t>(std::max(0L, config_long(s, key, value)));
  else if (key == "seed") c.seed = static_cast<std::uint64_t>(config_long(s, key, value));
  else if (key == "test_fraction") c.test_fraction = config_double(s, key, value);
  else if (key == "scale") c.scale = config_bool(s, key, value);
  else if (key == "iters") c.iters = static_cast<int>(config_long(s, key, value));
  else if (key == "tol") c.tol = config_double(s, key, value);
  else if (key == "solver_tol") c.solver.tol = config_double(s, key, value);
  else if (key == "solver_sweeps") c.solver.max_sweeps = static_cast<std::size_t>(config_long(s, key, value));
  else if (key == "lambda") c.defaults.lambda = config_double(s, key, value);
  else if (key == "depth") c.defaults.depth = static_cast<int>(config_long(s, key, value));
  else if (key == "rule") c.defaults.rule = parse_prune_rule(value);
  else if (key == "grid.lambda") {
    c.grid_lambda.clear();
    for (const auto& v : split_list(value)) c.grid_lambda.push_back(config_double(s, key, v));
  } else if (key == "grid.depth") {
    c.grid_depth.clear();
    for (const auto& v : split_list(value)) c.grid_depth.push_back(static_cast<int>(config_long(s, key, v)));
  } else if (key == "grid.rule") {
    c.grid_rule.clear();
    for (const auto& v : split_list(value)) c.grid_rule.push_back(parse_prune_rule(v));
  } else {
    throw ConfigError("[" + s + "] unknown key '" + key + "'");
  }
}

}  // namespace detail

/// Parses experiment sections. `base_dir` anchors relative paths.
inline std::vector<ExperimentConfig> parse_config(std::istream& in, const std::filesystem::path& base_dir = {}) {
  std::vector<std::pair<std::string, std::string>> globals;
  std::vector<ExperimentConfig> out;
  std::vector<std::map<std::string, bool>> seen;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
    const auto t = detail::trim(line);
    if (t.empty()) continue;
    if (t.front() == '[') {
      if (t.back() != ']') throw ConfigError("line " + std::to_string(line_no) + ": unterminated section header");
      ExperimentConfig c;
      c.name = std::string(detail::trim(t.substr(1, t.size() - 2)));
      if (c.name.empty()) throw ConfigError("line " + std::to_string(line_no) + ": empty section name");
      c.dataset = c.name;
      seen.emplace_back();
      for (const auto& [k, v] : globals) detail::apply_key(c, k, v, base_dir, seen.back());
      out.push_back(std::move(c));
      continue;
    }
    const auto eq = t.find('=');
    if (eq == std::string_view::npos) throw ConfigError("line " + std::to_string(line_no) + ": expected key = value");
    std::string key(detail::trim(t.substr(0, eq)));
    std::string value(detail::trim(t.substr(eq + 1)));
    if (out.empty()) {
      ExperimentConfig probe;
      probe.name = "defaults";
      std::map<std::string, bool> s;
      detail::apply_key(probe, key, value, base_dir, s);  // validates the key early
      globals.emplace_back(std::move(key), std::move(value));
    } else {
      detail::apply_key(out.back(), key, value, base_dir, seen.back());
    }
  }
  for (std::size_t i = 0; i < out.size(); ++i) {
    auto& c = out[i];
    // tao_axis initializes from CART pruned at the CV minimum unless told otherwise.
    if (c.algorithm == Algorithm::tao_axis && !seen[i].count("rule")) c.defaults.rule = PruneRule::min;
    c.validate();
  }
  if (out.empty()) throw ConfigError("config defines no experiments");
  return out;
}

inline std::vector<ExperimentConfig> load_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config '" + path + "'");
  return parse_config(in, std::filesystem::path(path).parent_path());
}

// ---------------------------------------------------------------------------
// Fitting

struct FittedModel {
  Tree tree;
  std::optional<FitTrace> trace;  // TAO fits only
  Tree init;                      // TAO starting tree (CART tree for tao_axis)
};

inline TaoParams tao_params(const ExperimentConfig& c, const HyperParams& h) {
  TaoParams p;
  p.lambda = c.algorithm == Algorithm::tao_oblique ? h.lambda : 0.0;
  p.max_iters = c.iters;
  p.tol = c.tol;
  p.solver = c.solver;
  return p;
}

/// Trains one model with fixed hyperparameters.
inline FittedModel fit_model(const Dataset& train, const ExperimentConfig& c, const HyperParams& h, std::uint64_t seed) {
  switch (c.algorithm) {
    case Algorithm::cart: {
      auto t = cart_fit(train, c.folds, h.rule, {}, seed);
      return {t, std::nullopt, t};
    }
    case Algorithm::tao_axis: {
      auto init = cart_fit(train, c.folds, h.rule, {}, seed);
      auto r = tao_fit(init, train, tao_params(c, h), TaoMode::axis);
      return {std::move(r.tree), std::move(r.trace), std::move(init)};
    }
    case Algorithm::tao_oblique: {
      auto init = complete_tree(h.depth, train.dim(), train.task(), seed);
      auto r = tao_fit(init, train, tao_params(c, h), TaoMode::oblique);
      return {std::move(r.tree), std::move(r.trace), std::move(init)};
    }
  }
  throw ConfigError("unknown algorithm");
}

/// Accuracy in [0,1] or RMSE.
inline bool higher_is_better(TaskKind k) { return k == TaskKind::classification; }

struct GridSearchResult {
  HyperParams best;
  std::size_t best_index = 0;
  std::vector<HyperParams> points;
  std::vector<double> scores;  // mean validation metric per point
};

/// k-fold CV over the grid on `train`; ties go to the earliest grid point.
inline GridSearchResult grid_search_cv(const Dataset& train, const ExperimentConfig& c, std::uint64_t seed) {
  GridSearchResult res;
  res.points = c.grid();
  if (res.points.empty()) throw ConfigError("[" + c.name + "] empty hyperparameter grid");
  const auto folds = kfold(train.size(), c.folds, seed);
  std::vector<Dataset> fold_train, fold_valid;
  for (std::size_t f = 0; f < c.folds; ++f) {
    const auto s = folds.split(f);
    fold_train.push_back(train.subset(s.train));
    fold_valid.push_back(train.subset(s.test));
  }
  const bool up = higher_is_better(train.task().kind);
  for (std::size_t g = 0; g < res.points.size(); ++g) {
    double sum = 0.0;
    for (std::size_t f = 0; f < c.folds; ++f) {
      try {
        sum += evaluate(fit_model(fold_train[f], c, res.points[g], seed).tree, fold_valid[f]);
      } catch (const std::exception& e) {
        throw TrainingError("[" + c.name + "] grid point " + res.points[g].describe(c.algorithm) + ", fold " +
                            std::to_string(f) + ": " + e.what());
      }
    }
    const double mean = sum / static_cast<double>(c.folds);
    res.scores.push_back(mean);
    const double best = res.scores[res.best_index];
    if (g > 0 && (up ? mean > best : mean < best)) res.best_index = g;
  }
  res.best = res.points[res.best_index];
  return res;
}

// ---------------------------------------------------------------------------
// Experiments

struct RepeatResult {
  double train_metric = 0.0;  // accuracy in [0,1] or RMSE
  double test_metric = 0.0;
  int depth = 0;
  std::size_t leaves = 0;
  HyperParams chosen;
  double seconds = 0.0;
  std::vector<double> grid_scores;
  std::optional<FitTrace> trace;
  double init_train_loss = 0.0;   // training loss of the TAO starting tree
  double final_train_loss = 0.0;
};

struct ResultRow {
  std::string dataset;
  std::string algorithm;
  TaskKind task = TaskKind::classification;
  double train_mean = 0.0, train_std = 0.0;  // percent for classification, RMSE for regression
  double test_mean = 0.0, test_std = 0.0;
  double depth = 0.0, leaves = 0.0;
  std::string params;
  double seconds = 0.0;  // mean wall time per repeat
};

struct ExperimentResult {
  ResultRow row;
  std::vector<RepeatResult> repeats;
};

/// Mean and n-1 standard deviation; a single value has std 0.
inline std::pair<double, double> mean_std(const std::vector<double>& v) {
  if (v.empty()) return {0.0, 0.0};
  double m = 0.0;
  for (double x : v) m += x;
  m /= static_cast<double>(v.size());
  if (v.size() < 2) return {m, 0.0};
  double ss = 0.0;
  for (double x : v) ss += (x - m) * (x - m);
  return {m, std::sqrt(ss / static_cast<double>(v.size() - 1))};
}

inline Dataset load_any(const std::string& path, const ExperimentConfig& c, const Schema* reuse = nullptr) {
  const auto ext = std::filesystem::path(path).extension().string();
  if (ext == ".csv") {
    ColumnRef target = c.target;
    if (auto idx = detail::parse_long(c.target); idx && *idx >= 0) target = static_cast<std::size_t>(*idx);
    if (c.target.empty()) throw ConfigError("[" + c.name + "] CSV data needs a 'target' column");
    return load_csv(path, target, c.task, c.categorical, reuse);
  }
  return load_libsvm(path, c.task, reuse != nullptr ? detail::schema_dim(*reuse) : 0);
}

/// Loads the data of an experiment: (pool, fixed test set if any).
inline std::pair<Dataset, std::optional<Dataset>> load_experiment_data(const ExperimentConfig& c) {
  Dataset pool = load_any(c.path, c);
  std::optional<Dataset> test;
  if (!c.test_path.empty()) {
    test = load_any(c.test_path, c, pool.schema().columns.empty() ? nullptr : &pool.schema());
    if (test->dim() != pool.dim()) throw DataError("test file has a different feature count");
  }
  return {std::move(pool), std::move(test)};
}

/// Train/test data of repeat r: a fresh shuffle with seed + r.
inline std::pair<Dataset, Dataset> repeat_split(const Dataset& pool, const std::optional<Dataset>& fixed_test,
                                                const ExperimentConfig& c, std::size_t r) {
  const std::uint64_t seed = c.seed + r;
  Dataset train, test;
  if (fixed_test) {
    const auto perm = permutation(pool.size(), seed);
    train = pool.subset(perm);
    test = *fixed_test;
  } else {
    std::tie(train, test) = train_test_split(pool, {c.test_fraction, seed});
  }
  if (c.scale) {
    const auto s = MinMaxScaler::fit(train);
    train = s.transform(train);
    test = s.transform(test);
  }
  return {std::move(train), std::move(test)};
}

inline RepeatResult run_repeat(const Dataset& pool, const std::optional<Dataset>& fixed_test,
                               const ExperimentConfig& c, std::size_t r) {
  const auto start = std::chrono::steady_clock::now();
  const std::uint64_t seed = c.seed + r;
  auto [train, test] = repeat_split(pool, fixed_test, c, r);
  RepeatResult out;
  const auto gs = grid_search_cv(train, c, seed);
  out.chosen = gs.best;
  out.grid_scores = gs.scores;
  FittedModel m;
  try {
    m = fit_model(train, c, gs.best, seed);
  } catch (const std::exception& e) {
    throw TrainingError("[" + c.name + "] repeat " + std::to_string(r) + ": " + e.what());
  }
  out.train_metric = evaluate(m.tree, train);
  out.test_metric = evaluate(m.tree, test);
  out.depth = depth(m.tree);
  out.leaves = num_leaves(m.tree);
  out.trace = std::move(m.trace);
  const Loss loss = default_loss(train.task());
  out.init_train_loss = total_loss(m.init, train, loss);
  out.final_train_loss = total_loss(m.tree, train, loss);
  out.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  return out;
}

inline ResultRow summarize(const ExperimentConfig& c, const std::vector<RepeatResult>& reps) {
  ResultRow row;
  row.dataset = c.dataset;
  row.algorithm = to_string(c.algorithm);
  row.task = c.task;
  const double scale = c.task == TaskKind::classification ? 100.0 : 1.0;
  std::vector<double> tr, te, dp, lv, sec;
  for (const auto& r : reps) {
    tr.push_back(scale * r.train_metric);
    te.push_back(scale * r.test_metric);
    dp.push_back(r.depth);
    lv.push_back(static_cast<double>(r.leaves));
    sec.push_back(r.seconds);
  }
  std::tie(row.train_mean, row.train_std) = mean_std(tr);
  std::tie(row.test_mean, row.test_std) = mean_std(te);
  row.depth = mean_std(dp).first;
  row.leaves = mean_std(lv).first;
  row.seconds = mean_std(sec).first;
  // Most frequent choice (first seen wins ties), with its count.
  std::vector<std::pair<std::string, std::size_t>> counts;
  for (const auto& r : reps) {
    const auto d = r.chosen.describe(c.algorithm);
    auto it = std::find_if(counts.begin(), counts.end(), [&](const auto& p) { return p.first == d; });
    if (it == counts.end()) counts.push_back({d, 1}); else ++it->second;
  }
  auto top = counts.begin();
  for (auto it = counts.begin(); it != counts.end(); ++it) {
    if (it->second > top->second) top = it;
  }
  row.params = top->first;
  if (counts.size() > 1) row.params += " (" + std::to_string(top->second) + "/" + std::to_string(reps.size()) + ")";
  return row;
}

/// Runs every repeat (concurrently when threads allow) and aggregates.
inline ExperimentResult run_experiment(const ExperimentConfig& c) {
  c.validate();
  auto [pool, fixed_test] = load_experiment_data(c);
  ExperimentResult res;
  res.repeats.resize(c.repeats);
  parallel_for(c.repeats, [&](std::size_t r) { res.repeats[r] = run_repeat(pool, fixed_test, c, r); });
  res.row = summarize(c, res.repeats);
  return res;
}

// ---------------------------------------------------------------------------
// Tables

enum class TableFormat { csv, markdown };

inline TableFormat parse_table_format(std::string_view s) {
  if (s == "csv") return TableFormat::csv;
  if (s == "markdown" || s == "md") return TableFormat::markdown;
  throw ConfigError("unknown table format '" + std::string(s) + "'");
}

namespace detail {

inline std::string fixed(double v, int digits) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.*f", digits, v);
  return buf;
}

inline std::string csv_field(const std::string& s) {
  if (s.find_first_of(",\"\r\n") == std::string::npos) return s;
  std::string out = "\"";
  for (char ch : s) {
    if (ch == '"') out += '"';
    out += ch;
  }
  return out + "\"";
}

}  // namespace detail

/// Renders rows as CSV or a markdown table. `with_time` = false leaves the
/// time column empty so output depends only on the inputs and seeds.
inline std::string emit_table(const std::vector<ResultRow>& rows, TableFormat format, bool with_time = true) {
  for (const auto& r : rows) {
    if (r.task != rows.front().task) throw ConfigError("cannot mix classification and regression rows in one table");
  }
  using detail::fixed;
  std::string out;
  if (format == TableFormat::csv) {
    out = "dataset,algorithm,train_mean,train_std,test_mean,test_std,depth,leaves,params,time_s\n";
    for (const auto& r : rows) {
      out += detail::csv_field(r.dataset) + "," + detail::csv_field(r.algorithm) + "," + fixed(r.train_mean, 4) + "," +
             fixed(r.train_std, 4) + "," + fixed(r.test_mean, 4) + "," + fixed(r.test_std, 4) + "," + fixed(r.depth, 2) +
             "," + fixed(r.leaves, 2) + "," + detail::csv_field(r.params) + "," + (with_time ? fixed(r.seconds, 3) : "") +
             "\n";
    }
    return out;
  }
  const bool cls = rows.empty() || rows.front().task == TaskKind::classification;
  const std::string unit = cls ? " acc. (%)" : " RMSE";
  out = "| Dataset | Algorithm | Train" + unit + " | Test" + unit + " | Depth | Leaves | Params | Time (s) |\n";
  out += "|---|---|---|---|---|---|---|---|\n";
  for (const auto& r : rows) {
    out += "| " + r.dataset + " | " + r.algorithm + " | " + fixed(r.train_mean, 2) + "±" + fixed(r.train_std, 2) + " | " +
           fixed(r.test_mean, 2) + "±" + fixed(r.test_std, 2) + " | " + fixed(r.depth, 1) + " | " + fixed(r.leaves, 1) +
           " | " + r.params + " | " + (with_time ? fixed(r.seconds, 2) : "") + " |\n";
  }
  return out;
}

}  // namespace dtree
