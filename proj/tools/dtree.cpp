// dtree: train, predict, eval, inspect and bench from the command line.
//
// Exit codes: 0 ok, 1 usage, 2 data/model/config error, 3 training failure.

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>

#include <CLI11.hpp>

#include "dtree/dtree.hpp"

namespace fs = std::filesystem;
using namespace dtree;

namespace {

enum Exit { ok = 0, usage = 1, data_error = 2, training_failure = 3 };

struct UsageError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct TrainOpts {
  std::string data, target, task = "classification", algo = "cart", rule, out;
  std::vector<std::string> categorical;
  double lambda = 0.0, tol = 1e-5;
  int depth = 4, iters = 30;
  std::size_t folds = 10;
  std::uint64_t seed = 0;
  bool scale = false;
};

struct ModelOpts {
  std::string model, data, target, out = "-", format = "rules";
};

struct BenchOpts {
  std::string config, out = "-", format;
  bool no_time = false;
};

void require_input(const std::string& path, const char* what) {
  if (path.empty()) throw UsageError(std::string("missing --") + what);
  if (!fs::is_regular_file(path)) throw DataError(std::string(what) + " file '" + path + "' does not exist");
}

void require_output(const std::string& path) {
  if (path.empty() || path == "-") return;
  const auto parent = fs::path(path).parent_path();
  if (!parent.empty() && !fs::is_directory(parent)) {
    throw DataError("output directory '" + parent.string() + "' does not exist");
  }
}

// Writes to `path` or standard output ("-").
void write_output(const std::string& path, const std::string& text) {
  if (path.empty() || path == "-") {
    std::cout << text << std::flush;
    return;
  }
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write '" + path + "'");
  out << text;
  if (!out) throw DataError("failed writing '" + path + "'");
}

int run_train(const TrainOpts& o) {
  require_input(o.data, "data");
  require_output(o.out);
  if (o.out.empty()) throw UsageError("train needs --out");

  ExperimentConfig c;
  c.name = "train";
  c.path = o.data;
  c.target = o.target;
  c.categorical = o.categorical;
  c.task = parse_task_kind(o.task);
  c.algorithm = parse_algorithm(o.algo);
  c.folds = o.folds;
  c.seed = o.seed;
  c.iters = o.iters;
  c.tol = o.tol;
  c.scale = o.scale;
  HyperParams h;
  h.lambda = o.lambda;
  h.depth = o.depth;
  h.rule = o.rule.empty() ? (c.algorithm == Algorithm::tao_axis ? PruneRule::min : PruneRule::one_se)
                          : parse_prune_rule(o.rule);
  if (o.folds < 2) throw UsageError("--folds must be at least 2");
  if (o.iters < 1) throw UsageError("--iters must be at least 1");
  if (o.depth < 0 || o.depth > 20) throw UsageError("--depth must be in 0..20");
  if (!(o.lambda >= 0.0)) throw UsageError("--lambda must be non-negative");

  Dataset data = load_any(c.path, c);
  Model m;
  if (!data.schema().columns.empty()) m.schema = data.schema();
  if (o.scale) {
    m.scaler = MinMaxScaler::fit(data);
    data = m.scaler->transform(data);
  }
  m.tree = fit_model(data, c, h, o.seed).tree;
  m.meta = {{"algorithm", to_string(c.algorithm)}, {"params", h.describe(c.algorithm)}, {"seed", std::to_string(o.seed)}};
  save_model(m, o.out);
  std::cerr << "trained " << to_string(c.algorithm) << ": depth " << depth(m.tree) << ", leaves " << num_leaves(m.tree)
            << ", train " << (data.task().is_classification() ? "accuracy " : "RMSE ") << evaluate(m.tree, data) << "\n";
  return ok;
}

int run_predict(const ModelOpts& o) {
  require_input(o.model, "model");
  require_input(o.data, "data");
  require_output(o.out);
  const Model m = load_model(o.model);
  const auto in = load_for_model(o.data, m, o.target);
  std::string text = "prediction\n";
  for (std::size_t i = 0; i < in.data.size(); ++i) {
    const Leaf& leaf = predict(m.tree, in.data.row(i));
    if (m.tree.task().is_classification()) {
      text += detail::csv_field(m.label_name(leaf.label)) + "\n";
    } else {
      std::string row;
      for (std::size_t k = 0; k < leaf.value.size(); ++k) row += (k ? ";" : "") + detail::format_number(leaf.value[k]);
      text += detail::csv_field(row) + "\n";
    }
  }
  write_output(o.out, text);
  return ok;
}

int run_eval(const ModelOpts& o) {
  require_input(o.model, "model");
  require_input(o.data, "data");
  const Model m = load_model(o.model);
  const auto in = load_for_model(o.data, m, o.target);
  if (!in.labelled) throw DataError("eval needs the target column in the data");
  const double v = evaluate(m.tree, in.data);
  std::printf("%s: %.6f\n", m.tree.task().is_classification() ? "accuracy" : "rmse", v);
  std::printf("depth: %d\nleaves: %zu\nrows: %zu\n", depth(m.tree), num_leaves(m.tree), in.data.size());
  return ok;
}

int run_inspect(const ModelOpts& o) {
  require_input(o.model, "model");
  const Model m = load_model(o.model);
  if (o.format == "rules") {
    std::cout << export_rules(m.tree);
  } else if (o.format == "json") {
    std::cout << serialize_model(m);
  } else {
    throw UsageError("--format must be rules or json");
  }
  return ok;
}

int run_bench(const BenchOpts& o) {
  require_input(o.config, "config");
  require_output(o.out);
  const auto configs = load_config(o.config);
  for (const auto& c : configs) {
    if (!fs::is_regular_file(c.path)) throw DataError("[" + c.name + "] data file '" + c.path + "' does not exist");
    if (!c.test_path.empty() && !fs::is_regular_file(c.test_path)) {
      throw DataError("[" + c.name + "] test file '" + c.test_path + "' does not exist");
    }
    if (c.task != configs.front().task) throw ConfigError("one bench run cannot mix classification and regression");
  }
  TableFormat fmt = TableFormat::csv;
  if (!o.format.empty()) {
    fmt = parse_table_format(o.format);
  } else if (fs::path(o.out).extension() == ".md") {
    fmt = TableFormat::markdown;
  }
  std::vector<ResultRow> rows;
  for (const auto& c : configs) {
    std::cerr << "[" << c.name << "] " << to_string(c.algorithm) << " on " << c.dataset << ", " << c.repeats
              << " repeats\n";
    rows.push_back(run_experiment(c).row);
  }
  write_output(o.out, emit_table(rows, fmt, !o.no_time));
  return ok;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Decision trees: CART and Tree Alternating Optimization"};
  app.require_subcommand(1);

  TrainOpts t;
  auto* train = app.add_subcommand("train", "fit a tree and write a model file");
  train->add_option("--data", t.data, "training data (.csv with header, otherwise LIBSVM)")->required();
  train->add_option("--target", t.target, "CSV target column (name or 0-based index)");
  train->add_option("--task", t.task, "classification or regression")->capture_default_str();
  train->add_option("--categorical", t.categorical, "CSV columns to one-hot encode")->delimiter(',');
  train->add_option("--algo", t.algo, "cart, tao-axis or tao-oblique")->capture_default_str();
  train->add_option("--lambda", t.lambda, "l1 penalty for tao-oblique")->capture_default_str();
  train->add_option("--depth", t.depth, "depth of the random initial tree for tao-oblique")->capture_default_str();
  train->add_option("--iters", t.iters, "TAO iterations")->capture_default_str();
  train->add_option("--tol", t.tol, "TAO relative improvement tolerance")->capture_default_str();
  train->add_option("--folds", t.folds, "CV folds for CART pruning")->capture_default_str();
  train->add_option("--rule", t.rule, "pruning rule min or one-se (default one-se for cart, min for tao-axis)");
  train->add_option("--seed", t.seed, "random seed")->capture_default_str();
  train->add_flag("--scale", t.scale, "min-max scale features (stored in the model)");
  train->add_option("--out", t.out, "model file to write")->required();

  ModelOpts p;
  auto* pred = app.add_subcommand("predict", "write one prediction per input row");
  pred->add_option("--model", p.model, "model file")->required();
  pred->add_option("--data", p.data, "input data")->required();
  pred->add_option("--target", p.target, "label column to skip when the model has no schema");
  pred->add_option("--out", p.out, "output CSV (default standard output)");

  ModelOpts e;
  auto* ev = app.add_subcommand("eval", "print accuracy or RMSE and tree size");
  ev->add_option("--model", e.model, "model file")->required();
  ev->add_option("--data", e.data, "labelled data")->required();
  ev->add_option("--target", e.target, "label column when the model has no schema");

  ModelOpts i;
  auto* insp = app.add_subcommand("inspect", "print IF-THEN rules or the raw model");
  insp->add_option("--model", i.model, "model file")->required();
  insp->add_option("--format", i.format, "rules or json")->capture_default_str();

  BenchOpts b;
  auto* bench = app.add_subcommand("bench", "run the experiments of a config file");
  bench->add_option("--config", b.config, "experiment config")->required();
  bench->add_option("--out", b.out, "results table (default standard output)");
  bench->add_option("--format", b.format, "csv or markdown (default from the --out extension)");
  bench->add_flag("--no-time", b.no_time, "leave the time column empty for byte-reproducible output");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& ex) {
    return app.exit(ex);
  } catch (const CLI::ParseError& ex) {
    app.exit(ex);
    return usage;
  }

  try {
    if (*train) return run_train(t);
    if (*pred) return run_predict(p);
    if (*ev) return run_eval(e);
    if (*insp) return run_inspect(i);
    if (*bench) return run_bench(b);
  } catch (const UsageError& ex) {
    std::cerr << "usage error: " << ex.what() << "\n";
    return usage;
  } catch (const TrainingError& ex) {
    std::cerr << "training failed: " << ex.what() << "\n";
    return training_failure;
  } catch (const DataError& ex) {
    std::cerr << "data error: " << ex.what() << "\n";
    return data_error;
  } catch (const ModelError& ex) {
    std::cerr << "model error: " << ex.what() << "\n";
    return data_error;
  } catch (const ConfigError& ex) {
    std::cerr << "config error: " << ex.what() << "\n";
    return data_error;
  } catch (const std::exception& ex) {
    std::cerr << "training failed: " << ex.what() << "\n";
    return training_failure;
  }
  return usage;
}
