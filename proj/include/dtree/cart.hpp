#pragma once

// Greedy CART induction (Gini / squared error), weakest-link cost-complexity
// pruning and cross-validated selection of the pruning level.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <limits>
#include <numeric>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "dtree/dataset.hpp"
#include "dtree/error.hpp"
#include "dtree/metrics.hpp"
#include "dtree/parallel.hpp"
#include "dtree/tree.hpp"

namespace dtree {

/// 1 - sum_k p_k^2.
inline double gini(std::span<const std::size_t> class_counts) {
  std::size_t total = 0;
  for (auto c : class_counts) total += c;
  if (total == 0) throw std::invalid_argument("gini(): all counts are zero");
  double s = 0.0;
  for (auto c : class_counts) {
    const double p = static_cast<double>(c) / static_cast<double>(total);
    s += p * p;
  }
  return 1.0 - s;
}

struct CartParams {
  int max_depth = 30;
  std::size_t min_split = 1;  // nodes with fewer rows are not split
  double complexity = 0.0;    // a split must reduce impurity by complexity * root impurity

  void validate() const {
    if (max_depth < 0) throw std::invalid_argument("max_depth must be non-negative");
    if (min_split < 1) throw std::invalid_argument("min_split must be at least 1");
    if (!(complexity >= 0.0)) throw std::invalid_argument("complexity must be non-negative");
  }
};

namespace detail {

// Sufficient statistics of a row set: class counts (classification) or
// per-output sums and sums of squares (regression).
struct NodeStats {
  std::size_t n = 0;
  std::vector<std::size_t> counts;
  std::vector<double> sum;
  std::vector<double> sumsq;

  explicit NodeStats(const Task& task) {
    if (task.is_classification()) counts.assign(task.outputs, 0); else sum.assign(task.outputs, 0.0), sumsq.assign(task.outputs, 0.0);
  }

  void add(const Dataset& data, std::size_t i, int sign = 1) {
    n = sign > 0 ? n + 1 : n - 1;
    if (!counts.empty()) {
      auto& c = counts[static_cast<std::size_t>(data.label(i) - 1)];
      c = sign > 0 ? c + 1 : c - 1;
      return;
    }
    auto y = data.target(i);
    for (std::size_t k = 0; k < y.size(); ++k) {
      sum[k] += sign * y[k];
      sumsq[k] += sign * y[k] * y[k];
    }
  }

  // n * Gini, or the sum of squared deviations from the mean.
  double impurity() const {
    if (n == 0) return 0.0;
    const double nn = static_cast<double>(n);
    if (!counts.empty()) {
      double s = 0.0;
      for (auto c : counts) s += static_cast<double>(c) * static_cast<double>(c);
      return nn - s / nn;
    }
    double s = 0.0;
    for (std::size_t k = 0; k < sum.size(); ++k) s += std::max(0.0, sumsq[k] - sum[k] * sum[k] / nn);
    return s;
  }

  // Loss of the best constant prediction: misclassified count, or SSE.
  double best_loss() const {
    if (!counts.empty()) return static_cast<double>(n - *std::max_element(counts.begin(), counts.end()));
    return impurity();
  }

  bool pure() const {
    if (!counts.empty()) return std::count_if(counts.begin(), counts.end(), [](auto c) { return c > 0; }) <= 1;
    return impurity() <= 0.0;
  }

  // Majority label (ties to the smallest index) or mean.
  Leaf leaf() const {
    if (!counts.empty()) {
      const auto it = std::max_element(counts.begin(), counts.end());
      return Leaf{static_cast<int>(it - counts.begin()) + 1, {}};
    }
    Leaf l{0, std::vector<double>(sum.size(), 0.0)};
    if (n > 0) {
      for (std::size_t k = 0; k < sum.size(); ++k) l.value[k] = sum[k] / static_cast<double>(n);
    }
    return l;
  }
};

inline NodeStats stats_of(const Dataset& data, std::span<const std::size_t> rows) {
  NodeStats s(data.task());
  for (auto i : rows) s.add(data, i);
  return s;
}

struct CartSplit {
  std::size_t feature = 0;
  double threshold = 0.0;
  double cost = std::numeric_limits<double>::infinity();  // children's summed impurity
  bool found = false;
};

// Best (feature, midpoint) by children's impurity; ties keep the lowest
// feature, then the lowest threshold.
inline CartSplit best_cart_split(const Dataset& data, std::span<const std::size_t> rows, const NodeStats& parent) {
  CartSplit best;
  const double eps = 1e-12 * std::max(1.0, parent.impurity());
  std::vector<std::size_t> order(rows.begin(), rows.end());
  for (std::size_t j = 0; j < data.dim(); ++j) {
    std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
      const double va = data.row(a)[j];
      const double vb = data.row(b)[j];
      return va < vb || (va == vb && a < b);
    });
    NodeStats left(data.task());
    NodeStats right = parent;
    for (std::size_t p = 0; p + 1 < order.size(); ++p) {
      left.add(data, order[p]);
      right.add(data, order[p], -1);
      const double v = data.row(order[p])[j];
      const double next = data.row(order[p + 1])[j];
      if (next == v) continue;
      const double cost = left.impurity() + right.impurity();
      if (cost < best.cost - eps) {
        double t = v + (next - v) / 2.0;
        if (!(t > v)) t = next;
        best = {j, t, cost, true};
      }
    }
  }
  return best;
}

}  // namespace detail

/// Grows an axis-aligned tree by greedy recursive partitioning. With
/// complexity 0 an impure node is split even when no split lowers its
/// impurity (as on XOR layouts), so the tree fits the training data exactly
/// unless identical rows carry different labels or max_depth intervenes.
inline Tree grow(const Dataset& data, const CartParams& params = {}) {
  params.validate();
  if (data.size() == 0) throw DataError("cannot grow a tree on an empty dataset");
  std::vector<std::size_t> all(data.size());
  std::iota(all.begin(), all.end(), std::size_t{0});
  const auto root_stats = detail::stats_of(data, all);
  const double min_gain = params.complexity * root_stats.impurity();
  Tree tree(data.task(), data.dim(), root_stats.leaf());

  struct Pending {
    NodeId id;
    int depth;
    std::vector<std::size_t> rows;
  };
  std::vector<Pending> stack;
  stack.push_back({tree.root(), 0, std::move(all)});
  while (!stack.empty()) {
    Pending cur = std::move(stack.back());
    stack.pop_back();
    const auto stats = detail::stats_of(data, cur.rows);
    if (cur.depth >= params.max_depth || cur.rows.size() < params.min_split || cur.rows.size() < 2 || stats.pure()) continue;
    const auto split = detail::best_cart_split(data, cur.rows, stats);
    if (!split.found) continue;
    const double gain = stats.impurity() - split.cost;
    const double eps = 1e-12 * std::max(1.0, stats.impurity());
    if (params.complexity > 0.0 ? !(gain > min_gain) : gain < -eps) continue;

    std::vector<std::size_t> lrows;
    std::vector<std::size_t> rrows;
    for (auto i : cur.rows) (data.row(i)[split.feature] >= split.threshold ? rrows : lrows).push_back(i);
    auto [l, r] = tree.split(cur.id, AxisSplit{split.feature, split.threshold}, detail::stats_of(data, lrows).leaf(),
                             detail::stats_of(data, rrows).leaf());
    // Right first so the left subtree is expanded first.
    stack.push_back({r, cur.depth + 1, std::move(rrows)});
    stack.push_back({l, cur.depth + 1, std::move(lrows)});
  }
  return tree;
}

struct PruningEntry {
  double alpha = 0.0;
  Tree tree;
};

/// Nested subtrees with strictly increasing alphas; entry k minimizes
/// loss + alpha * leaves for alpha in [alpha_k, alpha_{k+1}).
struct PruningPath {
  std::vector<PruningEntry> entries;

  std::size_t size() const { return entries.size(); }

  /// Index of the subtree optimal at `alpha`.
  std::size_t index_for(double alpha) const {
    std::size_t k = 0;
    while (k + 1 < entries.size() && entries[k + 1].alpha <= alpha) ++k;
    return k;
  }
  const Tree& select(double alpha) const { return entries[index_for(alpha)].tree; }
};

/// Weakest-link cost-complexity pruning of `tree` with respect to the
/// misclassification count (classification) or SSE (regression) on `data`.
/// Collapsed nodes predict the majority label / mean of the rows reaching
/// them. Links whose removal costs nothing are cut at alpha 0, so the first
/// entry is the tree without zero-gain splits.
namespace detail {

/// The weakest-link sequence as per-node data: entry alphas, the entry at
/// which each internal node is collapsed (npos = never) and the leaf it
/// becomes. Entry e of the path is the tree with every node whose cut_entry
/// is <= e collapsed.
struct PruneSchedule {
  static constexpr std::size_t npos = static_cast<std::size_t>(-1);
  std::vector<double> alphas;
  std::vector<std::size_t> cut_entry;
  std::vector<Leaf> collapsed;

  std::size_t index_for(double alpha) const {
    std::size_t k = 0;
    while (k + 1 < alphas.size() && alphas[k + 1] <= alpha) ++k;
    return k;
  }

  /// Prediction of entry e without building its tree.
  const Leaf& predict(const Tree& tree, std::size_t e, std::span<const double> x) const {
    NodeId id = tree.root();
    while (true) {
      const auto u = static_cast<std::size_t>(id);
      const auto& n = tree.node(id);
      if (n.is_leaf()) return std::get<Leaf>(n.kind);
      if (cut_entry[u] <= e) return collapsed[u];
      id = goes_right(n.kind, x) ? n.right : n.left;
    }
  }

  Tree materialize(const Tree& tree, std::size_t e) const {
    Tree t = tree;
    std::vector<char> live(tree.size(), 0);
    live[static_cast<std::size_t>(tree.root())] = 1;
    for (NodeId id : tree.preorder()) {
      const auto u = static_cast<std::size_t>(id);
      const auto& n = tree.node(id);
      if (!live[u] || n.is_leaf()) continue;
      if (cut_entry[u] <= e) {
        t.collapse(id, collapsed[u]);
      } else {
        live[static_cast<std::size_t>(n.left)] = live[static_cast<std::size_t>(n.right)] = 1;
      }
    }
    t.compact();
    return t;
  }
};

inline PruneSchedule prune_schedule(const Tree& tree, const Dataset& data) {
  if (tree.dim() != data.dim()) throw std::invalid_argument("pruning_path(): dimension mismatch");
  const Loss loss = default_loss(data.task());
  const std::size_t m = tree.size();
  std::vector<NodeStats> stats(m, NodeStats(data.task()));
  std::vector<double> leaf_loss(m, 0.0);
  for (std::size_t i = 0; i < data.size(); ++i) {
    auto x = data.row(i);
    NodeId id = tree.root();
    while (true) {
      stats[static_cast<std::size_t>(id)].add(data, i);
      const auto& n = tree.node(id);
      if (n.is_leaf()) {
        leaf_loss[static_cast<std::size_t>(id)] += row_loss(data, i, std::get<Leaf>(n.kind), loss);
        break;
      }
      id = goes_right(n.kind, x) ? n.right : n.left;
    }
  }

  const auto order = tree.preorder();
  std::vector<char> cut(m, 0);
  std::vector<double> subtree_loss(m, 0.0);
  std::vector<std::size_t> leaves(m, 0);
  std::vector<double> g(m, 0.0);
  PruneSchedule sched;
  sched.cut_entry.assign(m, PruneSchedule::npos);
  sched.collapsed.resize(m);
  for (std::size_t u = 0; u < m; ++u) {
    if (tree.node(static_cast<NodeId>(u)).is_leaf()) continue;
    sched.collapsed[u] = stats[u].leaf();
    if (stats[u].n == 0 && !data.task().is_classification()) sched.collapsed[u].value.assign(data.task().outputs, 0.0);
  }

  // Recomputes subtree losses / leaf counts under the current cuts and
  // returns the weakest link value g among remaining internal nodes.
  auto refresh = [&] {
    double best = std::numeric_limits<double>::infinity();
    for (auto it = order.rbegin(); it != order.rend(); ++it) {
      const auto id = static_cast<std::size_t>(*it);
      const auto& n = tree.node(*it);
      if (n.is_leaf() || cut[id]) {
        subtree_loss[id] = n.is_leaf() && !cut[id] ? leaf_loss[id] : stats[id].best_loss();
        leaves[id] = 1;
        continue;
      }
      const auto l = static_cast<std::size_t>(n.left);
      const auto r = static_cast<std::size_t>(n.right);
      subtree_loss[id] = subtree_loss[l] + subtree_loss[r];
      leaves[id] = leaves[l] + leaves[r];
      g[id] = (stats[id].best_loss() - subtree_loss[id]) / static_cast<double>(leaves[id] - 1);
    }
    // Only nodes not inside an already-cut subtree count.
    std::vector<char> live(m, 0);
    live[static_cast<std::size_t>(tree.root())] = 1;
    for (NodeId id : order) {
      const auto u = static_cast<std::size_t>(id);
      const auto& n = tree.node(id);
      if (!live[u] || n.is_leaf() || cut[u]) continue;
      live[static_cast<std::size_t>(n.left)] = live[static_cast<std::size_t>(n.right)] = 1;
      best = std::min(best, g[u]);
    }
    return std::pair{best, live};
  };
  // Cuts live links with g <= threshold, tagging them with entry e.
  auto cut_below = [&](double threshold, const std::vector<char>& live, std::size_t e) {
    for (NodeId id : order) {
      const auto u = static_cast<std::size_t>(id);
      if (live[u] && !tree.node(id).is_leaf() && !cut[u] && g[u] <= threshold) {
        cut[u] = 1;
        sched.cut_entry[u] = e;
      }
    }
  };

  const double scale = std::max(1.0, stats[static_cast<std::size_t>(tree.root())].best_loss());
  const double eps = 1e-10 * scale;
  auto [g0, live0] = refresh();
  if (g0 <= eps) {
    // Fixed-point: cutting can expose further zero-gain links above.
    while (true) {
      cut_below(eps, live0, 0);
      auto [gn, ln] = refresh();
      live0 = ln;
      if (!(gn <= eps)) break;
    }
  }
  sched.alphas.push_back(0.0);
  while (true) {
    auto [alpha, live] = refresh();
    if (!std::isfinite(alpha)) break;
    // Links tied with the previous entry merge into it.
    const bool merge = alpha <= sched.alphas.back() + eps;
    cut_below(alpha + eps, live, merge ? sched.alphas.size() - 1 : sched.alphas.size());
    if (!merge) sched.alphas.push_back(alpha);
  }
  return sched;
}

}  // namespace detail

inline PruningPath pruning_path(const Tree& tree, const Dataset& data) {
  const auto sched = detail::prune_schedule(tree, data);
  PruningPath path;
  for (std::size_t e = 0; e < sched.alphas.size(); ++e) path.entries.push_back({sched.alphas[e], sched.materialize(tree, e)});
  return path;
}

enum class PruneRule { min, one_se };

inline PruneRule parse_prune_rule(std::string_view s) {
  if (s == "min") return PruneRule::min;
  if (s == "one_se" || s == "one-se" || s == "1se") return PruneRule::one_se;
  throw ConfigError("unknown pruning rule '" + std::string(s) + "' (expected min or one-se)");
}

inline std::string to_string(PruneRule r) { return r == PruneRule::min ? "min" : "one-se"; }

/// Cross-validated loss of every pruning level of a full-data path.
struct CvTable {
  Tree full;                     // unpruned tree on all the data
  detail::PruneSchedule schedule;
  std::vector<double> alpha;     // pruning path alphas, one per entry
  std::vector<double> beta;  // evaluation alpha per entry: geometric midpoints, last +inf
  std::vector<double> mean;  // mean per-row held-out loss
  std::vector<double> se;    // its standard error
  std::size_t min_index = 0;
  std::size_t one_se_index = 0;

  std::size_t chosen(PruneRule rule) const { return rule == PruneRule::min ? min_index : one_se_index; }
  std::size_t size() const { return alpha.size(); }
  /// Path entry e as a tree.
  Tree tree(std::size_t e) const { return schedule.materialize(full, e); }
};

inline CvTable cross_validate_path(const Dataset& data, std::size_t k, const CartParams& params = {},
                                   std::uint64_t seed = 0, const Tree* full_tree = nullptr) {
  if (k < 2) throw std::invalid_argument("fold count must be at least 2");
  CvTable cv;
  cv.full = full_tree != nullptr ? *full_tree : grow(data, params);
  cv.schedule = detail::prune_schedule(cv.full, data);
  cv.alpha = cv.schedule.alphas;
  const std::size_t levels = cv.alpha.size();
  for (std::size_t e = 0; e < levels; ++e) {
    cv.beta.push_back(e + 1 < levels ? std::sqrt(cv.alpha[e] * cv.alpha[e + 1])
                                     : std::numeric_limits<double>::infinity());
  }

  const auto folds = kfold(data.size(), k, seed);
  const Loss loss = default_loss(data.task());
  // loss_of[e][row]: held-out loss of `row` under pruning level e.
  std::vector<std::vector<double>> loss_of(levels, std::vector<double>(data.size(), 0.0));
  parallel_for(k, [&](std::size_t f) {
    const auto s = folds.split(f);
    const auto train = data.subset(s.train);
    const Tree fold_tree = grow(train, params);
    const auto sched = detail::prune_schedule(fold_tree, train);
    for (std::size_t e = 0; e < levels; ++e) {
      const std::size_t idx = sched.index_for(cv.beta[e]);
      for (auto row : s.test) loss_of[e][row] = row_loss(data, row, sched.predict(fold_tree, idx, data.row(row)), loss);
    }
  });

  const double n = static_cast<double>(data.size());
  for (std::size_t e = 0; e < levels; ++e) {
    double sum = 0.0;
    for (double v : loss_of[e]) sum += v;
    const double mu = sum / n;
    double ss = 0.0;
    for (double v : loss_of[e]) ss += (v - mu) * (v - mu);
    cv.mean.push_back(mu);
    cv.se.push_back(data.size() > 1 ? std::sqrt(ss / (n - 1.0)) / std::sqrt(n) : 0.0);
  }
  const double tie = 1e-12;
  for (std::size_t e = 1; e < levels; ++e) {
    if (cv.mean[e] <= cv.mean[cv.min_index] + tie) cv.min_index = e;
  }
  const double bound = cv.mean[cv.min_index] + cv.se[cv.min_index] + tie;
  cv.one_se_index = cv.min_index;
  for (std::size_t e = cv.min_index; e < levels; ++e) {
    if (cv.mean[e] <= bound) cv.one_se_index = e;
  }
  return cv;
}

/// Full-data `tree` pruned at the alpha chosen by k-fold cross-validation.
/// `min` takes the largest alpha attaining the minimal mean CV loss; `one_se`
/// the largest alpha whose mean is within one standard error of it.
inline Tree prune_select(const Tree& tree, const Dataset& data, std::size_t k, PruneRule rule,
                         const CartParams& params = {}, std::uint64_t seed = 0) {
  auto cv = cross_validate_path(data, k, params, seed, &tree);
  return cv.tree(cv.chosen(rule));
}

/// grow + prune_select.
inline Tree cart_fit(const Dataset& data, std::size_t k, PruneRule rule, const CartParams& params = {},
                     std::uint64_t seed = 0) {
  return prune_select(grow(data, params), data, k, rule, params, seed);
}

}  // namespace dtree
