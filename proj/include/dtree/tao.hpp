#pragma once

// Tree Alternating Optimization. Nodes at the same depth have disjoint
// reaching sets, so each can be re-fit independently on a reduced problem
// with the rest of the tree fixed: a weighted binary classification problem
// for a split, a constant fit for a leaf.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <optional>
#include <string>
#include <utility>
#include <variant>
#include <vector>

#include "dtree/dataset.hpp"
#include "dtree/error.hpp"
#include "dtree/metrics.hpp"
#include "dtree/parallel.hpp"
#include "dtree/solver.hpp"
#include "dtree/tree.hpp"

namespace dtree {

enum class TaoMode { axis, oblique };

inline std::string to_string(TaoMode m) { return m == TaoMode::axis ? "axis" : "oblique"; }

struct TaoParams {
  double lambda = 0.0;          // l1 weight on oblique split weights
  int max_iters = 30;
  double tol = 1e-5;            // axis mode: stop when relative loss improvement falls below this
  std::optional<Loss> loss;     // defaults to 0/1 for classification, squared error for regression
  L1LogisticOptions solver;

  Loss loss_for(const Task& task) const { return loss.value_or(default_loss(task)); }

  void validate() const {
    if (!(lambda >= 0.0)) throw std::invalid_argument("lambda must be non-negative");
    if (max_iters < 1) throw std::invalid_argument("max_iters must be at least 1");
    if (!(tol >= 0.0)) throw std::invalid_argument("tol must be non-negative");
  }
};

/// Sum of ||w||_1 over reachable oblique splits.
inline double l1_penalty(const Tree& tree) {
  double s = 0.0;
  for (NodeId id : tree.preorder()) {
    if (const auto* o = std::get_if<ObliqueSplit>(&tree.node(id).kind)) {
      for (double w : o->weights) s += std::abs(w);
    }
  }
  return s;
}

/// Training loss plus lambda times the l1 penalty.
inline double objective(const Tree& tree, const Dataset& data, const TaoParams& params) {
  return total_loss(tree, data, params.loss_for(data.task())) + params.lambda * l1_penalty(tree);
}

/// Rows of `data` whose path passes through `node`, ascending.
inline std::vector<std::size_t> reaching_set(const Tree& tree, NodeId node, const Dataset& data) {
  std::vector<std::size_t> out;
  for (std::size_t i = 0; i < data.size(); ++i) {
    auto x = data.row(i);
    NodeId id = tree.root();
    while (true) {
      if (id == node) {
        out.push_back(i);
        break;
      }
      const auto& n = tree.node(id);
      if (n.is_leaf()) break;
      id = goes_right(n.kind, x) ? n.right : n.left;
    }
  }
  return out;
}

/// reaching_set for every node at once (empty for unreachable nodes).
inline std::vector<std::vector<std::size_t>> reaching_sets(const Tree& tree, const Dataset& data) {
  std::vector<std::vector<std::size_t>> out(tree.size());
  for (std::size_t i = 0; i < data.size(); ++i) {
    auto x = data.row(i);
    NodeId id = tree.root();
    while (true) {
      out[static_cast<std::size_t>(id)].push_back(i);
      const auto& n = tree.node(id);
      if (n.is_leaf()) break;
      id = goes_right(n.kind, x) ? n.right : n.left;
    }
  }
  return out;
}

struct ReducedProblem {
  NodeId node = no_node;
  std::vector<WeightedBinarySample> samples;  // split nodes: rows whose best child is unique
  std::vector<std::size_t> rows;              // all reaching rows
};

/// For each reaching row, compares the loss of sending it down the left
/// versus the right subtree (descendants fixed). Rows indifferent to the
/// choice are dropped; the rest get pseudo-label +1 (right is better) or -1
/// and weight |l_L - l_R|.
inline ReducedProblem build_internal_reduced(const Tree& tree, NodeId node, const Dataset& data, Loss loss,
                                             std::vector<std::size_t> rows) {
  const auto& n = tree.node(node);
  if (n.is_leaf()) throw std::invalid_argument("build_internal_reduced(): node is a leaf");
  ReducedProblem p{node, {}, std::move(rows)};
  for (auto i : p.rows) {
    auto x = data.row(i);
    const double l = row_loss(data, i, std::get<Leaf>(tree.node(tree.descend(n.left, x)).kind), loss);
    const double r = row_loss(data, i, std::get<Leaf>(tree.node(tree.descend(n.right, x)).kind), loss);
    if (l == r) continue;
    p.samples.push_back({x, r < l ? 1 : -1, std::abs(l - r), i});
  }
  return p;
}

inline ReducedProblem build_internal_reduced(const Tree& tree, NodeId node, const Dataset& data, Loss loss) {
  return build_internal_reduced(tree, node, data, loss, reaching_set(tree, node, data));
}

struct LeafUpdate {
  Leaf leaf;
  bool dead = false;  // no training row reaches the leaf; left unchanged
};

/// Best constant for the rows reaching a leaf: majority label (ties to the
/// smallest class index) under 0/1 loss, componentwise mean under squared error.
inline LeafUpdate optimize_leaf(const Tree& tree, NodeId node, const Dataset& data, Loss loss,
                                std::span<const std::size_t> rows) {
  const auto& current = std::get<Leaf>(tree.node(node).kind);
  if (rows.empty()) return {current, true};
  if (data.task().is_classification()) {
    std::vector<std::size_t> counts(data.classes(), 0);
    for (auto i : rows) ++counts[static_cast<std::size_t>(data.label(i) - 1)];
    const auto it = std::max_element(counts.begin(), counts.end());
    return {Leaf{static_cast<int>(it - counts.begin()) + 1, {}}, false};
  }
  if (loss != Loss::squared_error) throw std::invalid_argument("optimize_leaf(): regression leaves need squared error");
  Leaf l{current.label, std::vector<double>(data.task().outputs, 0.0)};
  for (auto i : rows) {
    auto y = data.target(i);
    for (std::size_t k = 0; k < y.size(); ++k) l.value[k] += y[k];
  }
  for (auto& v : l.value) v /= static_cast<double>(rows.size());
  return {std::move(l), false};
}

inline LeafUpdate optimize_leaf(const Tree& tree, NodeId node, const Dataset& data, Loss loss) {
  const auto rows = reaching_set(tree, node, data);
  return optimize_leaf(tree, node, data, loss, rows);
}

namespace detail {

inline double node_penalty(const NodeKind& kind) {
  double s = 0.0;
  if (const auto* o = std::get_if<ObliqueSplit>(&kind)) {
    for (double w : o->weights) s += std::abs(w);
  }
  return s;
}

// New parameters for a split node, or nullopt to keep the current ones.
// A candidate replaces the current split only if it strictly lowers the
// reduced objective (weighted routing error, plus lambda * ||w||_1 for
// oblique nodes), so a converged tree stays exactly as it is.
inline std::optional<NodeKind> refit_split(const NodeKind& current, const ReducedProblem& p, TaoMode mode,
                                           const TaoParams& params) {
  if (p.samples.empty()) return std::nullopt;
  double total = 0.0;
  bool has_pos = false;
  bool has_neg = false;
  for (const auto& s : p.samples) {
    total += s.weight;
    (s.pseudo_label > 0 ? has_pos : has_neg) = true;
  }
  const double eps = 1e-12 * total;
  const double old_cost = weighted_error(p.samples, current) + params.lambda * node_penalty(current);

  NodeKind candidate;
  double new_cost = 0.0;
  if (mode == TaoMode::axis) {
    const auto best = best_axis_split(p.samples);
    candidate = best.split();
    new_cost = best.weighted_error;
  } else {
    const std::size_t dim = p.samples.front().x.size();
    if (!has_neg || !has_pos) {
      // One class: the zero hyperplane sends everything to the wanted side.
      candidate = ObliqueSplit{std::vector<double>(dim, 0.0), has_pos ? 0.0 : 1.0};
    } else {
      const auto& cur = std::get<ObliqueSplit>(current);
      HyperplaneSolution warm;
      warm.weights = cur.weights;
      warm.bias = -cur.bias;
      const auto sol = l1_logistic(p.samples, params.lambda, &warm, params.solver);
      candidate = sol.split();
    }
    new_cost = weighted_error(p.samples, candidate) + params.lambda * node_penalty(candidate);
  }
  if (new_cost < old_cost - eps) return candidate;
  return std::nullopt;
}

inline void check_mode(const Tree& tree, TaoMode mode) {
  for (NodeId id : tree.preorder()) {
    const auto& k = tree.node(id).kind;
    if (std::holds_alternative<Leaf>(k)) continue;
    if (mode == TaoMode::axis && !std::holds_alternative<AxisSplit>(k)) {
      throw TrainingError("axis-aligned TAO got a tree with oblique splits");
    }
    if (mode == TaoMode::oblique && !std::holds_alternative<ObliqueSplit>(k)) {
      throw TrainingError("oblique TAO got a tree with axis-aligned splits");
    }
  }
}

}  // namespace detail

struct IterationResult {
  Tree tree;
  double objective = 0.0;
  std::size_t changed = 0;  // nodes whose parameters were replaced
  std::vector<NodeId> dead_leaves;
};

/// One TAO pass: depth levels from the deepest up to the root. Reaching sets
/// are computed once, since a node's reaching set depends only on its
/// ancestors, which a bottom-up sweep has not touched yet.
inline IterationResult tao_iteration(const Tree& tree, const Dataset& data, const TaoParams& params, TaoMode mode) {
  params.validate();
  if (tree.dim() != data.dim()) throw std::invalid_argument("tao_iteration(): dimension mismatch");
  detail::check_mode(tree, mode);
  const Loss loss = params.loss_for(data.task());
  IterationResult out{tree, 0.0, 0, {}};
  Tree& t = out.tree;
  const auto reach = reaching_sets(tree, data);
  const auto depth_of = tree.node_depths();
  const int max_depth = *std::max_element(depth_of.begin(), depth_of.end());
  std::vector<std::vector<NodeId>> levels(static_cast<std::size_t>(max_depth) + 1);
  for (NodeId id : tree.preorder()) levels[static_cast<std::size_t>(depth_of[static_cast<std::size_t>(id)])].push_back(id);

  for (auto level = levels.rbegin(); level != levels.rend(); ++level) {
    std::vector<std::optional<NodeKind>> updates(level->size());
    std::vector<char> dead(level->size(), 0);
    parallel_for(level->size(), [&](std::size_t k) {
      const NodeId id = (*level)[k];
      const auto& rows = reach[static_cast<std::size_t>(id)];
      const auto& n = t.node(id);
      if (n.is_leaf()) {
        auto u = optimize_leaf(t, id, data, loss, rows);
        dead[k] = u.dead ? 1 : 0;
        if (!u.dead && !(u.leaf == std::get<Leaf>(n.kind))) updates[k] = std::move(u.leaf);
        return;
      }
      const auto p = build_internal_reduced(t, id, data, loss, rows);
      updates[k] = detail::refit_split(n.kind, p, mode, params);
    });
    for (std::size_t k = 0; k < level->size(); ++k) {
      if (dead[k]) out.dead_leaves.push_back((*level)[k]);
      if (!updates[k]) continue;
      t.set_kind((*level)[k], std::move(*updates[k]));
      ++out.changed;
    }
  }
  out.objective = objective(t, data, params);
  return out;
}

struct TraceEntry {
  double objective = 0.0;
  double train_loss = 0.0;
  double penalty = 0.0;  // ||w||_1 summed over splits; objective = train_loss + lambda * penalty
  std::size_t leaves = 0;
};

struct FitTrace {
  TraceEntry initial;
  std::vector<TraceEntry> iterations;
  bool converged = false;  // stopped before max_iters
};

struct FitResult {
  Tree tree;
  FitTrace trace;
};

inline TraceEntry trace_entry(const Tree& tree, const Dataset& data, const TaoParams& params) {
  TraceEntry e;
  e.train_loss = total_loss(tree, data, params.loss_for(data.task()));
  e.penalty = l1_penalty(tree);
  e.objective = e.train_loss + params.lambda * e.penalty;
  e.leaves = num_leaves(tree);
  return e;
}

/// Runs up to max_iters TAO passes from `init`. Axis mode stops once the
/// relative decrease of the training loss falls below tol. Oblique mode stops
/// at an exact fixed point, repeating the final entry so the trace still has
/// one entry per iteration. Dead branches are removed from the result.
/// Throws TrainingError if a split type does not match `mode` or if the
/// objective ever increases (which the acceptance rule rules out).
inline FitResult tao_fit(const Tree& init, const Dataset& data, const TaoParams& params, TaoMode mode) {
  params.validate();
  detail::check_mode(init, mode);
  if (data.size() == 0) throw DataError("cannot fit on an empty dataset");
  FitResult res{init, {}};
  res.trace.initial = trace_entry(init, data, params);
  TraceEntry prev = res.trace.initial;
  const double slack = 1e-9 * std::max(1.0, prev.objective);
  for (int it = 0; it < params.max_iters; ++it) {
    auto step = tao_iteration(res.tree, data, params, mode);
    res.tree = std::move(step.tree);
    const auto e = trace_entry(res.tree, data, params);
    if (e.objective > prev.objective + slack) {
      throw TrainingError("TAO objective increased from " + std::to_string(prev.objective) + " to " +
                          std::to_string(e.objective) + " at iteration " + std::to_string(it + 1));
    }
    res.trace.iterations.push_back(e);
    if (mode == TaoMode::axis) {
      const double improvement = prev.train_loss > 0.0 ? (prev.train_loss - e.train_loss) / prev.train_loss : 0.0;
      if (improvement < params.tol) {
        res.trace.converged = true;
        break;
      }
    } else if (step.changed == 0) {
      res.trace.converged = true;
      while (res.trace.iterations.size() < static_cast<std::size_t>(params.max_iters)) res.trace.iterations.push_back(e);
      break;
    }
    prev = e;
  }
  res.tree = prune_dead(res.tree, data);
  res.tree.compact();
  return res;
}

}  // namespace dtree
