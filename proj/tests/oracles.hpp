#pragma once

// Independent reference computations shared by the unit tests and the
// acceptance runner. Everything here is brute force on purpose.

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <numeric>
#include <string>
#include <vector>

#include "dtree/cart.hpp"
#include "dtree/metrics.hpp"
#include "dtree/solver.hpp"
#include "dtree/tao.hpp"
#include "helpers.hpp"

namespace oracles {

using namespace dtree;

struct Instance {
  std::size_t dim = 0;
  std::vector<double> x;
  std::vector<int> y;
  std::vector<double> w;

  std::vector<WeightedBinarySample> samples() const {
    std::vector<WeightedBinarySample> s;
    for (std::size_t i = 0; i < y.size(); ++i) s.push_back({{&x[i * dim], dim}, y[i], w[i], i});
    return s;
  }
};

// Integer-valued features and weights so every partial sum is exact.
inline Instance random_instance(std::size_t n, std::size_t dim, std::uint64_t seed) {
  Rng rng(seed);
  Instance in{dim, {}, {}, {}};
  for (std::size_t i = 0; i < n * dim; ++i) in.x.push_back(static_cast<double>(uniform_index(rng, 6)));
  for (std::size_t i = 0; i < n; ++i) {
    in.y.push_back(uniform_index(rng, 2) == 0 ? -1 : 1);
    in.w.push_back(static_cast<double>(1 + uniform_index(rng, 5)));
  }
  return in;
}

// Every feature, every threshold among -inf, the midpoints of distinct sorted
// values, +inf; first strict improvement wins.
inline AxisSplitResult brute_axis(const Instance& in) {
  const double inf = std::numeric_limits<double>::infinity();
  AxisSplitResult best{0, 0.0, inf};
  for (std::size_t j = 0; j < in.dim; ++j) {
    std::vector<double> vals;
    for (std::size_t i = 0; i < in.y.size(); ++i) vals.push_back(in.x[i * in.dim + j]);
    std::sort(vals.begin(), vals.end());
    vals.erase(std::unique(vals.begin(), vals.end()), vals.end());
    std::vector<double> cands{-inf};
    for (std::size_t k = 0; k + 1 < vals.size(); ++k) cands.push_back((vals[k] + vals[k + 1]) / 2);
    cands.push_back(inf);
    for (double t : cands) {
      double err = 0;
      for (std::size_t i = 0; i < in.y.size(); ++i) {
        const bool right = in.x[i * in.dim + j] >= t;
        if (right != (in.y[i] > 0)) err += in.w[i];
      }
      if (err < best.weighted_error) best = {j, t, err};
    }
  }
  return best;
}

/// Trial `t` of the axis-split property: N in 1..30, D in 1..5.
inline Instance axis_trial(std::size_t t, Rng& rng) {
  const std::size_t n = 1 + uniform_index(rng, 30);
  const std::size_t d = 1 + uniform_index(rng, 5);
  return random_instance(n, d, 1000 + t);
}

/// Empty when best_axis_split agrees with brute force, else a description.
inline std::string axis_mismatch(const Instance& in) {
  const auto s = in.samples();
  const auto got = best_axis_split(s);
  const auto want = brute_axis(in);
  if (got.weighted_error != want.weighted_error || got.feature != want.feature || got.threshold != want.threshold) {
    return "got (" + std::to_string(got.feature) + ", " + std::to_string(got.threshold) + ", " +
           std::to_string(got.weighted_error) + ") want (" + std::to_string(want.feature) + ", " +
           std::to_string(want.threshold) + ", " + std::to_string(want.weighted_error) + ")";
  }
  return {};
}

// 50 noisy 2-D points with a linear trend and random positive weights.
inline Instance logistic_instance(std::uint64_t seed) {
  Rng rng(seed);
  Instance in{2, {}, {}, {}};
  for (int i = 0; i < 50; ++i) {
    const double a = uniform_real(rng, -2, 2);
    const double b = uniform_real(rng, -2, 2);
    in.x.push_back(a);
    in.x.push_back(b);
    const double score = 1.5 * a - 0.8 * b + 0.3 + uniform_real(rng, -1.5, 1.5);
    in.y.push_back(score >= 0 ? 1 : -1);
    in.w.push_back(uniform_real(rng, 0.5, 2.0));
  }
  return in;
}

inline double logistic_obj(const std::vector<WeightedBinarySample>& s, double w1, double w2, double b, double lambda) {
  double f = 0;
  for (const auto& smp : s) {
    const double m = smp.pseudo_label * (w1 * smp.x[0] + w2 * smp.x[1] + b);
    f += smp.weight * (m > 0 ? std::log1p(std::exp(-m)) : -m + std::log1p(std::exp(m)));
  }
  return f + lambda * (std::abs(w1) + std::abs(w2));
}

/// Minimum of the 2-D objective: a 0.25 grid over [-5,5]^3, then compass
/// search with diagonal moves down to a step of 1e-9.
inline double logistic_grid_optimum(const std::vector<WeightedBinarySample>& s, double lambda) {
  double best = std::numeric_limits<double>::infinity();
  double p[3] = {0, 0, 0};
  for (double w1 = -5; w1 <= 5 + 1e-9; w1 += 0.25) {
    for (double w2 = -5; w2 <= 5 + 1e-9; w2 += 0.25) {
      for (double b = -5; b <= 5 + 1e-9; b += 0.25) {
        const double f = logistic_obj(s, w1, w2, b, lambda);
        if (f < best) {
          best = f;
          p[0] = w1, p[1] = w2, p[2] = b;
        }
      }
    }
  }
  for (double step = 0.125; step > 1e-9;) {
    bool moved = false;
    for (int dx = -1; dx <= 1; ++dx) {
      for (int dy = -1; dy <= 1; ++dy) {
        for (int dz = -1; dz <= 1; ++dz) {
          const double f = logistic_obj(s, p[0] + dx * step, p[1] + dy * step, p[2] + dz * step, lambda);
          if (f < best - 1e-15) {
            best = f;
            p[0] += dx * step, p[1] += dy * step, p[2] += dz * step;
            moved = true;
          }
        }
      }
    }
    if (!moved) step /= 2;
  }
  return best;
}

/// loss + alpha * leaves minimized over every pruned subtree, by recursion:
/// best(t) = min(collapse t, best(left) + best(right)).
inline double brute_min(const Tree& t, const Dataset& d, double alpha) {
  const Loss loss = default_loss(d.task());
  std::function<double(NodeId, const std::vector<std::size_t>&)> best = [&](NodeId id, const std::vector<std::size_t>& rows) {
    auto stats = detail::stats_of(d, rows);
    const auto& n = t.node(id);
    if (n.is_leaf()) {
      double l = 0;
      for (auto i : rows) l += row_loss(d, i, std::get<Leaf>(n.kind), loss);
      return l + alpha;
    }
    const double collapsed = stats.best_loss() + alpha;
    std::vector<std::size_t> lr, rr;
    for (auto i : rows) (goes_right(n.kind, d.row(i)) ? rr : lr).push_back(i);
    return std::min(collapsed, best(n.left, lr) + best(n.right, rr));
  };
  std::vector<std::size_t> all(d.size());
  std::iota(all.begin(), all.end(), 0);
  return best(t.root(), all);
}

inline double pruned_cost(const Tree& t, const Dataset& d, double alpha) {
  return total_loss(t, d, default_loss(d.task())) + alpha * static_cast<double>(num_leaves(t));
}

/// Problems with the pruning path of `full` (empty = none): alphas strictly
/// increasing from 0, nested sizes ending at the root, and every selected
/// subtree optimal against enumeration at probe and path alphas.
inline std::vector<std::string> path_problems(const Tree& full, const Dataset& d) {
  std::vector<std::string> out;
  const auto p = pruning_path(full, d);
  if (p.size() == 0) return {"empty path"};
  if (p.entries.front().alpha != 0.0) out.push_back("first alpha is not 0");
  if (num_leaves(p.entries.back().tree) != 1) out.push_back("last entry is not the root");
  for (std::size_t k = 1; k < p.size(); ++k) {
    if (!(p.entries[k].alpha > p.entries[k - 1].alpha)) out.push_back("alphas not increasing at " + std::to_string(k));
    if (num_leaves(p.entries[k].tree) > num_leaves(p.entries[k - 1].tree)) out.push_back("sizes not nested at " + std::to_string(k));
  }
  std::vector<double> alphas{0.0, 0.5, 1.0, 2.5, 7.0};
  for (const auto& e : p.entries) alphas.push_back(e.alpha);
  for (double a : alphas) {
    const double got = pruned_cost(p.select(a), d, a);
    const double want = brute_min(full, d, a);
    if (std::abs(got - want) > 1e-9) out.push_back("alpha " + std::to_string(a) + ": cost " + std::to_string(got) + " vs optimum " + std::to_string(want));
  }
  return out;
}

/// Pruning case `c`: a depth-3 CART tree (at most 15 nodes) on 40 random rows.
inline std::pair<Tree, Dataset> pruning_case(std::uint64_t c) {
  auto d = testing_helpers::synthetic(40, 3, 3, 100 + c, [](auto, Rng& rng) { return static_cast<int>(uniform_index(rng, 3)) + 1; });
  CartParams p;
  p.max_depth = 3;
  return {grow(d, p), d};
}

// Total loss when the node's reaching rows are routed by `mask` (bit k sends
// row k right) instead of by the node's split.
inline double loss_with_routing(const Tree& t, const Dataset& d, NodeId node, const std::vector<std::size_t>& rows,
                                unsigned mask, Loss loss) {
  double s = 0;
  const auto& n = t.node(node);
  for (std::size_t k = 0; k < rows.size(); ++k) {
    const auto i = rows[k];
    const NodeId child = (mask >> k) & 1u ? n.right : n.left;
    s += row_loss(d, i, std::get<Leaf>(t.node(t.descend(child, d.row(i))).kind), loss);
  }
  return s;
}

/// Reduced-problem faithfulness at the root of a random depth-2 tree on up to
/// `max_rows` rows: for every one of the 2^N routings, the tree's loss must
/// equal a constant plus the weighted misclassification of the reduced
/// problem. Returns the number of routings that disagree.
inline std::size_t reduced_problem_mismatches(std::uint64_t seed, std::size_t max_rows) {
  Rng rng(seed);
  const std::size_t n = 6 + uniform_index(rng, max_rows - 5);
  auto d = testing_helpers::synthetic(n, 2, 3, seed, [](auto, Rng& r) { return static_cast<int>(uniform_index(r, 3)) + 1; });
  Tree t(d.task(), 2, Leaf{1, {}});
  auto [l, r] = t.split(t.root(), AxisSplit{0, 0.5}, Leaf{1, {}}, Leaf{1, {}});
  auto random_leaf = [&] { return Leaf{static_cast<int>(uniform_index(rng, 3)) + 1, {}}; };
  t.split(l, AxisSplit{1, uniform01(rng)}, random_leaf(), random_leaf());
  t.split(r, AxisSplit{1, uniform01(rng)}, random_leaf(), random_leaf());
  const auto rows = reaching_set(t, t.root(), d);
  const auto p = build_internal_reduced(t, t.root(), d, Loss::zero_one);
  std::vector<std::size_t> bit;  // position of each reduced sample among the reaching rows
  for (const auto& s : p.samples) {
    bit.push_back(static_cast<std::size_t>(std::find(rows.begin(), rows.end(), s.row) - rows.begin()));
  }
  auto misrouted_under = [&](unsigned mask) {
    double m = 0;
    for (std::size_t k = 0; k < p.samples.size(); ++k) {
      if ((((mask >> bit[k]) & 1u) != 0) != (p.samples[k].pseudo_label > 0)) m += p.samples[k].weight;
    }
    return m;
  };
  // The constant is the loss of any routing that sends every reduced sample its preferred way.
  unsigned ideal = 0;
  for (std::size_t k = 0; k < p.samples.size(); ++k) {
    if (p.samples[k].pseudo_label > 0) ideal |= 1u << bit[k];
  }
  const double constant = loss_with_routing(t, d, t.root(), rows, ideal, Loss::zero_one);
  std::size_t bad = 0;
  for (unsigned mask = 0; mask < (1u << rows.size()); ++mask) {
    if (loss_with_routing(t, d, t.root(), rows, mask, Loss::zero_one) != constant + misrouted_under(mask)) ++bad;
  }
  return bad;
}

}  // namespace oracles
