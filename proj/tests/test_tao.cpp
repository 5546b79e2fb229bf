#include <gtest/gtest.h>

#include "dtree/cart.hpp"
#include "dtree/tao.hpp"
#include "helpers.hpp"
#include "oracles.hpp"

using namespace dtree;
using namespace testing_helpers;

namespace {

Tree stump(const Task& task, std::size_t dim, NodeKind split, Leaf l, Leaf r) {
  Tree t(task, dim, l);
  t.split(t.root(), std::move(split), std::move(l), std::move(r));
  return t;
}

// x[0] >= 0.5 ? (x[1] >= 0.5 ? 4 : 3) : (x[1] >= 0.5 ? 2 : 1)
Tree quadrant_tree() {
  Tree t(Task::classification(4), 2, Leaf{1, {}});
  auto [l, r] = t.split(t.root(), AxisSplit{0, 0.5}, Leaf{1, {}}, Leaf{1, {}});
  t.split(l, AxisSplit{1, 0.5}, Leaf{1, {}}, Leaf{2, {}});
  t.split(r, AxisSplit{1, 0.5}, Leaf{3, {}}, Leaf{4, {}});
  return t;
}

}  // namespace

TEST(Objective, PerfectTreeIsZero) {
  auto d = Dataset::classification(1, {0, 1}, {1, 2}, 2);
  auto t = stump(d.task(), 1, AxisSplit{0, 0.5}, Leaf{1, {}}, Leaf{2, {}});
  EXPECT_EQ(objective(t, d, {}), 0.0);
}

TEST(Objective, SingleLeafCountsMistakes) {
  std::vector<double> x(100, 0.0);
  std::vector<int> y(100, 1);
  for (int i = 60; i < 100; ++i) y[i] = 2;
  auto d = Dataset::classification(1, x, y, 2);
  Tree t(d.task(), 1, Leaf{1, {}});
  EXPECT_EQ(objective(t, d, {}), 40.0);
}

TEST(Objective, ObliqueHandComputed) {
  // Root: 1*x0 - 2*x1 >= 0.5; left child: 0.5*x1 >= 0.25 -> leaves 1 / 2; right leaf 3.
  Tree t(Task::classification(3), 2, Leaf{1, {}});
  auto [l, r] = t.split(t.root(), ObliqueSplit{{1.0, -2.0}, 0.5}, Leaf{1, {}}, Leaf{3, {}});
  t.split(l, ObliqueSplit{{0.0, 0.5}, 0.25}, Leaf{1, {}}, Leaf{2, {}});
  std::vector<double> x = {0, 0, 0, 1, 1, 0, 2, 0.5, 0.1, 0.2, 3, 1, 0.6, 0, -1, 1, 0, 0.4, 1, 0.2};
  // Routes: (0,0) score 0 -> L, 0.5*0 < .25 -> 1; (0,1) -2 -> L, .5 >= .25 -> 2; (1,0) 1 -> R 3;
  // (2,.5) 1 -> R 3; (.1,.2) -.3 -> L, .1 -> 1; (3,1) 1 -> R 3; (.6,0) .6 -> R 3;
  // (-1,1) -3 -> L 2; (0,.4) -.8 -> L, .2 -> 1; (1,.2) .6 -> R 3.
  std::vector<int> y = {1, 1, 3, 2, 1, 3, 3, 2, 2, 1};
  auto d = Dataset::classification(2, x, y, 3);
  // Mistakes: row1 (2 vs 1), row3 (3 vs 2), row8 (1 vs 2), row9 (3 vs 1) -> 4.
  TaoParams p;
  p.lambda = 0.1;
  EXPECT_NEAR(objective(t, d, p), 4.0 + 0.1 * (3.0 + 0.5), 1e-12);
}

TEST(ReachingSet, RootAndEmptyChild) {
  auto d = Dataset::classification(1, {0, 0.1, 0.2}, {1, 1, 2}, 2);
  auto t = stump(d.task(), 1, AxisSplit{0, 5.0}, Leaf{1, {}}, Leaf{2, {}});
  EXPECT_EQ(reaching_set(t, t.root(), d), (std::vector<std::size_t>{0, 1, 2}));
  EXPECT_TRUE(reaching_set(t, t.node(t.root()).right, d).empty());
}

TEST(ReachingSet, QuadrantsByHand) {
  auto t = quadrant_tree();
  std::vector<double> x = {0.1, 0.1, 0.9, 0.9, 0.2, 0.7, 0.6, 0.3, 0.4, 0.4, 0.5, 0.5, 0.49, 0.51, 0.8, 0.1};
  auto d = Dataset::classification(2, x, std::vector<int>(8, 1), 4);
  const auto& root = t.node(t.root());
  const NodeId l = root.left, r = root.right;
  EXPECT_EQ(reaching_set(t, l, d), (std::vector<std::size_t>{0, 2, 4, 6}));
  EXPECT_EQ(reaching_set(t, r, d), (std::vector<std::size_t>{1, 3, 5, 7}));
  EXPECT_EQ(reaching_set(t, t.node(l).left, d), (std::vector<std::size_t>{0, 4}));
  EXPECT_EQ(reaching_set(t, t.node(l).right, d), (std::vector<std::size_t>{2, 6}));
  EXPECT_EQ(reaching_set(t, t.node(r).left, d), (std::vector<std::size_t>{3, 7}));
  EXPECT_EQ(reaching_set(t, t.node(r).right, d), (std::vector<std::size_t>{1, 5}));
  auto all = reaching_sets(t, d);
  EXPECT_EQ(all[static_cast<std::size_t>(l)], reaching_set(t, l, d));
}

TEST(BuildInternalReduced, SameLeavesGiveEmptyProblem) {
  auto d = Dataset::classification(1, {0, 1, 2}, {1, 2, 1}, 2);
  auto t = stump(d.task(), 1, AxisSplit{0, 1.5}, Leaf{1, {}}, Leaf{1, {}});
  EXPECT_TRUE(build_internal_reduced(t, t.root(), d, Loss::zero_one).samples.empty());
}

TEST(BuildInternalReduced, ZeroOnePseudoLabel) {
  auto d = Dataset::classification(1, {0.0}, {2}, 2);
  auto t = stump(d.task(), 1, AxisSplit{0, 0.5}, Leaf{1, {}}, Leaf{2, {}});
  auto p = build_internal_reduced(t, t.root(), d, Loss::zero_one);
  ASSERT_EQ(p.samples.size(), 1u);
  EXPECT_EQ(p.samples[0].pseudo_label, 1);
  EXPECT_EQ(p.samples[0].weight, 1.0);
}

TEST(BuildInternalReduced, SquaredErrorWeight) {
  auto d = Dataset::regression(1, {0.0}, {0.9}, 1);
  auto t = stump(d.task(), 1, AxisSplit{0, 0.5}, Leaf{0, {0.0}}, Leaf{0, {1.0}});
  auto p = build_internal_reduced(t, t.root(), d, Loss::squared_error);
  ASSERT_EQ(p.samples.size(), 1u);
  EXPECT_EQ(p.samples[0].pseudo_label, 1);
  EXPECT_NEAR(p.samples[0].weight, 0.8, 1e-12);
}

TEST(OptimizeLeaf, MajorityMeanAndDead) {
  auto d = Dataset::classification(1, {0, 1, 2}, {1, 1, 2}, 2);
  Tree t(d.task(), 1, Leaf{2, {}});
  auto u = optimize_leaf(t, t.root(), d, Loss::zero_one);
  EXPECT_EQ(u.leaf.label, 1);
  EXPECT_FALSE(u.dead);

  auto tie = Dataset::classification(1, {0, 1}, {2, 1}, 2);
  EXPECT_EQ(optimize_leaf(t, t.root(), tie, Loss::zero_one).leaf.label, 1);

  auto r = Dataset::regression(1, {0, 1, 2}, {0.0, 1.0, 2.0}, 1);
  Tree rt(r.task(), 1, Leaf{0, {5.0}});
  EXPECT_DOUBLE_EQ(optimize_leaf(rt, rt.root(), r, Loss::squared_error).leaf.value[0], 1.0);

  auto s = stump(d.task(), 1, AxisSplit{0, 10.0}, Leaf{1, {}}, Leaf{2, {}});
  auto dead = optimize_leaf(s, s.node(s.root()).right, d, Loss::zero_one);
  EXPECT_TRUE(dead.dead);
  EXPECT_EQ(dead.leaf.label, 2);
}

TEST(ReducedProblem, FaithfulOnDepthTwoTrees) {
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    EXPECT_EQ(oracles::reduced_problem_mismatches(seed, 12), 0u) << "seed " << seed;
  }
}

TEST(ReducedProblem, DontCareRowsDoNotMatter) {
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    auto d = synthetic(16, 2, 2, 50 + seed, [](auto, Rng& r) { return static_cast<int>(uniform_index(r, 2)) + 1; });
    auto t = quadrant_tree();
    Tree u(Task::classification(2), 2, Leaf{1, {}});
    auto nodes = t.nodes();
    for (auto& nd : nodes) {
      if (auto* lf = std::get_if<Leaf>(&nd.kind)) lf->label = (lf->label % 2) + 1;
    }
    t = Tree::from_parts(Task::classification(2), 2, nodes, t.root());
    const auto rows = reaching_set(t, t.root(), d);
    const auto p = build_internal_reduced(t, t.root(), d, Loss::zero_one);
    std::vector<char> care(d.size(), 0);
    for (const auto& s : p.samples) care[s.row] = 1;
    const auto& root = t.node(t.root());
    for (auto i : rows) {
      if (care[i]) continue;
      const double l = row_loss(d, i, std::get<Leaf>(t.node(t.descend(root.left, d.row(i))).kind), Loss::zero_one);
      const double r = row_loss(d, i, std::get<Leaf>(t.node(t.descend(root.right, d.row(i))).kind), Loss::zero_one);
      ASSERT_EQ(l, r);
    }
  }
}

TEST(Separability, SameDepthOrderIrrelevant) {
  auto d = synthetic(60, 2, 4, 12, [](auto x, Rng& r) {
    return static_cast<int>((x[0] > 0.4 ? 2 : 0) + (x[1] + 0.2 * uniform01(r) > 0.6 ? 1 : 0)) + 1;
  });
  auto t = quadrant_tree();
  const NodeId a = t.node(t.root()).left, b = t.node(t.root()).right;
  auto update = [&](Tree tree, NodeId id) {
    auto p = build_internal_reduced(tree, id, d, Loss::zero_one);
    if (!p.samples.empty()) tree.set_kind(id, best_axis_split(p.samples).split());
    return tree;
  };
  EXPECT_EQ(update(update(t, a), b), update(update(t, b), a));
}

TEST(TaoIteration, FixedPointIsIdempotent) {
  auto d = synthetic(80, 2, 2, 21, [](auto x, Rng& r) { return x[0] + x[1] + 0.3 * uniform01(r) > 1.1 ? 2 : 1; });
  for (auto mode : {TaoMode::axis, TaoMode::oblique}) {
    Tree init = mode == TaoMode::axis ? grow(d, CartParams{3, 1, 0}) : complete_tree(2, 2, d.task(), 5);
    TaoParams p;
    p.lambda = mode == TaoMode::oblique ? 0.01 : 0.0;
    p.tol = 0.0;
    Tree t = init;
    for (int it = 0; it < 60; ++it) {
      auto step = tao_iteration(t, d, p, mode);
      t = step.tree;
      if (step.changed == 0) break;
    }
    auto again = tao_iteration(t, d, p, mode);
    EXPECT_EQ(again.changed, 0u);
    EXPECT_EQ(again.tree, t);
    EXPECT_EQ(again.objective, objective(t, d, p));
  }
}

TEST(TaoIteration, AxisFromCartDoesNotIncrease) {
  auto d = synthetic(150, 3, 3, 31, [](auto x, Rng& r) { return x[0] + 0.5 * uniform01(r) > 0.8 ? 3 : (x[1] > 0.4 ? 2 : 1); });
  auto init = cart_fit(d, 5, PruneRule::one_se, {}, 1);
  auto step = tao_iteration(init, d, {}, TaoMode::axis);
  EXPECT_LE(step.objective, objective(init, d, {}));
}

TEST(TaoIteration, DepthOneObliqueMatchesDirectPipeline) {
  auto d = blobs(20, 3, 0.8);
  Tree init(d.task(), 2, Leaf{1, {}});
  init.split(init.root(), ObliqueSplit{{0.3, -0.7}, 0.2}, Leaf{1, {}}, Leaf{1, {}});
  TaoParams p;
  p.lambda = 0.05;
  auto step = tao_iteration(init, d, p, TaoMode::oblique);

  // Independent: majority vote in each leaf under the initial split, then
  // one weighted logistic fit at the root on the rows the new leaves disagree on.
  const auto& s0 = std::get<ObliqueSplit>(init.node(init.root()).kind);
  int count[2][3] = {};
  for (std::size_t i = 0; i < d.size(); ++i) {
    const bool right = dot(s0.weights, d.row(i)) >= s0.bias;
    ++count[right][d.label(i)];
  }
  const int left_label = count[0][2] > count[0][1] ? 2 : 1;
  const int right_label = count[1][2] > count[1][1] ? 2 : 1;
  std::vector<WeightedBinarySample> samples;
  for (std::size_t i = 0; i < d.size(); ++i) {
    const bool l_ok = d.label(i) == left_label, r_ok = d.label(i) == right_label;
    if (l_ok != r_ok) samples.push_back({d.row(i), r_ok ? 1 : -1, 1.0, i});
  }
  ASSERT_FALSE(samples.empty());
  HyperplaneSolution warm;
  warm.weights = s0.weights;
  warm.bias = -s0.bias;
  auto sol = l1_logistic(samples, p.lambda, &warm);
  auto cost = [&](const ObliqueSplit& s) {
    double c = weighted_error(samples, s);
    for (double w : s.weights) c += p.lambda * std::abs(w);
    return c;
  };
  const ObliqueSplit expected = cost(sol.split()) < cost(s0) ? sol.split() : s0;

  const auto& got = step.tree;
  EXPECT_EQ(std::get<ObliqueSplit>(got.node(got.root()).kind), expected);
  EXPECT_EQ(std::get<Leaf>(got.node(got.node(got.root()).left).kind).label, left_label);
  EXPECT_EQ(std::get<Leaf>(got.node(got.node(got.root()).right).kind).label, right_label);
}

TEST(TaoFit, SingleIterationTrace) {
  auto d = blobs(40, 1);
  TaoParams p;
  p.max_iters = 1;
  auto r = tao_fit(complete_tree(2, 2, d.task(), 1), d, p, TaoMode::oblique);
  EXPECT_EQ(r.trace.iterations.size(), 1u);
  auto a = tao_fit(grow(d, CartParams{2, 1, 0}), d, p, TaoMode::axis);
  EXPECT_EQ(a.trace.iterations.size(), 1u);
}

TEST(TaoFit, ModeMismatchThrows) {
  auto d = blobs(20, 1);
  EXPECT_THROW(tao_fit(complete_tree(2, 2, d.task(), 1), d, {}, TaoMode::axis), TrainingError);
  EXPECT_THROW(tao_fit(grow(d), d, {}, TaoMode::oblique), TrainingError);
}

TEST(TaoFit, ObliqueBlobsAbove95) {
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    auto d = blobs(40, 100 + seed);
    auto r = tao_fit(complete_tree(2, 2, d.task(), seed), d, {}, TaoMode::oblique);
    EXPECT_GE(evaluate(r.tree, d), 0.95) << "seed " << seed;
  }
}

TEST(TaoFit, MonotoneTraceAndNoDeadBranches) {
  for (std::uint64_t seed = 0; seed < 6; ++seed) {
    auto d = synthetic(120, 3, 3, 200 + seed, [](auto x, Rng& r) {
      return x[0] + x[2] + 0.4 * uniform01(r) > 1.2 ? 3 : (x[1] > 0.5 ? 2 : 1);
    });
    for (auto mode : {TaoMode::axis, TaoMode::oblique}) {
      Tree init = mode == TaoMode::axis ? cart_fit(d, 5, PruneRule::one_se, {}, seed) : complete_tree(4, 3, d.task(), seed);
      TaoParams p;
      p.lambda = mode == TaoMode::oblique ? 0.01 : 0.0;
      auto r = tao_fit(init, d, p, mode);
      double prev = r.trace.initial.objective;
      for (const auto& e : r.trace.iterations) {
        ASSERT_LE(e.objective, prev + 1e-9);
        ASSERT_NEAR(e.objective, e.train_loss + p.lambda * e.penalty, 1e-9);
        prev = e.objective;
      }
      const auto count = reach_counts(r.tree, d);
      for (NodeId id : r.tree.preorder()) ASSERT_GT(count[static_cast<std::size_t>(id)], 0u);
      EXPECT_LE(total_loss(r.tree, d, Loss::zero_one), r.trace.initial.train_loss);
    }
  }
}

TEST(TaoFit, RegressionAxisAndOblique) {
  Rng rng(4);
  std::vector<double> x, y;
  for (int i = 0; i < 100; ++i) {
    const double a = uniform01(rng), b = uniform01(rng);
    x.push_back(a);
    x.push_back(b);
    y.push_back((a + b > 1 ? 2.0 : 0.0) + 0.1 * uniform01(rng));
  }
  auto d = Dataset::regression(2, x, y, 1);
  auto cart = cart_fit(d, 5, PruneRule::one_se, {}, 1);
  auto ax = tao_fit(cart, d, {}, TaoMode::axis);
  EXPECT_LE(total_loss(ax.tree, d, Loss::squared_error), total_loss(cart, d, Loss::squared_error) + 1e-9);
  auto ob = tao_fit(complete_tree(2, 2, d.task(), 3), d, {}, TaoMode::oblique);
  EXPECT_LT(evaluate(ob.tree, d), 0.3);
}
