#pragma once

// Solvers for the weighted binary classification problem posed at an internal
// node: exact search over axis-aligned splits, and an l1-regularized logistic
// surrogate for oblique splits.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <limits>
#include <numeric>
#include <span>
#include <stdexcept>
#include <tuple>
#include <utility>
#include <vector>

#include "dtree/tree.hpp"

namespace dtree {

/// One instance of a node's reduced problem. pseudo_label +1 means the
/// instance should go right, -1 left; weight is the loss saved by doing so.
struct WeightedBinarySample {
  std::span<const double> x;
  int pseudo_label = 1;
  double weight = 1.0;
  std::size_t row = 0;  // source row in the dataset
};

/// Weighted count of samples routed against their pseudo-label.
inline double weighted_error(std::span<const WeightedBinarySample> samples, const NodeKind& split) {
  double e = 0.0;
  for (const auto& s : samples) {
    if (goes_right(split, s.x) != (s.pseudo_label > 0)) e += s.weight;
  }
  return e;
}

struct AxisSplitResult {
  std::size_t feature = 0;
  double threshold = 0.0;  // +-inf sends every sample one way
  double weighted_error = 0.0;

  AxisSplit split() const { return {feature, threshold}; }
};

/// Exact minimizer of the weighted routing error over all features and all
/// thresholds (midpoints of consecutive distinct values, plus -inf = all right
/// and +inf = all left). Ties keep the lowest feature, then lowest threshold.
inline AxisSplitResult best_axis_split(std::span<const WeightedBinarySample> samples) {
  if (samples.empty()) throw std::invalid_argument("best_axis_split(): no samples");
  const std::size_t dim = samples.front().x.size();
  double pos_total = 0.0;
  double neg_total = 0.0;
  for (const auto& s : samples) (s.pseudo_label > 0 ? pos_total : neg_total) += s.weight;
  const double eps = 1e-12 * (pos_total + neg_total);

  constexpr double inf = std::numeric_limits<double>::infinity();
  AxisSplitResult best{0, -inf, neg_total};
  std::vector<std::size_t> order(samples.size());
  for (std::size_t j = 0; j < dim; ++j) {
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return samples[a].x[j] < samples[b].x[j]; });
    // Left = samples with x[j] < threshold.
    double pos_left = 0.0;
    double neg_left = 0.0;
    for (std::size_t i = 0; i < order.size(); ++i) {
      const auto& s = samples[order[i]];
      (s.pseudo_label > 0 ? pos_left : neg_left) += s.weight;
      if (i + 1 == order.size()) break;
      const double v = s.x[j];
      const double next = samples[order[i + 1]].x[j];
      if (next == v) continue;
      const double err = pos_left + (neg_total - neg_left);
      if (err < best.weighted_error - eps) {
        double t = v + (next - v) / 2.0;
        if (!(t > v)) t = next;
        best = {j, t, err};
      }
    }
    if (j == 0 && pos_total < best.weighted_error - eps) best = {0, inf, pos_total};
  }
  return best;
}

struct HyperplaneSolution {
  std::vector<double> weights;
  double bias = 0.0;            // intercept of the score w.x + bias
  double surrogate_loss = 0.0;  // weighted logistic loss, penalty excluded
  std::size_t nonzeros = 0;
  std::size_t sweeps = 0;
  std::vector<double> trace;    // full objective after each sweep, when requested

  /// Equivalent routing split: right iff w.x + bias >= 0, i.e. w.x >= -bias.
  ObliqueSplit split() const { return {weights, -bias}; }
};

struct L1LogisticOptions {
  double tol = 1e-6;              // stop when no coordinate moves more than this in a sweep
  std::size_t max_sweeps = 1000;
  bool record_trace = false;
};

namespace detail {

// log(1 + exp(-t)) without overflow.
inline double log1p_exp_neg(double t) {
  return t > 0 ? std::log1p(std::exp(-t)) : -t + std::log1p(std::exp(t));
}

// 1 / (1 + exp(-t)).
inline double sigmoid(double t) {
  if (t >= 0) return 1.0 / (1.0 + std::exp(-t));
  const double e = std::exp(t);
  return e / (1.0 + e);
}

// Both of the above from a single exp: (log(1 + exp(-m)), 1 / (1 + exp(m))).
inline std::pair<double, double> loss_and_wrong_prob(double m) {
  const double e = std::exp(-std::abs(m));
  const double l = (m > 0 ? 0.0 : -m) + std::log1p(e);
  return {l, m >= 0 ? e / (1.0 + e) : 1.0 / (1.0 + e)};
}

}  // namespace detail

/// Weighted l1-regularized logistic regression,
///   min_{w,b}  sum_n c_n log(1 + exp(-y_n (w.x_n + b))) + lambda ||w||_1,
/// with the intercept unpenalized. Cyclic coordinate descent: each coordinate
/// takes the proximal Newton step of its one-dimensional problem followed by
/// a backtracking line search with sufficient decrease, so the objective never
/// increases. Deterministic given inputs and warm start.
inline HyperplaneSolution l1_logistic(std::span<const WeightedBinarySample> samples, double lambda,
                                      const HyperplaneSolution* warm_start = nullptr,
                                      const L1LogisticOptions& options = {}) {
  if (samples.empty()) throw std::invalid_argument("l1_logistic(): no samples");
  if (!(lambda >= 0.0)) throw std::invalid_argument("l1_logistic(): lambda must be non-negative");
  const std::size_t n = samples.size();
  const std::size_t dim = samples.front().x.size();

  // Column-major copy; column `dim` is the constant intercept feature.
  std::vector<double> cols((dim + 1) * n);
  std::vector<double> y(n);
  std::vector<double> c(n);
  for (std::size_t i = 0; i < n; ++i) {
    const auto& s = samples[i];
    if (s.x.size() != dim) throw std::invalid_argument("l1_logistic(): inconsistent sample dimension");
    for (std::size_t j = 0; j < dim; ++j) {
      if (!std::isfinite(s.x[j])) throw std::invalid_argument("l1_logistic(): non-finite feature value");
      cols[j * n + i] = s.x[j];
    }
    cols[dim * n + i] = 1.0;
    y[i] = s.pseudo_label > 0 ? 1.0 : -1.0;
    c[i] = s.weight;
  }

  // Descent runs on standardized columns z = (x - mu) / sd. With v_j = sd_j w_j
  // and the mean folded into the intercept this is the same objective, with
  // penalty lambda / sd_j on v_j, but far better conditioned when features are
  // uncentered or of mixed scale.
  std::vector<double> mu(dim, 0.0), sd(dim, 1.0);
  for (std::size_t j = 0; j < dim; ++j) {
    double* col = &cols[j * n];
    double m = 0.0;
    for (std::size_t i = 0; i < n; ++i) m += col[i];
    m /= static_cast<double>(n);
    double ss = 0.0;
    for (std::size_t i = 0; i < n; ++i) ss += (col[i] - m) * (col[i] - m);
    const double v = std::sqrt(ss / static_cast<double>(n));
    mu[j] = m;
    sd[j] = v > 0.0 ? v : 1.0;
    for (std::size_t i = 0; i < n; ++i) col[i] = v > 0.0 ? (col[i] - m) / v : 0.0;
  }

  std::vector<double> w(dim + 1, 0.0);  // standardized weights; w[dim] is the intercept
  if (warm_start != nullptr) {
    if (warm_start->weights.size() != dim) throw std::invalid_argument("l1_logistic(): warm start has wrong dimension");
    w[dim] = warm_start->bias;
    for (std::size_t j = 0; j < dim; ++j) {
      w[j] = warm_start->weights[j] * sd[j];
      w[dim] += warm_start->weights[j] * mu[j];
    }
  }
  std::vector<double> reg_of(dim + 1, 0.0);
  for (std::size_t j = 0; j < dim; ++j) reg_of[j] = lambda / sd[j];

  std::vector<double> margin(n, 0.0);  // y_n * (w.x_n + b)
  for (std::size_t j = 0; j <= dim; ++j) {
    if (w[j] == 0.0) continue;
    const double* col = &cols[j * n];
    for (std::size_t i = 0; i < n; ++i) margin[i] += y[i] * w[j] * col[i];
  }
  // Per-row loss terms and wrong-side probabilities, kept in step with margin.
  std::vector<double> lt(n), pw(n);
  for (std::size_t i = 0; i < n; ++i) std::tie(lt[i], pw[i]) = detail::loss_and_wrong_prob(margin[i]);
  auto sum_loss = [&] {
    double s = 0.0;
    for (std::size_t i = 0; i < n; ++i) s += c[i] * lt[i];
    return s;
  };
  double loss = sum_loss();
  auto penalty = [&] {
    double s = 0.0;
    for (std::size_t j = 0; j < dim; ++j) s += reg_of[j] * std::abs(w[j]);
    return s;
  };

  // Rows touched by the current coordinate and their trial state.
  std::vector<std::size_t> nz;
  std::vector<double> t_margin(n), t_lt(n), t_pw(n);
  constexpr double armijo = 0.01;
  constexpr int max_backtracks = 30;
  HyperplaneSolution out;
  for (std::size_t sweep = 0; sweep < options.max_sweeps; ++sweep) {
    double max_change = 0.0;
    for (std::size_t j = 0; j <= dim; ++j) {
      const double* col = &cols[j * n];
      const double reg = reg_of[j];
      const double unit = j == dim ? 1.0 : sd[j];  // changes are measured in original units
      nz.clear();
      double g = 0.0;
      double h = 0.0;
      for (std::size_t i = 0; i < n; ++i) {
        if (col[i] == 0.0) continue;
        nz.push_back(i);
        const double p = pw[i];
        g -= c[i] * y[i] * col[i] * p;
        h += c[i] * col[i] * col[i] * p * (1.0 - p);
      }
      if (nz.empty()) {
        // Constant column: its weight only adds penalty.
        if (reg > 0.0 && w[j] != 0.0) {
          max_change = std::max(max_change, std::abs(w[j]) / unit);
          w[j] = 0.0;
        }
        continue;
      }
      h = std::max(h, 1e-12);
      double d;
      if (g + reg <= h * w[j]) {
        d = -(g + reg) / h;
      } else if (g - reg >= h * w[j]) {
        d = -(g - reg) / h;
      } else {
        d = -w[j];
      }
      if (std::abs(d) < 1e-15) continue;

      const double predicted = g * d + reg * (std::abs(w[j] + d) - std::abs(w[j]));
      double step = 1.0;
      for (int t = 0; t < max_backtracks; ++t, step *= 0.5) {
        const double delta = step * d;
        double diff = 0.0;
        for (std::size_t i : nz) {
          t_margin[i] = margin[i] + y[i] * delta * col[i];
          std::tie(t_lt[i], t_pw[i]) = detail::loss_and_wrong_prob(t_margin[i]);
          diff += c[i] * (t_lt[i] - lt[i]);
        }
        const double change = diff + reg * (std::abs(w[j] + delta) - std::abs(w[j]));
        if (change <= armijo * step * predicted) {
          for (std::size_t i : nz) {
            margin[i] = t_margin[i];
            lt[i] = t_lt[i];
            pw[i] = t_pw[i];
          }
          w[j] += delta;
          loss += diff;
          max_change = std::max(max_change, std::abs(delta) / unit);
          break;
        }
      }
    }
    loss = sum_loss();  // resum once per sweep so rounding does not accumulate
    out.sweeps = sweep + 1;
    if (options.record_trace) out.trace.push_back(loss + penalty());
    if (max_change < options.tol) break;
  }

  out.weights.assign(dim, 0.0);
  out.bias = w[dim];
  for (std::size_t j = 0; j < dim; ++j) {
    out.weights[j] = w[j] / sd[j];
    out.bias -= out.weights[j] * mu[j];
  }
  out.surrogate_loss = loss;
  out.nonzeros = static_cast<std::size_t>(std::count_if(out.weights.begin(), out.weights.end(), [](double v) { return v != 0.0; }));
  return out;
}

/// Objective of l1_logistic at a given (w, b).
inline double l1_logistic_objective(std::span<const WeightedBinarySample> samples, std::span<const double> weights,
                                    double bias, double lambda) {
  double s = 0.0;
  for (const auto& smp : samples) {
    const double yv = smp.pseudo_label > 0 ? 1.0 : -1.0;
    s += smp.weight * detail::log1p_exp_neg(yv * (dot(weights, smp.x) + bias));
  }
  for (double v : weights) s += lambda * std::abs(v);
  return s;
}

}  // namespace dtree
