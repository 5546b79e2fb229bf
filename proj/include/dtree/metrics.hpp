#pragma once

#include <cmath>
#include <cstddef>
#include <span>
#include <stdexcept>
#include <vector>

#include "dtree/dataset.hpp"
#include "dtree/tree.hpp"

namespace dtree {

/// The per-instance loss L of the tree objective.
enum class Loss { zero_one, squared_error };

inline Loss default_loss(const Task& task) {
  return task.is_classification() ? Loss::zero_one : Loss::squared_error;
}

/// Loss of predicting `leaf` for row i of `data`.
inline double row_loss(const Dataset& data, std::size_t i, const Leaf& leaf, Loss loss) {
  if (loss == Loss::zero_one) {
    if (data.task().is_classification()) return data.label(i) == leaf.label ? 0.0 : 1.0;
    auto y = data.target(i);
    for (std::size_t k = 0; k < y.size(); ++k) {
      if (y[k] != leaf.value[k]) return 1.0;
    }
    return 0.0;
  }
  if (data.task().is_classification()) throw std::invalid_argument("squared error needs a regression task");
  auto y = data.target(i);
  double s = 0.0;
  for (std::size_t k = 0; k < y.size(); ++k) {
    const double e = y[k] - leaf.value[k];
    s += e * e;
  }
  return s;
}

/// Total loss of `tree` over all rows of `data`.
inline double total_loss(const Tree& tree, const Dataset& data, Loss loss) {
  double s = 0.0;
  for (std::size_t i = 0; i < data.size(); ++i) s += row_loss(data, i, tree.predict_leaf(data.row(i)), loss);
  return s;
}

/// Fraction of exact matches.
inline double accuracy(std::span<const int> predictions, std::span<const int> labels) {
  if (predictions.size() != labels.size()) throw std::invalid_argument("accuracy(): length mismatch");
  if (predictions.empty()) throw std::invalid_argument("accuracy(): empty input");
  std::size_t hits = 0;
  for (std::size_t i = 0; i < labels.size(); ++i) hits += predictions[i] == labels[i] ? 1 : 0;
  return static_cast<double>(hits) / static_cast<double>(labels.size());
}

/// sqrt(1/(N K) * sum_n ||y_n - yhat_n||^2) over row-major N x K arrays.
inline double rmse(std::span<const double> predictions, std::span<const double> targets, std::size_t k) {
  if (predictions.size() != targets.size()) throw std::invalid_argument("rmse(): length mismatch");
  if (k == 0 || targets.size() % k != 0) throw std::invalid_argument("rmse(): size is not a multiple of K");
  if (targets.empty()) throw std::invalid_argument("rmse(): empty input");
  double s = 0.0;
  for (std::size_t i = 0; i < targets.size(); ++i) {
    const double e = targets[i] - predictions[i];
    s += e * e;
  }
  return std::sqrt(s / static_cast<double>(targets.size()));
}

inline std::vector<int> predict_labels(const Tree& tree, const Dataset& data) {
  std::vector<int> out;
  out.reserve(data.size());
  for (std::size_t i = 0; i < data.size(); ++i) out.push_back(tree.predict_leaf(data.row(i)).label);
  return out;
}

inline std::vector<double> predict_values(const Tree& tree, const Dataset& data) {
  std::vector<double> out;
  out.reserve(data.size() * data.task().outputs);
  for (std::size_t i = 0; i < data.size(); ++i) {
    const auto& v = tree.predict_leaf(data.row(i)).value;
    out.insert(out.end(), v.begin(), v.end());
  }
  return out;
}

/// Accuracy for classification, RMSE for regression.
inline double evaluate(const Tree& tree, const Dataset& data) {
  if (data.task().is_classification()) return accuracy(predict_labels(tree, data), data.labels());
  return rmse(predict_values(tree, data), data.targets(), data.task().outputs);
}

}  // namespace dtree
