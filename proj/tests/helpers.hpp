#pragma once

#include <cmath>
#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "dtree/dataset.hpp"
#include "dtree/random.hpp"

namespace testing_helpers {

using dtree::Dataset;

inline std::string data_path(const std::string& name) { return std::string(DTREE_DATA_DIR) + "/" + name; }
inline std::string fixture_path(const std::string& name) { return std::string(DTREE_FIXTURE_DIR) + "/" + name; }
inline bool have_data(const std::string& name) { return std::filesystem::exists(data_path(name)); }

// Two-class XOR: the four corners of the unit square, each twice (8 rows).
inline Dataset xor8() {
  std::vector<double> x = {0, 0, 0, 0, 0, 1, 0, 1, 1, 0, 1, 0, 1, 1, 1, 1};
  std::vector<int> y = {1, 1, 2, 2, 2, 2, 1, 1};
  return Dataset::classification(2, x, y, 2);
}

// Uniform features on [0,1]^dim with labels from `label_of`.
template <typename F>
Dataset synthetic(std::size_t n, std::size_t dim, std::size_t classes, std::uint64_t seed, F label_of) {
  dtree::Rng rng(seed);
  std::vector<double> x(n * dim);
  std::vector<int> y(n);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < dim; ++j) x[i * dim + j] = dtree::uniform01(rng);
    y[i] = label_of(std::span<const double>(&x[i * dim], dim), rng);
  }
  return Dataset::classification(dim, std::move(x), std::move(y), classes);
}

// Two Gaussian blobs centered at (-1,-1) and (1,1), unit-ish spread.
inline Dataset blobs(std::size_t n, std::uint64_t seed, double spread = 0.4) {
  dtree::Rng rng(seed);
  std::vector<double> x;
  std::vector<int> y;
  for (std::size_t i = 0; i < n; ++i) {
    const int c = static_cast<int>(i % 2);
    for (int j = 0; j < 2; ++j) {
      // Box-Muller from the project RNG.
      const double u1 = std::max(dtree::uniform01(rng), 1e-300);
      const double u2 = dtree::uniform01(rng);
      const double z = std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * M_PI * u2);
      x.push_back((c == 0 ? -1.0 : 1.0) + spread * z);
    }
    y.push_back(c + 1);
  }
  return Dataset::classification(2, std::move(x), std::move(y), 2);
}

}  // namespace testing_helpers
