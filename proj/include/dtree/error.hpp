#pragma once

#include <stdexcept>
#include <string>

namespace dtree {

/// Malformed or inconsistent input data (CSV/LIBSVM cells, dataset invariants).
struct DataError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

/// Malformed model file or unsupported model version.
struct ModelError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

/// Malformed experiment configuration.
struct ConfigError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

/// A fit that could not be carried out (bad init/mode combination, failed grid point).
struct TrainingError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

}  // namespace dtree
