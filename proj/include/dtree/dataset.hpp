#pragma once

// Tabular datasets: dense row-major features plus class labels (1..K) or
// real-valued targets, with CSV/LIBSVM ingestion, splitting and folding.

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstddef>
#include <fstream>
#include <istream>
#include <map>
#include <numeric>
#include <optional>
#include <ostream>
#include <span>
#include <sstream>
#include <string>
#include <string_view>
#include <utility>
#include <variant>
#include <vector>

#include "dtree/error.hpp"
#include "dtree/random.hpp"

namespace dtree {

enum class TaskKind { classification, regression };

struct Task {
  TaskKind kind = TaskKind::classification;
  std::size_t outputs = 1;  // number of classes, or regression output dimension

  static Task classification(std::size_t classes) { return {TaskKind::classification, classes}; }
  static Task regression(std::size_t outputs = 1) { return {TaskKind::regression, outputs}; }

  bool is_classification() const { return kind == TaskKind::classification; }
  bool operator==(const Task&) const = default;
};

inline std::string to_string(TaskKind kind) {
  return kind == TaskKind::classification ? "classification" : "regression";
}

inline TaskKind parse_task_kind(std::string_view s) {
  if (s == "classification") return TaskKind::classification;
  if (s == "regression") return TaskKind::regression;
  throw DataError("unknown task kind '" + std::string(s) + "'");
}

/// One column of the source table. Categorical columns carry their levels in
/// first-appearance order and expand to one indicator feature per level.
struct SourceColumn {
  std::string name;
  std::vector<std::string> levels;

  bool categorical() const { return !levels.empty(); }
};

/// How raw table columns map to features and labels; stored with models so
/// that new files are encoded exactly like the training file.
struct Schema {
  std::vector<SourceColumn> columns;     // feature columns, in source order
  std::string target;
  std::vector<std::string> class_names;  // class index k maps to class_names[k-1]
};

class Dataset {
 public:
  Dataset() = default;

  /// Classification dataset. `classes` = 0 means K = max label.
  static Dataset classification(std::size_t dim, std::vector<double> features,
                                std::vector<int> labels, std::size_t classes = 0) {
    std::size_t k = classes;
    if (k == 0) {
      for (int y : labels) k = std::max<std::size_t>(k, y > 0 ? static_cast<std::size_t>(y) : 0);
    }
    Dataset d;
    d.task_ = Task::classification(k);
    d.dim_ = dim;
    d.features_ = std::move(features);
    d.labels_ = std::move(labels);
    d.validate();
    return d;
  }

  static Dataset regression(std::size_t dim, std::vector<double> features,
                            std::vector<double> targets, std::size_t outputs = 1) {
    Dataset d;
    d.task_ = Task::regression(outputs);
    d.dim_ = dim;
    d.features_ = std::move(features);
    d.targets_ = std::move(targets);
    d.validate();
    return d;
  }

  std::size_t size() const { return dim_ == 0 ? 0 : features_.size() / dim_; }
  std::size_t dim() const { return dim_; }
  const Task& task() const { return task_; }
  std::size_t classes() const { return task_.outputs; }

  std::span<const double> row(std::size_t i) const { return {features_.data() + i * dim_, dim_}; }
  int label(std::size_t i) const { return labels_[i]; }
  std::span<const double> target(std::size_t i) const {
    return {targets_.data() + i * task_.outputs, task_.outputs};
  }

  const std::vector<double>& features() const { return features_; }
  const std::vector<int>& labels() const { return labels_; }
  const std::vector<double>& targets() const { return targets_; }

  const Schema& schema() const { return schema_; }
  void set_schema(Schema schema) { schema_ = std::move(schema); }

  /// Feature names derived from the schema; x0..x{D-1} when there is none.
  std::vector<std::string> feature_names() const {
    std::vector<std::string> names;
    for (const auto& c : schema_.columns) {
      if (c.categorical()) {
        for (const auto& level : c.levels) names.push_back(c.name + "=" + level);
      } else {
        names.push_back(c.name);
      }
    }
    if (names.size() != dim_) {
      names.clear();
      for (std::size_t j = 0; j < dim_; ++j) names.push_back("x" + std::to_string(j));
    }
    return names;
  }

  Dataset subset(std::span<const std::size_t> rows) const {
    Dataset d;
    d.task_ = task_;
    d.dim_ = dim_;
    d.schema_ = schema_;
    d.features_.reserve(rows.size() * dim_);
    for (std::size_t i : rows) {
      auto r = row(i);
      d.features_.insert(d.features_.end(), r.begin(), r.end());
      if (task_.is_classification()) {
        d.labels_.push_back(labels_[i]);
      } else {
        auto t = target(i);
        d.targets_.insert(d.targets_.end(), t.begin(), t.end());
      }
    }
    return d;
  }

  /// Same targets and schema, replaced feature matrix of identical shape.
  Dataset with_features(std::vector<double> features) const {
    if (features.size() != features_.size()) throw DataError("feature matrix shape mismatch");
    Dataset d = *this;
    d.features_ = std::move(features);
    return d;
  }

 private:
  void validate() const {
    if (dim_ == 0) throw DataError("dataset must have at least one feature");
    if (features_.size() % dim_ != 0) throw DataError("feature matrix is not N x D");
    const std::size_t n = features_.size() / dim_;
    if (n == 0) throw DataError("dataset must have at least one row");
    if (task_.is_classification()) {
      if (labels_.size() != n) throw DataError("label count does not match row count");
      for (int y : labels_) {
        if (y < 1 || static_cast<std::size_t>(y) > task_.outputs) {
          throw DataError("class label " + std::to_string(y) + " outside 1.." +
                          std::to_string(task_.outputs));
        }
      }
    } else {
      if (task_.outputs == 0) throw DataError("regression output dimension must be positive");
      if (targets_.size() != n * task_.outputs) {
        throw DataError("target count does not match row count");
      }
    }
  }

  Task task_{};
  std::size_t dim_ = 0;
  std::vector<double> features_;
  std::vector<int> labels_;
  std::vector<double> targets_;
  Schema schema_;
};

// ---------------------------------------------------------------------------
// CSV

struct CsvTable {
  std::vector<std::string> header;
  std::vector<std::vector<std::string>> rows;
};

namespace detail {

inline std::string_view trim(std::string_view s) {
  while (!s.empty() && (s.front() == ' ' || s.front() == '\t')) s.remove_prefix(1);
  while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r')) s.remove_suffix(1);
  return s;
}

inline std::optional<double> parse_double(std::string_view s) {
  s = trim(s);
  if (s.empty()) return std::nullopt;
  if (s.front() == '+') s.remove_prefix(1);
  double v = 0.0;
  auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc{} || ptr != s.data() + s.size() || !std::isfinite(v)) return std::nullopt;
  return v;
}

inline std::optional<long> parse_long(std::string_view s) {
  s = trim(s);
  if (!s.empty() && s.front() == '+') s.remove_prefix(1);
  long v = 0;
  auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (s.empty() || ec != std::errc{} || ptr != s.data() + s.size()) return std::nullopt;
  return v;
}

/// Splits one CSV record. Double-quoted fields may contain commas; "" is an
/// escaped quote. Embedded newlines are not supported.
inline std::vector<std::string> split_csv_line(std::string_view line, std::size_t line_no) {
  std::vector<std::string> fields;
  std::string cur;
  bool quoted = false;
  bool was_quoted = false;
  for (std::size_t i = 0; i < line.size(); ++i) {
    const char c = line[i];
    if (quoted) {
      if (c == '"') {
        if (i + 1 < line.size() && line[i + 1] == '"') {
          cur += '"';
          ++i;
        } else {
          quoted = false;
        }
      } else {
        cur += c;
      }
    } else if (c == '"' && trim(cur).empty()) {
      cur.clear();
      quoted = true;
      was_quoted = true;
    } else if (c == ',') {
      fields.push_back(was_quoted ? cur : std::string(trim(cur)));
      cur.clear();
      was_quoted = false;
    } else {
      cur += c;
    }
  }
  if (quoted) throw DataError("line " + std::to_string(line_no) + ": unterminated quoted field");
  fields.push_back(was_quoted ? cur : std::string(trim(cur)));
  return fields;
}

inline std::ifstream open_input(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open '" + path + "'");
  return in;
}

}  // namespace detail

inline CsvTable read_csv(std::istream& in) {
  CsvTable table;
  std::string line;
  std::size_t line_no = 0;
  bool have_header = false;
  while (std::getline(in, line)) {
    ++line_no;
    if (detail::trim(line).empty()) continue;
    if (line_no == 1 && line.starts_with("\xEF\xBB\xBF")) line.erase(0, 3);
    auto fields = detail::split_csv_line(line, line_no);
    if (!have_header) {
      table.header = std::move(fields);
      have_header = true;
      continue;
    }
    if (fields.size() != table.header.size()) {
      throw DataError("row " + std::to_string(line_no) + ": expected " +
                      std::to_string(table.header.size()) + " cells, found " +
                      std::to_string(fields.size()));
    }
    table.rows.push_back(std::move(fields));
  }
  if (!have_header) throw DataError("empty CSV input");
  return table;
}

inline CsvTable read_csv_file(const std::string& path) {
  auto in = detail::open_input(path);
  return read_csv(in);
}

/// Target column given by header name or by 0-based position.
using ColumnRef = std::variant<std::string, std::size_t>;

inline std::size_t resolve_column(const CsvTable& table, const ColumnRef& ref) {
  if (const auto* index = std::get_if<std::size_t>(&ref)) {
    if (*index >= table.header.size()) {
      throw DataError("target column index " + std::to_string(*index) + " out of range");
    }
    return *index;
  }
  const auto& name = std::get<std::string>(ref);
  auto it = std::find(table.header.begin(), table.header.end(), name);
  if (it == table.header.end()) throw DataError("target column '" + name + "' not found");
  return static_cast<std::size_t>(it - table.header.begin());
}

namespace detail {

/// Encodes the feature columns named by `schema` from `table`. Categorical
/// values must be among the schema's levels.
inline std::vector<double> encode_features(const CsvTable& table, const Schema& schema) {
  std::vector<std::size_t> source;
  for (const auto& col : schema.columns) {
    auto it = std::find(table.header.begin(), table.header.end(), col.name);
    if (it == table.header.end()) throw DataError("feature column '" + col.name + "' not found");
    source.push_back(static_cast<std::size_t>(it - table.header.begin()));
  }
  std::vector<double> features;
  for (std::size_t r = 0; r < table.rows.size(); ++r) {
    const auto& cells = table.rows[r];
    for (std::size_t c = 0; c < schema.columns.size(); ++c) {
      const auto& col = schema.columns[c];
      const auto& cell = cells[source[c]];
      if (col.categorical()) {
        auto it = std::find(col.levels.begin(), col.levels.end(), cell);
        if (it == col.levels.end()) {
          throw DataError("row " + std::to_string(r + 2) + ", column '" + col.name +
                          "': unknown category '" + cell + "'");
        }
        for (std::size_t l = 0; l < col.levels.size(); ++l) {
          features.push_back(col.levels.begin() + static_cast<std::ptrdiff_t>(l) == it ? 1.0 : 0.0);
        }
      } else {
        auto v = parse_double(cell);
        if (!v) {
          throw DataError("row " + std::to_string(r + 2) + ", column '" + col.name +
                          "': cannot parse '" + cell + "' as a number");
        }
        features.push_back(*v);
      }
    }
  }
  return features;
}

inline std::size_t schema_dim(const Schema& schema) {
  std::size_t d = 0;
  for (const auto& c : schema.columns) d += c.categorical() ? c.levels.size() : 1;
  return d;
}

}  // namespace detail

/// Feature matrix of `table` encoded with an existing schema (used for
/// prediction on files that may lack the target column).
inline std::vector<double> encode_features(const CsvTable& table, const Schema& schema) {
  return detail::encode_features(table, schema);
}

/// Builds a dataset from a parsed table. Columns listed in `categorical` are
/// one-hot encoded with levels in first-appearance order; class labels map to
/// 1..K in first-appearance order. When `reuse` is given its feature layout and
/// class names are used instead, so a test file encodes like its training file.
inline Dataset dataset_from_table(const CsvTable& table, const ColumnRef& target, TaskKind kind,
                                  const std::vector<std::string>& categorical = {},
                                  const Schema* reuse = nullptr) {
  const std::size_t target_col = resolve_column(table, target);
  if (table.rows.empty()) throw DataError("CSV has a header but no data rows");
  for (const auto& name : categorical) {
    if (std::find(table.header.begin(), table.header.end(), name) == table.header.end()) {
      throw DataError("categorical column '" + name + "' not found");
    }
  }

  Schema schema;
  if (reuse != nullptr) {
    schema = *reuse;
  } else {
    for (std::size_t c = 0; c < table.header.size(); ++c) {
      if (c == target_col) continue;
      SourceColumn col{table.header[c], {}};
      if (std::find(categorical.begin(), categorical.end(), col.name) != categorical.end()) {
        for (const auto& row : table.rows) {
          if (std::find(col.levels.begin(), col.levels.end(), row[c]) == col.levels.end()) {
            col.levels.push_back(row[c]);
          }
        }
      }
      schema.columns.push_back(std::move(col));
    }
  }
  schema.target = table.header[target_col];
  if (schema.columns.empty()) throw DataError("no feature columns");

  auto features = detail::encode_features(table, schema);
  const std::size_t dim = detail::schema_dim(schema);

  Dataset data;
  if (kind == TaskKind::classification) {
    if (reuse == nullptr) schema.class_names.clear();
    std::vector<int> labels;
    labels.reserve(table.rows.size());
    for (std::size_t r = 0; r < table.rows.size(); ++r) {
      const auto& cell = table.rows[r][target_col];
      auto it = std::find(schema.class_names.begin(), schema.class_names.end(), cell);
      if (it == schema.class_names.end()) {
        if (reuse != nullptr) {
          throw DataError("row " + std::to_string(r + 2) + ": unknown class '" + cell + "'");
        }
        schema.class_names.push_back(cell);
        it = schema.class_names.end() - 1;
      }
      labels.push_back(static_cast<int>(it - schema.class_names.begin()) + 1);
    }
    data = Dataset::classification(dim, std::move(features), std::move(labels),
                                   schema.class_names.size());
  } else {
    schema.class_names.clear();
    std::vector<double> targets;
    targets.reserve(table.rows.size());
    for (std::size_t r = 0; r < table.rows.size(); ++r) {
      auto v = detail::parse_double(table.rows[r][target_col]);
      if (!v) {
        throw DataError("row " + std::to_string(r + 2) + ", column '" + schema.target +
                        "': cannot parse '" + table.rows[r][target_col] + "' as a number");
      }
      targets.push_back(*v);
    }
    data = Dataset::regression(dim, std::move(features), std::move(targets), 1);
  }
  data.set_schema(std::move(schema));
  return data;
}

inline Dataset load_csv(const std::string& path, const ColumnRef& target, TaskKind kind,
                        const std::vector<std::string>& categorical = {},
                        const Schema* reuse = nullptr) {
  return dataset_from_table(read_csv_file(path), target, kind, categorical, reuse);
}

// ---------------------------------------------------------------------------
// LIBSVM: "label idx:val idx:val ..." with 1-based strictly increasing indices.

inline Dataset read_libsvm(std::istream& in, TaskKind kind, std::size_t min_dim = 0) {
  struct Line {
    std::string label;
    std::vector<std::pair<std::size_t, double>> entries;
  };
  std::vector<Line> lines;
  std::size_t dim = min_dim;
  std::string text;
  std::size_t line_no = 0;
  while (std::getline(in, text)) {
    ++line_no;
    if (auto hash = text.find('#'); hash != std::string::npos) text.erase(hash);
    std::istringstream tokens(text);
    Line line;
    if (!(tokens >> line.label)) continue;
    std::string tok;
    std::size_t last = 0;
    while (tokens >> tok) {
      const auto colon = tok.find(':');
      auto index = colon == std::string::npos ? std::nullopt
                                              : detail::parse_long(std::string_view(tok).substr(0, colon));
      auto value = colon == std::string::npos ? std::nullopt
                                              : detail::parse_double(std::string_view(tok).substr(colon + 1));
      if (!index || !value || *index < 1) {
        throw DataError("line " + std::to_string(line_no) + ": malformed entry '" + tok + "'");
      }
      const auto idx = static_cast<std::size_t>(*index);
      if (idx <= last) {
        throw DataError("line " + std::to_string(line_no) + ": indices must be strictly increasing");
      }
      last = idx;
      dim = std::max(dim, idx);
      line.entries.emplace_back(idx, *value);
    }
    lines.push_back(std::move(line));
  }
  if (lines.empty()) throw DataError("empty LIBSVM input");
  if (dim == 0) dim = 1;

  std::vector<double> features(lines.size() * dim, 0.0);
  for (std::size_t i = 0; i < lines.size(); ++i) {
    for (auto [idx, v] : lines[i].entries) features[i * dim + idx - 1] = v;
  }

  if (kind == TaskKind::regression) {
    std::vector<double> targets;
    for (std::size_t i = 0; i < lines.size(); ++i) {
      auto v = detail::parse_double(lines[i].label);
      if (!v) throw DataError("line " + std::to_string(i + 1) + ": non-numeric label '" + lines[i].label + "'");
      targets.push_back(*v);
    }
    return Dataset::regression(dim, std::move(features), std::move(targets));
  }

  // Positive integer labels are class indices as-is; anything else (0, -1,
  // ...) is remapped to 1..K by ascending value.
  std::vector<long> raw;
  for (std::size_t i = 0; i < lines.size(); ++i) {
    auto v = detail::parse_long(lines[i].label);
    if (!v) throw DataError("line " + std::to_string(i + 1) + ": non-integer class label '" + lines[i].label + "'");
    raw.push_back(*v);
  }
  std::vector<int> labels;
  Schema schema;
  if (std::all_of(raw.begin(), raw.end(), [](long v) { return v >= 1; })) {
    for (long v : raw) labels.push_back(static_cast<int>(v));
    const long k = *std::max_element(raw.begin(), raw.end());
    for (long c = 1; c <= k; ++c) schema.class_names.push_back(std::to_string(c));
  } else {
    std::vector<long> distinct = raw;
    std::sort(distinct.begin(), distinct.end());
    distinct.erase(std::unique(distinct.begin(), distinct.end()), distinct.end());
    for (long v : raw) {
      labels.push_back(static_cast<int>(std::lower_bound(distinct.begin(), distinct.end(), v) - distinct.begin()) + 1);
    }
    for (long v : distinct) schema.class_names.push_back(std::to_string(v));
  }
  auto data = Dataset::classification(dim, std::move(features), std::move(labels), schema.class_names.size());
  for (std::size_t j = 0; j < dim; ++j) schema.columns.push_back({"x" + std::to_string(j + 1), {}});
  data.set_schema(std::move(schema));
  return data;
}

inline Dataset load_libsvm(const std::string& path, TaskKind kind, std::size_t min_dim = 0) {
  auto in = detail::open_input(path);
  return read_libsvm(in, kind, min_dim);
}

/// Writes `data` in LIBSVM format; zero features are elided and values are
/// printed with round-trip precision. Regression requires K = 1.
inline void write_libsvm(std::ostream& out, const Dataset& data) {
  auto number = [](double v) {
    char buf[32];
    auto [ptr, ec] = std::to_chars(buf, buf + sizeof buf, v);
    return std::string(buf, ptr);
  };
  if (!data.task().is_classification() && data.task().outputs != 1) {
    throw DataError("LIBSVM output supports a single regression target");
  }
  for (std::size_t i = 0; i < data.size(); ++i) {
    out << (data.task().is_classification() ? std::to_string(data.label(i)) : number(data.target(i)[0]));
    auto r = data.row(i);
    for (std::size_t j = 0; j < r.size(); ++j) {
      if (r[j] != 0.0) out << ' ' << (j + 1) << ':' << number(r[j]);
    }
    out << '\n';
  }
}

// ---------------------------------------------------------------------------
// Splitting and folds

struct SplitSpec {
  double test_fraction = 0.2;
  std::uint64_t seed = 0;
};

struct SplitIndices {
  std::vector<std::size_t> train;
  std::vector<std::size_t> test;
};

inline std::vector<std::size_t> permutation(std::size_t n, std::uint64_t seed) {
  std::vector<std::size_t> perm(n);
  std::iota(perm.begin(), perm.end(), std::size_t{0});
  Rng rng(seed);
  shuffle(std::span<std::size_t>(perm), rng);
  return perm;
}

inline SplitIndices split_indices(std::size_t n, const SplitSpec& spec) {
  if (!(spec.test_fraction > 0.0 && spec.test_fraction < 1.0)) {
    throw DataError("test fraction must lie strictly between 0 and 1");
  }
  if (n < 2) throw DataError("need at least 2 rows to split");
  const auto n_test = static_cast<std::size_t>(std::llround(static_cast<double>(n) * spec.test_fraction));
  if (n_test == 0 || n_test == n) throw DataError("test fraction leaves an empty partition");
  auto perm = permutation(n, spec.seed);
  SplitIndices s;
  s.test.assign(perm.begin(), perm.begin() + static_cast<std::ptrdiff_t>(n_test));
  s.train.assign(perm.begin() + static_cast<std::ptrdiff_t>(n_test), perm.end());
  return s;
}

/// Shuffles rows with `spec.seed` and holds out round(N * test_fraction) of them.
inline std::pair<Dataset, Dataset> train_test_split(const Dataset& data, const SplitSpec& spec) {
  auto s = split_indices(data.size(), spec);
  return {data.subset(s.train), data.subset(s.test)};
}

struct FoldAssignment {
  std::size_t k = 0;
  std::vector<std::size_t> fold_of;

  /// Rows outside / inside fold f, in ascending row order.
  SplitIndices split(std::size_t f) const {
    SplitIndices s;
    for (std::size_t i = 0; i < fold_of.size(); ++i) (fold_of[i] == f ? s.test : s.train).push_back(i);
    return s;
  }
};

inline FoldAssignment kfold(std::size_t n, std::size_t k, std::uint64_t seed) {
  if (k < 2) throw DataError("fold count must be at least 2");
  if (k > n) throw DataError("fold count exceeds row count");
  auto perm = permutation(n, seed);
  FoldAssignment folds{k, std::vector<std::size_t>(n)};
  for (std::size_t i = 0; i < n; ++i) folds.fold_of[perm[i]] = i % k;
  return folds;
}

// ---------------------------------------------------------------------------
// Optional min-max scaling (off by default).

struct MinMaxScaler {
  std::vector<double> lo;
  std::vector<double> hi;

  static MinMaxScaler fit(const Dataset& data) {
    MinMaxScaler s;
    s.lo.assign(data.dim(), 0.0);
    s.hi.assign(data.dim(), 0.0);
    for (std::size_t j = 0; j < data.dim(); ++j) {
      s.lo[j] = s.hi[j] = data.row(0)[j];
    }
    for (std::size_t i = 1; i < data.size(); ++i) {
      auto r = data.row(i);
      for (std::size_t j = 0; j < r.size(); ++j) {
        s.lo[j] = std::min(s.lo[j], r[j]);
        s.hi[j] = std::max(s.hi[j], r[j]);
      }
    }
    return s;
  }

  /// Maps each feature to (x - lo) / (hi - lo); constant features map to 0.
  std::vector<double> transform(std::span<const double> features) const {
    std::vector<double> out(features.begin(), features.end());
    const std::size_t d = lo.size();
    for (std::size_t i = 0; i < out.size(); ++i) {
      const std::size_t j = i % d;
      const double range = hi[j] - lo[j];
      out[i] = range > 0.0 ? (out[i] - lo[j]) / range : 0.0;
    }
    return out;
  }

  Dataset transform(const Dataset& data) const { return data.with_features(transform(data.features())); }
};

}  // namespace dtree
