#pragma once

// Model files: the tree document plus optional "schema", "scaler" and "meta"
// keys. Any model file is also a plain tree file.

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <sstream>
#include <string>

#include <json.hpp>

#include "dtree/dataset.hpp"
#include "dtree/error.hpp"
#include "dtree/tree.hpp"

namespace dtree {

struct Model {
  Tree tree;
  std::optional<Schema> schema;         // how CSV columns become features
  std::optional<MinMaxScaler> scaler;   // applied before routing
  std::map<std::string, std::string> meta;

  /// Encodes raw data the way the training data was encoded.
  Dataset prepare(const Dataset& raw) const {
    if (raw.dim() != tree.dim()) {
      throw DataError("data has " + std::to_string(raw.dim()) + " features, model expects " + std::to_string(tree.dim()));
    }
    return scaler ? scaler->transform(raw) : raw;
  }

  /// Class name of label k when the schema knows it, else the number.
  std::string label_name(int k) const {
    if (schema && k >= 1 && static_cast<std::size_t>(k) <= schema->class_names.size()) {
      return schema->class_names[static_cast<std::size_t>(k - 1)];
    }
    return std::to_string(k);
  }
};

namespace detail {

inline nlohmann::json schema_to_json(const Schema& s) {
  nlohmann::json cols = nlohmann::json::array();
  for (const auto& c : s.columns) cols.push_back({{"name", c.name}, {"levels", c.levels}});
  return {{"columns", std::move(cols)}, {"target", s.target}, {"class_names", s.class_names}};
}

inline Schema schema_from_json(const nlohmann::json& j) {
  Schema s;
  for (const auto& c : j.at("columns")) {
    s.columns.push_back({c.at("name").get<std::string>(), c.value("levels", std::vector<std::string>{})});
  }
  s.target = j.at("target").get<std::string>();
  s.class_names = j.value("class_names", std::vector<std::string>{});
  return s;
}

}  // namespace detail

inline nlohmann::json model_to_json(const Model& m) {
  auto j = tree_to_json(m.tree);
  if (m.schema) j["schema"] = detail::schema_to_json(*m.schema);
  if (m.scaler) {
    nlohmann::json lo = nlohmann::json::array(), hi = nlohmann::json::array();
    for (double v : m.scaler->lo) lo.push_back(detail::number_to_json(v));
    for (double v : m.scaler->hi) hi.push_back(detail::number_to_json(v));
    j["scaler"] = {{"kind", "minmax"}, {"lo", std::move(lo)}, {"hi", std::move(hi)}};
  }
  if (!m.meta.empty()) j["meta"] = m.meta;
  return j;
}

inline Model model_from_json(const nlohmann::json& j) {
  Model m{tree_from_json(j), std::nullopt, std::nullopt, {}};
  try {
    if (j.contains("schema")) {
      m.schema = detail::schema_from_json(j.at("schema"));
      if (detail::schema_dim(*m.schema) != m.tree.dim()) throw ModelError("schema does not match the tree dimension");
      if (m.tree.task().is_classification() && !m.schema->class_names.empty() &&
          m.schema->class_names.size() != m.tree.task().outputs) {
        throw ModelError("schema class count does not match the tree");
      }
    }
    if (j.contains("scaler")) {
      const auto& s = j.at("scaler");
      if (s.value("kind", std::string("minmax")) != "minmax") throw ModelError("unknown scaler kind");
      MinMaxScaler sc;
      for (const auto& v : s.at("lo")) sc.lo.push_back(detail::number_from_json(v));
      for (const auto& v : s.at("hi")) sc.hi.push_back(detail::number_from_json(v));
      if (sc.lo.size() != m.tree.dim() || sc.hi.size() != m.tree.dim()) throw ModelError("scaler does not match the tree dimension");
      m.scaler = std::move(sc);
    }
    if (j.contains("meta")) m.meta = j.at("meta").get<std::map<std::string, std::string>>();
  } catch (const nlohmann::json::exception& e) {
    throw ModelError(std::string("malformed model: ") + e.what());
  }
  return m;
}

inline std::string serialize_model(const Model& m) { return model_to_json(m).dump(2) + "\n"; }

inline Model deserialize_model(std::string_view text) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(text);
  } catch (const nlohmann::json::exception& e) {
    throw ModelError(std::string("malformed model: ") + e.what());
  }
  return model_from_json(j);
}

inline void save_model(const Model& m, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw ModelError("cannot write model file '" + path + "'");
  out << serialize_model(m);
  if (!out) throw ModelError("failed writing model file '" + path + "'");
}

inline Model load_model(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ModelError("cannot open model file '" + path + "'");
  std::stringstream s;
  s << in.rdbuf();
  return deserialize_model(s.str());
}

/// Data encoded for `m`. `labelled` is false when the file has no target
/// column (prediction only); targets are then placeholders.
struct ModelInput {
  Dataset data;
  bool labelled = false;
};

/// Reads CSV (via the model schema when present) or LIBSVM input for `m`.
/// Without a schema every CSV column must be numeric; `target` names the
/// label column, whose values are taken as class numbers 1..K or targets.
inline ModelInput load_for_model(const std::string& path, const Model& m, const std::string& target = {}) {
  const Task task = m.tree.task();
  if (std::filesystem::path(path).extension() != ".csv") {
    auto d = load_libsvm(path, task.kind, m.tree.dim());
    return {m.prepare(d), true};
  }
  const auto table = read_csv_file(path);
  if (table.rows.empty()) throw DataError("CSV has a header but no data rows");
  const std::string tname = m.schema ? m.schema->target : target;
  const auto tcol = std::find(table.header.begin(), table.header.end(), tname);
  const bool labelled = !tname.empty() && tcol != table.header.end();

  if (m.schema && labelled) {
    auto d = dataset_from_table(table, tname, task.kind, {}, &*m.schema);
    return {m.prepare(d), true};
  }
  std::vector<double> features;
  std::size_t dim = 0;
  if (m.schema) {
    features = detail::encode_features(table, *m.schema);
    dim = detail::schema_dim(*m.schema);
  } else {
    for (std::size_t r = 0; r < table.rows.size(); ++r) {
      for (std::size_t c = 0; c < table.header.size(); ++c) {
        if (labelled && table.header.begin() + static_cast<std::ptrdiff_t>(c) == tcol) continue;
        auto v = detail::parse_double(table.rows[r][c]);
        if (!v) {
          throw DataError("row " + std::to_string(r + 2) + ", column '" + table.header[c] + "': cannot parse '" +
                          table.rows[r][c] + "' as a number");
        }
        features.push_back(*v);
      }
    }
    dim = table.header.size() - (labelled ? 1 : 0);
  }
  if (dim != m.tree.dim()) {
    throw DataError("data has " + std::to_string(dim) + " features, model expects " + std::to_string(m.tree.dim()));
  }
  const std::size_t n = table.rows.size();
  const std::size_t tc = labelled ? static_cast<std::size_t>(tcol - table.header.begin()) : 0;
  Dataset d;
  if (task.is_classification()) {
    std::vector<int> labels(n, 1);
    if (labelled) {
      for (std::size_t r = 0; r < n; ++r) {
        auto v = detail::parse_long(table.rows[r][tc]);
        if (!v || *v < 1 || static_cast<std::size_t>(*v) > task.outputs) {
          throw DataError("row " + std::to_string(r + 2) + ": label '" + table.rows[r][tc] + "' is not a class 1.." +
                          std::to_string(task.outputs));
        }
        labels[r] = static_cast<int>(*v);
      }
    }
    d = Dataset::classification(dim, std::move(features), std::move(labels), task.outputs);
  } else {
    std::vector<double> targets(n * task.outputs, 0.0);
    if (labelled) {
      if (task.outputs != 1) throw DataError("CSV input supports single-output regression only");
      for (std::size_t r = 0; r < n; ++r) {
        auto v = detail::parse_double(table.rows[r][tc]);
        if (!v) throw DataError("row " + std::to_string(r + 2) + ": cannot parse target '" + table.rows[r][tc] + "'");
        targets[r] = *v;
      }
    }
    d = Dataset::regression(dim, std::move(features), std::move(targets), task.outputs);
  }
  return {m.prepare(d), labelled};
}

}  // namespace dtree
