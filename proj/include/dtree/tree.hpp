#pragma once

// Binary decision trees stored as an index-addressed arena. Internal nodes hold
// an axis-aligned or oblique split; an input goes right iff the split value is
// >= its threshold (x[j] >= t, or w.x >= b), left otherwise. Leaves hold a
// constant: a class index in 1..K or a real vector of dimension K.

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdint>
#include <limits>
#include <numeric>
#include <span>
#include <stdexcept>
#include <string>
#include <utility>
#include <variant>
#include <vector>

#include <json.hpp>

#include "dtree/dataset.hpp"
#include "dtree/error.hpp"
#include "dtree/random.hpp"

namespace dtree {

using NodeId = std::int32_t;
inline constexpr NodeId no_node = -1;

struct AxisSplit {
  std::size_t feature = 0;
  double threshold = 0.0;
  bool operator==(const AxisSplit&) const = default;
};

struct ObliqueSplit {
  std::vector<double> weights;
  double bias = 0.0;
  bool operator==(const ObliqueSplit&) const = default;
};

/// Constant leaf: `label` for classification, `value` (size K) for regression.
struct Leaf {
  int label = 1;
  std::vector<double> value;
  bool operator==(const Leaf&) const = default;
};

using NodeKind = std::variant<AxisSplit, ObliqueSplit, Leaf>;

struct Node {
  NodeKind kind;
  NodeId parent = no_node;
  NodeId left = no_node;
  NodeId right = no_node;

  bool is_leaf() const { return std::holds_alternative<Leaf>(kind); }
  bool operator==(const Node&) const = default;
};

inline double dot(std::span<const double> a, std::span<const double> b) {
  double s = 0.0;
  for (std::size_t j = 0; j < a.size(); ++j) s += a[j] * b[j];
  return s;
}

/// Routing rule of a split node: true means "go right".
inline bool goes_right(const NodeKind& kind, std::span<const double> x) {
  if (const auto* axis = std::get_if<AxisSplit>(&kind)) return x[axis->feature] >= axis->threshold;
  const auto& oblique = std::get<ObliqueSplit>(kind);
  return dot(oblique.weights, x) >= oblique.bias;
}

class Tree {
 public:
  Tree() = default;

  /// Single-leaf tree.
  Tree(Task task, std::size_t dim, Leaf root) : task_(task), dim_(dim) {
    check_leaf(root);
    nodes_.push_back(Node{std::move(root)});
    root_ = 0;
  }

  /// Assembles a tree from raw nodes (parent links are recomputed) and
  /// validates it; throws ModelError on any structural violation.
  static Tree from_parts(Task task, std::size_t dim, std::vector<Node> nodes, NodeId root) {
    Tree t;
    t.task_ = task;
    t.dim_ = dim;
    t.nodes_ = std::move(nodes);
    t.root_ = root;
    t.validate();
    for (auto& n : t.nodes_) n.parent = no_node;
    for (std::size_t i = 0; i < t.nodes_.size(); ++i) {
      const auto& n = t.nodes_[i];
      if (!n.is_leaf()) {
        t.nodes_[static_cast<std::size_t>(n.left)].parent = static_cast<NodeId>(i);
        t.nodes_[static_cast<std::size_t>(n.right)].parent = static_cast<NodeId>(i);
      }
    }
    return t;
  }

  const Task& task() const { return task_; }
  std::size_t dim() const { return dim_; }
  NodeId root() const { return root_; }
  /// Arena size; includes nodes made unreachable by collapse() until compact().
  std::size_t size() const { return nodes_.size(); }
  const Node& node(NodeId id) const { return nodes_.at(static_cast<std::size_t>(id)); }
  const std::vector<Node>& nodes() const { return nodes_; }

  /// Turns leaf `id` into `split` with two fresh leaf children; returns them.
  std::pair<NodeId, NodeId> split(NodeId id, NodeKind split, Leaf left, Leaf right) {
    if (!node(id).is_leaf()) throw std::invalid_argument("split(): node is not a leaf");
    check_split(split);
    check_leaf(left);
    check_leaf(right);
    if (nodes_.size() + 2 > static_cast<std::size_t>(std::numeric_limits<NodeId>::max())) {
      throw std::length_error("tree node count overflows the node index type");
    }
    const auto l = static_cast<NodeId>(nodes_.size());
    nodes_.push_back(Node{std::move(left), id});
    nodes_.push_back(Node{std::move(right), id});
    auto& n = nodes_[static_cast<std::size_t>(id)];
    n.kind = std::move(split);
    n.left = l;
    n.right = l + 1;
    return {l, l + 1};
  }

  /// Replaces node parameters; a leaf stays a leaf and a split stays a split.
  void set_kind(NodeId id, NodeKind kind) {
    auto& n = nodes_.at(static_cast<std::size_t>(id));
    if (n.is_leaf() != std::holds_alternative<Leaf>(kind)) {
      throw std::invalid_argument("set_kind(): cannot change a leaf into a split or back");
    }
    if (n.is_leaf()) check_leaf(std::get<Leaf>(kind)); else check_split(kind);
    n.kind = std::move(kind);
  }

  /// Makes internal node `id` a leaf; its former descendants become
  /// unreachable and are dropped by the next compact().
  void collapse(NodeId id, Leaf leaf) {
    check_leaf(leaf);
    auto& n = nodes_.at(static_cast<std::size_t>(id));
    n.kind = std::move(leaf);
    n.left = n.right = no_node;
  }

  /// Removes unreachable nodes, keeping the relative order of the rest.
  void compact() { relink({}); }

  /// Replaces each node `id` with `redirect[id]` wherever it is referenced
  /// (as root or as a child), then compacts. Used to splice out nodes.
  void relink(const std::vector<NodeId>& redirect) {
    auto resolve = [&](NodeId id) {
      while (!redirect.empty() && id != no_node && redirect[static_cast<std::size_t>(id)] != id) {
        id = redirect[static_cast<std::size_t>(id)];
      }
      return id;
    };
    std::vector<Node> nodes = nodes_;
    for (auto& n : nodes) {
      if (!n.is_leaf()) {
        n.left = resolve(n.left);
        n.right = resolve(n.right);
      }
    }
    const NodeId root = resolve(root_);

    std::vector<char> keep(nodes.size(), 0);
    std::vector<NodeId> stack{root};
    while (!stack.empty()) {
      const NodeId id = stack.back();
      stack.pop_back();
      keep[static_cast<std::size_t>(id)] = 1;
      const auto& n = nodes[static_cast<std::size_t>(id)];
      if (!n.is_leaf()) {
        stack.push_back(n.left);
        stack.push_back(n.right);
      }
    }
    std::vector<NodeId> index(nodes.size(), no_node);
    std::vector<Node> out;
    for (std::size_t i = 0; i < nodes.size(); ++i) {
      if (keep[i]) {
        index[i] = static_cast<NodeId>(out.size());
        out.push_back(std::move(nodes[i]));
      }
    }
    for (auto& n : out) {
      n.parent = no_node;
      if (!n.is_leaf()) {
        n.left = index[static_cast<std::size_t>(n.left)];
        n.right = index[static_cast<std::size_t>(n.right)];
      }
    }
    for (std::size_t i = 0; i < out.size(); ++i) {
      if (!out[i].is_leaf()) {
        out[static_cast<std::size_t>(out[i].left)].parent = static_cast<NodeId>(i);
        out[static_cast<std::size_t>(out[i].right)].parent = static_cast<NodeId>(i);
      }
    }
    nodes_ = std::move(out);
    root_ = index[static_cast<std::size_t>(root)];
  }

  NodeId leaf_for(std::span<const double> x) const {
    if (x.size() != dim_) {
      throw std::invalid_argument("input has " + std::to_string(x.size()) + " features, tree expects " +
                                  std::to_string(dim_));
    }
    return descend(root_, x);
  }

  /// Leaf reached from `start` (which may be any node) without a size check.
  NodeId descend(NodeId start, std::span<const double> x) const {
    NodeId id = start;
    while (true) {
      const auto& n = nodes_[static_cast<std::size_t>(id)];
      if (n.is_leaf()) return id;
      id = goes_right(n.kind, x) ? n.right : n.left;
    }
  }

  const Leaf& predict_leaf(std::span<const double> x) const {
    return std::get<Leaf>(node(leaf_for(x)).kind);
  }

  /// Reachable nodes in preorder.
  std::vector<NodeId> preorder() const {
    std::vector<NodeId> order;
    std::vector<NodeId> stack{root_};
    while (!stack.empty()) {
      const NodeId id = stack.back();
      stack.pop_back();
      order.push_back(id);
      const auto& n = node(id);
      if (!n.is_leaf()) {
        stack.push_back(n.right);
        stack.push_back(n.left);
      }
    }
    return order;
  }

  /// Depth of every arena node (root = 0); -1 for unreachable nodes.
  std::vector<int> node_depths() const {
    std::vector<int> depth(nodes_.size(), -1);
    for (NodeId id : preorder()) {
      const auto& n = node(id);
      depth[static_cast<std::size_t>(id)] = id == root_ ? 0 : depth[static_cast<std::size_t>(n.parent)] + 1;
    }
    return depth;
  }

  /// Checks the structural invariants; throws ModelError on violation.
  void validate() const {
    if (nodes_.empty() || root_ < 0 || static_cast<std::size_t>(root_) >= nodes_.size()) {
      throw ModelError("tree has no valid root");
    }
    std::vector<int> seen(nodes_.size(), 0);
    std::vector<NodeId> stack{root_};
    while (!stack.empty()) {
      const NodeId id = stack.back();
      stack.pop_back();
      if (id < 0 || static_cast<std::size_t>(id) >= nodes_.size()) throw ModelError("child index out of range");
      if (seen[static_cast<std::size_t>(id)]++) throw ModelError("node reached twice (cycle or shared child)");
      const auto& n = nodes_[static_cast<std::size_t>(id)];
      try {
        if (n.is_leaf()) {
          check_leaf(std::get<Leaf>(n.kind));
          if (n.left != no_node || n.right != no_node) throw ModelError("leaf has children");
        } else {
          check_split(n.kind);
          stack.push_back(n.left);
          stack.push_back(n.right);
        }
      } catch (const std::invalid_argument& e) {
        throw ModelError(e.what());
      }
    }
    if (std::count(seen.begin(), seen.end(), 0) != 0) throw ModelError("unreachable nodes present");
  }

  bool operator==(const Tree&) const = default;

 private:
  void check_leaf(const Leaf& leaf) const {
    if (task_.is_classification()) {
      if (leaf.label < 1 || static_cast<std::size_t>(leaf.label) > task_.outputs || !leaf.value.empty()) {
        throw std::invalid_argument("classification leaf must hold a label in 1..K");
      }
    } else if (leaf.value.size() != task_.outputs) {
      throw std::invalid_argument("regression leaf must hold a vector of dimension K");
    }
  }

  void check_split(const NodeKind& kind) const {
    if (const auto* axis = std::get_if<AxisSplit>(&kind)) {
      if (axis->feature >= dim_) throw std::invalid_argument("axis split feature index out of range");
      if (std::isnan(axis->threshold)) throw std::invalid_argument("axis split threshold is NaN");
    } else if (const auto* oblique = std::get_if<ObliqueSplit>(&kind)) {
      if (oblique->weights.size() != dim_) throw std::invalid_argument("oblique weight vector length must equal D");
    } else {
      throw std::invalid_argument("expected a split, got a leaf");
    }
  }

  Task task_{};
  std::size_t dim_ = 0;
  std::vector<Node> nodes_;
  NodeId root_ = no_node;
};

// ---------------------------------------------------------------------------

inline const Leaf& predict(const Tree& tree, std::span<const double> x) { return tree.predict_leaf(x); }

/// Maximum root-to-leaf edge count; a single leaf has depth 0.
inline int depth(const Tree& tree) {
  auto d = tree.node_depths();
  return *std::max_element(d.begin(), d.end());
}

inline std::size_t num_leaves(const Tree& tree) {
  std::size_t n = 0;
  for (NodeId id : tree.preorder()) n += tree.node(id).is_leaf() ? 1 : 0;
  return n;
}

/// Per-node count of `data` rows whose path passes through the node.
inline std::vector<std::size_t> reach_counts(const Tree& tree, const Dataset& data) {
  std::vector<std::size_t> count(tree.size(), 0);
  for (std::size_t i = 0; i < data.size(); ++i) {
    auto x = data.row(i);
    NodeId id = tree.root();
    while (true) {
      ++count[static_cast<std::size_t>(id)];
      const auto& n = tree.node(id);
      if (n.is_leaf()) break;
      id = goes_right(n.kind, x) ? n.right : n.left;
    }
  }
  return count;
}

/// Complete oblique tree of the given depth: split weights and biases
/// i.i.d. uniform on [-1, 1]; classification leaves uniform on 1..K,
/// regression leaves zero. Nodes are numbered breadth-first.
inline Tree complete_tree(int depth, std::size_t dim, const Task& task, std::uint64_t seed) {
  if (depth < 0) throw std::invalid_argument("depth must be non-negative");
  if (depth >= std::numeric_limits<NodeId>::digits) {
    throw std::length_error("a complete tree of depth " + std::to_string(depth) + " overflows the node index type");
  }
  Rng rng(seed);
  auto placeholder = [&] {
    return task.is_classification() ? Leaf{1, {}} : Leaf{0, std::vector<double>(task.outputs, 0.0)};
  };
  Tree tree(task, dim, placeholder());
  std::vector<NodeId> frontier{tree.root()};
  for (int level = 0; level < depth; ++level) {
    std::vector<NodeId> next;
    for (NodeId id : frontier) {
      ObliqueSplit s;
      s.weights.resize(dim);
      for (auto& w : s.weights) w = uniform_real(rng, -1.0, 1.0);
      s.bias = uniform_real(rng, -1.0, 1.0);
      auto [l, r] = tree.split(id, std::move(s), placeholder(), placeholder());
      next.push_back(l);
      next.push_back(r);
    }
    frontier = std::move(next);
  }
  if (task.is_classification()) {
    for (NodeId id : frontier) {
      tree.set_kind(id, Leaf{static_cast<int>(uniform_index(rng, task.outputs)) + 1, {}});
    }
  }
  return tree;
}

/// Removes branches that no row of `data` reaches: an internal node with one
/// empty child is replaced by its other child. Predictions on `data` are
/// unchanged. A tree without dead branches is returned as is.
inline Tree prune_dead(const Tree& tree, const Dataset& data) {
  if (data.dim() != tree.dim()) throw std::invalid_argument("prune_dead(): dimension mismatch");
  const auto count = reach_counts(tree, data);
  std::vector<NodeId> redirect(tree.size());
  std::iota(redirect.begin(), redirect.end(), NodeId{0});
  bool changed = false;
  for (NodeId id : tree.preorder()) {
    const auto& n = tree.node(id);
    if (n.is_leaf() || count[static_cast<std::size_t>(id)] == 0) continue;
    if (count[static_cast<std::size_t>(n.left)] == 0) {
      redirect[static_cast<std::size_t>(id)] = n.right;
      changed = true;
    } else if (count[static_cast<std::size_t>(n.right)] == 0) {
      redirect[static_cast<std::size_t>(id)] = n.left;
      changed = true;
    }
  }
  if (!changed) return tree;
  Tree out = tree;
  out.relink(redirect);
  return out;
}

// ---------------------------------------------------------------------------
// Model text format (JSON), version 1.

inline constexpr int model_format_version = 1;

namespace detail {

inline nlohmann::json number_to_json(double v) {
  if (std::isfinite(v)) return v;
  if (std::isnan(v)) return "nan";
  return v > 0 ? "inf" : "-inf";
}

inline double number_from_json(const nlohmann::json& j) {
  if (j.is_number()) return j.get<double>();
  if (j.is_string()) {
    const auto& s = j.get_ref<const std::string&>();
    if (s == "inf") return std::numeric_limits<double>::infinity();
    if (s == "-inf") return -std::numeric_limits<double>::infinity();
    if (s == "nan") return std::numeric_limits<double>::quiet_NaN();
  }
  throw ModelError("expected a number, got " + j.dump());
}

inline std::string format_number(double v) {
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  char buf[32];
  auto [ptr, ec] = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, ptr);
}

}  // namespace detail

inline nlohmann::json tree_to_json(const Tree& tree) {
  using nlohmann::json;
  json nodes = json::array();
  for (std::size_t i = 0; i < tree.size(); ++i) {
    const auto& n = tree.node(static_cast<NodeId>(i));
    json node{{"id", i}};
    if (const auto* axis = std::get_if<AxisSplit>(&n.kind)) {
      node["kind"] = "axis";
      node["params"] = {{"feature", axis->feature}, {"threshold", detail::number_to_json(axis->threshold)}};
    } else if (const auto* oblique = std::get_if<ObliqueSplit>(&n.kind)) {
      json w = json::array();
      for (double v : oblique->weights) w.push_back(detail::number_to_json(v));
      node["kind"] = "oblique";
      node["params"] = {{"weights", std::move(w)}, {"bias", detail::number_to_json(oblique->bias)}};
    } else {
      const auto& leaf = std::get<Leaf>(n.kind);
      node["kind"] = "leaf";
      if (tree.task().is_classification()) {
        node["params"] = {{"label", leaf.label}};
      } else {
        json v = json::array();
        for (double x : leaf.value) v.push_back(detail::number_to_json(x));
        node["params"] = {{"value", std::move(v)}};
      }
    }
    node["left"] = n.left == no_node ? json(nullptr) : json(n.left);
    node["right"] = n.right == no_node ? json(nullptr) : json(n.right);
    nodes.push_back(std::move(node));
  }
  return json{{"version", model_format_version},
              {"task", {{"kind", to_string(tree.task().kind)}, {"outputs", tree.task().outputs}}},
              {"dim", tree.dim()},
              {"root", tree.root()},
              {"nodes", std::move(nodes)}};
}

inline Tree tree_from_json(const nlohmann::json& j) {
  try {
    if (!j.is_object()) throw ModelError("model must be a JSON object");
    if (!j.contains("version")) throw ModelError("model has no version field");
    const int version = j.at("version").get<int>();
    if (version != model_format_version) throw ModelError("unsupported model version " + std::to_string(version));

    const auto& jt = j.at("task");
    Task task{parse_task_kind(jt.at("kind").get<std::string>()), jt.at("outputs").get<std::size_t>()};
    const auto dim = j.at("dim").get<std::size_t>();
    const auto& jn = j.at("nodes");
    if (!jn.is_array() || jn.empty()) throw ModelError("model has no nodes");

    // Node ids are arbitrary integers; the arena keeps the listed order.
    std::vector<std::int64_t> ids;
    for (const auto& n : jn) ids.push_back(n.at("id").get<std::int64_t>());
    auto position = [&](const nlohmann::json& ref) -> NodeId {
      if (ref.is_null()) return no_node;
      auto it = std::find(ids.begin(), ids.end(), ref.get<std::int64_t>());
      if (it == ids.end()) throw ModelError("reference to unknown node id " + ref.dump());
      return static_cast<NodeId>(it - ids.begin());
    };
    {
      auto sorted = ids;
      std::sort(sorted.begin(), sorted.end());
      if (std::adjacent_find(sorted.begin(), sorted.end()) != sorted.end()) throw ModelError("duplicate node id");
    }

    std::vector<Node> nodes;
    for (const auto& n : jn) {
      const auto kind = n.at("kind").get<std::string>();
      const auto& p = n.at("params");
      Node node;
      if (kind == "axis") {
        node.kind = AxisSplit{p.at("feature").get<std::size_t>(), detail::number_from_json(p.at("threshold"))};
      } else if (kind == "oblique") {
        ObliqueSplit s;
        for (const auto& w : p.at("weights")) s.weights.push_back(detail::number_from_json(w));
        s.bias = detail::number_from_json(p.at("bias"));
        node.kind = std::move(s);
      } else if (kind == "leaf") {
        Leaf leaf;
        if (task.is_classification()) {
          leaf.label = p.at("label").get<int>();
        } else {
          leaf.label = 0;
          for (const auto& v : p.at("value")) leaf.value.push_back(detail::number_from_json(v));
        }
        node.kind = std::move(leaf);
      } else {
        throw ModelError("unknown node kind '" + kind + "'");
      }
      node.left = position(n.value("left", nlohmann::json(nullptr)));
      node.right = position(n.value("right", nlohmann::json(nullptr)));
      if (node.is_leaf() != (node.left == no_node && node.right == no_node) || (node.left == no_node) != (node.right == no_node)) {
        throw ModelError("node " + n.at("id").dump() + ": internal nodes need two children, leaves none");
      }
      nodes.push_back(std::move(node));
    }

    // Rebuild through the public interface so every invariant is checked.
    Tree tree = Tree::from_parts(task, dim, std::move(nodes), position(j.at("root")));
    return tree;
  } catch (const nlohmann::json::exception& e) {
    throw ModelError(std::string("malformed model: ") + e.what());
  }
}

inline std::string serialize(const Tree& tree) { return tree_to_json(tree).dump(2) + "\n"; }

inline Tree deserialize(std::string_view text) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(text);
  } catch (const nlohmann::json::exception& e) {
    throw ModelError(std::string("malformed model: ") + e.what());
  }
  return tree_from_json(j);
}

// ---------------------------------------------------------------------------
// IF-THEN rules: one line per leaf, conditions joined with " ∧ ".

namespace detail {

inline std::string split_condition(const NodeKind& kind, bool right) {
  const char* op = right ? " ≥ " : " < ";
  if (const auto* axis = std::get_if<AxisSplit>(&kind)) {
    return "x[" + std::to_string(axis->feature) + "]" + op + format_number(axis->threshold);
  }
  const auto& s = std::get<ObliqueSplit>(kind);
  std::string lhs;
  for (std::size_t j = 0; j < s.weights.size(); ++j) {
    const double w = s.weights[j];
    if (w == 0.0) continue;
    if (lhs.empty()) {
      lhs = format_number(w);
    } else {
      lhs += w < 0 ? " - " + format_number(-w) : " + " + format_number(w);
    }
    lhs += "·x[" + std::to_string(j) + "]";
  }
  if (lhs.empty()) lhs = "0";
  return lhs + op + format_number(s.bias);
}

inline std::string leaf_text(const Tree& tree, const Leaf& leaf) {
  if (tree.task().is_classification()) return "class " + std::to_string(leaf.label);
  if (leaf.value.size() == 1) return "value " + format_number(leaf.value[0]);
  std::string s = "value (";
  for (std::size_t k = 0; k < leaf.value.size(); ++k) s += (k ? ", " : "") + format_number(leaf.value[k]);
  return s + ")";
}

}  // namespace detail

inline std::string export_rules(const Tree& tree) {
  std::string out;
  std::vector<std::string> path;
  auto visit = [&](auto&& self, NodeId id) -> void {
    const auto& n = tree.node(id);
    if (n.is_leaf()) {
      std::string cond;
      for (const auto& c : path) cond += (cond.empty() ? "" : " ∧ ") + c;
      out += (cond.empty() ? "TRUE" : cond) + " → " + detail::leaf_text(tree, std::get<Leaf>(n.kind)) + "\n";
      return;
    }
    path.push_back(detail::split_condition(n.kind, false));
    self(self, n.left);
    path.back() = detail::split_condition(n.kind, true);
    self(self, n.right);
    path.pop_back();
  };
  visit(visit, tree.root());
  return out;
}

}  // namespace dtree
