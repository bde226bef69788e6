#include "evade/decision_tree.hpp"

#include <algorithm>
#include <numeric>

#include <nlohmann/json.hpp>

#include "evade/error.hpp"

namespace evade {

DecisionTreeModel::DecisionTreeModel(std::size_t input_width, int max_depth, std::vector<Node> nodes)
    : input_width_(input_width), max_depth_(max_depth), nodes_(std::move(nodes)) {
  if (nodes_.empty()) throw Error("decision tree needs at least one node");
  const auto count = static_cast<std::int32_t>(nodes_.size());
  for (const auto& n : nodes_) {
    if (n.feature < 0) {
      if (!(n.leaf_probability >= 0.0 && n.leaf_probability <= 1.0))
        throw Error("leaf probability outside [0, 1]");
      continue;
    }
    if (static_cast<std::size_t>(n.feature) >= input_width_) throw Error("node feature index out of range");
    if (n.left <= 0 || n.left >= count || n.right <= 0 || n.right >= count)
      throw Error("node child index out of range");
  }
  if (depth() > max_depth_) throw Error("tree deeper than its max_depth");
}

int DecisionTreeModel::depth() const {
  int best = 0;
  std::vector<std::pair<std::size_t, int>> stack = {{0, 0}};
  while (!stack.empty()) {
    auto [i, d] = stack.back();
    stack.pop_back();
    if (d > static_cast<int>(nodes_.size())) throw Error("decision tree contains a cycle");
    best = std::max(best, d);
    if (nodes_[i].feature >= 0) {
      stack.push_back({static_cast<std::size_t>(nodes_[i].left), d + 1});
      stack.push_back({static_cast<std::size_t>(nodes_[i].right), d + 1});
    }
  }
  return best;
}

double DecisionTreeModel::predict_proba(const SparseVector& x) const {
  check_width(x.width);
  return predict_with([&](std::size_t f) { return x.at(static_cast<std::uint32_t>(f)); });
}

nlohmann::json DecisionTreeModel::to_json() const {
  nlohmann::json nodes = nlohmann::json::array();
  for (const auto& n : nodes_) {
    nodes.push_back({{"feature", n.feature},
                     {"threshold", n.threshold},
                     {"left", n.left},
                     {"right", n.right},
                     {"leaf_probability", n.leaf_probability},
                     {"samples", n.samples}});
  }
  return {{"format", "evade.decision_tree"},
          {"version", kFormatVersion},
          {"input_width", input_width_},
          {"max_depth", max_depth_},
          {"nodes", std::move(nodes)}};
}

DecisionTreeModel DecisionTreeModel::from_json(const nlohmann::json& j) {
  if (j.value("format", "") != "evade.decision_tree") throw Error("not a decision tree document");
  if (j.at("version").get<int>() != kFormatVersion) throw Error("unsupported decision tree version");
  std::vector<Node> nodes;
  for (const auto& n : j.at("nodes")) {
    nodes.push_back({n.at("feature").get<std::int32_t>(), n.at("threshold").get<double>(),
                     n.at("left").get<std::int32_t>(), n.at("right").get<std::int32_t>(),
                     n.at("leaf_probability").get<double>(), n.value("samples", std::size_t{0})});
  }
  return DecisionTreeModel(j.at("input_width").get<std::size_t>(), j.at("max_depth").get<int>(),
                           std::move(nodes));
}

namespace {

double gini(std::size_t pos, std::size_t n) {
  if (n == 0) return 0.0;
  const double p = static_cast<double>(pos) / static_cast<double>(n);
  return 2.0 * p * (1.0 - p);
}

struct Split {
  std::size_t column = 0;
  double threshold = 0.0;
  double gain = -1.0;
};

class TreeBuilder {
 public:
  TreeBuilder(const SparseMatrix& X, std::span<const int> y, const TreeConfig& config)
      : y_(y), config_(config) {
    std::vector<char> seen(X.width, 0);
    for (const auto& row : X.rows)
      for (const auto& e : row.entries) seen[e.index] = 1;
    for (std::size_t f = 0; f < X.width; ++f)
      if (seen[f]) features_.push_back(f);
    columns_.assign(features_.size(), std::vector<double>(X.size(), 0.0));
    std::vector<std::ptrdiff_t> slot(X.width, -1);
    for (std::size_t c = 0; c < features_.size(); ++c) slot[features_[c]] = static_cast<std::ptrdiff_t>(c);
    for (std::size_t r = 0; r < X.size(); ++r)
      for (const auto& e : X.rows[r].entries) columns_[static_cast<std::size_t>(slot[e.index])][r] = e.value;
  }

  std::vector<DecisionTreeModel::Node> build() {
    std::vector<std::size_t> all(y_.size());
    std::iota(all.begin(), all.end(), 0);
    nodes_.clear();
    nodes_.emplace_back();
    struct Task {
      std::size_t node;
      std::vector<std::size_t> rows;
      int depth;
    };
    std::vector<Task> stack;
    stack.push_back({0, std::move(all), 0});
    while (!stack.empty()) {
      Task task = std::move(stack.back());
      stack.pop_back();
      const auto& rows = task.rows;
      std::size_t pos = 0;
      for (auto r : rows) pos += y_[r] == 1;
      auto& node = nodes_[task.node];
      node.samples = rows.size();
      node.leaf_probability = static_cast<double>(pos) / static_cast<double>(rows.size());

      const bool pure = pos == 0 || pos == rows.size();
      if (pure || task.depth >= config_.max_depth || rows.size() < 2 * config_.min_samples_leaf) continue;
      const Split split = best_split(rows, pos);
      if (split.gain < 0.0) continue;

      std::vector<std::size_t> left;
      std::vector<std::size_t> right;
      const auto& col = columns_[split.column];
      for (auto r : rows) (col[r] <= split.threshold ? left : right).push_back(r);

      const auto left_id = static_cast<std::int32_t>(nodes_.size());
      nodes_.emplace_back();
      nodes_.emplace_back();
      auto& parent = nodes_[task.node];
      parent.feature = static_cast<std::int32_t>(features_[split.column]);
      parent.threshold = split.threshold;
      parent.left = left_id;
      parent.right = left_id + 1;
      // Right pushed first so the left subtree is grown first.
      stack.push_back({static_cast<std::size_t>(left_id + 1), std::move(right), task.depth + 1});
      stack.push_back({static_cast<std::size_t>(left_id), std::move(left), task.depth + 1});
    }
    return std::move(nodes_);
  }

 private:
  /// Best impurity decrease over all (feature, midpoint) candidates; ties keep
  /// the lowest feature index, then the lowest threshold. gain < 0 if none.
  Split best_split(const std::vector<std::size_t>& rows, std::size_t pos) const {
    const std::size_t n = rows.size();
    const double parent = gini(pos, n);
    Split best;
    std::vector<std::pair<double, int>> sorted(n);
    for (std::size_t c = 0; c < columns_.size(); ++c) {
      const auto& col = columns_[c];
      for (std::size_t i = 0; i < n; ++i) sorted[i] = {col[rows[i]], y_[rows[i]]};
      std::sort(sorted.begin(), sorted.end());
      if (sorted.front().first == sorted.back().first) continue;
      std::size_t left_pos = 0;
      for (std::size_t i = 0; i + 1 < n; ++i) {
        left_pos += sorted[i].second == 1;
        if (sorted[i].first == sorted[i + 1].first) continue;
        const std::size_t nl = i + 1;
        const std::size_t nr = n - nl;
        if (nl < config_.min_samples_leaf || nr < config_.min_samples_leaf) continue;
        const double weighted = (static_cast<double>(nl) * gini(left_pos, nl) +
                                 static_cast<double>(nr) * gini(pos - left_pos, nr)) /
                                static_cast<double>(n);
        const double gain = parent - weighted;
        if (gain > best.gain) {
          const double lo = sorted[i].first;
          const double hi = sorted[i + 1].first;
          double mid = lo + (hi - lo) / 2.0;
          if (!(mid < hi)) mid = lo;
          best = {c, mid, gain};
        }
      }
    }
    return best;
  }

  std::span<const int> y_;
  TreeConfig config_;
  std::vector<std::size_t> features_;
  std::vector<std::vector<double>> columns_;
  std::vector<DecisionTreeModel::Node> nodes_;
};

}  // namespace

DecisionTreeModel train_decision_tree(const SparseMatrix& X, std::span<const int> y, const TreeConfig& config) {
  if (X.size() != y.size()) throw Error("feature rows and labels differ in length");
  if (X.size() < 2) throw Error("decision tree needs at least two samples");
  if (config.max_depth < 0) throw ConfigError("max_depth must be non-negative");
  if (config.min_samples_leaf < 1) throw ConfigError("min_samples_leaf must be at least 1");
  const auto pos = std::count(y.begin(), y.end(), 1);
  const auto neg = std::count(y.begin(), y.end(), 0);
  if (pos + neg != static_cast<std::ptrdiff_t>(y.size())) throw Error("labels must be 0 or 1");
  if (pos == 0 || neg == 0) throw Error("training labels contain a single class");
  TreeBuilder builder(X, y, config);
  return DecisionTreeModel(X.width, config.max_depth, builder.build());
}

}  // namespace evade
