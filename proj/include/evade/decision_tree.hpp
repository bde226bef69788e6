#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "evade/classifier.hpp"

namespace evade {

struct TreeConfig {
  int max_depth = 12;
  std::size_t min_samples_leaf = 1;
};

/// CART classifier grown with Gini impurity. Samples go left when
/// x[feature] <= threshold.
class DecisionTreeModel final : public BinaryClassifier {
 public:
  static constexpr int kFormatVersion = 1;

  struct Node {
    std::int32_t feature = -1;  // -1 marks a leaf
    double threshold = 0.0;
    std::int32_t left = -1;
    std::int32_t right = -1;
    double leaf_probability = 0.0;  // fraction of malicious training samples
    std::size_t samples = 0;
  };

  DecisionTreeModel() = default;
  DecisionTreeModel(std::size_t input_width, int max_depth, std::vector<Node> nodes);

  std::size_t input_width() const override { return input_width_; }
  int max_depth() const noexcept { return max_depth_; }
  const std::vector<Node>& nodes() const noexcept { return nodes_; }
  /// Longest root-to-leaf edge count.
  int depth() const;

  double predict_proba(const SparseVector& x) const override;
  using BinaryClassifier::predict_proba;

  /// Index of the leaf `x` lands in.
  template <class FeatureFn>
  std::size_t leaf_for(FeatureFn&& feature) const {
    std::size_t i = 0;
    while (nodes_[i].feature >= 0) {
      const auto& n = nodes_[i];
      i = static_cast<std::size_t>(feature(static_cast<std::size_t>(n.feature)) <= n.threshold ? n.left : n.right);
    }
    return i;
  }

  /// Predicts through a lazy feature accessor `double(std::size_t index)`;
  /// only the features on the decision path are requested.
  template <class FeatureFn>
  double predict_with(FeatureFn&& feature) const {
    return nodes_[leaf_for(std::forward<FeatureFn>(feature))].leaf_probability;
  }

  nlohmann::json to_json() const override;
  static DecisionTreeModel from_json(const nlohmann::json& j);

 private:
  std::size_t input_width_ = 0;
  int max_depth_ = 12;
  std::vector<Node> nodes_;
};

/// Greedy CART growth. Requires at least two samples and both classes.
DecisionTreeModel train_decision_tree(const SparseMatrix& X, std::span<const int> y,
                                      const TreeConfig& config = {});

}  // namespace evade
