#pragma once

#include <cstddef>
#include <span>

#include <nlohmann/json_fwd.hpp>

#include "evade/classifier.hpp"

namespace evade {

struct Confusion {
  std::size_t true_positive = 0;
  std::size_t false_positive = 0;
  std::size_t true_negative = 0;
  std::size_t false_negative = 0;
};

struct Evaluation {
  double roc_auc = 0.0;
  double f1 = 0.0;
  double precision = 0.0;
  double recall = 0.0;
  double accuracy = 0.0;
  Confusion confusion;
};

/// Mann-Whitney rank statistic; tied scores share their average rank.
/// Throws when `labels` holds a single class (AUC undefined).
double roc_auc(std::span<const double> scores, std::span<const int> labels);

/// Threshold metrics predict positive when score >= threshold.
Evaluation evaluate_scores(std::span<const double> scores, std::span<const int> labels, double threshold = 0.5);
Evaluation evaluate(const BinaryClassifier& model, const SparseMatrix& X, std::span<const int> labels,
                    double threshold = 0.5);

void to_json(nlohmann::json& j, const Evaluation& e);

}  // namespace evade
