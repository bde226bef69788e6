#include "evade/metrics.hpp"

#include <algorithm>
#include <numeric>
#include <vector>

#include <nlohmann/json.hpp>

#include "evade/error.hpp"

namespace evade {

double roc_auc(std::span<const double> scores, std::span<const int> labels) {
  if (scores.size() != labels.size()) throw Error("scores and labels differ in length");
  const auto n = scores.size();
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(), [&](auto a, auto b) { return scores[a] < scores[b]; });

  double positive_rank_sum = 0.0;
  std::size_t positives = 0;
  for (std::size_t i = 0; i < n;) {
    std::size_t j = i;
    while (j < n && scores[order[j]] == scores[order[i]]) ++j;
    const double avg_rank = 0.5 * static_cast<double>(i + 1 + j);  // ranks i+1 .. j
    for (std::size_t k = i; k < j; ++k) {
      if (labels[order[k]] == 1) {
        positive_rank_sum += avg_rank;
        ++positives;
      }
    }
    i = j;
  }
  const std::size_t negatives = n - positives;
  if (positives == 0 || negatives == 0) throw Error("ROC-AUC undefined: labels contain a single class");
  const double p = static_cast<double>(positives);
  return (positive_rank_sum - p * (p + 1.0) / 2.0) / (p * static_cast<double>(negatives));
}

Evaluation evaluate_scores(std::span<const double> scores, std::span<const int> labels, double threshold) {
  if (scores.empty()) throw Error("evaluation needs at least one labelled sample");
  Evaluation e;
  e.roc_auc = roc_auc(scores, labels);
  auto& c = e.confusion;
  for (std::size_t i = 0; i < scores.size(); ++i) {
    const bool predicted = scores[i] >= threshold;
    const bool actual = labels[i] == 1;
    if (predicted && actual) ++c.true_positive;
    else if (predicted) ++c.false_positive;
    else if (actual) ++c.false_negative;
    else ++c.true_negative;
  }
  const auto tp = static_cast<double>(c.true_positive);
  const double predicted_pos = tp + static_cast<double>(c.false_positive);
  const double actual_pos = tp + static_cast<double>(c.false_negative);
  e.precision = predicted_pos > 0 ? tp / predicted_pos : 0.0;
  e.recall = actual_pos > 0 ? tp / actual_pos : 0.0;
  e.f1 = (e.precision + e.recall) > 0 ? 2.0 * e.precision * e.recall / (e.precision + e.recall) : 0.0;
  e.accuracy = (tp + static_cast<double>(c.true_negative)) / static_cast<double>(scores.size());
  return e;
}

Evaluation evaluate(const BinaryClassifier& model, const SparseMatrix& X, std::span<const int> labels,
                    double threshold) {
  if (X.size() != labels.size()) throw Error("feature rows and labels differ in length");
  std::vector<double> scores;
  scores.reserve(X.size());
  for (const auto& row : X.rows) scores.push_back(model.predict_proba(row));
  return evaluate_scores(scores, labels, threshold);
}

void to_json(nlohmann::json& j, const Evaluation& e) {
  j = {{"roc_auc", e.roc_auc},
       {"f1", e.f1},
       {"precision", e.precision},
       {"recall", e.recall},
       {"accuracy", e.accuracy},
       {"confusion",
        {{"true_positive", e.confusion.true_positive},
         {"false_positive", e.confusion.false_positive},
         {"true_negative", e.confusion.true_negative},
         {"false_negative", e.confusion.false_negative}}}};
}

}  // namespace evade
