#pragma once

#include <filesystem>
#include <memory>
#include <span>
#include <vector>

#include <nlohmann/json_fwd.hpp>

#include "evade/features.hpp"

namespace evade {

/// Label convention for every classifier: 1 = malicious, 0 = benign.
using Labels = std::vector<int>;

/// Shared predict interface. Probabilities are P(malicious).
class BinaryClassifier {
 public:
  virtual ~BinaryClassifier() = default;

  virtual std::size_t input_width() const = 0;
  virtual double predict_proba(const SparseVector& x) const = 0;
  virtual nlohmann::json to_json() const = 0;

  double predict_proba(const FeatureVector& x) const;
  bool predict(const SparseVector& x, double threshold = 0.5) const {
    return predict_proba(x) >= threshold;
  }

 protected:
  void check_width(std::size_t width) const;
};

/// Loads a decision tree or MLP document written by `to_json`.
std::unique_ptr<BinaryClassifier> classifier_from_json(const nlohmann::json& j);

nlohmann::json read_json_file(const std::filesystem::path& path);
void write_json_file(const std::filesystem::path& path, const nlohmann::json& j);

}  // namespace evade
