#pragma once

#include <functional>

#include "evade/classifier.hpp"
#include "evade/preprocess.hpp"
#include "evade/sample.hpp"

namespace evade {

class DecisionTreeModel;

/// The attacker's local verifier: says whether a (mutated) record would be
/// classified benign. Implementations are read-only and thread-safe.
class Surrogate {
 public:
  virtual ~Surrogate() = default;
  virtual bool is_benign(const SampleRecord& sample) const = 0;
};

/// A trained classifier behind the shared preprocessing pipeline. Benign
/// means predict_proba < threshold. Decision trees are evaluated lazily,
/// computing only the features on the decision path.
class ModelSurrogate final : public Surrogate {
 public:
  /// Both references must outlive the surrogate.
  ModelSurrogate(const PreprocessorModel& preprocessor, const BinaryClassifier& model, double threshold = 0.5);

  bool is_benign(const SampleRecord& sample) const override;
  double malicious_probability(const SampleRecord& sample) const;

 private:
  const PreprocessorModel& preprocessor_;
  const BinaryClassifier& model_;
  const DecisionTreeModel* tree_ = nullptr;
  double threshold_;
};

/// Arbitrary rule, e.g. "benign iff has_signature". Used for stub scenarios.
class PredicateSurrogate final : public Surrogate {
 public:
  explicit PredicateSurrogate(std::function<bool(const SampleRecord&)> benign) : benign_(std::move(benign)) {}
  bool is_benign(const SampleRecord& sample) const override { return benign_(sample); }

 private:
  std::function<bool(const SampleRecord&)> benign_;
};

}  // namespace evade
