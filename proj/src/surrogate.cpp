#include "evade/surrogate.hpp"

#include "evade/decision_tree.hpp"
#include "evade/error.hpp"

namespace evade {

ModelSurrogate::ModelSurrogate(const PreprocessorModel& preprocessor, const BinaryClassifier& model,
                               double threshold)
    : preprocessor_(preprocessor),
      model_(model),
      tree_(dynamic_cast<const DecisionTreeModel*>(&model)),
      threshold_(threshold) {
  if (model.input_width() != preprocessor.width())
    throw Error("model input width " + std::to_string(model.input_width()) +
                " does not match preprocessor width " + std::to_string(preprocessor.width()));
}

double ModelSurrogate::malicious_probability(const SampleRecord& sample) const {
  if (tree_) return tree_->predict_with([&](std::size_t f) { return feature_value(preprocessor_, sample, f); });
  return model_.predict_proba(transform_sparse(preprocessor_, sample));
}

bool ModelSurrogate::is_benign(const SampleRecord& sample) const {
  return malicious_probability(sample) < threshold_;
}

}  // namespace evade
