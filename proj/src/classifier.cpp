#include "evade/classifier.hpp"

#include <fstream>

#include <nlohmann/json.hpp>

#include "evade/decision_tree.hpp"
#include "evade/error.hpp"
#include "evade/mlp.hpp"

namespace evade {

double BinaryClassifier::predict_proba(const FeatureVector& x) const {
  check_width(x.size());
  return predict_proba(SparseVector::from_dense(x.values));
}

void BinaryClassifier::check_width(std::size_t width) const {
  if (width != input_width())
    throw Error("input width " + std::to_string(width) + " does not match model width " +
                std::to_string(input_width()));
}

std::unique_ptr<BinaryClassifier> classifier_from_json(const nlohmann::json& j) {
  const auto format = j.value("format", "");
  if (format == "evade.decision_tree") return std::make_unique<DecisionTreeModel>(DecisionTreeModel::from_json(j));
  if (format == "evade.mlp") return std::make_unique<MlpModel>(MlpModel::from_json(j));
  throw Error("unknown model format '" + format + "'");
}

nlohmann::json read_json_file(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error("cannot read " + path.string());
  try {
    return nlohmann::json::parse(in);
  } catch (const nlohmann::json::exception& e) {
    throw Error(path.string() + ": " + e.what());
  }
}

void write_json_file(const std::filesystem::path& path, const nlohmann::json& j) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot write " + path.string());
  out << j.dump(1) << '\n';
  if (!out) throw Error("write failed for " + path.string());
}

}  // namespace evade
