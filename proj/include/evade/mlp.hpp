#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "evade/classifier.hpp"

namespace evade {

struct MlpConfig {
  /// Hidden layer widths; the output layer (width 1) is implicit.
  std::vector<std::size_t> hidden = {64, 32, 16, 32, 16, 32, 16};
  double learning_rate = 1e-3;
  std::size_t epochs = 20;
  std::size_t batch_size = 128;
  std::uint64_t seed = 0;
  double validation_fraction = 0.2;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;

  /// The seven hidden layers at full width: 512, 256, 128, 256, 128, 256, 128.
  static std::vector<std::size_t> full_width_hidden() { return {512, 256, 128, 256, 128, 256, 128}; }
};

/// Fully connected ReLU network with a single sigmoid output unit.
///
/// Layer l maps widths[l] inputs to widths[l + 1] outputs. Its weights are
/// stored input-major: weight(l, in, out) = weights[l][in * widths[l + 1] + out],
/// so one input's fan-out is contiguous and sparse inputs touch only their rows.
class MlpModel final : public BinaryClassifier {
 public:
  static constexpr int kFormatVersion = 1;

  MlpModel() = default;
  /// Zero-initialized network with the given layer widths (input first, output last).
  explicit MlpModel(std::vector<std::size_t> layer_widths);
  /// He-normal weights, zero biases.
  static MlpModel he_initialized(std::size_t input_width, const std::vector<std::size_t>& hidden,
                                 std::uint64_t seed);

  std::size_t input_width() const override { return widths_.front(); }
  const std::vector<std::size_t>& layer_widths() const noexcept { return widths_; }
  std::size_t layer_count() const noexcept { return weights_.size(); }

  std::vector<double>& weights(std::size_t layer) { return weights_[layer]; }
  const std::vector<double>& weights(std::size_t layer) const { return weights_[layer]; }
  std::vector<double>& biases(std::size_t layer) { return biases_[layer]; }
  const std::vector<double>& biases(std::size_t layer) const { return biases_[layer]; }
  double& weight(std::size_t layer, std::size_t in, std::size_t out) {
    return weights_[layer][in * widths_[layer + 1] + out];
  }

  /// Pre-sigmoid output.
  double logit(const SparseVector& x) const;
  double predict_proba(const SparseVector& x) const override;
  using BinaryClassifier::predict_proba;

  nlohmann::json to_json() const override;
  static MlpModel from_json(const nlohmann::json& j);

  friend bool operator==(const MlpModel& a, const MlpModel& b) {
    return a.widths_ == b.widths_ && a.weights_ == b.weights_ && a.biases_ == b.biases_;
  }

 private:
  std::vector<std::size_t> widths_;
  std::vector<std::vector<double>> weights_;
  std::vector<std::vector<double>> biases_;
};

/// Same shapes as the model's parameters.
struct MlpGradients {
  std::vector<std::vector<double>> weights;
  std::vector<std::vector<double>> biases;

  static MlpGradients zeros_like(const MlpModel& model);
};

/// Mean binary cross-entropy over the rows of `X` selected by `rows`
/// (all rows when empty), with gradients when `grad` is non-null.
double bce_loss(const MlpModel& model, const SparseMatrix& X, std::span<const int> y,
                std::span<const std::size_t> rows = {}, MlpGradients* grad = nullptr);

class AdamOptimizer {
 public:
  AdamOptimizer(const MlpModel& model, double learning_rate, double beta1 = 0.9, double beta2 = 0.999,
                double epsilon = 1e-8);
  void step(MlpModel& model, const MlpGradients& grad);
  std::size_t steps() const noexcept { return t_; }

 private:
  double lr_, beta1_, beta2_, eps_;
  std::size_t t_ = 0;
  MlpGradients m_;
  MlpGradients v_;
};

struct MlpTrainingHistory {
  std::vector<double> train_loss;
  std::vector<double> validation_loss;
  /// Epoch (1-based) whose parameters were kept; 0 means the last epoch.
  std::size_t selected_epoch = 0;
};

/// Adam on mean BCE with seeded shuffling. A validation split is held out
/// and the epoch with the lowest validation loss is kept. Throws
/// evade::Error("diverged at epoch N") on a non-finite loss.
MlpModel train_mlp(const SparseMatrix& X, std::span<const int> y, const MlpConfig& config,
                   MlpTrainingHistory* history = nullptr);

}  // namespace evade
