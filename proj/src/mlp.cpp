#include "evade/mlp.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

#include <nlohmann/json.hpp>

#include "evade/error.hpp"
#include "evade/random.hpp"

namespace evade {

MlpModel::MlpModel(std::vector<std::size_t> layer_widths) : widths_(std::move(layer_widths)) {
  if (widths_.size() < 2) throw ConfigError("an MLP needs an input and an output layer");
  if (widths_.back() != 1) throw ConfigError("MLP output layer must have width 1");
  for (auto w : widths_)
    if (w == 0) throw ConfigError("MLP layer widths must be positive");
  for (std::size_t l = 0; l + 1 < widths_.size(); ++l) {
    weights_.emplace_back(widths_[l] * widths_[l + 1], 0.0);
    biases_.emplace_back(widths_[l + 1], 0.0);
  }
}

MlpModel MlpModel::he_initialized(std::size_t input_width, const std::vector<std::size_t>& hidden,
                                  std::uint64_t seed) {
  std::vector<std::size_t> widths = {input_width};
  widths.insert(widths.end(), hidden.begin(), hidden.end());
  widths.push_back(1);
  MlpModel model(std::move(widths));
  Rng rng(seed);
  for (std::size_t l = 0; l < model.weights_.size(); ++l) {
    const double sd = std::sqrt(2.0 / static_cast<double>(model.widths_[l]));
    for (auto& w : model.weights_[l]) w = sd * rng.normal();
  }
  return model;
}

namespace {

double sigmoid(double z) {
  if (z >= 0.0) return 1.0 / (1.0 + std::exp(-z));
  const double e = std::exp(z);
  return e / (1.0 + e);
}

/// log(1 + exp(z)) without overflow.
double softplus(double z) { return std::max(z, 0.0) + std::log1p(std::exp(-std::abs(z))); }

/// Pre-activations of every layer for one input (z[l] has widths[l + 1] entries).
struct ForwardPass {
  std::vector<std::vector<double>> z;
};

void forward(const MlpModel& model, const SparseVector& x, ForwardPass& pass) {
  const auto& widths = model.layer_widths();
  const std::size_t layers = model.layer_count();
  pass.z.resize(layers);
  for (std::size_t l = 0; l < layers; ++l) {
    const std::size_t out = widths[l + 1];
    auto& z = pass.z[l];
    z.assign(model.biases(l).begin(), model.biases(l).end());
    const double* w = model.weights(l).data();
    if (l == 0) {
      for (const auto& e : x.entries) {
        const double* row = w + static_cast<std::size_t>(e.index) * out;
        for (std::size_t o = 0; o < out; ++o) z[o] += e.value * row[o];
      }
    } else {
      const auto& prev = pass.z[l - 1];
      for (std::size_t i = 0; i < widths[l]; ++i) {
        const double a = prev[i] > 0.0 ? prev[i] : 0.0;
        if (a == 0.0) continue;
        const double* row = w + i * out;
        for (std::size_t o = 0; o < out; ++o) z[o] += a * row[o];
      }
    }
  }
}

}  // namespace

double MlpModel::logit(const SparseVector& x) const {
  check_width(x.width);
  ForwardPass pass;
  forward(*this, x, pass);
  return pass.z.back()[0];
}

double MlpModel::predict_proba(const SparseVector& x) const {
  constexpr double kTiny = 0x1.0p-53;
  return std::clamp(sigmoid(logit(x)), kTiny, 1.0 - kTiny);
}

nlohmann::json MlpModel::to_json() const {
  return {{"format", "evade.mlp"},
          {"version", kFormatVersion},
          {"activation", "relu"},
          {"output", "sigmoid"},
          {"layout", "input-major"},
          {"layer_widths", widths_},
          {"weights", weights_},
          {"biases", biases_}};
}

MlpModel MlpModel::from_json(const nlohmann::json& j) {
  if (j.value("format", "") != "evade.mlp") throw Error("not an MLP document");
  if (j.at("version").get<int>() != kFormatVersion) throw Error("unsupported MLP version");
  MlpModel model(j.at("layer_widths").get<std::vector<std::size_t>>());
  auto weights = j.at("weights").get<std::vector<std::vector<double>>>();
  auto biases = j.at("biases").get<std::vector<std::vector<double>>>();
  if (weights.size() != model.weights_.size() || biases.size() != model.biases_.size())
    throw Error("MLP document has the wrong number of layers");
  for (std::size_t l = 0; l < weights.size(); ++l) {
    if (weights[l].size() != model.weights_[l].size() || biases[l].size() != model.biases_[l].size())
      throw Error("MLP layer " + std::to_string(l) + " has mismatched shapes");
  }
  model.weights_ = std::move(weights);
  model.biases_ = std::move(biases);
  return model;
}

MlpGradients MlpGradients::zeros_like(const MlpModel& model) {
  MlpGradients g;
  for (std::size_t l = 0; l < model.layer_count(); ++l) {
    g.weights.emplace_back(model.weights(l).size(), 0.0);
    g.biases.emplace_back(model.biases(l).size(), 0.0);
  }
  return g;
}

double bce_loss(const MlpModel& model, const SparseMatrix& X, std::span<const int> y,
                std::span<const std::size_t> rows, MlpGradients* grad) {
  if (X.size() != y.size()) throw Error("feature rows and labels differ in length");
  std::vector<std::size_t> all;
  if (rows.empty()) {
    all.resize(X.size());
    std::iota(all.begin(), all.end(), 0);
    rows = all;
  }
  if (rows.empty()) return 0.0;
  const auto& widths = model.layer_widths();
  const std::size_t layers = model.layer_count();
  const double scale = 1.0 / static_cast<double>(rows.size());

  ForwardPass pass;
  std::vector<double> delta;
  std::vector<double> prev_delta;
  double total = 0.0;
  for (auto r : rows) {
    const auto& x = X.rows[r];
    if (x.width != model.input_width()) throw Error("input width does not match the model");
    forward(model, x, pass);
    total += softplus(pass.z.back()[0]) - static_cast<double>(y[r]) * pass.z.back()[0];
    if (!grad) continue;

    delta.assign(1, (sigmoid(pass.z.back()[0]) - static_cast<double>(y[r])) * scale);
    for (std::size_t l = layers; l-- > 0;) {
      const std::size_t out = widths[l + 1];
      auto& gb = grad->biases[l];
      auto& gw = grad->weights[l];
      for (std::size_t o = 0; o < out; ++o) gb[o] += delta[o];
      if (l == 0) {
        for (const auto& e : x.entries) {
          double* row = gw.data() + static_cast<std::size_t>(e.index) * out;
          for (std::size_t o = 0; o < out; ++o) row[o] += e.value * delta[o];
        }
        break;
      }
      const auto& z_prev = pass.z[l - 1];
      const auto& w = model.weights(l);
      prev_delta.assign(widths[l], 0.0);
      for (std::size_t i = 0; i < widths[l]; ++i) {
        if (z_prev[i] <= 0.0) continue;
        const double a = z_prev[i];
        const double* wrow = w.data() + i * out;
        double* grow = gw.data() + i * out;
        double back = 0.0;
        for (std::size_t o = 0; o < out; ++o) {
          grow[o] += a * delta[o];
          back += wrow[o] * delta[o];
        }
        prev_delta[i] = back;
      }
      delta.swap(prev_delta);
    }
  }
  return total * scale;
}

AdamOptimizer::AdamOptimizer(const MlpModel& model, double learning_rate, double beta1, double beta2,
                             double epsilon)
    : lr_(learning_rate),
      beta1_(beta1),
      beta2_(beta2),
      eps_(epsilon),
      m_(MlpGradients::zeros_like(model)),
      v_(MlpGradients::zeros_like(model)) {
  if (!(learning_rate > 0.0)) throw ConfigError("learning rate must be positive");
  if (!(beta1 >= 0.0 && beta1 < 1.0) || !(beta2 >= 0.0 && beta2 < 1.0))
    throw ConfigError("Adam betas must lie in [0, 1)");
}

void AdamOptimizer::step(MlpModel& model, const MlpGradients& grad) {
  ++t_;
  const double c1 = 1.0 - std::pow(beta1_, static_cast<double>(t_));
  const double c2 = 1.0 - std::pow(beta2_, static_cast<double>(t_));
  auto update = [&](std::vector<double>& param, const std::vector<double>& g, std::vector<double>& m,
                    std::vector<double>& v) {
    for (std::size_t i = 0; i < param.size(); ++i) {
      m[i] = beta1_ * m[i] + (1.0 - beta1_) * g[i];
      v[i] = beta2_ * v[i] + (1.0 - beta2_) * g[i] * g[i];
      param[i] -= lr_ * (m[i] / c1) / (std::sqrt(v[i] / c2) + eps_);
    }
  };
  for (std::size_t l = 0; l < model.layer_count(); ++l) {
    update(model.weights(l), grad.weights[l], m_.weights[l], v_.weights[l]);
    update(model.biases(l), grad.biases[l], m_.biases[l], v_.biases[l]);
  }
}

MlpModel train_mlp(const SparseMatrix& X, std::span<const int> y, const MlpConfig& config,
                   MlpTrainingHistory* history) {
  if (X.size() != y.size()) throw Error("feature rows and labels differ in length");
  if (X.size() < 2) throw Error("MLP training needs at least two samples");
  for (int label : y)
    if (label != 0 && label != 1) throw Error("labels must be 0 or 1");
  if (config.batch_size == 0) throw ConfigError("batch_size must be positive");
  if (!(config.validation_fraction >= 0.0 && config.validation_fraction < 1.0))
    throw ConfigError("validation_fraction must lie in [0, 1)");

  MlpModel model = MlpModel::he_initialized(X.width, config.hidden, derive_seed(config.seed, 1));
  if (config.epochs == 0) return model;

  std::vector<std::size_t> order(X.size());
  std::iota(order.begin(), order.end(), 0);
  Rng rng(derive_seed(config.seed, 2));
  auto shuffle = [&](std::vector<std::size_t>& v) {
    for (std::size_t i = v.size(); i > 1; --i) std::swap(v[i - 1], v[rng.uniform_index(i)]);
  };
  shuffle(order);
  const auto n_val = static_cast<std::size_t>(
      std::llround(config.validation_fraction * static_cast<double>(order.size())));
  std::vector<std::size_t> val(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(n_val));
  std::vector<std::size_t> train(order.begin() + static_cast<std::ptrdiff_t>(n_val), order.end());
  if (train.empty()) throw ConfigError("validation split leaves no training samples");

  AdamOptimizer adam(model, config.learning_rate, config.beta1, config.beta2, config.epsilon);
  MlpGradients grad = MlpGradients::zeros_like(model);
  MlpModel best = model;
  double best_val = std::numeric_limits<double>::infinity();
  MlpTrainingHistory local;
  MlpTrainingHistory& hist = history ? *history : local;
  hist = {};

  for (std::size_t epoch = 1; epoch <= config.epochs; ++epoch) {
    shuffle(train);
    double epoch_loss = 0.0;
    for (std::size_t start = 0; start < train.size(); start += config.batch_size) {
      const std::size_t stop = std::min(train.size(), start + config.batch_size);
      std::span<const std::size_t> batch(train.data() + start, stop - start);
      for (auto& g : grad.weights) std::fill(g.begin(), g.end(), 0.0);
      for (auto& g : grad.biases) std::fill(g.begin(), g.end(), 0.0);
      const double loss = bce_loss(model, X, y, batch, &grad);
      if (!std::isfinite(loss)) throw Error("diverged at epoch " + std::to_string(epoch));
      epoch_loss += loss * static_cast<double>(batch.size());
      adam.step(model, grad);
    }
    hist.train_loss.push_back(epoch_loss / static_cast<double>(train.size()));
    if (val.empty()) continue;
    const double val_loss = bce_loss(model, X, y, val);
    if (!std::isfinite(val_loss)) throw Error("diverged at epoch " + std::to_string(epoch));
    hist.validation_loss.push_back(val_loss);
    if (val_loss < best_val) {
      best_val = val_loss;
      best = model;
      hist.selected_epoch = epoch;
    }
  }
  return val.empty() ? model : best;
}

}  // namespace evade
