#pragma once

#include <array>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json_fwd.hpp>

#include "evade/features.hpp"
#include "evade/sample.hpp"

namespace evade {

/// Fitted preprocessing pipeline shared by both classifiers.
///
/// Vector layout: [8 standardized numerics][has_debug, has_signature]
/// [entry one-hot][library hash buckets][function hash buckets].
struct PreprocessorModel {
  static constexpr int kFormatVersion = 1;

  std::array<double, kNumericFeatureCount> numeric_medians{};
  std::array<double, kNumericFeatureCount> numeric_means{};
  std::array<double, kNumericFeatureCount> numeric_scales{};
  std::vector<std::string> entry_vocabulary;  // sorted, unique
  std::string entry_most_frequent;
  std::size_t library_hash_dim = 1u << 10;
  std::size_t function_hash_dim = 1u << 13;

  std::size_t bool_offset() const noexcept { return kNumericFeatureCount; }
  std::size_t entry_offset() const noexcept { return kNumericFeatureCount + 2; }
  std::size_t library_offset() const noexcept { return entry_offset() + entry_vocabulary.size(); }
  std::size_t function_offset() const noexcept { return library_offset() + library_hash_dim; }
  std::size_t width() const noexcept { return function_offset() + function_hash_dim; }

  /// Position of `entry` in the vocabulary, or -1 when unknown.
  std::ptrdiff_t entry_index(std::string_view entry) const;

  friend bool operator==(const PreprocessorModel&, const PreprocessorModel&) = default;
};

/// Throws evade::Error("no training samples") on empty input.
PreprocessorModel fit_preprocessor(std::span<const SampleRecord> samples);

FeatureVector transform(const PreprocessorModel& model, const SampleRecord& sample);
SparseVector transform_sparse(const PreprocessorModel& model, const SampleRecord& sample);
SparseMatrix transform_all(const PreprocessorModel& model, std::span<const SampleRecord> samples);

/// Value of a single fused feature, computed without building the vector.
double feature_value(const PreprocessorModel& model, const SampleRecord& sample, std::size_t index);

/// Bucket an imported library or function name lands in.
inline std::size_t hash_bucket(std::string_view name, std::size_t dim) {
  return static_cast<std::size_t>(fnv1a64(name) % dim);
}

void to_json(nlohmann::json& j, const PreprocessorModel& model);
PreprocessorModel preprocessor_from_json(const nlohmann::json& j);

}  // namespace evade
