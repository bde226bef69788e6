#pragma once

#include <cstdint>
#include <span>
#include <vector>

namespace evade {

/// Dense fused feature vector.
struct FeatureVector {
  std::vector<double> values;

  std::size_t size() const noexcept { return values.size(); }
  friend bool operator==(const FeatureVector&, const FeatureVector&) = default;
};

struct SparseEntry {
  std::uint32_t index;
  double value;

  friend bool operator==(const SparseEntry&, const SparseEntry&) = default;
};

/// Nonzero entries of a feature vector, sorted by index.
struct SparseVector {
  std::size_t width = 0;
  std::vector<SparseEntry> entries;

  double at(std::uint32_t index) const;
  FeatureVector to_dense() const;
  static SparseVector from_dense(std::span<const double> values);

  friend bool operator==(const SparseVector&, const SparseVector&) = default;
};

/// Row-major collection of sparse rows sharing one width.
struct SparseMatrix {
  std::size_t width = 0;
  std::vector<SparseVector> rows;

  std::size_t size() const noexcept { return rows.size(); }
  void push_back(SparseVector row);
  static SparseMatrix from_dense(const std::vector<std::vector<double>>& rows);
};

}  // namespace evade
