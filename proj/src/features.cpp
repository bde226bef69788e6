#include "evade/features.hpp"

#include <algorithm>

#include "evade/error.hpp"

namespace evade {

double SparseVector::at(std::uint32_t index) const {
  auto it = std::lower_bound(entries.begin(), entries.end(), index,
                             [](const SparseEntry& e, std::uint32_t i) { return e.index < i; });
  return (it != entries.end() && it->index == index) ? it->value : 0.0;
}

FeatureVector SparseVector::to_dense() const {
  FeatureVector out{std::vector<double>(width, 0.0)};
  for (const auto& e : entries) out.values[e.index] = e.value;
  return out;
}

SparseVector SparseVector::from_dense(std::span<const double> values) {
  SparseVector out;
  out.width = values.size();
  for (std::size_t i = 0; i < values.size(); ++i)
    if (values[i] != 0.0) out.entries.push_back({static_cast<std::uint32_t>(i), values[i]});
  return out;
}

void SparseMatrix::push_back(SparseVector row) {
  if (rows.empty() && width == 0) width = row.width;
  if (row.width != width)
    throw Error("row width " + std::to_string(row.width) + " does not match matrix width " +
                std::to_string(width));
  rows.push_back(std::move(row));
}

SparseMatrix SparseMatrix::from_dense(const std::vector<std::vector<double>>& rows) {
  SparseMatrix m;
  for (const auto& r : rows) m.push_back(SparseVector::from_dense(r));
  return m;
}

}  // namespace evade
