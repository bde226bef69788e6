#include "evade/preprocess.hpp"

#include <algorithm>
#include <cmath>
#include <map>

#include <nlohmann/json.hpp>

#include "evade/error.hpp"

namespace evade {

std::ptrdiff_t PreprocessorModel::entry_index(std::string_view entry) const {
  auto it = std::lower_bound(entry_vocabulary.begin(), entry_vocabulary.end(), entry,
                             std::less<>{});
  if (it == entry_vocabulary.end() || *it != entry) return -1;
  return it - entry_vocabulary.begin();
}

namespace {

double median_of(std::vector<double> values) {
  if (values.empty()) return 0.0;
  const std::size_t mid = values.size() / 2;
  std::nth_element(values.begin(), values.begin() + static_cast<std::ptrdiff_t>(mid), values.end());
  const double upper = values[mid];
  if (values.size() % 2 == 1) return upper;
  const double lower = *std::max_element(values.begin(), values.begin() + static_cast<std::ptrdiff_t>(mid));
  return 0.5 * (lower + upper);
}

}  // namespace

PreprocessorModel fit_preprocessor(std::span<const SampleRecord> samples) {
  if (samples.empty()) throw Error("no training samples");
  PreprocessorModel model;
  for (std::size_t f = 0; f < kNumericFeatureCount; ++f) {
    std::vector<double> values;
    values.reserve(samples.size());
    for (const auto& s : samples)
      if (auto v = numeric_feature(s, f)) values.push_back(*v);
    double mean = 0.0;
    for (double v : values) mean += v;
    if (!values.empty()) mean /= static_cast<double>(values.size());
    double var = 0.0;
    for (double v : values) var += (v - mean) * (v - mean);
    if (!values.empty()) var /= static_cast<double>(values.size());
    const double sd = std::sqrt(var);
    model.numeric_means[f] = mean;
    model.numeric_scales[f] = sd > 0.0 ? sd : 1.0;
    model.numeric_medians[f] = median_of(std::move(values));
  }

  std::map<std::string, std::size_t> entry_counts;
  for (const auto& s : samples)
    if (s.entry_section) ++entry_counts[*s.entry_section];
  std::size_t best = 0;
  for (const auto& [name, count] : entry_counts) {
    model.entry_vocabulary.push_back(name);
    // Strict comparison keeps the lexicographically first name on ties.
    if (count > best) {
      best = count;
      model.entry_most_frequent = name;
    }
  }
  return model;
}

double feature_value(const PreprocessorModel& model, const SampleRecord& sample, std::size_t index) {
  if (index < kNumericFeatureCount) {
    const double raw = numeric_feature(sample, index).value_or(model.numeric_medians[index]);
    return (raw - model.numeric_means[index]) / model.numeric_scales[index];
  }
  if (index == model.bool_offset()) return sample.has_debug.value_or(false) ? 1.0 : 0.0;
  if (index == model.bool_offset() + 1) return sample.has_signature.value_or(false) ? 1.0 : 0.0;
  if (index < model.library_offset()) {
    const std::string& entry = sample.entry_section ? *sample.entry_section : model.entry_most_frequent;
    const auto pos = model.entry_index(entry);
    return (pos >= 0 && static_cast<std::size_t>(pos) == index - model.entry_offset()) ? 1.0 : 0.0;
  }
  const bool library = index < model.function_offset();
  const auto& set = library ? sample.imported_libraries : sample.imported_functions;
  const std::size_t dim = library ? model.library_hash_dim : model.function_hash_dim;
  const std::size_t bucket = index - (library ? model.library_offset() : model.function_offset());
  if (bucket >= dim) throw Error("feature index out of range: " + std::to_string(index));
  double count = 0.0;
  for (std::uint64_t h : set.hashes())
    if (h % dim == bucket) count += 1.0;
  return count;
}

SparseVector transform_sparse(const PreprocessorModel& model, const SampleRecord& sample) {
  SparseVector out;
  out.width = model.width();
  out.entries.reserve(kNumericFeatureCount + 3 + sample.imported_libraries.size() +
                      sample.imported_functions.size());
  for (std::size_t f = 0; f < kNumericFeatureCount; ++f) {
    const double v = feature_value(model, sample, f);
    if (v != 0.0) out.entries.push_back({static_cast<std::uint32_t>(f), v});
  }
  if (sample.has_debug.value_or(false))
    out.entries.push_back({static_cast<std::uint32_t>(model.bool_offset()), 1.0});
  if (sample.has_signature.value_or(false))
    out.entries.push_back({static_cast<std::uint32_t>(model.bool_offset() + 1), 1.0});
  const std::string& entry = sample.entry_section ? *sample.entry_section : model.entry_most_frequent;
  if (const auto pos = model.entry_index(entry); pos >= 0)
    out.entries.push_back({static_cast<std::uint32_t>(model.entry_offset() + static_cast<std::size_t>(pos)), 1.0});

  auto add_hashed = [&](const StringSet& set, std::size_t offset, std::size_t dim) {
    std::vector<std::uint32_t> buckets;
    buckets.reserve(set.size());
    for (std::uint64_t h : set.hashes()) buckets.push_back(static_cast<std::uint32_t>(offset + h % dim));
    std::sort(buckets.begin(), buckets.end());
    for (std::size_t i = 0; i < buckets.size();) {
      std::size_t j = i;
      while (j < buckets.size() && buckets[j] == buckets[i]) ++j;
      out.entries.push_back({buckets[i], static_cast<double>(j - i)});
      i = j;
    }
  };
  add_hashed(sample.imported_libraries, model.library_offset(), model.library_hash_dim);
  add_hashed(sample.imported_functions, model.function_offset(), model.function_hash_dim);
  return out;
}

FeatureVector transform(const PreprocessorModel& model, const SampleRecord& sample) {
  return transform_sparse(model, sample).to_dense();
}

SparseMatrix transform_all(const PreprocessorModel& model, std::span<const SampleRecord> samples) {
  SparseMatrix m;
  m.width = model.width();
  m.rows.reserve(samples.size());
  for (const auto& s : samples) m.rows.push_back(transform_sparse(model, s));
  return m;
}

void to_json(nlohmann::json& j, const PreprocessorModel& m) {
  j = {{"format", "evade.preprocessor"},
       {"version", PreprocessorModel::kFormatVersion},
       {"numeric_features", kNumericFeatureNames},
       {"numeric_medians", m.numeric_medians},
       {"numeric_means", m.numeric_means},
       {"numeric_scales", m.numeric_scales},
       {"entry_vocabulary", m.entry_vocabulary},
       {"entry_most_frequent", m.entry_most_frequent},
       {"library_hash_dim", m.library_hash_dim},
       {"function_hash_dim", m.function_hash_dim}};
}

PreprocessorModel preprocessor_from_json(const nlohmann::json& j) {
  if (j.value("format", "") != "evade.preprocessor")
    throw Error("not a preprocessor document");
  if (j.at("version").get<int>() != PreprocessorModel::kFormatVersion)
    throw Error("unsupported preprocessor version " + j.at("version").dump());
  PreprocessorModel m;
  m.numeric_medians = j.at("numeric_medians").get<decltype(m.numeric_medians)>();
  m.numeric_means = j.at("numeric_means").get<decltype(m.numeric_means)>();
  m.numeric_scales = j.at("numeric_scales").get<decltype(m.numeric_scales)>();
  m.entry_vocabulary = j.at("entry_vocabulary").get<std::vector<std::string>>();
  m.entry_most_frequent = j.at("entry_most_frequent").get<std::string>();
  m.library_hash_dim = j.at("library_hash_dim").get<std::size_t>();
  m.function_hash_dim = j.at("function_hash_dim").get<std::size_t>();
  if (!std::is_sorted(m.entry_vocabulary.begin(), m.entry_vocabulary.end()) ||
      std::adjacent_find(m.entry_vocabulary.begin(), m.entry_vocabulary.end()) != m.entry_vocabulary.end())
    throw Error("entry vocabulary must be sorted and unique");
  for (double s : m.numeric_scales)
    if (!(s > 0.0)) throw Error("numeric scales must be positive");
  if (m.library_hash_dim == 0 || m.function_hash_dim == 0) throw Error("hash dimensions must be positive");
  return m;
}

}  // namespace evade
