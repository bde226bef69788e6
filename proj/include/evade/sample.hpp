#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <memory>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json_fwd.hpp>

namespace evade {

/// 64-bit FNV-1a over the raw bytes of `text`.
constexpr std::uint64_t fnv1a64(std::string_view text) noexcept {
  std::uint64_t hash = 0xcbf29ce484222325ULL;
  for (unsigned char c : text) {
    hash ^= c;
    hash *= 0x100000001b3ULL;
  }
  return hash;
}

/// Sorted set of strings with value semantics and cheap copies.
///
/// The payload is shared and immutable; `insert` clones it when another
/// copy still refers to it. Each element's FNV-1a hash is stored next to
/// it so feature hashing never rehashes the strings.
class StringSet {
 public:
  StringSet() = default;
  StringSet(std::initializer_list<std::string> items);
  explicit StringSet(std::vector<std::string> items);

  std::size_t size() const noexcept { return data_ ? data_->items.size() : 0; }
  bool empty() const noexcept { return size() == 0; }
  bool contains(std::string_view item) const;
  /// Returns false when the item was already present.
  bool insert(std::string item);

  const std::vector<std::string>& items() const noexcept;
  const std::vector<std::uint64_t>& hashes() const noexcept;

  auto begin() const noexcept { return items().begin(); }
  auto end() const noexcept { return items().end(); }

  friend bool operator==(const StringSet& a, const StringSet& b) {
    return a.items() == b.items();
  }

 private:
  struct Payload {
    std::vector<std::string> items;
    std::vector<std::uint64_t> hashes;
  };
  std::shared_ptr<const Payload> data_;
};

enum class Label { malicious, benign, unknown };

std::string_view to_string(Label label) noexcept;

/// Raw static features of one PE binary, in the EMBER JSON vocabulary.
/// Absent fields are empty optionals.
struct SampleRecord {
  std::string sample_id;
  Label label = Label::unknown;
  std::optional<double> strings_entropy;
  std::optional<std::int64_t> num_strings;
  std::optional<std::int64_t> file_size;
  std::optional<std::int64_t> num_exports;
  std::optional<std::int64_t> num_imports;
  std::optional<std::int64_t> timestamp;
  std::optional<std::int64_t> size_of_code;
  std::optional<std::int64_t> num_sections;
  std::optional<bool> has_debug;
  std::optional<bool> has_signature;
  std::optional<std::string> entry_section;
  StringSet imported_libraries;
  /// "library:function" strings.
  StringSet imported_functions;

  friend bool operator==(const SampleRecord&, const SampleRecord&) = default;
};

/// Order of the numeric block in the fused feature vector.
inline constexpr std::size_t kNumericFeatureCount = 8;
inline constexpr std::array<std::string_view, kNumericFeatureCount> kNumericFeatureNames = {
    "strings_entropy", "num_strings", "file_size",    "timestamp",
    "size_of_code",    "num_sections", "num_exports", "num_imports"};

/// Numeric feature `index` (in kNumericFeatureNames order), if present.
std::optional<double> numeric_feature(const SampleRecord& sample, std::size_t index);

/// Throws evade::Error if a present field violates the record invariants.
void validate(const SampleRecord& sample);

void to_json(nlohmann::json& j, const SampleRecord& sample);
SampleRecord sample_from_json(const nlohmann::json& j);

struct JsonlIssue {
  std::size_t line = 0;  // 1-based
  std::string message;
};

struct IngestResult {
  std::vector<SampleRecord> records;
  std::vector<JsonlIssue> malformed;
};

/// Reads one JSON object per line. Blank lines are skipped; unknown keys are
/// ignored. With `strict` set, any malformed line raises an error listing
/// the offending line numbers.
IngestResult ingest_jsonl(const std::filesystem::path& path, bool strict = false);
void write_jsonl(const std::filesystem::path& path, const std::vector<SampleRecord>& records);
std::string to_jsonl_line(const SampleRecord& sample);

// Synthetic corpus ----------------------------------------------------------

/// Per-class marginal of one numeric feature: mean, std, min, max.
struct Marginal {
  double mean;
  double stddev;
  double min;
  double max;
};

/// Class-conditional knobs for the synthetic generator. Defaults reproduce
/// the EMBER-2018 training-set marginals.
struct SyntheticClassSpec {
  std::array<Marginal, kNumericFeatureCount> numeric;
  double p_signature;
  double p_debug;
};

struct SyntheticSpec {
  SyntheticClassSpec malicious;
  SyntheticClassSpec benign;
  double p_entry_text = 0.9;
  /// Number of import pool functions that only benign samples import.
  std::size_t benign_exclusive_functions = 14;

  static SyntheticSpec ember2018();
};

/// The fixed "library:function" pool the generator draws imports from.
const std::vector<std::string>& synthetic_import_pool();

/// Draws `count_per_class` malicious then `count_per_class` benign records.
/// Deterministic given `seed`.
std::vector<SampleRecord> generate_synthetic(std::size_t count_per_class, std::uint64_t seed,
                                             const SyntheticSpec& spec = SyntheticSpec::ember2018());

}  // namespace evade
