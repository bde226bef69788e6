#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json_fwd.hpp>

#include "evade/sample.hpp"

namespace evade {

/// The twelve feature mutations. Ids are stable: they appear in path files.
enum class MutationKind : std::uint8_t {
  AddString = 0,
  AddStringWithSize = 1,
  ChangeStringEntropy = 2,
  ChangeStringEntropyWithSize = 3,
  RemoveString = 4,
  AddSection = 5,
  AddBytes = 6,
  AddCodeBytes = 7,
  ImportFunction = 8,
  ChangeTimestamp = 9,
  RemoveDebug = 10,
  ChangeSignature = 11,
};

inline constexpr std::size_t kMutationKindCount = 12;

constexpr std::size_t id(MutationKind kind) noexcept { return static_cast<std::size_t>(kind); }
/// Throws evade::Error for ids outside 0..11.
MutationKind mutation_from_id(std::int64_t id);
/// snake_case identifier, e.g. "change_signature".
std::string_view mutation_name(MutationKind kind) noexcept;
/// Human-readable row label, e.g. "Change Signature".
std::string_view mutation_title(MutationKind kind) noexcept;
std::array<MutationKind, kMutationKindCount> all_mutation_kinds() noexcept;

/// Per-sample application caps. Defaults are the stock rule set; the extra
/// per-kind caps and the enabled mask exist to truncate the mutation space.
struct MutationLimits {
  int strings_added = 15;             // AddString + AddStringWithSize
  int strings_added_with_size = 5;    // AddStringWithSize
  int entropy_changes = 7;            // ChangeStringEntropy + ...WithSize
  int entropy_changes_with_size = 3;  // ChangeStringEntropyWithSize
  int strings_removed = 4;            // RemoveString
  std::array<std::optional<int>, kMutationKindCount> per_kind_cap{};
  std::uint16_t enabled_mask = 0x0fff;

  bool enabled(MutationKind kind) const noexcept { return (enabled_mask >> id(kind)) & 1u; }
};

/// How many times each kind has been applied to one sample.
struct MutationBudget {
  std::array<std::uint16_t, kMutationKindCount> applied{};

  int count(MutationKind kind) const noexcept { return applied[id(kind)]; }
  int strings_added() const noexcept {
    return count(MutationKind::AddString) + count(MutationKind::AddStringWithSize);
  }
  int strings_added_with_size() const noexcept { return count(MutationKind::AddStringWithSize); }
  int entropy_changes() const noexcept {
    return count(MutationKind::ChangeStringEntropy) + count(MutationKind::ChangeStringEntropyWithSize);
  }
  int entropy_changes_with_size() const noexcept { return count(MutationKind::ChangeStringEntropyWithSize); }
  int strings_removed() const noexcept { return count(MutationKind::RemoveString); }
  int total() const noexcept;
  /// Componentwise >=.
  bool dominates(const MutationBudget& other) const noexcept;

  friend bool operator==(const MutationBudget&, const MutationBudget&) = default;
};

/// Attacker-side constants the mutations move features toward, plus the
/// magnitudes of every mutation effect.
struct MutationContext {
  static constexpr std::size_t kCandidateCount = 14;

  double benign_entropy_target = 0.0;
  std::int64_t benign_timestamp_target = 0;
  /// "library:function" names common in benign samples and absent in malware.
  std::vector<std::string> candidate_functions;
  double entropy_step = 0.05;
  std::int64_t timestamp_step = 1000;  // POSIX seconds
  std::uint64_t rng_seed = 0;

  double added_string_entropy_min = 3.0;
  double added_string_entropy_max = 6.5;
  std::int64_t string_size_bytes = 30;
  std::int64_t section_bytes = 512;
  std::int64_t append_bytes = 128;
  std::int64_t code_bytes = 64;

  MutationLimits limits;

  /// Throws evade::ConfigError on a broken context.
  void validate() const;
};

/// Builds the context from the attacker's labelled training corpus: mean
/// benign entropy and timestamp, and the `candidate_count` functions most
/// often imported by benign samples that no malicious sample imports
/// (ties broken by name).
MutationContext derive_context(std::span<const SampleRecord> attacker_training, std::uint64_t rng_seed,
                               std::size_t candidate_count = MutationContext::kCandidateCount);

void to_json(nlohmann::json& j, const MutationContext& ctx);
MutationContext context_from_json(const nlohmann::json& j);

/// Seed of the random draws made by mutations (added-string entropy,
/// imported function choice). A draw is keyed by (seed, kind, occurrence
/// of that kind), so any reordering of the same multiset of mutations
/// draws the same values.
struct MutationRng {
  std::uint64_t seed = 0;

  /// Uniform in [0, 1).
  double draw(MutationKind kind, int occurrence, int index = 0) const noexcept;
};

/// Mutation seed used when searching for / replaying paths of `sample_id`.
MutationRng path_rng(const MutationContext& ctx, std::string_view sample_id);

/// Empty when `kind` admits one more application, otherwise the violated
/// invariant ("cap exceeded: strings_added=15", "precondition failed: ...").
std::optional<std::string> blocked_reason(const SampleRecord& sample, const MutationBudget& budget,
                                          const MutationContext& ctx, MutationKind kind);
bool is_allowed(const SampleRecord& sample, const MutationBudget& budget, const MutationContext& ctx,
                MutationKind kind);
/// Allowed kinds in ascending id order.
std::vector<MutationKind> allowed_mutations(const SampleRecord& sample, const MutationBudget& budget,
                                            const MutationContext& ctx);

struct Mutated {
  SampleRecord sample;
  MutationBudget budget;
};

/// Applies one mutation and returns the new record and budget; the inputs
/// are untouched. Throws evade::MutationError when not allowed.
Mutated apply(const SampleRecord& sample, MutationKind kind, const MutationBudget& budget,
              const MutationContext& ctx, const MutationRng& rng);
/// In-place form of `apply`, same semantics.
void apply_in_place(SampleRecord& sample, MutationBudget& budget, MutationKind kind, const MutationContext& ctx,
                    const MutationRng& rng);

/// Left fold of `apply` from a fresh budget. Errors carry the path index.
Mutated apply_path_with_budget(const SampleRecord& sample, std::span<const MutationKind> path,
                               const MutationContext& ctx, const MutationRng& rng);
SampleRecord apply_path(const SampleRecord& sample, std::span<const MutationKind> path,
                        const MutationContext& ctx, const MutationRng& rng);

// Path files -------------------------------------------------------------------

/// One line of a paths file.
struct MutationPath {
  std::string sample_id;
  std::vector<MutationKind> path;
  std::string found_by;  // "mcts" | "random"
  bool surrogate_benign = false;
  std::size_t iterations_used = 0;

  friend bool operator==(const MutationPath&, const MutationPath&) = default;
};

void to_json(nlohmann::json& j, const MutationPath& p);
MutationPath mutation_path_from_json(const nlohmann::json& j);
std::vector<MutationPath> read_paths(const std::filesystem::path& file);
void write_paths(const std::filesystem::path& file, const std::vector<MutationPath>& paths);

}  // namespace evade
