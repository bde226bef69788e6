#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "evade/decision_tree.hpp"
#include "evade/error.hpp"
#include "evade/mcts.hpp"
#include "evade/metrics.hpp"
#include "evade/mlp.hpp"
#include "evade/mutation.hpp"
#include "evade/preprocess.hpp"
#include "evade/random_search.hpp"
#include "evade/sample.hpp"

namespace evade {

/// A pipeline stage failed (CLI maps this to exit code 3).
class StageError : public Error {
 public:
  StageError(std::string stage, const std::string& what)
      : Error("stage '" + stage + "' failed: " + what), stage_(std::move(stage)) {}
  const std::string& stage() const noexcept { return stage_; }

 private:
  std::string stage_;
};

struct ExperimentConfig {
  /// JSONL corpus; when empty a synthetic corpus is generated.
  std::optional<std::filesystem::path> data_path;
  std::size_t synthetic_count_per_class = 2000;
  bool strict_ingest = false;
  /// Share of each class that goes to the defender (victim) corpus.
  double defender_fraction = 0.5;
  /// Share of the attacker corpus the surrogate trains on.
  double surrogate_train_fraction = 0.6;
  std::vector<std::string> engines = {"mcts", "random"};
  SearchConfig mcts;
  RandomSearchConfig random;
  /// With both engines, give random search the MCTS query count per sample.
  bool equal_query_budget = true;
  TreeConfig tree;
  MlpConfig mlp;
  double entropy_step = 0.05;
  std::int64_t timestamp_step = 1000;
  /// Search at most this many targets (0 = all).
  std::size_t max_targets = 0;
  std::size_t workers = 0;  // 0 = hardware concurrency
  std::filesystem::path output_dir = "evade-out";
  std::uint64_t seed = 1;

  void validate() const;
};

void to_json(nlohmann::json& j, const ExperimentConfig& c);
/// Unknown keys are rejected so typos surface as config errors.
ExperimentConfig experiment_config_from_json(const nlohmann::json& j);

/// Per-stage seeds, all derived from the root seed.
struct DerivedSeeds {
  std::uint64_t data, split, surrogate_split, victim, mutation, mcts, random;
  static DerivedSeeds from(std::uint64_t root);
};
void to_json(nlohmann::json& j, const DerivedSeeds& s);

// Data splits ----------------------------------------------------------------------

struct Corpora {
  std::vector<SampleRecord> defender;
  std::vector<SampleRecord> attacker;
};

/// Stratified by label; unlabelled records go to the attacker side. Throws
/// on duplicate sample ids.
Corpora split_corpus(std::vector<SampleRecord> records, double defender_fraction, std::uint64_t seed);
/// Seeded stratified split into (first, rest) with `fraction` of each class first.
std::pair<std::vector<SampleRecord>, std::vector<SampleRecord>> stratified_split(
    const std::vector<SampleRecord>& records, double fraction, std::uint64_t seed);
/// Labelled rows only; y = 1 for malicious.
std::pair<SparseMatrix, Labels> labelled_matrix(const PreprocessorModel& pre, const std::vector<SampleRecord>& samples);

// Statistics ------------------------------------------------------------------------

struct MutationKindStats {
  std::size_t alone = 0;
  std::size_t in_group = 0;
  std::size_t repeats = 0;
  std::size_t affected_instances = 0;
  std::size_t total_occurrence = 0;

  friend bool operator==(const MutationKindStats&, const MutationKindStats&) = default;
};

using MutationStats = std::array<MutationKindStats, kMutationKindCount>;

/// Per-kind counts over successful paths. A path counts as "alone" for a
/// kind when that kind is the only one it contains.
MutationStats compute_mutation_stats(const std::vector<std::vector<MutationKind>>& paths);
/// Uses only paths marked surrogate_benign.
MutationStats compute_mutation_stats(const std::vector<MutationPath>& paths);

struct EngineReport {
  std::string engine;
  std::size_t malware_total = 0;  // targets searched
  std::size_t mutated = 0;        // surrogate-benign paths that replay cleanly
  std::size_t failed = 0;
  std::size_t invalid_paths = 0;
  std::size_t replay_mismatches = 0;
  std::size_t victim_evaded = 0;
  std::size_t surrogate_queries = 0;
  double surrogate_mutation_rate = 0.0;
  double victim_evasion_rate_over_total = 0.0;
  double victim_evasion_rate_over_mutated = 0.0;
  /// histogram[k] = samples whose path has k mutations (k >= 1); index 0 unused.
  std::vector<std::size_t> length_histogram;
  MutationStats stats{};
};

struct EvasionReport {
  nlohmann::json config;
  DerivedSeeds seeds{};
  std::size_t defender_size = 0;
  std::size_t attacker_size = 0;
  std::size_t attacker_malware = 0;
  std::size_t pre_benign_excluded = 0;
  std::optional<Evaluation> victim_eval;
  std::optional<Evaluation> surrogate_eval;
  std::vector<EngineReport> engines;
  std::vector<std::string> warnings;
};

void to_json(nlohmann::json& j, const EngineReport& r);
void to_json(nlohmann::json& j, const EvasionReport& r);

// Stages -----------------------------------------------------------------------------

struct SearchJob {
  std::string engine;  // "mcts" | "random"
  SearchConfig mcts;
  RandomSearchConfig random;
};

struct SearchResult {
  MutationPath path;
  SearchTelemetry telemetry;
};

/// Runs one engine over `targets` on a bounded worker pool. Per-sample
/// seeds derive from the job's seed and the sample id. With
/// `query_budgets`, random search gets budget[i] queries on targets[i].
std::vector<SearchResult> run_searches(const std::vector<SampleRecord>& targets, const Surrogate& surrogate,
                                       const MutationContext& ctx, const SearchJob& job, std::size_t workers,
                                       const std::vector<std::size_t>* query_budgets = nullptr);

struct ReplayOutcome {
  std::size_t invalid_paths = 0;
  std::size_t replay_mismatches = 0;
  std::size_t mutated = 0;
  std::size_t victim_evaded = 0;
  /// Mutated records of the successfully replayed paths.
  std::vector<SampleRecord> mutated_records;
  std::vector<std::string> problems;
};

/// Re-applies every path to its original sample, re-checks the surrogate
/// and asks the victim (when given) about each mutated record.
ReplayOutcome replay_paths(const std::vector<MutationPath>& paths,
                           const std::map<std::string, const SampleRecord*>& originals, const MutationContext& ctx,
                           const Surrogate& surrogate, const Surrogate* victim);

/// Aggregates one engine's results into rates, histogram and Table-2 stats.
EngineReport summarize_engine(const std::string& engine, const std::vector<MutationPath>& paths,
                              const ReplayOutcome& replay, std::size_t surrogate_queries);

/// The whole pipeline; artifacts go to config.output_dir.
EvasionReport run_experiment(const ExperimentConfig& config,
                             const std::function<void(const std::string&)>& log = {});

}  // namespace evade
