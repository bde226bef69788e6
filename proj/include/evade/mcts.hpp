#pragma once

#include <cmath>
#include <cstdint>
#include <limits>
#include <optional>
#include <string>
#include <unordered_set>
#include <vector>

#include <nlohmann/json_fwd.hpp>

#include "evade/mutation.hpp"
#include "evade/random.hpp"
#include "evade/surrogate.hpp"

namespace evade {

inline constexpr double kNegInf = -std::numeric_limits<double>::infinity();

/// How a -inf (failed) simulation result combines with a finite score
/// already stored on an ancestor.
enum class BackpropMode {
  faithful,   // overwrite: the failed result replaces the stored score
  preserving, // a failed result contributes nothing to a finite score
};

std::string_view to_string(BackpropMode mode) noexcept;
BackpropMode backprop_mode_from_string(std::string_view text);

/// Which path a finished search reports.
enum class RecoveryMode {
  argmax,             // shortest recover_path result seen after any iteration
  shortest_terminal,  // shortest path to any terminal node the tree created
};

std::string_view to_string(RecoveryMode mode) noexcept;
RecoveryMode recovery_mode_from_string(std::string_view text);

struct SearchConfig {
  std::size_t iterations = 500;
  double exploration_c = std::sqrt(2.0);
  std::size_t simulation_depth = 12;
  std::uint64_t seed = 0;
  BackpropMode backprop = BackpropMode::faithful;
  RecoveryMode recovery = RecoveryMode::argmax;
  /// Stop once a recovered path has not shortened for this many
  /// iterations. 0 runs the full iteration budget.
  std::size_t patience = 100;
  /// Keep a per-iteration record of every back-propagation update.
  bool record_trace = false;

  void validate() const;
};

struct SearchNode {
  std::vector<MutationKind> mutation_path;
  double score = kNegInf;
  std::size_t visits = 0;
  bool is_expanded = false;
  bool is_terminal = false;
  /// Expanded, and every descendant is a dead end: nothing left to select below.
  bool is_exhausted = false;
  std::int32_t parent = -1;
  std::vector<std::uint32_t> children;
  /// The sample after `mutation_path` and the budget it consumed.
  SampleRecord record;
  MutationBudget budget;

  std::size_t depth() const noexcept { return mutation_path.size(); }
  MutationKind last() const { return mutation_path.back(); }
};

/// Sorted, comma-joined mutation ids: the order-free identity of a path.
std::string canonical_key(std::span<const MutationKind> path);

/// Transposition set of canonical path keys. Lookups are exact; a 64-bit
/// hash set screens out most misses first.
class SeenPaths {
 public:
  bool contains(std::span<const MutationKind> path) const;
  /// Returns false if the canonical key was already present.
  bool insert(std::span<const MutationKind> path);
  std::size_t size() const noexcept { return keys_.size(); }

 private:
  std::unordered_set<std::uint64_t> hashes_;
  std::unordered_set<std::string> keys_;
};

/// Arena of nodes; index 0 is the root.
struct SearchTree {
  std::vector<SearchNode> nodes;
  SeenPaths seen;
  std::size_t dedup_hits = 0;
  std::size_t surrogate_queries = 0;

  SearchNode& root() { return nodes.front(); }
  const SearchNode& root() const { return nodes.front(); }
};

/// score/visits + c*sqrt(ln(parent_visits)/visits); +inf for an unvisited
/// child, -inf once a visited child's score is -inf.
double ucb1(double score, std::size_t visits, std::size_t parent_visits, double c);
inline double ucb1(const SearchNode& child, std::size_t parent_visits, double c) {
  return ucb1(child.score, child.visits, parent_visits, c);
}

/// argmax-ucb1 child of `node`; ties go to the lowest mutation id.
std::size_t select_child(const SearchTree& tree, std::size_t node, double c);
/// Marks `node` exhausted if it is a dead end, then walks up marking each
/// ancestor whose children are all exhausted.
void mark_exhausted(SearchTree& tree, std::size_t node);
/// Descends by select_child while the node is expanded and not exhausted.
std::size_t tree_policy(const SearchTree& tree, double c, std::size_t from = 0);

/// Adds one child per allowed mutation whose canonical extended path is
/// unseen, querying the surrogate for each child. Marks the node expanded
/// even when nothing could be added. Returns the number of children added.
std::size_t expansion_policy(SearchTree& tree, std::size_t node, const Surrogate& surrogate,
                             const MutationContext& ctx, const MutationRng& mutation_rng);

struct Rollout {
  std::vector<MutationKind> path;
  bool terminal = false;
  std::size_t queries = 0;
};

/// Uniformly random legal mutations from the node's state until the
/// surrogate says benign, `depth` steps pass, or nothing is allowed.
Rollout simulation_policy(const SearchNode& node, const Surrogate& surrogate, const MutationContext& ctx,
                          const MutationRng& mutation_rng, std::size_t depth, Rng& rng);

/// -(node depth + rollout length) when the rollout ended benign, else -inf.
double evaluate_path(std::size_t node_path_len, std::size_t rollout_len, bool terminal);

/// Updates the node and each ancestor: score (per `mode`) and visits + 1.
void back_propagate(SearchTree& tree, std::size_t node, double score, BackpropMode mode);
/// The single-node update rule back_propagate applies.
double backprop_update(double stored, double incoming, BackpropMode mode);

/// Greedy argmax-score descent from the root while the node is expanded
/// and not terminal (ties: fewer visits, then lower mutation id). Returns
/// the path only if it ends on a terminal node.
std::optional<std::vector<MutationKind>> recover_path(const SearchTree& tree);

struct BackpropRecord {
  std::size_t iteration = 0;
  double score = kNegInf;
  std::vector<std::size_t> lineage;  // evaluated node first, root last
  std::vector<double> score_before;
  std::vector<double> score_after;
  std::vector<std::size_t> visits_before;
  std::vector<std::size_t> visits_after;
};

struct SearchTelemetry {
  std::size_t iterations_used = 0;
  std::size_t nodes_created = 0;
  std::size_t dedup_hits = 0;
  std::size_t surrogate_queries = 0;
  /// -(length of the returned path), or -inf when nothing was found.
  double best_score = kNegInf;
};

void to_json(nlohmann::json& j, const SearchTelemetry& t);

struct SearchOutcome {
  bool found = false;
  std::vector<MutationKind> path;
  SearchTelemetry telemetry;
};

/// Single-player MCTS over one sample. Owns its tree; not thread-safe.
class MctsSearch {
 public:
  MctsSearch(SampleRecord sample, const Surrogate& surrogate, const MutationContext& ctx, SearchConfig config);

  SearchOutcome run();

  const SearchTree& tree() const noexcept { return tree_; }
  const std::vector<BackpropRecord>& trace() const noexcept { return trace_; }

 private:
  void iterate(std::size_t iteration);

  const Surrogate& surrogate_;
  const MutationContext& ctx_;
  SearchConfig config_;
  MutationRng mutation_rng_;
  Rng rng_;
  SearchTree tree_;
  std::vector<BackpropRecord> trace_;
};

SearchOutcome search(const SampleRecord& sample, const Surrogate& surrogate, const MutationContext& ctx,
                     const SearchConfig& config);

}  // namespace evade
