#pragma once

#include <cstdint>
#include <optional>

#include "evade/mcts.hpp"

namespace evade {

struct RandomSearchConfig {
  std::size_t max_mutations = 5;
  /// Restarts from the original sample. Ignored when a query budget is set.
  std::size_t attempts = 500;
  /// Total surrogate queries allowed (the initial check included), used to
  /// match another engine's spend on the same sample.
  std::optional<std::size_t> query_budget;
  std::uint64_t seed = 0;

  void validate() const;
};

/// Repeated random walks of at most `max_mutations` legal mutations,
/// checking the surrogate after each one. Keeps the shortest walk that
/// reached a benign verdict.
SearchOutcome random_search(const SampleRecord& sample, const Surrogate& surrogate, const MutationContext& ctx,
                            const RandomSearchConfig& config);

}  // namespace evade
