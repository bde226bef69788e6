#pragma once

// Reference implementations the tests compare the library against. They are
// written for clarity, not speed, and share no code with the code under test
// beyond the mutation engine itself where a search oracle needs it.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "evade/mcts.hpp"
#include "evade/mutation.hpp"
#include "evade/sample.hpp"

namespace oracle {

using evade::MutationKind;

/// Textbook FNV-1a, 64 bit.
inline std::uint64_t fnv1a(const std::string& s) {
  std::uint64_t h = 14695981039346656037ULL;
  for (char c : s) {
    h ^= static_cast<std::uint8_t>(c);
    h *= 1099511628211ULL;
  }
  return h;
}

/// AUC as the share of (positive, negative) pairs ordered correctly; ties count one half.
inline double pairwise_auc(const std::vector<double>& scores, const std::vector<int>& labels) {
  double good = 0.0;
  double pairs = 0.0;
  for (std::size_t i = 0; i < scores.size(); ++i) {
    if (labels[i] != 1) continue;
    for (std::size_t j = 0; j < scores.size(); ++j) {
      if (labels[j] != 0) continue;
      pairs += 1.0;
      if (scores[i] > scores[j]) good += 1.0;
      else if (scores[i] == scores[j]) good += 0.5;
    }
  }
  return good / pairs;
}

/// Breadth-first search over mutation multisets. Returns the length of the
/// shortest legal path whose end state is benign, or nullopt when none
/// exists within `max_depth`.
inline std::optional<std::size_t> bfs_minimum(const evade::SampleRecord& sample,
                                              const std::function<bool(const evade::SampleRecord&)>& benign,
                                              const evade::MutationContext& ctx, const evade::MutationRng& rng,
                                              std::size_t max_depth) {
  if (benign(sample)) return 0;
  struct State {
    std::vector<MutationKind> path;
    evade::SampleRecord record;
    evade::MutationBudget budget;
  };
  std::vector<State> frontier{{{}, sample, {}}};
  std::set<std::vector<int>> seen{{}};
  for (std::size_t depth = 1; depth <= max_depth; ++depth) {
    std::vector<State> next;
    for (const auto& s : frontier) {
      for (auto kind : evade::all_mutation_kinds()) {
        if (evade::blocked_reason(s.record, s.budget, ctx, kind)) continue;
        State child{s.path, s.record, s.budget};
        child.path.push_back(kind);
        std::vector<int> key;
        for (auto k : child.path) key.push_back(static_cast<int>(evade::id(k)));
        std::sort(key.begin(), key.end());
        if (!seen.insert(key).second) continue;
        auto m = evade::apply(s.record, kind, s.budget, ctx, rng);
        child.record = std::move(m.sample);
        child.budget = m.budget;
        if (benign(child.record)) return depth;
        next.push_back(std::move(child));
      }
    }
    if (next.empty()) return std::nullopt;
    frontier = std::move(next);
  }
  return std::nullopt;
}

/// Exact probability that one random-search attempt (uniform legal draws,
/// at most `max_steps`) reaches a benign state, by enumerating every walk.
inline double random_walk_success(const evade::SampleRecord& sample, const evade::MutationBudget& budget,
                                  const std::function<bool(const evade::SampleRecord&)>& benign,
                                  const evade::MutationContext& ctx, const evade::MutationRng& rng,
                                  std::size_t max_steps) {
  if (max_steps == 0) return 0.0;
  std::vector<MutationKind> allowed;
  for (auto kind : evade::all_mutation_kinds())
    if (!evade::blocked_reason(sample, budget, ctx, kind)) allowed.push_back(kind);
  if (allowed.empty()) return 0.0;
  double p = 0.0;
  for (auto kind : allowed) {
    auto m = evade::apply(sample, kind, budget, ctx, rng);
    if (benign(m.sample)) p += 1.0;
    else p += random_walk_success(m.sample, m.budget, benign, ctx, rng, max_steps - 1);
  }
  return p / static_cast<double>(allowed.size());
}

/// Per-kind table counted straight from the definitions.
struct KindCounts {
  std::size_t alone = 0, in_group = 0, repeats = 0, affected = 0, total = 0;
};

inline std::map<int, KindCounts> count_table(const std::vector<std::vector<int>>& paths) {
  std::map<int, KindCounts> table;
  for (const auto& p : paths) {
    std::set<int> kinds(p.begin(), p.end());
    for (int k : kinds) {
      auto& row = table[k];
      const auto n = static_cast<std::size_t>(std::count(p.begin(), p.end(), k));
      row.affected += 1;
      row.total += n;
      if (n >= 2) row.repeats += 1;
      if (kinds.size() == 1) row.alone += 1;
      else row.in_group += 1;
    }
  }
  return table;
}

}  // namespace oracle
