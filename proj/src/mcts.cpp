#include "evade/mcts.hpp"

#include <algorithm>

#include <nlohmann/json.hpp>

#include "evade/error.hpp"

namespace evade {

std::string_view to_string(BackpropMode mode) noexcept {
  return mode == BackpropMode::faithful ? "faithful" : "preserving";
}

BackpropMode backprop_mode_from_string(std::string_view text) {
  if (text == "faithful") return BackpropMode::faithful;
  if (text == "preserving") return BackpropMode::preserving;
  throw ConfigError("unknown back-propagation mode '" + std::string(text) + "'");
}

std::string_view to_string(RecoveryMode mode) noexcept {
  return mode == RecoveryMode::argmax ? "argmax" : "shortest_terminal";
}

RecoveryMode recovery_mode_from_string(std::string_view text) {
  if (text == "argmax") return RecoveryMode::argmax;
  if (text == "shortest_terminal") return RecoveryMode::shortest_terminal;
  throw ConfigError("unknown recovery mode '" + std::string(text) + "'");
}

void SearchConfig::validate() const {
  if (iterations < 1) throw ConfigError("iterations must be at least 1");
  if (simulation_depth < 1) throw ConfigError("simulation_depth must be at least 1");
  if (!(exploration_c >= 0.0)) throw ConfigError("exploration_c must be non-negative");
}

// Transpositions --------------------------------------------------------------------

std::string canonical_key(std::span<const MutationKind> path) {
  std::vector<std::size_t> ids;
  ids.reserve(path.size());
  for (auto k : path) ids.push_back(id(k));
  std::sort(ids.begin(), ids.end());
  std::string key;
  for (std::size_t i = 0; i < ids.size(); ++i) {
    if (i) key.push_back(',');
    key += std::to_string(ids[i]);
  }
  return key;
}

bool SeenPaths::contains(std::span<const MutationKind> path) const {
  const auto key = canonical_key(path);
  if (!hashes_.count(fnv1a64(key))) return false;
  return keys_.count(key) > 0;
}

bool SeenPaths::insert(std::span<const MutationKind> path) {
  auto key = canonical_key(path);
  hashes_.insert(fnv1a64(key));
  return keys_.insert(std::move(key)).second;
}

// Policies --------------------------------------------------------------------------

double ucb1(double score, std::size_t visits, std::size_t parent_visits, double c) {
  if (visits == 0) return std::numeric_limits<double>::infinity();
  if (score == kNegInf) return kNegInf;
  const double n = static_cast<double>(visits);
  const double parent = static_cast<double>(std::max<std::size_t>(parent_visits, 1));
  return score / n + c * std::sqrt(std::log(parent) / n);
}

std::size_t select_child(const SearchTree& tree, std::size_t node, double c) {
  const auto& parent = tree.nodes[node];
  if (parent.children.empty()) throw Error("select_child on a node without children");
  // Children are created in ascending mutation id, so the first maximum is the lowest id.
  std::optional<std::size_t> best;
  double best_value = kNegInf;
  for (const auto child : parent.children) {
    if (tree.nodes[child].is_exhausted) continue;
    const double value = ucb1(tree.nodes[child], parent.visits, c);
    if (!best || value > best_value) {
      best = child;
      best_value = value;
    }
  }
  return best.value_or(parent.children.front());
}

void mark_exhausted(SearchTree& tree, std::size_t node) {
  for (std::int64_t i = static_cast<std::int64_t>(node); i >= 0;) {
    auto& n = tree.nodes[static_cast<std::size_t>(i)];
    const bool done = n.is_expanded && std::all_of(n.children.begin(), n.children.end(), [&](std::uint32_t c) {
                        return tree.nodes[c].is_exhausted;
                      });
    if (!done) return;
    n.is_exhausted = true;
    i = n.parent;
  }
}

std::size_t tree_policy(const SearchTree& tree, double c, std::size_t from) {
  std::size_t node = from;
  while (tree.nodes[node].is_expanded && !tree.nodes[node].is_exhausted) node = select_child(tree, node, c);
  return node;
}

std::size_t expansion_policy(SearchTree& tree, std::size_t node, const Surrogate& surrogate,
                             const MutationContext& ctx, const MutationRng& mutation_rng) {
  const auto allowed = allowed_mutations(tree.nodes[node].record, tree.nodes[node].budget, ctx);
  std::size_t added = 0;
  std::vector<MutationKind> proposed = tree.nodes[node].mutation_path;
  proposed.push_back(MutationKind::AddString);
  for (auto kind : allowed) {
    proposed.back() = kind;
    if (!tree.seen.insert(proposed)) {
      ++tree.dedup_hits;
      continue;
    }
    const auto& parent = tree.nodes[node];
    SearchNode child;
    child.mutation_path = proposed;
    child.parent = static_cast<std::int32_t>(node);
    child.record = parent.record;
    child.budget = parent.budget;
    apply_in_place(child.record, child.budget, kind, ctx, mutation_rng);
    child.is_terminal = surrogate.is_benign(child.record);
    ++tree.surrogate_queries;
    tree.nodes.push_back(std::move(child));
    tree.nodes[node].children.push_back(static_cast<std::uint32_t>(tree.nodes.size() - 1));
    ++added;
  }
  tree.nodes[node].is_expanded = true;
  if (added == 0) mark_exhausted(tree, node);
  return added;
}

Rollout simulation_policy(const SearchNode& node, const Surrogate& surrogate, const MutationContext& ctx,
                          const MutationRng& mutation_rng, std::size_t depth, Rng& rng) {
  Rollout out;
  SampleRecord record = node.record;
  MutationBudget budget = node.budget;
  for (std::size_t step = 0; step < depth; ++step) {
    const auto allowed = allowed_mutations(record, budget, ctx);
    if (allowed.empty()) break;
    const auto kind = allowed[rng.uniform_index(allowed.size())];
    apply_in_place(record, budget, kind, ctx, mutation_rng);
    out.path.push_back(kind);
    ++out.queries;
    if (surrogate.is_benign(record)) {
      out.terminal = true;
      break;
    }
  }
  return out;
}

double evaluate_path(std::size_t node_path_len, std::size_t rollout_len, bool terminal) {
  if (!terminal) return kNegInf;
  return -static_cast<double>(node_path_len + rollout_len);
}

double backprop_update(double stored, double incoming, BackpropMode mode) {
  if (stored != kNegInf && incoming != kNegInf) return stored + incoming;
  if (mode == BackpropMode::preserving && incoming == kNegInf) return stored;
  return incoming;
}

void back_propagate(SearchTree& tree, std::size_t node, double score, BackpropMode mode) {
  std::int64_t i = static_cast<std::int64_t>(node);
  while (i >= 0) {
    auto& n = tree.nodes[static_cast<std::size_t>(i)];
    n.score = backprop_update(n.score, score, mode);
    ++n.visits;
    i = n.parent;
  }
}

std::optional<std::vector<MutationKind>> recover_path(const SearchTree& tree) {
  std::size_t node = 0;
  while (tree.nodes[node].is_expanded && !tree.nodes[node].is_terminal) {
    const auto& children = tree.nodes[node].children;
    if (children.empty()) break;
    std::size_t best = children.front();
    for (std::size_t i = 1; i < children.size(); ++i) {
      const auto& cand = tree.nodes[children[i]];
      const auto& cur = tree.nodes[best];
      if (cand.score > cur.score || (cand.score == cur.score && cand.visits < cur.visits)) best = children[i];
    }
    node = best;
  }
  if (!tree.nodes[node].is_terminal) return std::nullopt;
  return tree.nodes[node].mutation_path;
}

void to_json(nlohmann::json& j, const SearchTelemetry& t) {
  j = {{"iterations_used", t.iterations_used},
       {"nodes_created", t.nodes_created},
       {"dedup_hits", t.dedup_hits},
       {"surrogate_queries", t.surrogate_queries},
       {"best_score", t.best_score == kNegInf ? nlohmann::json() : nlohmann::json(t.best_score)}};
}

// Search loop -----------------------------------------------------------------------

MctsSearch::MctsSearch(SampleRecord sample, const Surrogate& surrogate, const MutationContext& ctx,
                       SearchConfig config)
    : surrogate_(surrogate),
      ctx_(ctx),
      config_(config),
      mutation_rng_(path_rng(ctx, sample.sample_id)),
      rng_(config.seed) {
  config_.validate();
  SearchNode root;
  root.record = std::move(sample);
  tree_.nodes.push_back(std::move(root));
  tree_.seen.insert(std::span<const MutationKind>{});
}

void MctsSearch::iterate(std::size_t iteration) {
  const double c = config_.exploration_c;
  std::size_t node = tree_policy(tree_, c);
  {
    const auto& n = tree_.nodes[node];
    if (n.visits != 0 && !n.is_terminal && !n.is_expanded) {
      if (expansion_policy(tree_, node, surrogate_, ctx_, mutation_rng_) > 0) node = select_child(tree_, node, c);
    }
  }

  const auto& n = tree_.nodes[node];
  Rollout rollout;
  if (n.is_terminal) {
    rollout.terminal = true;
  } else {
    rollout = simulation_policy(n, surrogate_, ctx_, mutation_rng_, config_.simulation_depth, rng_);
    tree_.surrogate_queries += rollout.queries;
  }
  const double score = evaluate_path(n.depth(), rollout.path.size(), rollout.terminal);

  BackpropRecord record;
  if (config_.record_trace) {
    record.iteration = iteration;
    record.score = score;
    for (std::int64_t i = static_cast<std::int64_t>(node); i >= 0; i = tree_.nodes[static_cast<std::size_t>(i)].parent) {
      const auto& a = tree_.nodes[static_cast<std::size_t>(i)];
      record.lineage.push_back(static_cast<std::size_t>(i));
      record.score_before.push_back(a.score);
      record.visits_before.push_back(a.visits);
    }
  }
  back_propagate(tree_, node, score, config_.backprop);
  if (config_.record_trace) {
    for (auto i : record.lineage) {
      record.score_after.push_back(tree_.nodes[i].score);
      record.visits_after.push_back(tree_.nodes[i].visits);
    }
    trace_.push_back(std::move(record));
  }
}

SearchOutcome MctsSearch::run() {
  SearchOutcome out;
  auto& root = tree_.root();
  root.is_terminal = surrogate_.is_benign(root.record);
  ++tree_.surrogate_queries;

  std::size_t used = 0;
  std::optional<std::vector<MutationKind>> best;
  if (root.is_terminal) {
    best.emplace();
  } else {
    std::size_t last_improvement = 0;
    std::size_t scanned = 1;
    for (std::size_t it = 0; it < config_.iterations; ++it) {
      if (tree_.root().is_exhausted) break;
      iterate(it);
      used = it + 1;
      std::optional<std::vector<MutationKind>> recovered;
      if (config_.recovery == RecoveryMode::argmax) {
        recovered = recover_path(tree_);
      } else {
        for (; scanned < tree_.nodes.size(); ++scanned) {
          const auto& n = tree_.nodes[scanned];
          if (n.is_terminal && (!recovered || n.depth() < recovered->size())) recovered = n.mutation_path;
        }
      }
      if (recovered && (!best || recovered->size() < best->size())) {
        best = std::move(recovered);
        last_improvement = it;
      }
      if (config_.patience != 0 && best && it - last_improvement >= config_.patience) break;
    }
  }

  out.found = best.has_value();
  if (best) out.path = std::move(*best);
  out.telemetry.iterations_used = used;
  out.telemetry.nodes_created = tree_.nodes.size();
  out.telemetry.dedup_hits = tree_.dedup_hits;
  out.telemetry.surrogate_queries = tree_.surrogate_queries;
  out.telemetry.best_score = out.found ? -static_cast<double>(out.path.size()) : kNegInf;
  return out;
}

SearchOutcome search(const SampleRecord& sample, const Surrogate& surrogate, const MutationContext& ctx,
                     const SearchConfig& config) {
  MctsSearch s(sample, surrogate, ctx, config);
  return s.run();
}

}  // namespace evade
