#include "evade/random_search.hpp"

#include "evade/error.hpp"

namespace evade {

void RandomSearchConfig::validate() const {
  if (max_mutations < 1) throw ConfigError("max_mutations must be at least 1");
  if (!query_budget && attempts < 1) throw ConfigError("attempts must be at least 1");
}

SearchOutcome random_search(const SampleRecord& sample, const Surrogate& surrogate, const MutationContext& ctx,
                            const RandomSearchConfig& config) {
  config.validate();
  SearchOutcome out;
  auto& tel = out.telemetry;
  tel.surrogate_queries = 1;
  if (surrogate.is_benign(sample)) {
    out.found = true;
    tel.best_score = 0.0;
    return out;
  }

  const MutationRng mutation_rng = path_rng(ctx, sample.sample_id);
  Rng rng(config.seed);
  auto budget_left = [&] { return !config.query_budget || tel.surrogate_queries < *config.query_budget; };

  std::size_t attempt = 0;
  while (budget_left() && (config.query_budget || attempt < config.attempts)) {
    ++attempt;
    const std::size_t queries_before = tel.surrogate_queries;
    SampleRecord record = sample;
    MutationBudget budget;
    std::vector<MutationKind> walk;
    for (std::size_t step = 0; step < config.max_mutations && budget_left(); ++step) {
      const auto allowed = allowed_mutations(record, budget, ctx);
      if (allowed.empty()) break;
      const auto kind = allowed[rng.uniform_index(allowed.size())];
      apply_in_place(record, budget, kind, ctx, mutation_rng);
      walk.push_back(kind);
      ++tel.surrogate_queries;
      if (surrogate.is_benign(record)) {
        if (!out.found || walk.size() < out.path.size()) {
          out.found = true;
          out.path = walk;
        }
        break;
      }
    }
    // A one-step walk cannot be beaten.
    if (out.found && out.path.size() == 1) break;
    if (tel.surrogate_queries == queries_before) break;  // nothing is allowed from the start
  }
  tel.iterations_used = attempt;
  tel.best_score = out.found ? -static_cast<double>(out.path.size()) : kNegInf;
  return out;
}

}  // namespace evade
