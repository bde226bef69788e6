#include "evade/experiment.hpp"

#include <algorithm>
#include <atomic>
#include <exception>
#include <fstream>
#include <mutex>
#include <set>
#include <thread>

#include "evade/report.hpp"

namespace evade {

// Config ----------------------------------------------------------------------------

void ExperimentConfig::validate() const {
  auto fraction = [](double v, const char* name) {
    if (!(v > 0.0 && v < 1.0)) throw ConfigError(std::string(name) + " must lie in (0, 1)");
  };
  fraction(defender_fraction, "defender_fraction");
  fraction(surrogate_train_fraction, "surrogate_train_fraction");
  if (!data_path && synthetic_count_per_class < 1) throw ConfigError("synthetic_count_per_class must be at least 1");
  if (engines.empty()) throw ConfigError("at least one search engine is required");
  for (const auto& e : engines)
    if (e != "mcts" && e != "random") throw ConfigError("unknown engine '" + e + "' (expected mcts or random)");
  if (std::set<std::string>(engines.begin(), engines.end()).size() != engines.size())
    throw ConfigError("engines listed twice");
  mcts.validate();
  random.validate();
  if (tree.max_depth < 1) throw ConfigError("tree max_depth must be at least 1");
  if (!(entropy_step > 0.0)) throw ConfigError("entropy_step must be positive");
  if (timestamp_step <= 0) throw ConfigError("timestamp_step must be positive");
  if (output_dir.empty()) throw ConfigError("output_dir is required");
}

void to_json(nlohmann::json& j, const ExperimentConfig& c) {
  j = {{"data_path", c.data_path ? nlohmann::json(c.data_path->string()) : nlohmann::json()},
       {"synthetic_count_per_class", c.synthetic_count_per_class},
       {"strict_ingest", c.strict_ingest},
       {"defender_fraction", c.defender_fraction},
       {"surrogate_train_fraction", c.surrogate_train_fraction},
       {"engines", c.engines},
       {"mcts",
        {{"iterations", c.mcts.iterations},
         {"exploration_c", c.mcts.exploration_c},
         {"simulation_depth", c.mcts.simulation_depth},
         {"backprop", std::string(to_string(c.mcts.backprop))},
         {"recovery", std::string(to_string(c.mcts.recovery))},
         {"patience", c.mcts.patience}}},
       {"random",
        {{"max_mutations", c.random.max_mutations},
         {"attempts", c.random.attempts},
         {"equal_query_budget", c.equal_query_budget}}},
       {"tree", {{"max_depth", c.tree.max_depth}, {"min_samples_leaf", c.tree.min_samples_leaf}}},
       {"mlp",
        {{"hidden", c.mlp.hidden},
         {"learning_rate", c.mlp.learning_rate},
         {"epochs", c.mlp.epochs},
         {"batch_size", c.mlp.batch_size},
         {"validation_fraction", c.mlp.validation_fraction}}},
       {"entropy_step", c.entropy_step},
       {"timestamp_step", c.timestamp_step},
       {"max_targets", c.max_targets},
       {"output_dir", c.output_dir.string()},
       {"seed", c.seed}};
}

namespace {

void reject_unknown(const nlohmann::json& j, std::initializer_list<const char*> known, const std::string& where) {
  if (!j.is_object()) throw ConfigError(where + " must be a JSON object");
  for (const auto& [key, _] : j.items()) {
    if (std::none_of(known.begin(), known.end(), [&](const char* k) { return key == k; }))
      throw ConfigError("unknown key '" + key + "' in " + where);
  }
}

template <class T>
void read(const nlohmann::json& j, const char* key, T& into) {
  auto it = j.find(key);
  if (it == j.end() || it->is_null()) return;
  try {
    into = it->get<T>();
  } catch (const nlohmann::json::exception&) {
    throw ConfigError(std::string("bad value for '") + key + "': " + it->dump());
  }
}

}  // namespace

ExperimentConfig experiment_config_from_json(const nlohmann::json& j) {
  reject_unknown(j,
                 {"data_path", "synthetic_count_per_class", "strict_ingest", "defender_fraction",
                  "surrogate_train_fraction", "engines", "mcts", "random", "tree", "mlp", "entropy_step",
                  "timestamp_step", "max_targets", "workers", "output_dir", "seed"},
                 "experiment config");
  ExperimentConfig c;
  if (auto it = j.find("data_path"); it != j.end() && !it->is_null()) c.data_path = it->get<std::string>();
  read(j, "synthetic_count_per_class", c.synthetic_count_per_class);
  read(j, "strict_ingest", c.strict_ingest);
  read(j, "defender_fraction", c.defender_fraction);
  read(j, "surrogate_train_fraction", c.surrogate_train_fraction);
  read(j, "engines", c.engines);
  read(j, "entropy_step", c.entropy_step);
  read(j, "timestamp_step", c.timestamp_step);
  read(j, "max_targets", c.max_targets);
  read(j, "workers", c.workers);
  read(j, "seed", c.seed);
  if (auto it = j.find("output_dir"); it != j.end()) c.output_dir = it->get<std::string>();
  if (auto it = j.find("mcts"); it != j.end()) {
    reject_unknown(*it, {"iterations", "exploration_c", "simulation_depth", "backprop", "recovery", "patience"}, "mcts");
    read(*it, "iterations", c.mcts.iterations);
    read(*it, "exploration_c", c.mcts.exploration_c);
    read(*it, "simulation_depth", c.mcts.simulation_depth);
    read(*it, "patience", c.mcts.patience);
    if (auto b = it->find("backprop"); b != it->end()) c.mcts.backprop = backprop_mode_from_string(b->get<std::string>());
    if (auto r = it->find("recovery"); r != it->end()) c.mcts.recovery = recovery_mode_from_string(r->get<std::string>());
  }
  if (auto it = j.find("random"); it != j.end()) {
    reject_unknown(*it, {"max_mutations", "attempts", "equal_query_budget"}, "random");
    read(*it, "max_mutations", c.random.max_mutations);
    read(*it, "attempts", c.random.attempts);
    read(*it, "equal_query_budget", c.equal_query_budget);
  }
  if (auto it = j.find("tree"); it != j.end()) {
    reject_unknown(*it, {"max_depth", "min_samples_leaf"}, "tree");
    read(*it, "max_depth", c.tree.max_depth);
    read(*it, "min_samples_leaf", c.tree.min_samples_leaf);
  }
  if (auto it = j.find("mlp"); it != j.end()) {
    reject_unknown(*it, {"hidden", "learning_rate", "epochs", "batch_size", "validation_fraction"}, "mlp");
    read(*it, "hidden", c.mlp.hidden);
    read(*it, "learning_rate", c.mlp.learning_rate);
    read(*it, "epochs", c.mlp.epochs);
    read(*it, "batch_size", c.mlp.batch_size);
    read(*it, "validation_fraction", c.mlp.validation_fraction);
  }
  c.validate();
  return c;
}

DerivedSeeds DerivedSeeds::from(std::uint64_t root) {
  return {derive_seed(root, 1), derive_seed(root, 2), derive_seed(root, 3), derive_seed(root, 4),
          derive_seed(root, 5), derive_seed(root, 6), derive_seed(root, 7)};
}

void to_json(nlohmann::json& j, const DerivedSeeds& s) {
  j = {{"data", s.data},     {"split", s.split},       {"surrogate_split", s.surrogate_split},
       {"victim", s.victim}, {"mutation", s.mutation}, {"mcts", s.mcts},
       {"random", s.random}};
}

// Splits ------------------------------------------------------------------------------

std::pair<std::vector<SampleRecord>, std::vector<SampleRecord>> stratified_split(
    const std::vector<SampleRecord>& records, double fraction, std::uint64_t seed) {
  std::pair<std::vector<SampleRecord>, std::vector<SampleRecord>> out;
  Rng rng(seed);
  for (const Label label : {Label::malicious, Label::benign, Label::unknown}) {
    std::vector<std::size_t> idx;
    for (std::size_t i = 0; i < records.size(); ++i)
      if (records[i].label == label) idx.push_back(i);
    for (std::size_t i = idx.size(); i > 1; --i) std::swap(idx[i - 1], idx[rng.uniform_index(i)]);
    const auto take = static_cast<std::size_t>(std::llround(fraction * static_cast<double>(idx.size())));
    for (std::size_t k = 0; k < idx.size(); ++k) (k < take ? out.first : out.second).push_back(records[idx[k]]);
  }
  return out;
}

Corpora split_corpus(std::vector<SampleRecord> records, double defender_fraction, std::uint64_t seed) {
  std::set<std::string> ids;
  for (const auto& r : records)
    if (!ids.insert(r.sample_id).second) throw Error("duplicate sample_id '" + r.sample_id + "'");
  std::vector<SampleRecord> labelled;
  std::vector<SampleRecord> unlabelled;
  for (auto& r : records) (r.label == Label::unknown ? unlabelled : labelled).push_back(std::move(r));
  auto [defender, attacker] = stratified_split(labelled, defender_fraction, seed);
  attacker.insert(attacker.end(), std::make_move_iterator(unlabelled.begin()),
                  std::make_move_iterator(unlabelled.end()));
  return {std::move(defender), std::move(attacker)};
}

std::pair<SparseMatrix, Labels> labelled_matrix(const PreprocessorModel& pre, const std::vector<SampleRecord>& samples) {
  SparseMatrix X;
  X.width = pre.width();
  Labels y;
  for (const auto& s : samples) {
    if (s.label == Label::unknown) continue;
    X.rows.push_back(transform_sparse(pre, s));
    y.push_back(s.label == Label::malicious ? 1 : 0);
  }
  return {std::move(X), std::move(y)};
}

// Statistics --------------------------------------------------------------------------

MutationStats compute_mutation_stats(const std::vector<std::vector<MutationKind>>& paths) {
  MutationStats stats{};
  for (const auto& path : paths) {
    std::array<std::size_t, kMutationKindCount> counts{};
    for (auto k : path) ++counts[id(k)];
    const auto distinct = static_cast<std::size_t>(std::count_if(counts.begin(), counts.end(), [](auto c) { return c > 0; }));
    for (std::size_t k = 0; k < kMutationKindCount; ++k) {
      if (counts[k] == 0) continue;
      auto& s = stats[k];
      ++s.affected_instances;
      s.total_occurrence += counts[k];
      if (counts[k] >= 2) ++s.repeats;
      if (distinct == 1) ++s.alone; else ++s.in_group;
    }
  }
  return stats;
}

MutationStats compute_mutation_stats(const std::vector<MutationPath>& paths) {
  std::vector<std::vector<MutationKind>> ok;
  for (const auto& p : paths)
    if (p.surrogate_benign) ok.push_back(p.path);
  return compute_mutation_stats(ok);
}

void to_json(nlohmann::json& j, const EngineReport& r) {
  nlohmann::json stats = nlohmann::json::array();
  for (auto kind : all_mutation_kinds()) {
    const auto& s = r.stats[id(kind)];
    stats.push_back({{"id", id(kind)},
                     {"mutation", std::string(mutation_title(kind))},
                     {"alone", s.alone},
                     {"in_group", s.in_group},
                     {"repeats", s.repeats},
                     {"affected_instances", s.affected_instances},
                     {"total_occurrence", s.total_occurrence}});
  }
  nlohmann::json histogram = nlohmann::json::object();
  for (std::size_t k = 1; k < r.length_histogram.size(); ++k) histogram[std::to_string(k)] = r.length_histogram[k];
  histogram["failed"] = r.failed;
  j = {{"engine", r.engine},
       {"malware_total", r.malware_total},
       {"mutated", r.mutated},
       {"failed", r.failed},
       {"invalid_paths", r.invalid_paths},
       {"replay_mismatches", r.replay_mismatches},
       {"victim_evaded", r.victim_evaded},
       {"surrogate_queries", r.surrogate_queries},
       {"surrogate_mutation_rate", r.surrogate_mutation_rate},
       {"victim_evasion_rate_over_total", r.victim_evasion_rate_over_total},
       {"victim_evasion_rate_over_mutated", r.victim_evasion_rate_over_mutated},
       {"mutation_count_histogram", histogram},
       {"mutation_stats", stats}};
}

void to_json(nlohmann::json& j, const EvasionReport& r) {
  j = {{"format", "evade.report"},
       {"version", 1},
       {"config", r.config},
       {"seeds", r.seeds},
       {"corpus",
        {{"defender_size", r.defender_size},
         {"attacker_size", r.attacker_size},
         {"attacker_malware", r.attacker_malware},
         {"pre_benign_excluded", r.pre_benign_excluded}}},
       {"victim_eval", r.victim_eval ? nlohmann::json(*r.victim_eval) : nlohmann::json()},
       {"surrogate_eval", r.surrogate_eval ? nlohmann::json(*r.surrogate_eval) : nlohmann::json()},
       {"engines", r.engines},
       {"warnings", r.warnings}};
}

// Stages ---------------------------------------------------------------------------------

namespace {

template <class Fn>
void parallel_for(std::size_t n, std::size_t workers, Fn&& fn) {
  if (workers == 0) workers = std::max(1u, std::thread::hardware_concurrency());
  workers = std::min(workers, n);
  if (workers <= 1) {
    for (std::size_t i = 0; i < n; ++i) fn(i);
    return;
  }
  std::atomic<std::size_t> next{0};
  std::exception_ptr error;
  std::mutex error_mutex;
  std::vector<std::thread> pool;
  for (std::size_t w = 0; w < workers; ++w) {
    pool.emplace_back([&] {
      for (std::size_t i = next++; i < n; i = next++) {
        try {
          fn(i);
        } catch (...) {
          std::lock_guard lock(error_mutex);
          if (!error) error = std::current_exception();
          next = n;
        }
      }
    });
  }
  for (auto& t : pool) t.join();
  if (error) std::rethrow_exception(error);
}

}  // namespace

std::vector<SearchResult> run_searches(const std::vector<SampleRecord>& targets, const Surrogate& surrogate,
                                       const MutationContext& ctx, const SearchJob& job, std::size_t workers,
                                       const std::vector<std::size_t>* query_budgets) {
  if (job.engine != "mcts" && job.engine != "random") throw ConfigError("unknown engine '" + job.engine + "'");
  if (query_budgets && query_budgets->size() != targets.size())
    throw Error("query budget list does not match the target list");
  std::vector<SearchResult> results(targets.size());
  parallel_for(targets.size(), workers, [&](std::size_t i) {
    const auto& sample = targets[i];
    SearchOutcome outcome;
    if (job.engine == "mcts") {
      SearchConfig cfg = job.mcts;
      cfg.seed = derive_seed(job.mcts.seed, fnv1a64(sample.sample_id));
      outcome = search(sample, surrogate, ctx, cfg);
    } else {
      RandomSearchConfig cfg = job.random;
      cfg.seed = derive_seed(job.random.seed, fnv1a64(sample.sample_id));
      if (query_budgets) cfg.query_budget = (*query_budgets)[i];
      outcome = random_search(sample, surrogate, ctx, cfg);
    }
    auto& r = results[i];
    r.telemetry = outcome.telemetry;
    r.path = {sample.sample_id, outcome.path, job.engine, outcome.found, outcome.telemetry.iterations_used};
  });
  return results;
}

ReplayOutcome replay_paths(const std::vector<MutationPath>& paths,
                           const std::map<std::string, const SampleRecord*>& originals, const MutationContext& ctx,
                           const Surrogate& surrogate, const Surrogate* victim) {
  ReplayOutcome out;
  for (const auto& p : paths) {
    if (!p.surrogate_benign) continue;
    auto it = originals.find(p.sample_id);
    if (it == originals.end()) {
      ++out.invalid_paths;
      out.problems.push_back(p.sample_id + ": unknown sample");
      continue;
    }
    SampleRecord mutated;
    try {
      mutated = apply_path(*it->second, p.path, ctx, path_rng(ctx, p.sample_id));
    } catch (const MutationError& e) {
      ++out.invalid_paths;
      out.problems.push_back(p.sample_id + ": " + e.what());
      continue;
    }
    if (p.path.empty() || !surrogate.is_benign(mutated)) {
      ++out.replay_mismatches;
      out.problems.push_back(p.sample_id + ": replayed record is not surrogate-benign");
      continue;
    }
    ++out.mutated;
    if (victim && victim->is_benign(mutated)) ++out.victim_evaded;
    out.mutated_records.push_back(std::move(mutated));
  }
  return out;
}

EngineReport summarize_engine(const std::string& engine, const std::vector<MutationPath>& paths,
                              const ReplayOutcome& replay, std::size_t surrogate_queries) {
  EngineReport r;
  r.engine = engine;
  r.malware_total = paths.size();
  r.mutated = replay.mutated;
  r.invalid_paths = replay.invalid_paths;
  r.replay_mismatches = replay.replay_mismatches;
  r.victim_evaded = replay.victim_evaded;
  r.surrogate_queries = surrogate_queries;
  r.failed = r.malware_total - r.mutated;

  std::vector<MutationPath> good;
  std::set<std::string> bad_ids;
  for (const auto& problem : replay.problems) bad_ids.insert(problem.substr(0, problem.find(':')));
  for (const auto& p : paths)
    if (p.surrogate_benign && !bad_ids.count(p.sample_id)) good.push_back(p);
  std::size_t longest = 0;
  for (const auto& p : good) longest = std::max(longest, p.path.size());
  r.length_histogram.assign(longest + 1, 0);
  for (const auto& p : good) ++r.length_histogram[p.path.size()];
  r.stats = compute_mutation_stats(good);

  if (r.malware_total > 0) {
    const auto total = static_cast<double>(r.malware_total);
    r.surrogate_mutation_rate = static_cast<double>(r.mutated) / total;
    r.victim_evasion_rate_over_total = static_cast<double>(r.victim_evaded) / total;
  }
  if (r.mutated > 0) r.victim_evasion_rate_over_mutated = static_cast<double>(r.victim_evaded) / static_cast<double>(r.mutated);
  return r;
}

namespace {

template <class Fn>
auto stage(const std::string& name, Fn&& fn) -> decltype(fn()) {
  try {
    return fn();
  } catch (const ConfigError&) {
    throw;
  } catch (const StageError&) {
    throw;
  } catch (const std::exception& e) {
    throw StageError(name, e.what());
  }
}

/// Writes to `<file>.partial` and renames on success, so an interrupted
/// run leaves only files flagged as incomplete.
template <class Fn>
void write_atomically(const std::filesystem::path& file, Fn&& writer) {
  auto partial = file;
  partial += ".partial";
  writer(partial);
  std::filesystem::rename(partial, file);
}

void write_telemetry(const std::filesystem::path& file, const std::vector<SearchResult>& results) {
  std::ofstream out(file, std::ios::binary);
  if (!out) throw Error("cannot write " + file.string());
  for (const auto& r : results) {
    nlohmann::json j = r.telemetry;
    j["sample_id"] = r.path.sample_id;
    j["engine"] = r.path.found_by;
    out << j.dump() << '\n';
  }
}

}  // namespace

EvasionReport run_experiment(const ExperimentConfig& config, const std::function<void(const std::string&)>& log) {
  config.validate();
  auto say = [&](const std::string& msg) {
    if (log) log(msg);
  };
  EvasionReport report;
  report.config = config;
  report.seeds = DerivedSeeds::from(config.seed);
  const auto& seeds = report.seeds;
  const auto& dir = config.output_dir;
  stage("output", [&] {
    std::filesystem::create_directories(dir);
    write_json_file(dir / "config.json", {{"config", report.config}, {"seeds", seeds}});
  });

  auto records = stage("load", [&] {
    if (config.data_path) {
      auto ingest = ingest_jsonl(*config.data_path, config.strict_ingest);
      for (const auto& issue : ingest.malformed)
        report.warnings.push_back("skipped malformed line " + std::to_string(issue.line) + ": " + issue.message);
      return std::move(ingest.records);
    }
    return generate_synthetic(config.synthetic_count_per_class, seeds.data);
  });
  say("loaded " + std::to_string(records.size()) + " records");

  auto corpora = stage("split", [&] { return split_corpus(std::move(records), config.defender_fraction, seeds.split); });
  report.defender_size = corpora.defender.size();
  report.attacker_size = corpora.attacker.size();

  auto has_malware = [](const std::vector<SampleRecord>& v) {
    return std::any_of(v.begin(), v.end(), [](const SampleRecord& s) { return s.label == Label::malicious; });
  };
  if (!has_malware(corpora.defender) && !has_malware(corpora.attacker)) {
    report.warnings.push_back("no malware in the corpus; nothing to train or search");
    for (const auto& engine : config.engines) report.engines.push_back(summarize_engine(engine, {}, {}, 0));
    stage("report", [&] { emit_report(report, dir, {ReportFormat::json, ReportFormat::markdown, ReportFormat::csv}); });
    return report;
  }

  const auto pre = stage("preprocess", [&] { return fit_preprocessor(corpora.defender); });
  stage("preprocess", [&] { write_json_file(dir / "preprocessor.json", pre); });

  const auto victim = stage("train-victim", [&] {
    auto [X, y] = labelled_matrix(pre, corpora.defender);
    MlpConfig mlp = config.mlp;
    mlp.seed = seeds.victim;
    return train_mlp(X, y, mlp);
  });
  stage("train-victim", [&] { write_json_file(dir / "victim.json", victim.to_json()); });
  say("victim trained");

  auto [surrogate_train, surrogate_holdout] =
      stratified_split(corpora.attacker, config.surrogate_train_fraction, seeds.surrogate_split);
  const auto tree = stage("train-surrogate", [&] {
    auto [X, y] = labelled_matrix(pre, surrogate_train);
    return train_decision_tree(X, y, config.tree);
  });
  stage("train-surrogate", [&] { write_json_file(dir / "surrogate.json", tree.to_json()); });
  say("surrogate trained (depth " + std::to_string(tree.depth()) + ", " + std::to_string(tree.nodes().size()) +
      " nodes)");

  stage("evaluate", [&] {
    auto [Xv, yv] = labelled_matrix(pre, corpora.attacker);
    if (std::count(yv.begin(), yv.end(), 1) > 0 && std::count(yv.begin(), yv.end(), 0) > 0)
      report.victim_eval = evaluate(victim, Xv, yv);
    else
      report.warnings.push_back("victim evaluation skipped: attacker corpus lacks one class");
    auto [Xs, ys] = labelled_matrix(pre, surrogate_holdout);
    if (std::count(ys.begin(), ys.end(), 1) > 0 && std::count(ys.begin(), ys.end(), 0) > 0)
      report.surrogate_eval = evaluate(tree, Xs, ys);
    else
      report.warnings.push_back("surrogate evaluation skipped: hold-out lacks one class");
  });

  MutationContext ctx = stage("context", [&] {
    auto c = derive_context(surrogate_train, seeds.mutation);
    c.entropy_step = config.entropy_step;
    c.timestamp_step = config.timestamp_step;
    c.validate();
    return c;
  });
  stage("context", [&] { write_json_file(dir / "context.json", ctx); });

  const ModelSurrogate surrogate(pre, tree);
  const ModelSurrogate victim_oracle(pre, victim);

  std::vector<SampleRecord> targets;
  std::map<std::string, const SampleRecord*> originals;
  for (const auto& s : corpora.attacker) {
    if (s.label != Label::malicious) continue;
    ++report.attacker_malware;
    if (surrogate.is_benign(s)) {
      ++report.pre_benign_excluded;
      continue;
    }
    if (config.max_targets && targets.size() >= config.max_targets) continue;
    targets.push_back(s);
  }
  for (const auto& t : targets) originals[t.sample_id] = &t;
  if (report.attacker_malware == 0) report.warnings.push_back("no malware in the attacker corpus; nothing to search");
  say(std::to_string(targets.size()) + " targets (" + std::to_string(report.pre_benign_excluded) +
      " already benign on the surrogate)");

  std::vector<std::size_t> mcts_queries;
  for (const auto& engine : config.engines) {
    SearchJob job{engine, config.mcts, config.random};
    job.mcts.seed = seeds.mcts;
    job.random.seed = seeds.random;
    const bool matched = engine == "random" && config.equal_query_budget && !mcts_queries.empty();
    auto results = stage("search-" + engine, [&] {
      return run_searches(targets, surrogate, ctx, job, config.workers, matched ? &mcts_queries : nullptr);
    });
    std::vector<MutationPath> paths;
    std::size_t queries = 0;
    for (const auto& r : results) {
      paths.push_back(r.path);
      queries += r.telemetry.surrogate_queries;
    }
    if (engine == "mcts")
      for (const auto& r : results) mcts_queries.push_back(r.telemetry.surrogate_queries);

    stage("search-" + engine, [&] {
      write_atomically(dir / ("paths_" + engine + ".jsonl"), [&](const auto& f) { write_paths(f, paths); });
      write_atomically(dir / ("telemetry_" + engine + ".jsonl"), [&](const auto& f) { write_telemetry(f, results); });
    });
    auto replay = stage("replay-" + engine, [&] { return replay_paths(paths, originals, ctx, surrogate, &victim_oracle); });
    for (const auto& problem : replay.problems) report.warnings.push_back(engine + " replay: " + problem);
    report.engines.push_back(summarize_engine(engine, paths, replay, queries));
    const auto& er = report.engines.back();
    say(engine + ": mutated " + std::to_string(er.mutated) + "/" + std::to_string(er.malware_total) +
        ", victim evaded " + std::to_string(er.victim_evaded));
  }

  stage("report", [&] { emit_report(report, dir, {ReportFormat::json, ReportFormat::markdown, ReportFormat::csv}); });
  return report;
}

}  // namespace evade
