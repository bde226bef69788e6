// evade: command-line front end for the evasion pipeline.

#include <CLI11.hpp>

#include <fstream>
#include <iostream>
#include <map>
#include <memory>

#include <nlohmann/json.hpp>

#include "evade/experiment.hpp"
#include "evade/report.hpp"
#include "evade/surrogate.hpp"

namespace {

using namespace evade;
namespace fs = std::filesystem;

constexpr int kExitConfig = 2;
constexpr int kExitStage = 3;

std::vector<SampleRecord> load_records(const fs::path& file, bool strict) {
  auto ingest = ingest_jsonl(file, strict);
  for (const auto& issue : ingest.malformed)
    std::cerr << "warning: " << file.string() << ":" << issue.line << ": " << issue.message << "\n";
  return std::move(ingest.records);
}

std::unique_ptr<BinaryClassifier> load_model(const fs::path& file) { return classifier_from_json(read_json_file(file)); }

struct Options {
  // shared
  std::string data;
  bool strict = false;
  std::uint64_t seed = 1;
  std::string preprocessor;
  std::string out;
  std::size_t workers = 0;

  // gen-data
  std::size_t count_per_class = 2000;
  std::string defender_out;
  std::string attacker_out;
  double defender_fraction = 0.5;

  // train-victim
  MlpConfig mlp;
  bool full_width = false;

  // train-surrogate
  TreeConfig tree;
  double train_fraction = 0.6;
  std::string context_out;
  double entropy_step = 0.05;
  std::int64_t timestamp_step = 1000;

  // search
  std::string engine = "mcts";
  std::string surrogate;
  std::string context;
  std::string telemetry_out;
  SearchConfig mcts;
  std::string backprop = "faithful";
  std::string recovery = "argmax";
  RandomSearchConfig random;
  std::size_t query_budget = 0;
  std::size_t max_targets = 0;

  // apply / evaluate
  std::string paths;
  std::string model;
  double threshold = 0.5;

  // report
  std::string input;
  std::vector<std::string> formats = {"json", "markdown", "csv"};

  // run-all
  std::string config;
  bool quiet = false;
};

int cmd_gen_data(const Options& o) {
  auto records = generate_synthetic(o.count_per_class, o.seed);
  if (!o.out.empty()) write_jsonl(o.out, records);
  if (!o.defender_out.empty() || !o.attacker_out.empty()) {
    if (o.defender_out.empty() || o.attacker_out.empty())
      throw ConfigError("--defender-out and --attacker-out must be given together");
    auto corpora = split_corpus(records, o.defender_fraction, derive_seed(o.seed, 2));
    write_jsonl(o.defender_out, corpora.defender);
    write_jsonl(o.attacker_out, corpora.attacker);
  }
  std::cerr << "generated " << records.size() << " records\n";
  return 0;
}

int cmd_train_victim(const Options& o) {
  const auto records = load_records(o.data, o.strict);
  const auto pre = fit_preprocessor(records);
  auto [X, y] = labelled_matrix(pre, records);
  MlpConfig cfg = o.mlp;
  if (o.full_width) cfg.hidden = MlpConfig::full_width_hidden();
  cfg.seed = o.seed;
  MlpTrainingHistory history;
  const auto model = train_mlp(X, y, cfg, &history);
  write_json_file(o.preprocessor, pre);
  write_json_file(o.out, model.to_json());
  std::cout << nlohmann::json{{"samples", y.size()},
                              {"selected_epoch", history.selected_epoch},
                              {"train_loss", history.train_loss},
                              {"validation_loss", history.validation_loss}}
                   .dump(2)
            << "\n";
  return 0;
}

int cmd_train_surrogate(const Options& o) {
  const auto records = load_records(o.data, o.strict);
  const auto pre = preprocessor_from_json(read_json_file(o.preprocessor));
  auto [train, holdout] = stratified_split(records, o.train_fraction, o.seed);
  auto [X, y] = labelled_matrix(pre, train);
  const auto tree = train_decision_tree(X, y, o.tree);
  write_json_file(o.out, tree.to_json());
  nlohmann::json summary = {{"train_samples", y.size()}, {"depth", tree.depth()}, {"nodes", tree.nodes().size()}};
  auto [Xh, yh] = labelled_matrix(pre, holdout);
  if (std::count(yh.begin(), yh.end(), 1) > 0 && std::count(yh.begin(), yh.end(), 0) > 0)
    summary["holdout"] = evaluate(tree, Xh, yh);
  if (!o.context_out.empty()) {
    auto ctx = derive_context(train, derive_seed(o.seed, 5));
    ctx.entropy_step = o.entropy_step;
    ctx.timestamp_step = o.timestamp_step;
    ctx.validate();
    write_json_file(o.context_out, ctx);
  }
  std::cout << summary.dump(2) << "\n";
  return 0;
}

int cmd_search(const Options& o) {
  const auto records = load_records(o.data, o.strict);
  const auto pre = preprocessor_from_json(read_json_file(o.preprocessor));
  const auto model = load_model(o.surrogate);
  const auto ctx = context_from_json(read_json_file(o.context));
  const ModelSurrogate surrogate(pre, *model);

  std::vector<SampleRecord> targets;
  std::size_t excluded = 0;
  for (const auto& s : records) {
    if (s.label != Label::malicious) continue;
    if (surrogate.is_benign(s)) {
      ++excluded;
      continue;
    }
    if (o.max_targets && targets.size() >= o.max_targets) break;
    targets.push_back(s);
  }

  SearchJob job{o.engine, o.mcts, o.random};
  job.mcts.backprop = backprop_mode_from_string(o.backprop);
  job.mcts.recovery = recovery_mode_from_string(o.recovery);
  job.mcts.seed = o.seed;
  job.random.seed = o.seed;
  std::vector<std::size_t> budgets;
  if (o.engine == "random" && o.query_budget > 0) budgets.assign(targets.size(), o.query_budget);
  const auto results = run_searches(targets, surrogate, ctx, job, o.workers, budgets.empty() ? nullptr : &budgets);

  std::vector<MutationPath> paths;
  std::size_t found = 0;
  std::size_t queries = 0;
  for (const auto& r : results) {
    paths.push_back(r.path);
    found += r.path.surrogate_benign ? 1 : 0;
    queries += r.telemetry.surrogate_queries;
  }
  fs::path partial = o.out;
  partial += ".partial";
  write_paths(partial, paths);
  fs::rename(partial, o.out);
  if (!o.telemetry_out.empty()) {
    std::ofstream t(o.telemetry_out, std::ios::binary);
    if (!t) throw Error("cannot write " + o.telemetry_out);
    for (const auto& r : results) {
      nlohmann::json j = r.telemetry;
      j["sample_id"] = r.path.sample_id;
      t << j.dump() << "\n";
    }
  }
  std::cout << nlohmann::json{{"engine", o.engine},
                              {"targets", targets.size()},
                              {"already_benign", excluded},
                              {"found", found},
                              {"surrogate_queries", queries}}
                   .dump(2)
            << "\n";
  return 0;
}

int cmd_apply(const Options& o) {
  const auto records = load_records(o.data, o.strict);
  const auto ctx = context_from_json(read_json_file(o.context));
  const auto paths = read_paths(o.paths);
  std::map<std::string, const SampleRecord*> by_id;
  for (const auto& r : records) by_id[r.sample_id] = &r;

  std::vector<SampleRecord> mutated;
  std::size_t invalid = 0;
  for (const auto& p : paths) {
    if (!p.surrogate_benign) continue;
    auto it = by_id.find(p.sample_id);
    if (it == by_id.end()) {
      ++invalid;
      std::cerr << "invalid path: " << p.sample_id << ": unknown sample\n";
      continue;
    }
    try {
      mutated.push_back(apply_path(*it->second, p.path, ctx, path_rng(ctx, p.sample_id)));
    } catch (const MutationError& e) {
      ++invalid;
      std::cerr << "invalid path: " << p.sample_id << ": " << e.what() << "\n";
    }
  }
  write_jsonl(o.out, mutated);
  std::cout << nlohmann::json{{"applied", mutated.size()}, {"invalid_paths", invalid}}.dump(2) << "\n";
  return 0;
}

int cmd_evaluate(const Options& o) {
  const auto records = load_records(o.data, o.strict);
  const auto pre = preprocessor_from_json(read_json_file(o.preprocessor));
  const auto model = load_model(o.model);
  const ModelSurrogate oracle(pre, *model, o.threshold);
  std::size_t benign = 0;
  for (const auto& r : records) benign += oracle.is_benign(r) ? 1 : 0;
  nlohmann::json out = {{"samples", records.size()},
                        {"predicted_benign", benign},
                        {"predicted_malicious", records.size() - benign}};
  auto [X, y] = labelled_matrix(pre, records);
  if (std::count(y.begin(), y.end(), 1) > 0 && std::count(y.begin(), y.end(), 0) > 0)
    out["metrics"] = evaluate(*model, X, y, o.threshold);
  else
    out["metrics"] = nullptr;
  std::cout << out.dump(2) << "\n";
  return 0;
}

int cmd_report(const Options& o) {
  const auto report = report_from_json(read_json_file(o.input));
  std::vector<ReportFormat> formats;
  for (const auto& f : o.formats) formats.push_back(report_format_from_string(f));
  for (const auto& file : emit_report(report, o.out, formats)) std::cout << file.string() << "\n";
  return 0;
}

ExperimentConfig load_config(const Options& o, const CLI::App& sub) {
  nlohmann::json doc = nlohmann::json::object();
  if (!o.config.empty()) {
    std::ifstream in(o.config);
    if (!in) throw ConfigError("cannot read config file " + o.config);
    try {
      doc = nlohmann::json::parse(in, nullptr, true, true);
    } catch (const nlohmann::json::parse_error& e) {
      throw ConfigError("config file " + o.config + ": " + e.what());
    }
  }
  auto given = [&](const char* name) { return sub.count(name) > 0; };
  if (given("--seed")) doc["seed"] = o.seed;
  if (given("--out-dir")) doc["output_dir"] = o.out;
  if (given("--data")) doc["data_path"] = o.data;
  if (given("--strict")) doc["strict_ingest"] = true;
  if (given("--count-per-class")) doc["synthetic_count_per_class"] = o.count_per_class;
  if (given("--max-targets")) doc["max_targets"] = o.max_targets;
  if (given("--workers")) doc["workers"] = o.workers;
  if (given("--iterations")) doc["mcts"]["iterations"] = o.mcts.iterations;
  if (given("--backprop")) doc["mcts"]["backprop"] = o.backprop;
  if (given("--recovery")) doc["mcts"]["recovery"] = o.recovery;
  if (given("--patience")) doc["mcts"]["patience"] = o.mcts.patience;
  if (given("--epochs")) doc["mlp"]["epochs"] = o.mlp.epochs;
  if (given("--engine")) doc["engines"] = std::vector<std::string>{o.engine};
  if (given("--full-width") && o.full_width) doc["mlp"]["hidden"] = MlpConfig::full_width_hidden();
  return experiment_config_from_json(doc);
}

int cmd_run_all(const Options& o, const CLI::App& sub) {
  const auto config = load_config(o, sub);
  std::function<void(const std::string&)> log;
  if (!o.quiet) log = [](const std::string& msg) { std::cerr << msg << "\n"; };
  const auto report = run_experiment(config, log);
  for (const auto& w : report.warnings) std::cerr << "warning: " << w << "\n";
  for (const auto& e : report.engines) {
    std::cout << e.engine << ": surrogate mutation rate " << e.surrogate_mutation_rate << ", victim evasion "
              << e.victim_evasion_rate_over_total << " of total / " << e.victim_evasion_rate_over_mutated
              << " of mutated\n";
  }
  std::cout << "artifacts in " << config.output_dir.string() << "\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  Options o;
  CLI::App app{"Feature-space evasion of malware classifiers with MCTS"};
  app.require_subcommand(1);

  auto* gen = app.add_subcommand("gen-data", "Generate a synthetic labelled corpus");
  gen->add_option("--count-per-class", o.count_per_class, "Samples per class")->capture_default_str();
  gen->add_option("--seed", o.seed)->capture_default_str();
  gen->add_option("--out", o.out, "JSONL output for the whole corpus");
  gen->add_option("--defender-out", o.defender_out, "Write the defender split here");
  gen->add_option("--attacker-out", o.attacker_out, "Write the attacker split here");
  gen->add_option("--defender-fraction", o.defender_fraction)->capture_default_str();

  auto* victim = app.add_subcommand("train-victim", "Fit the preprocessor and train the MLP victim");
  victim->add_option("--data", o.data, "Defender corpus (JSONL)")->required();
  victim->add_option("--preprocessor-out", o.preprocessor, "Preprocessor JSON to write")->required();
  victim->add_option("--out", o.out, "Model JSON to write")->required();
  victim->add_option("--seed", o.seed)->capture_default_str();
  victim->add_option("--epochs", o.mlp.epochs)->capture_default_str();
  victim->add_option("--hidden", o.mlp.hidden, "Hidden layer widths");
  victim->add_option("--learning-rate", o.mlp.learning_rate)->capture_default_str();
  victim->add_option("--batch-size", o.mlp.batch_size)->capture_default_str();
  victim->add_flag("--full-width", o.full_width, "Use 512/256/128/256/128/256/128 hidden layers");
  victim->add_flag("--strict", o.strict, "Fail on malformed input lines");

  auto* surr = app.add_subcommand("train-surrogate", "Train the decision-tree surrogate on the attacker corpus");
  surr->add_option("--data", o.data, "Attacker corpus (JSONL)")->required();
  surr->add_option("--preprocessor", o.preprocessor, "Preprocessor JSON")->required();
  surr->add_option("--out", o.out, "Model JSON to write")->required();
  surr->add_option("--context-out", o.context_out, "Also derive and write the mutation context");
  surr->add_option("--train-fraction", o.train_fraction)->capture_default_str();
  surr->add_option("--max-depth", o.tree.max_depth)->capture_default_str();
  surr->add_option("--min-samples-leaf", o.tree.min_samples_leaf)->capture_default_str();
  surr->add_option("--entropy-step", o.entropy_step)->capture_default_str();
  surr->add_option("--timestamp-step", o.timestamp_step)->capture_default_str();
  surr->add_option("--seed", o.seed)->capture_default_str();
  surr->add_flag("--strict", o.strict, "Fail on malformed input lines");

  auto* srch = app.add_subcommand("search", "Search mutation paths for every malicious sample");
  srch->add_option("--engine", o.engine)->check(CLI::IsMember({"mcts", "random"}))->capture_default_str();
  srch->add_option("--data", o.data, "Samples to attack (JSONL)")->required();
  srch->add_option("--preprocessor", o.preprocessor)->required();
  srch->add_option("--surrogate", o.surrogate, "Surrogate model JSON")->required();
  srch->add_option("--context", o.context, "Mutation context JSON")->required();
  srch->add_option("--out", o.out, "Paths JSONL to write")->required();
  srch->add_option("--telemetry-out", o.telemetry_out);
  srch->add_option("--iterations", o.mcts.iterations)->capture_default_str();
  srch->add_option("--exploration-c", o.mcts.exploration_c)->capture_default_str();
  srch->add_option("--simulation-depth", o.mcts.simulation_depth)->capture_default_str();
  srch->add_option("--patience", o.mcts.patience)->capture_default_str();
  srch->add_option("--backprop", o.backprop)->check(CLI::IsMember({"faithful", "preserving"}))->capture_default_str();
  srch->add_option("--recovery", o.recovery)
      ->check(CLI::IsMember({"argmax", "shortest_terminal"}))
      ->capture_default_str();
  srch->add_option("--attempts", o.random.attempts)->capture_default_str();
  srch->add_option("--max-mutations", o.random.max_mutations)->capture_default_str();
  srch->add_option("--query-budget", o.query_budget, "Random search: queries per sample");
  srch->add_option("--max-targets", o.max_targets);
  srch->add_option("--workers", o.workers);
  srch->add_option("--seed", o.seed)->capture_default_str();
  srch->add_flag("--strict", o.strict, "Fail on malformed input lines");

  auto* apply_cmd = app.add_subcommand("apply", "Replay paths onto their original samples");
  apply_cmd->add_option("--data", o.data, "Original samples (JSONL)")->required();
  apply_cmd->add_option("--paths", o.paths, "Paths JSONL")->required();
  apply_cmd->add_option("--context", o.context, "Mutation context JSON")->required();
  apply_cmd->add_option("--out", o.out, "Mutated samples JSONL to write")->required();
  apply_cmd->add_flag("--strict", o.strict, "Fail on malformed input lines");

  auto* eval = app.add_subcommand("evaluate", "Score a model on a JSONL corpus");
  eval->add_option("--data", o.data)->required();
  eval->add_option("--preprocessor", o.preprocessor)->required();
  eval->add_option("--model", o.model)->required();
  eval->add_option("--threshold", o.threshold)->capture_default_str();
  eval->add_flag("--strict", o.strict, "Fail on malformed input lines");

  auto* rep = app.add_subcommand("report", "Re-render a saved report.json");
  rep->add_option("--input", o.input, "report.json")->required();
  rep->add_option("--format", o.formats, "json, markdown, csv")->capture_default_str();
  rep->add_option("--out-dir", o.out, "Output directory")->required();

  auto* all = app.add_subcommand("run-all", "Run the whole pipeline");
  all->add_option("--config", o.config, "JSON configuration document");
  all->add_option("--seed", o.seed);
  all->add_option("--out-dir", o.out);
  all->add_option("--data", o.data, "JSONL corpus instead of synthetic data");
  all->add_flag("--strict", o.strict);
  all->add_option("--count-per-class", o.count_per_class);
  all->add_option("--engine", o.engine)->check(CLI::IsMember({"mcts", "random"}));
  all->add_option("--iterations", o.mcts.iterations);
  all->add_option("--patience", o.mcts.patience);
  all->add_option("--backprop", o.backprop)->check(CLI::IsMember({"faithful", "preserving"}));
  all->add_option("--recovery", o.recovery)->check(CLI::IsMember({"argmax", "shortest_terminal"}));
  all->add_option("--epochs", o.mlp.epochs);
  all->add_flag("--full-width", o.full_width);
  all->add_option("--max-targets", o.max_targets);
  all->add_option("--workers", o.workers);
  all->add_flag("--quiet", o.quiet);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : kExitConfig;
  }

  const auto* sub = app.get_subcommands().front();
  try {
    if (sub == gen) return cmd_gen_data(o);
    if (sub == victim) return cmd_train_victim(o);
    if (sub == surr) return cmd_train_surrogate(o);
    if (sub == srch) return cmd_search(o);
    if (sub == apply_cmd) return cmd_apply(o);
    if (sub == eval) return cmd_evaluate(o);
    if (sub == rep) return cmd_report(o);
    return cmd_run_all(o, *all);
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return kExitConfig;
  } catch (const StageError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitStage;
  } catch (const std::exception& e) {
    std::cerr << "error: stage '" << sub->get_name() << "' failed: " << e.what() << "\n";
    return kExitStage;
  }
}
