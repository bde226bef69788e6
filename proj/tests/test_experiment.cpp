#include <doctest.h>

#include <fstream>
#include <random>
#include <set>
#include <sstream>

#include "evade/experiment.hpp"
#include "evade/report.hpp"
#include "fixtures.hpp"
#include "oracles.hpp"

using namespace evade;
using K = MutationKind;

namespace {

std::string slurp(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

ExperimentConfig small_config(const std::filesystem::path& dir) {
  ExperimentConfig c;
  c.synthetic_count_per_class = 150;
  c.mlp.hidden = {16, 8};
  c.mlp.epochs = 3;
  c.mcts.iterations = 100;
  c.max_targets = 20;
  c.workers = 2;
  c.output_dir = dir;
  c.seed = 3;
  return c;
}

}  // namespace

TEST_CASE("mutation statistics on a hand-counted example") {
  const std::vector<std::vector<K>> paths{{K::ChangeSignature},
                                          {K::ChangeSignature, K::ChangeStringEntropyWithSize},
                                          {K::ChangeStringEntropyWithSize, K::ChangeStringEntropyWithSize}};
  const auto stats = compute_mutation_stats(paths);
  const auto& sig = stats[id(K::ChangeSignature)];
  CHECK(sig == MutationKindStats{1, 1, 0, 2, 2});
  const auto& ent = stats[id(K::ChangeStringEntropyWithSize)];
  CHECK(ent == MutationKindStats{1, 1, 1, 2, 3});
  for (auto k : all_mutation_kinds())
    if (k != K::ChangeSignature && k != K::ChangeStringEntropyWithSize) CHECK(stats[id(k)] == MutationKindStats{});
}

TEST_CASE("mutation statistics agree with the counting oracle") {
  std::mt19937_64 gen(8);
  for (int t = 0; t < 50; ++t) {
    std::vector<std::vector<K>> paths;
    std::vector<std::vector<int>> raw;
    for (int i = 0; i < 30; ++i) {
      std::vector<K> p;
      std::vector<int> r;
      const auto len = 1 + gen() % 6;
      for (std::size_t j = 0; j < len; ++j) {
        const int k = static_cast<int>(gen() % 12);
        p.push_back(static_cast<K>(k));
        r.push_back(k);
      }
      paths.push_back(p);
      raw.push_back(r);
    }
    const auto stats = compute_mutation_stats(paths);
    const auto table = oracle::count_table(raw);
    for (int k = 0; k < 12; ++k) {
      const auto it = table.find(k);
      const oracle::KindCounts want = it == table.end() ? oracle::KindCounts{} : it->second;
      const auto& got = stats[static_cast<std::size_t>(k)];
      CHECK(got.alone == want.alone);
      CHECK(got.in_group == want.in_group);
      CHECK(got.repeats == want.repeats);
      CHECK(got.affected_instances == want.affected);
      CHECK(got.total_occurrence == want.total);
    }
  }
}

TEST_CASE("empty path list gives an all-zero table") {
  const auto stats = compute_mutation_stats(std::vector<std::vector<K>>{});
  for (const auto& row : stats) CHECK(row == MutationKindStats{});
  const std::vector<MutationPath> failed{{"a", {K::AddBytes}, "mcts", false, 5}};
  CHECK(compute_mutation_stats(failed)[id(K::AddBytes)] == MutationKindStats{});
}

TEST_CASE("config json") {
  SUBCASE("round trip") {
    ExperimentConfig c;
    c.seed = 42;
    c.mcts.backprop = BackpropMode::preserving;
    c.mcts.iterations = 77;
    c.engines = {"random"};
    const nlohmann::json j = c;
    const auto back = experiment_config_from_json(j);
    CHECK(nlohmann::json(back) == j);
  }
  SUBCASE("unknown key") {
    CHECK_THROWS_AS(experiment_config_from_json({{"seeed", 1}}), ConfigError);
    CHECK_THROWS_AS(experiment_config_from_json({{"mcts", {{"iteration", 5}}}}), ConfigError);
  }
  SUBCASE("bad values") {
    CHECK_THROWS_AS(experiment_config_from_json({{"seed", "one"}}), ConfigError);
    CHECK_THROWS_AS(experiment_config_from_json({{"engines", {"mcts", "beam"}}}), ConfigError);
    CHECK_THROWS_AS(experiment_config_from_json({{"defender_fraction", 1.5}}), ConfigError);
    CHECK_THROWS_AS(experiment_config_from_json({{"random", {{"max_mutations", 0}}}}), ConfigError);
  }
}

TEST_CASE("derived seeds differ per stage") {
  const auto s = DerivedSeeds::from(1);
  const std::set<std::uint64_t> all{s.data, s.split, s.surrogate_split, s.victim, s.mutation, s.mcts, s.random};
  CHECK(all.size() == 7);
  CHECK(DerivedSeeds::from(1).mcts == s.mcts);
}

TEST_CASE("corpus split") {
  const auto records = generate_synthetic(101, 4);
  const auto c = split_corpus(records, 0.5, 9);
  CHECK(c.defender.size() + c.attacker.size() == records.size());
  std::set<std::string> ids;
  for (const auto& s : c.defender) ids.insert(s.sample_id);
  for (const auto& s : c.attacker) CHECK(ids.count(s.sample_id) == 0);
  std::size_t mal = 0;
  for (const auto& s : c.defender) mal += s.label == Label::malicious ? 1 : 0;
  CHECK(mal == 51);

  auto dup = records;
  dup.push_back(records.front());
  CHECK_THROWS_AS(split_corpus(dup, 0.5, 9), Error);

  auto unlabelled = records;
  unlabelled.front().label = Label::unknown;
  const auto u = split_corpus(unlabelled, 0.5, 9);
  bool found = false;
  for (const auto& s : u.attacker) found = found || s.sample_id == records.front().sample_id;
  CHECK(found);
}

TEST_CASE("replay counts invalid and mismatched paths") {
  const auto ctx = fixture::context();
  const auto a = fixture::malware("a");
  const auto b = fixture::malware("b");
  const auto c = fixture::malware("c");
  std::map<std::string, const SampleRecord*> originals{{"a", &a}, {"b", &b}, {"c", &c}};
  const PredicateSurrogate surrogate([](const SampleRecord& r) { return r.has_signature.value_or(false); });
  const PredicateSurrogate victim([](const SampleRecord& r) { return r.file_size.value_or(0) > 1000; });
  const std::vector<MutationPath> paths{
      {"a", {K::ChangeSignature, K::ChangeSignature}, "mcts", true, 1},
      {"b", {K::AddBytes}, "mcts", true, 1},
      {"c", {K::AddBytes, K::ChangeSignature}, "mcts", true, 1},
      {"ghost", {K::ChangeSignature}, "mcts", true, 1},
      {"x", {}, "mcts", false, 9},
  };
  const auto r = replay_paths(paths, originals, ctx, surrogate, &victim);
  CHECK(r.invalid_paths == 2);
  CHECK(r.replay_mismatches == 1);
  CHECK(r.mutated == 1);
  CHECK(r.victim_evaded == 1);

  const auto e = summarize_engine("mcts", paths, r, 10);
  CHECK(e.malware_total == 5);
  CHECK(e.failed == 4);
  CHECK(e.surrogate_mutation_rate == 1.0 / 5.0);
  CHECK(e.victim_evasion_rate_over_total == 1.0 / 5.0);
  CHECK(e.victim_evasion_rate_over_mutated == 1.0);
  CHECK(e.length_histogram == std::vector<std::size_t>{0, 0, 1});
  CHECK(e.stats[id(K::AddBytes)].affected_instances == 1);
}

TEST_CASE("report rendering is deterministic and round trips") {
  EvasionReport r;
  r.config = ExperimentConfig{};
  r.seeds = DerivedSeeds::from(5);
  r.defender_size = 10;
  r.attacker_size = 10;
  r.attacker_malware = 5;
  EngineReport e;
  e.engine = "mcts";
  e.malware_total = 4;
  e.mutated = 3;
  e.failed = 1;
  e.victim_evaded = 1;
  e.length_histogram = {0, 2, 0, 1};
  e.stats[id(K::ChangeSignature)] = {2, 1, 0, 3, 3};
  e.surrogate_mutation_rate = 0.75;
  e.victim_evasion_rate_over_total = 0.25;
  e.victim_evasion_rate_over_mutated = 1.0 / 3.0;
  r.engines.push_back(e);
  r.warnings.push_back("note");

  const auto d1 = fixture::scratch("report1");
  const auto d2 = fixture::scratch("report2");
  const auto files = emit_report(r, d1, {ReportFormat::json, ReportFormat::markdown, ReportFormat::csv});
  emit_report(r, d2, {ReportFormat::json, ReportFormat::markdown, ReportFormat::csv});
  CHECK(files.size() == 4);
  for (const auto& f : files) CHECK(slurp(f) == slurp(d2 / f.filename()));

  const auto md = slurp(d1 / "report.md");
  CHECK(md.find("| Mutation | Alone | In Group | Repeats | Affected Instances | Total Occurrence |") != std::string::npos);
  CHECK(md.find("| Change Signature | 2 | 1 | 0 | 3 | 3 |") != std::string::npos);
  CHECK(slurp(d1 / "histogram_mcts.csv") == "mutations,samples\n1,2\n2,0\n3,1\nfailed,1\n");

  const auto j = nlohmann::json::parse(slurp(d1 / "report.json"));
  CHECK(nlohmann::json(report_from_json(j)) == j);
  CHECK(report_format_from_string("md") == ReportFormat::markdown);
  CHECK_THROWS_AS(report_format_from_string("xml"), ConfigError);
}

TEST_CASE("a corpus without malware yields an empty report") {
  const auto dir = fixture::scratch("nomalware");
  std::vector<SampleRecord> benign;
  for (auto s : generate_synthetic(30, 2))
    if (s.label == Label::benign) benign.push_back(s);
  write_jsonl(dir / "benign.jsonl", benign);
  auto c = small_config(dir / "out");
  c.data_path = dir / "benign.jsonl";
  const auto r = run_experiment(c);
  REQUIRE(r.engines.size() == 2);
  for (const auto& e : r.engines) {
    CHECK(e.malware_total == 0);
    CHECK(e.surrogate_mutation_rate == 0.0);
  }
  CHECK_FALSE(r.warnings.empty());
  CHECK(std::filesystem::exists(dir / "out" / "report.json"));
}

TEST_CASE("small pipeline run") {
  const auto dir = fixture::scratch("pipeline");
  const auto r1 = run_experiment(small_config(dir / "a"));
  const auto r2 = run_experiment(small_config(dir / "b"));
  for (const char* f : {"report.md", "paths_mcts.jsonl", "paths_random.jsonl", "stats_mcts.csv"})
    CHECK(slurp(dir / "a" / f) == slurp(dir / "b" / f));
  auto ja = nlohmann::json::parse(slurp(dir / "a" / "report.json"));
  auto jb = nlohmann::json::parse(slurp(dir / "b" / "report.json"));
  CHECK(ja["config"]["output_dir"] != jb["config"]["output_dir"]);
  ja["config"].erase("output_dir");
  jb["config"].erase("output_dir");
  CHECK(ja == jb);
  REQUIRE(r1.engines.size() == 2);
  for (const auto& e : r1.engines) {
    CHECK(e.invalid_paths == 0);
    CHECK(e.replay_mismatches == 0);
    CHECK(e.mutated + e.failed == e.malware_total);
    CHECK(e.malware_total <= 20);
  }
  const auto paths = read_paths(dir / "a" / "paths_mcts.jsonl");
  CHECK(paths.size() == r1.engines[0].malware_total);
  CHECK_FALSE(std::filesystem::exists(dir / "a" / "paths_mcts.jsonl.partial"));
}

TEST_CASE("stage failures are reported as stage errors") {
  const auto dir = fixture::scratch("stagefail");
  auto c = small_config(dir / "out");
  c.data_path = dir / "missing.jsonl";
  CHECK_THROWS_AS(run_experiment(c), StageError);
}
