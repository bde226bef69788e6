#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <random>

#include <nlohmann/json.hpp>

#include "evade/error.hpp"
#include "evade/mutation.hpp"
#include "fixtures.hpp"

using namespace evade;
using K = MutationKind;

TEST_CASE("mutation ids and names") {
  CHECK(id(K::ChangeSignature) == 11);
  CHECK(mutation_from_id(3) == K::ChangeStringEntropyWithSize);
  CHECK_THROWS_AS(mutation_from_id(12), Error);
  CHECK(mutation_name(K::ChangeSignature) == "change_signature");
  CHECK(mutation_title(K::AddSection) == "Add Section");
}

TEST_CASE("fresh sample allows every kind") {
  const auto ctx = fixture::context();
  CHECK(allowed_mutations(fixture::malware(), {}, ctx).size() == 12);
}

TEST_CASE("string cap excludes both string additions") {
  const auto ctx = fixture::context();
  MutationBudget b;
  b.applied[id(K::AddString)] = 15;
  const auto allowed = allowed_mutations(fixture::malware(), b, ctx);
  CHECK(std::find(allowed.begin(), allowed.end(), K::AddString) == allowed.end());
  CHECK(std::find(allowed.begin(), allowed.end(), K::AddStringWithSize) == allowed.end());
  CHECK(allowed.size() == 10);
}

TEST_CASE("ImportFunction needs an absent candidate") {
  const auto ctx = fixture::context();
  auto s = fixture::malware();
  for (const auto& f : ctx.candidate_functions) s.imported_functions.insert(f);
  CHECK_FALSE(is_allowed(s, {}, ctx, K::ImportFunction));
}

TEST_CASE("ChangeSignature sets only the flag") {
  const auto ctx = fixture::context();
  const auto s = fixture::malware();
  const auto m = apply(s, K::ChangeSignature, {}, ctx, path_rng(ctx, s.sample_id));
  auto expected = s;
  expected.has_signature = true;
  CHECK(m.sample == expected);
  CHECK(m.budget.count(K::ChangeSignature) == 1);
}

TEST_CASE("AddSection adds a section and 512 bytes") {
  const auto ctx = fixture::context();
  auto s = fixture::malware();
  s.file_size = 1000;
  s.num_sections = 4;
  const auto m = apply(s, K::AddSection, {}, ctx, path_rng(ctx, s.sample_id));
  CHECK(m.sample.file_size == 1512);
  CHECK(m.sample.num_sections == 5);
}

TEST_CASE("ChangeTimestamp at the target is not allowed") {
  const auto ctx = fixture::context();
  auto s = fixture::malware();
  s.timestamp = ctx.benign_timestamp_target;
  CHECK_THROWS_WITH_AS(apply(s, K::ChangeTimestamp, {}, ctx, {}), "precondition failed: timestamp already at target",
                       MutationError);
}

TEST_CASE("ChangeTimestamp moves one step toward the target") {
  const auto ctx = fixture::context();
  auto s = fixture::malware();
  const auto m = apply(s, K::ChangeTimestamp, {}, ctx, {});
  CHECK(m.sample.timestamp == *s.timestamp - 1000);
  s.timestamp = ctx.benign_timestamp_target + 10;
  CHECK(apply(s, K::ChangeTimestamp, {}, ctx, {}).sample.timestamp == ctx.benign_timestamp_target);
}

TEST_CASE("16th AddString hits the cap") {
  const auto ctx = fixture::context();
  SampleRecord s = fixture::malware();
  MutationBudget b;
  const auto rng = path_rng(ctx, s.sample_id);
  for (int i = 0; i < 15; ++i) apply_in_place(s, b, K::AddString, ctx, rng);
  CHECK(s.num_strings == 315);
  CHECK_THROWS_WITH_AS(apply(s, K::AddString, b, ctx, rng), "cap exceeded: strings_added=15", MutationError);
}

TEST_CASE("entropy change moves toward the benign target") {
  const auto ctx = fixture::context();
  const auto s = fixture::malware();
  const auto m = apply(s, K::ChangeStringEntropy, {}, ctx, {});
  CHECK(*m.sample.strings_entropy == doctest::Approx(6.2 - 0.05));
  const auto w = apply(s, K::ChangeStringEntropyWithSize, {}, ctx, {});
  CHECK(*w.sample.strings_entropy == doctest::Approx(6.2 - 0.10));
  CHECK(w.sample.file_size == 1030);
}

TEST_CASE("RemoveDebug and AddCodeBytes") {
  const auto ctx = fixture::context();
  const auto s = fixture::malware();
  const auto d = apply(s, K::RemoveDebug, {}, ctx, {});
  CHECK(d.sample.has_debug == false);
  CHECK_THROWS_AS(apply(d.sample, K::RemoveDebug, d.budget, ctx, {}), MutationError);
  const auto c = apply(s, K::AddCodeBytes, {}, ctx, {});
  CHECK(c.sample.size_of_code == 4096 + 64);
  CHECK(c.sample.file_size == 1000 + 64);
}

TEST_CASE("ImportFunction adds one candidate and its library") {
  const auto ctx = fixture::context();
  const auto s = fixture::malware();
  const auto m = apply(s, K::ImportFunction, {}, ctx, path_rng(ctx, s.sample_id));
  CHECK(m.sample.imported_functions.size() == 2);
  CHECK(m.sample.num_imports == 21);
  std::size_t hits = 0;
  for (const auto& f : ctx.candidate_functions) {
    if (!m.sample.imported_functions.contains(f)) continue;
    ++hits;
    CHECK(m.sample.imported_libraries.contains(f.substr(0, f.find(':'))));
  }
  CHECK(hits == 1);
}

TEST_CASE("apply_path") {
  const auto ctx = fixture::context();
  const auto s = fixture::malware();
  const auto rng = path_rng(ctx, s.sample_id);

  SUBCASE("empty path is the identity") { CHECK(apply_path(s, {}, ctx, rng) == s); }

  SUBCASE("three AddBytes add 384 bytes") {
    const std::vector<K> p{K::AddBytes, K::AddBytes, K::AddBytes};
    CHECK(apply_path(s, p, ctx, rng).file_size == 1000 + 384);
  }

  SUBCASE("replaying ChangeSignature fails at index 0") {
    const std::vector<K> p{K::ChangeSignature};
    const auto once = apply_path(s, p, ctx, rng);
    CHECK_THROWS_WITH_AS(apply_path(once, p, ctx, rng),
                         "path index 0 (change_signature): precondition failed: has_signature is true", MutationError);
  }
}

TEST_CASE("apply leaves its inputs untouched") {
  const auto ctx = fixture::context();
  const auto s = fixture::malware();
  const auto copy = s;
  MutationBudget b;
  for (auto k : all_mutation_kinds()) {
    const auto m = apply(s, k, b, ctx, path_rng(ctx, s.sample_id));
    CHECK(s == copy);
    CHECK(b == MutationBudget{});
    CHECK(m.budget.total() == 1);
  }
}

TEST_CASE("permuted paths reach the same record") {
  const auto ctx = fixture::context();
  const auto s = fixture::malware();
  const auto rng = path_rng(ctx, s.sample_id);
  std::mt19937_64 gen(21);
  for (int t = 0; t < 200; ++t) {
    std::vector<K> path;
    MutationBudget b;
    SampleRecord cur = s;
    for (int step = 0; step < 10; ++step) {
      const auto allowed = allowed_mutations(cur, b, ctx);
      const auto k = allowed[gen() % allowed.size()];
      apply_in_place(cur, b, k, ctx, rng);
      path.push_back(k);
    }
    auto shuffled = path;
    std::shuffle(shuffled.begin(), shuffled.end(), gen);
    // Entropy blends do not commute exactly.
    const auto other = apply_path_with_budget(s, shuffled, ctx, rng);
    CHECK(other.budget == b);
    CHECK(other.sample.num_strings == cur.num_strings);
    CHECK(other.sample.file_size == cur.file_size);
    CHECK(other.sample.num_sections == cur.num_sections);
    CHECK(other.sample.size_of_code == cur.size_of_code);
    CHECK(other.sample.imported_functions == cur.imported_functions);
    CHECK(other.sample.has_signature == cur.has_signature);
    CHECK(other.sample.has_debug == cur.has_debug);
    CHECK(other.sample.timestamp == cur.timestamp);
    CHECK(std::abs(*other.sample.strings_entropy - *cur.strings_entropy) < 0.01);
  }
}

TEST_CASE("same inputs give the same output") {
  const auto ctx = fixture::context();
  const auto s = fixture::malware();
  for (auto k : all_mutation_kinds()) {
    const auto a = apply(s, k, {}, ctx, path_rng(ctx, s.sample_id));
    const auto b = apply(s, k, {}, ctx, path_rng(ctx, s.sample_id));
    CHECK(a.sample == b.sample);
  }
}

TEST_CASE("a dominating budget never allows more") {
  const auto ctx = fixture::context();
  const auto s = fixture::malware();
  std::mt19937_64 gen(4);
  for (int t = 0; t < 500; ++t) {
    MutationBudget small, big;
    for (std::size_t k = 0; k < kMutationKindCount; ++k) {
      small.applied[k] = static_cast<std::uint16_t>(gen() % 4);
      big.applied[k] = static_cast<std::uint16_t>(small.applied[k] + gen() % 3);
    }
    for (auto k : allowed_mutations(s, big, ctx)) CHECK(is_allowed(s, small, ctx, k));
  }
}

TEST_CASE("budget dominance") {
  MutationBudget a, b;
  a.applied[0] = 2;
  b.applied[0] = 1;
  CHECK(a.dominates(b));
  CHECK_FALSE(b.dominates(a));
  b.applied[5] = 1;
  CHECK_FALSE(a.dominates(b));
  CHECK(a.dominates(a));
}

TEST_CASE("truncated mutation space") {
  auto ctx = fixture::context();
  ctx.limits.enabled_mask = (1u << id(K::AddSection)) | (1u << id(K::ChangeSignature));
  ctx.limits.per_kind_cap[id(K::AddSection)] = 2;
  const auto s = fixture::malware();
  const auto allowed = allowed_mutations(s, {}, ctx);
  CHECK(allowed == std::vector<K>{K::AddSection, K::ChangeSignature});
  const std::vector<K> two{K::AddSection, K::AddSection};
  const auto m = apply_path_with_budget(s, two, ctx, {});
  CHECK_THROWS_WITH_AS(apply(m.sample, K::AddSection, m.budget, ctx, {}), "cap exceeded: add_section=2", MutationError);
}

TEST_CASE("mutation context validation and json") {
  auto ctx = fixture::context();
  ctx.validate();
  const nlohmann::json j = ctx;
  const auto back = context_from_json(j);
  CHECK(back.candidate_functions == ctx.candidate_functions);
  CHECK(back.benign_timestamp_target == ctx.benign_timestamp_target);
  ctx.candidate_functions.pop_back();
  CHECK_THROWS_AS(ctx.validate(), ConfigError);
}

TEST_CASE("path file round trip") {
  const auto dir = fixture::scratch("paths");
  std::vector<MutationPath> paths{{"a", {K::AddBytes, K::ChangeSignature}, "mcts", true, 40},
                                  {"b", {}, "random", false, 7}};
  write_paths(dir / "p.jsonl", paths);
  CHECK(read_paths(dir / "p.jsonl") == paths);
}
