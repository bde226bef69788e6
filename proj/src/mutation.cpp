#include "evade/mutation.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>

#include <nlohmann/json.hpp>

#include "evade/error.hpp"
#include "evade/random.hpp"

namespace evade {

namespace {

struct KindInfo {
  std::string_view name;
  std::string_view title;
};

constexpr std::array<KindInfo, kMutationKindCount> kKinds = {{
    {"add_string", "Add String"},
    {"add_string_with_size", "Add String with Size"},
    {"change_string_entropy", "Change String Entropy"},
    {"change_string_entropy_with_size", "Change String Entropy with Size"},
    {"remove_string", "Remove String"},
    {"add_section", "Add Section"},
    {"add_bytes", "Add Bytes"},
    {"add_code_bytes", "Add Code Bytes"},
    {"import_function", "Import Function"},
    {"change_timestamp", "Change Timestamp"},
    {"remove_debug", "Remove Debug"},
    {"change_signature", "Change Signature"},
}};

std::string cap_exceeded(std::string_view counter, int cap) {
  return "cap exceeded: " + std::string(counter) + "=" + std::to_string(cap);
}

std::string precondition_failed(std::string_view what) { return "precondition failed: " + std::string(what); }

bool has_absent_candidate(const SampleRecord& s, const MutationContext& ctx) {
  return std::any_of(ctx.candidate_functions.begin(), ctx.candidate_functions.end(),
                     [&](const std::string& f) { return !s.imported_functions.contains(f); });
}

}  // namespace

MutationKind mutation_from_id(std::int64_t value) {
  if (value < 0 || value >= static_cast<std::int64_t>(kMutationKindCount))
    throw Error("unknown mutation id " + std::to_string(value));
  return static_cast<MutationKind>(value);
}

std::string_view mutation_name(MutationKind kind) noexcept { return kKinds[id(kind)].name; }
std::string_view mutation_title(MutationKind kind) noexcept { return kKinds[id(kind)].title; }

std::array<MutationKind, kMutationKindCount> all_mutation_kinds() noexcept {
  std::array<MutationKind, kMutationKindCount> out{};
  for (std::size_t i = 0; i < kMutationKindCount; ++i) out[i] = static_cast<MutationKind>(i);
  return out;
}

int MutationBudget::total() const noexcept {
  int sum = 0;
  for (auto c : applied) sum += c;
  return sum;
}

bool MutationBudget::dominates(const MutationBudget& other) const noexcept {
  for (std::size_t i = 0; i < kMutationKindCount; ++i)
    if (applied[i] < other.applied[i]) return false;
  return true;
}

// Context ------------------------------------------------------------------------

void MutationContext::validate() const {
  if (candidate_functions.size() != kCandidateCount)
    throw ConfigError("mutation context needs " + std::to_string(kCandidateCount) + " candidate functions, got " +
                      std::to_string(candidate_functions.size()));
  for (const auto& f : candidate_functions)
    if (f.find(':') == std::string::npos) throw ConfigError("candidate function '" + f + "' is not library:function");
  if (!(entropy_step > 0.0)) throw ConfigError("entropy_step must be positive");
  if (timestamp_step <= 0) throw ConfigError("timestamp_step must be positive");
  if (!(benign_entropy_target >= 0.0 && benign_entropy_target <= 8.0))
    throw ConfigError("benign entropy target outside [0, 8]");
  if (!(added_string_entropy_min >= 0.0 && added_string_entropy_min <= added_string_entropy_max &&
        added_string_entropy_max <= 8.0))
    throw ConfigError("added string entropy range must lie within [0, 8]");
}

MutationContext derive_context(std::span<const SampleRecord> attacker_training, std::uint64_t rng_seed,
                               std::size_t candidate_count) {
  MutationContext ctx;
  ctx.rng_seed = rng_seed;
  double entropy_sum = 0.0;
  std::size_t entropy_n = 0;
  long double ts_sum = 0.0L;
  std::size_t ts_n = 0;
  std::map<std::string, std::size_t> benign_counts;
  std::map<std::string, bool> in_malware;
  for (const auto& s : attacker_training) {
    if (s.label == Label::benign) {
      if (s.strings_entropy) {
        entropy_sum += *s.strings_entropy;
        ++entropy_n;
      }
      if (s.timestamp) {
        ts_sum += static_cast<long double>(*s.timestamp);
        ++ts_n;
      }
      for (const auto& f : s.imported_functions) ++benign_counts[f];
    } else if (s.label == Label::malicious) {
      for (const auto& f : s.imported_functions) in_malware[f] = true;
    }
  }
  if (entropy_n == 0 || ts_n == 0) throw Error("no benign samples with entropy and timestamp in attacker data");
  ctx.benign_entropy_target = entropy_sum / static_cast<double>(entropy_n);
  ctx.benign_timestamp_target = static_cast<std::int64_t>(std::llround(ts_sum / static_cast<long double>(ts_n)));

  std::vector<std::pair<std::size_t, std::string>> ranked;
  for (const auto& [name, count] : benign_counts)
    if (!in_malware.count(name) && name.find(':') != std::string::npos) ranked.push_back({count, name});
  std::sort(ranked.begin(), ranked.end(), [](const auto& a, const auto& b) {
    return a.first != b.first ? a.first > b.first : a.second < b.second;
  });
  if (ranked.size() < candidate_count)
    throw Error("only " + std::to_string(ranked.size()) + " benign-only imported functions found, need " +
                std::to_string(candidate_count));
  for (std::size_t i = 0; i < candidate_count; ++i) ctx.candidate_functions.push_back(ranked[i].second);
  return ctx;
}

void to_json(nlohmann::json& j, const MutationContext& c) {
  nlohmann::json caps = nlohmann::json::array();
  for (const auto& cap : c.limits.per_kind_cap) caps.push_back(cap ? nlohmann::json(*cap) : nlohmann::json());
  j = {{"format", "evade.mutation_context"},
       {"version", 1},
       {"benign_entropy_target", c.benign_entropy_target},
       {"benign_timestamp_target", c.benign_timestamp_target},
       {"candidate_functions", c.candidate_functions},
       {"entropy_step", c.entropy_step},
       {"timestamp_step", c.timestamp_step},
       {"rng_seed", c.rng_seed},
       {"added_string_entropy", {c.added_string_entropy_min, c.added_string_entropy_max}},
       {"string_size_bytes", c.string_size_bytes},
       {"section_bytes", c.section_bytes},
       {"append_bytes", c.append_bytes},
       {"code_bytes", c.code_bytes},
       {"limits",
        {{"strings_added", c.limits.strings_added},
         {"strings_added_with_size", c.limits.strings_added_with_size},
         {"entropy_changes", c.limits.entropy_changes},
         {"entropy_changes_with_size", c.limits.entropy_changes_with_size},
         {"strings_removed", c.limits.strings_removed},
         {"per_kind_cap", caps},
         {"enabled_mask", c.limits.enabled_mask}}}};
}

MutationContext context_from_json(const nlohmann::json& j) {
  if (j.value("format", "") != "evade.mutation_context") throw Error("not a mutation context document");
  MutationContext c;
  c.benign_entropy_target = j.at("benign_entropy_target").get<double>();
  c.benign_timestamp_target = j.at("benign_timestamp_target").get<std::int64_t>();
  c.candidate_functions = j.at("candidate_functions").get<std::vector<std::string>>();
  c.entropy_step = j.value("entropy_step", c.entropy_step);
  c.timestamp_step = j.value("timestamp_step", c.timestamp_step);
  c.rng_seed = j.value("rng_seed", c.rng_seed);
  if (auto it = j.find("added_string_entropy"); it != j.end()) {
    c.added_string_entropy_min = it->at(0).get<double>();
    c.added_string_entropy_max = it->at(1).get<double>();
  }
  c.string_size_bytes = j.value("string_size_bytes", c.string_size_bytes);
  c.section_bytes = j.value("section_bytes", c.section_bytes);
  c.append_bytes = j.value("append_bytes", c.append_bytes);
  c.code_bytes = j.value("code_bytes", c.code_bytes);
  if (auto it = j.find("limits"); it != j.end()) {
    auto& l = c.limits;
    l.strings_added = it->value("strings_added", l.strings_added);
    l.strings_added_with_size = it->value("strings_added_with_size", l.strings_added_with_size);
    l.entropy_changes = it->value("entropy_changes", l.entropy_changes);
    l.entropy_changes_with_size = it->value("entropy_changes_with_size", l.entropy_changes_with_size);
    l.strings_removed = it->value("strings_removed", l.strings_removed);
    l.enabled_mask = it->value("enabled_mask", l.enabled_mask);
    if (auto caps = it->find("per_kind_cap"); caps != it->end()) {
      for (std::size_t i = 0; i < kMutationKindCount && i < caps->size(); ++i)
        if (!(*caps)[i].is_null()) l.per_kind_cap[i] = (*caps)[i].get<int>();
    }
  }
  c.validate();
  return c;
}

// Draws ---------------------------------------------------------------------------

double MutationRng::draw(MutationKind kind, int occurrence, int index) const noexcept {
  std::uint64_t x = derive_seed(seed, id(kind));
  x = derive_seed(x, static_cast<std::uint64_t>(occurrence));
  x = derive_seed(x, static_cast<std::uint64_t>(index));
  return static_cast<double>(x >> 11) * 0x1.0p-53;
}

MutationRng path_rng(const MutationContext& ctx, std::string_view sample_id) {
  return {derive_seed(ctx.rng_seed, fnv1a64(sample_id))};
}

// Legality ------------------------------------------------------------------------

std::optional<std::string> blocked_reason(const SampleRecord& s, const MutationBudget& b,
                                          const MutationContext& ctx, MutationKind kind) {
  const auto& lim = ctx.limits;
  if (!lim.enabled(kind)) return precondition_failed(std::string(mutation_name(kind)) + " is disabled");
  if (const auto& cap = lim.per_kind_cap[id(kind)]; cap && b.count(kind) >= *cap)
    return cap_exceeded(mutation_name(kind), *cap);
  using K = MutationKind;
  switch (kind) {
    case K::AddString:
      if (b.strings_added() >= lim.strings_added) return cap_exceeded("strings_added", lim.strings_added);
      break;
    case K::AddStringWithSize:
      if (b.strings_added() >= lim.strings_added) return cap_exceeded("strings_added", lim.strings_added);
      if (b.strings_added_with_size() >= lim.strings_added_with_size)
        return cap_exceeded("strings_added_with_size", lim.strings_added_with_size);
      break;
    case K::ChangeStringEntropy:
      if (b.entropy_changes() >= lim.entropy_changes) return cap_exceeded("entropy_changes", lim.entropy_changes);
      break;
    case K::ChangeStringEntropyWithSize:
      if (b.entropy_changes() >= lim.entropy_changes) return cap_exceeded("entropy_changes", lim.entropy_changes);
      if (b.entropy_changes_with_size() >= lim.entropy_changes_with_size)
        return cap_exceeded("entropy_changes_with_size", lim.entropy_changes_with_size);
      break;
    case K::RemoveString:
      if (b.strings_removed() >= lim.strings_removed) return cap_exceeded("strings_removed", lim.strings_removed);
      if (s.num_strings.value_or(0) <= 0) return precondition_failed("num_strings is 0");
      break;
    case K::AddSection:
    case K::AddBytes:
    case K::AddCodeBytes:
      break;
    case K::ImportFunction:
      if (!has_absent_candidate(s, ctx)) return precondition_failed("all candidate functions already imported");
      break;
    case K::ChangeTimestamp:
      if (s.timestamp.value_or(0) == ctx.benign_timestamp_target)
        return precondition_failed("timestamp already at target");
      break;
    case K::RemoveDebug:
      if (b.count(kind) >= 1) return cap_exceeded("remove_debug", 1);
      if (!s.has_debug.value_or(false)) return precondition_failed("has_debug is false");
      break;
    case K::ChangeSignature:
      if (b.count(kind) >= 1) return cap_exceeded("change_signature", 1);
      if (s.has_signature.value_or(false)) return precondition_failed("has_signature is true");
      break;
  }
  return std::nullopt;
}

bool is_allowed(const SampleRecord& s, const MutationBudget& b, const MutationContext& ctx, MutationKind kind) {
  return !blocked_reason(s, b, ctx, kind).has_value();
}

std::vector<MutationKind> allowed_mutations(const SampleRecord& s, const MutationBudget& b,
                                            const MutationContext& ctx) {
  std::vector<MutationKind> out;
  out.reserve(kMutationKindCount);
  for (auto kind : all_mutation_kinds())
    if (is_allowed(s, b, ctx, kind)) out.push_back(kind);
  return out;
}

// Effects -------------------------------------------------------------------------

namespace {

double clamp_entropy(double h) { return std::clamp(h, 0.0, 8.0); }

void add_string(SampleRecord& s, double string_entropy) {
  const auto n = static_cast<double>(s.num_strings.value_or(0));
  const double h = s.strings_entropy.value_or(0.0);
  s.strings_entropy = clamp_entropy((n * h + string_entropy) / (n + 1.0));
  s.num_strings = s.num_strings.value_or(0) + 1;
}

void remove_string(SampleRecord& s, double string_entropy) {
  const std::int64_t count = s.num_strings.value_or(0);
  const auto n = static_cast<double>(count);
  const double h = s.strings_entropy.value_or(0.0);
  s.strings_entropy = count > 1 ? clamp_entropy((n * h - string_entropy) / (n - 1.0)) : 0.0;
  s.num_strings = std::max<std::int64_t>(count - 1, 0);
}

void move_entropy(SampleRecord& s, double target, double step) {
  const double h = s.strings_entropy.value_or(0.0);
  const double gap = target - h;
  const double delta = std::min(step, std::abs(gap));
  s.strings_entropy = clamp_entropy(gap >= 0.0 ? h + delta : h - delta);
  s.num_strings = s.num_strings.value_or(0) + 1;
}

void grow(std::optional<std::int64_t>& field, std::int64_t bytes) { field = field.value_or(0) + bytes; }

}  // namespace

void apply_in_place(SampleRecord& s, MutationBudget& b, MutationKind kind, const MutationContext& ctx,
                    const MutationRng& rng) {
  if (auto reason = blocked_reason(s, b, ctx, kind)) throw MutationError(*reason);
  const int occurrence = b.count(kind);
  auto string_entropy = [&] {
    return ctx.added_string_entropy_min +
           (ctx.added_string_entropy_max - ctx.added_string_entropy_min) * rng.draw(kind, occurrence);
  };
  using K = MutationKind;
  switch (kind) {
    case K::AddString:
      add_string(s, string_entropy());
      break;
    case K::AddStringWithSize:
      add_string(s, string_entropy());
      grow(s.file_size, ctx.string_size_bytes);
      break;
    case K::ChangeStringEntropy:
      move_entropy(s, ctx.benign_entropy_target, ctx.entropy_step);
      break;
    case K::ChangeStringEntropyWithSize:
      move_entropy(s, ctx.benign_entropy_target, 2.0 * ctx.entropy_step);
      grow(s.file_size, ctx.string_size_bytes);
      break;
    case K::RemoveString:
      remove_string(s, string_entropy());
      break;
    case K::AddSection:
      grow(s.num_sections, 1);
      grow(s.file_size, ctx.section_bytes);
      break;
    case K::AddBytes:
      grow(s.file_size, ctx.append_bytes);
      break;
    case K::AddCodeBytes:
      grow(s.size_of_code, ctx.code_bytes);
      grow(s.file_size, ctx.code_bytes);
      break;
    case K::ImportFunction: {
      std::vector<const std::string*> absent;
      for (const auto& f : ctx.candidate_functions)
        if (!s.imported_functions.contains(f)) absent.push_back(&f);
      const auto pick = std::min(absent.size() - 1,
                                 static_cast<std::size_t>(rng.draw(kind, occurrence) * static_cast<double>(absent.size())));
      const std::string& function = *absent[pick];
      s.imported_functions.insert(function);
      s.imported_libraries.insert(function.substr(0, function.find(':')));
      grow(s.num_imports, 1);
      break;
    }
    case K::ChangeTimestamp: {
      const std::int64_t ts = s.timestamp.value_or(0);
      const std::int64_t gap = ctx.benign_timestamp_target - ts;
      const std::int64_t step = std::min<std::int64_t>(ctx.timestamp_step, gap >= 0 ? gap : -gap);
      s.timestamp = gap >= 0 ? ts + step : ts - step;
      break;
    }
    case K::RemoveDebug:
      s.has_debug = false;
      break;
    case K::ChangeSignature:
      s.has_signature = true;
      break;
  }
  ++b.applied[id(kind)];
}

Mutated apply(const SampleRecord& sample, MutationKind kind, const MutationBudget& budget,
              const MutationContext& ctx, const MutationRng& rng) {
  Mutated out{sample, budget};
  apply_in_place(out.sample, out.budget, kind, ctx, rng);
  return out;
}

Mutated apply_path_with_budget(const SampleRecord& sample, std::span<const MutationKind> path,
                               const MutationContext& ctx, const MutationRng& rng) {
  Mutated out{sample, {}};
  for (std::size_t i = 0; i < path.size(); ++i) {
    try {
      apply_in_place(out.sample, out.budget, path[i], ctx, rng);
    } catch (const MutationError& e) {
      throw MutationError("path index " + std::to_string(i) + " (" + std::string(mutation_name(path[i])) +
                          "): " + e.what());
    }
  }
  return out;
}

SampleRecord apply_path(const SampleRecord& sample, std::span<const MutationKind> path, const MutationContext& ctx,
                        const MutationRng& rng) {
  return apply_path_with_budget(sample, path, ctx, rng).sample;
}

// Path files ----------------------------------------------------------------------

void to_json(nlohmann::json& j, const MutationPath& p) {
  std::vector<int> ids;
  ids.reserve(p.path.size());
  for (auto k : p.path) ids.push_back(static_cast<int>(id(k)));
  j = {{"sample_id", p.sample_id},
       {"path", ids},
       {"found_by", p.found_by},
       {"surrogate_benign", p.surrogate_benign},
       {"iterations_used", p.iterations_used}};
}

MutationPath mutation_path_from_json(const nlohmann::json& j) {
  MutationPath p;
  p.sample_id = j.at("sample_id").get<std::string>();
  for (const auto& v : j.at("path")) p.path.push_back(mutation_from_id(v.get<std::int64_t>()));
  p.found_by = j.at("found_by").get<std::string>();
  if (p.found_by != "mcts" && p.found_by != "random") throw Error("unknown found_by '" + p.found_by + "'");
  p.surrogate_benign = j.at("surrogate_benign").get<bool>();
  p.iterations_used = j.at("iterations_used").get<std::size_t>();
  return p;
}

std::vector<MutationPath> read_paths(const std::filesystem::path& file) {
  std::ifstream in(file);
  if (!in) throw Error("cannot read " + file.string());
  std::vector<MutationPath> out;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    try {
      out.push_back(mutation_path_from_json(nlohmann::json::parse(line)));
    } catch (const std::exception& e) {
      throw Error(file.string() + ":" + std::to_string(line_no) + ": " + e.what());
    }
  }
  return out;
}

void write_paths(const std::filesystem::path& file, const std::vector<MutationPath>& paths) {
  std::ofstream out(file, std::ios::binary);
  if (!out) throw Error("cannot write " + file.string());
  for (const auto& p : paths) out << nlohmann::json(p).dump() << '\n';
  if (!out) throw Error("write failed for " + file.string());
}

}  // namespace evade
