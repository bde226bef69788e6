#include "evade/sample.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <sstream>

#include <nlohmann/json.hpp>

#include "evade/error.hpp"
#include "evade/random.hpp"

namespace evade {

// StringSet ------------------------------------------------------------------

StringSet::StringSet(std::initializer_list<std::string> items)
    : StringSet(std::vector<std::string>(items)) {}

StringSet::StringSet(std::vector<std::string> items) {
  std::sort(items.begin(), items.end());
  items.erase(std::unique(items.begin(), items.end()), items.end());
  if (items.empty()) return;
  auto payload = std::make_shared<Payload>();
  payload->hashes.reserve(items.size());
  for (const auto& s : items) payload->hashes.push_back(fnv1a64(s));
  payload->items = std::move(items);
  data_ = std::move(payload);
}

bool StringSet::contains(std::string_view item) const {
  const auto& v = items();
  return std::binary_search(v.begin(), v.end(), item, std::less<>{});
}

bool StringSet::insert(std::string item) {
  const auto& v = items();
  auto pos = std::lower_bound(v.begin(), v.end(), item);
  if (pos != v.end() && *pos == item) return false;
  const auto offset = static_cast<std::size_t>(pos - v.begin());
  auto copy = data_ ? std::make_shared<Payload>(*data_) : std::make_shared<Payload>();
  copy->hashes.insert(copy->hashes.begin() + static_cast<std::ptrdiff_t>(offset), fnv1a64(item));
  copy->items.insert(copy->items.begin() + static_cast<std::ptrdiff_t>(offset), std::move(item));
  data_ = std::move(copy);
  return true;
}

const std::vector<std::string>& StringSet::items() const noexcept {
  static const std::vector<std::string> kEmpty;
  return data_ ? data_->items : kEmpty;
}

const std::vector<std::uint64_t>& StringSet::hashes() const noexcept {
  static const std::vector<std::uint64_t> kEmpty;
  return data_ ? data_->hashes : kEmpty;
}

// SampleRecord ---------------------------------------------------------------

std::string_view to_string(Label label) noexcept {
  switch (label) {
    case Label::malicious: return "malicious";
    case Label::benign: return "benign";
    case Label::unknown: break;
  }
  return "unknown";
}

std::optional<double> numeric_feature(const SampleRecord& s, std::size_t index) {
  auto as_double = [](const std::optional<std::int64_t>& v) -> std::optional<double> {
    if (!v) return std::nullopt;
    return static_cast<double>(*v);
  };
  switch (index) {
    case 0: return s.strings_entropy;
    case 1: return as_double(s.num_strings);
    case 2: return as_double(s.file_size);
    case 3: return as_double(s.timestamp);
    case 4: return as_double(s.size_of_code);
    case 5: return as_double(s.num_sections);
    case 6: return as_double(s.num_exports);
    case 7: return as_double(s.num_imports);
    default: throw Error("numeric feature index out of range: " + std::to_string(index));
  }
}

void validate(const SampleRecord& s) {
  if (s.strings_entropy && !(*s.strings_entropy >= 0.0 && *s.strings_entropy <= 8.0))
    throw Error("strings_entropy outside [0, 8] for sample '" + s.sample_id + "'");
  const std::pair<const char*, const std::optional<std::int64_t>*> counts[] = {
      {"num_strings", &s.num_strings},   {"file_size", &s.file_size},
      {"num_exports", &s.num_exports},   {"num_imports", &s.num_imports},
      {"timestamp", &s.timestamp},       {"size_of_code", &s.size_of_code},
      {"num_sections", &s.num_sections}};
  for (const auto& [name, value] : counts) {
    if (*value && **value < 0)
      throw Error(std::string(name) + " is negative for sample '" + s.sample_id + "'");
  }
}

void to_json(nlohmann::json& j, const SampleRecord& s) {
  j = nlohmann::json::object();
  j["sample_id"] = s.sample_id;
  if (s.label != Label::unknown) j["label"] = std::string(to_string(s.label));
  if (s.strings_entropy) j["strings_entropy"] = *s.strings_entropy;
  auto put = [&](const char* key, const auto& v) {
    if (v) j[key] = *v;
  };
  put("num_strings", s.num_strings);
  put("file_size", s.file_size);
  put("num_exports", s.num_exports);
  put("num_imports", s.num_imports);
  put("timestamp", s.timestamp);
  put("size_of_code", s.size_of_code);
  put("num_sections", s.num_sections);
  put("has_debug", s.has_debug);
  put("has_signature", s.has_signature);
  put("entry_section", s.entry_section);
  j["imported_libraries"] = s.imported_libraries.items();
  j["imported_functions"] = s.imported_functions.items();
}

namespace {

template <class T>
std::optional<T> optional_field(const nlohmann::json& j, const char* key) {
  auto it = j.find(key);
  if (it == j.end() || it->is_null()) return std::nullopt;
  if constexpr (std::is_same_v<T, bool>) {
    if (it->is_boolean()) return it->get<bool>();
    if (it->is_number_integer()) return it->get<std::int64_t>() != 0;
    throw Error(std::string("field '") + key + "' is not a boolean");
  } else if constexpr (std::is_same_v<T, std::string>) {
    if (!it->is_string()) throw Error(std::string("field '") + key + "' is not a string");
    return it->get<std::string>();
  } else if constexpr (std::is_same_v<T, double>) {
    if (!it->is_number()) throw Error(std::string("field '") + key + "' is not a number");
    return it->get<double>();
  } else {
    if (it->is_number_integer()) return it->get<std::int64_t>();
    if (it->is_number_float()) {
      const double v = it->get<double>();
      if (v != std::floor(v)) throw Error(std::string("field '") + key + "' is not an integer");
      return static_cast<std::int64_t>(v);
    }
    throw Error(std::string("field '") + key + "' is not an integer");
  }
}

StringSet string_set_field(const nlohmann::json& j, const char* key) {
  auto it = j.find(key);
  if (it == j.end() || it->is_null()) return {};
  if (!it->is_array()) throw Error(std::string("field '") + key + "' is not an array");
  std::vector<std::string> items;
  items.reserve(it->size());
  for (const auto& e : *it) {
    if (!e.is_string()) throw Error(std::string("field '") + key + "' has a non-string element");
    items.push_back(e.get<std::string>());
  }
  return StringSet(std::move(items));
}

Label parse_label(const nlohmann::json& j) {
  auto it = j.find("label");
  if (it == j.end() || it->is_null()) return Label::unknown;
  if (it->is_string()) {
    const auto& s = it->get_ref<const std::string&>();
    if (s == "malicious") return Label::malicious;
    if (s == "benign") return Label::benign;
    if (s == "unknown") return Label::unknown;
    throw Error("unknown label '" + s + "'");
  }
  // EMBER encodes labels as 1 / 0 / -1.
  if (it->is_number_integer()) {
    switch (it->get<int>()) {
      case 1: return Label::malicious;
      case 0: return Label::benign;
      case -1: return Label::unknown;
      default: break;
    }
  }
  throw Error("unrecognized label value " + it->dump());
}

}  // namespace

SampleRecord sample_from_json(const nlohmann::json& j) {
  if (!j.is_object()) throw Error("record is not a JSON object");
  SampleRecord s;
  if (auto id = optional_field<std::string>(j, "sample_id")) s.sample_id = *id;
  s.label = parse_label(j);
  s.strings_entropy = optional_field<double>(j, "strings_entropy");
  s.num_strings = optional_field<std::int64_t>(j, "num_strings");
  s.file_size = optional_field<std::int64_t>(j, "file_size");
  s.num_exports = optional_field<std::int64_t>(j, "num_exports");
  s.num_imports = optional_field<std::int64_t>(j, "num_imports");
  s.timestamp = optional_field<std::int64_t>(j, "timestamp");
  s.size_of_code = optional_field<std::int64_t>(j, "size_of_code");
  s.num_sections = optional_field<std::int64_t>(j, "num_sections");
  s.has_debug = optional_field<bool>(j, "has_debug");
  s.has_signature = optional_field<bool>(j, "has_signature");
  s.entry_section = optional_field<std::string>(j, "entry_section");
  s.imported_libraries = string_set_field(j, "imported_libraries");
  s.imported_functions = string_set_field(j, "imported_functions");
  validate(s);
  return s;
}

std::string to_jsonl_line(const SampleRecord& sample) {
  nlohmann::json j = sample;
  return j.dump();
}

IngestResult ingest_jsonl(const std::filesystem::path& path, bool strict) {
  std::ifstream in(path);
  if (!in) throw Error("cannot read " + path.string());
  IngestResult result;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    try {
      result.records.push_back(sample_from_json(nlohmann::json::parse(line)));
      if (result.records.back().sample_id.empty())
        result.records.back().sample_id = "line-" + std::to_string(line_no);
    } catch (const std::exception& e) {
      result.malformed.push_back({line_no, e.what()});
    }
  }
  if (strict && !result.malformed.empty()) {
    std::ostringstream msg;
    msg << path.string() << ": " << result.malformed.size() << " malformed line(s):";
    for (const auto& issue : result.malformed) msg << " " << issue.line;
    msg << " (first: " << result.malformed.front().message << ")";
    throw Error(msg.str());
  }
  return result;
}

void write_jsonl(const std::filesystem::path& path, const std::vector<SampleRecord>& records) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot write " + path.string());
  for (const auto& r : records) out << to_jsonl_line(r) << '\n';
  if (!out) throw Error("write failed for " + path.string());
}

// Synthetic generator ----------------------------------------------------------

SyntheticSpec SyntheticSpec::ember2018() {
  SyntheticSpec spec;
  // strings_entropy, num_strings, file_size, timestamp, size_of_code,
  // num_sections, num_exports, num_imports
  spec.malicious.numeric = {{
      {5.967, 0.615, 0.0, 6.584},
      {6.12e3, 1.67e4, 0.0, 1.63e6},
      {1.24e6, 2.39e6, 512.0, 2.71e8},
      {1358407000.0, 416879700.0, 0.0, 4294967000.0},
      {2.75e6, 7.10e7, 0.0, 4.29e9},
      {5.088, 3.229, 1.0, 97.0},
      {9.019, 166.313, 0.0, 5.26e4},
      {98.993, 140.209, 0.0, 3074.0},
  }};
  spec.malicious.p_signature = 0.05;
  spec.malicious.p_debug = 0.3;
  spec.benign.numeric = {{
      {5.595, 0.659, 0.0, 6.585},
      {8.26e3, 3.37e4, 0.0, 2.48e6},
      {1.71e6, 6.93e6, 2.34e2, 5.36e8},
      {1332756000.0, 574590400.0, 0.0, 4294967000.0},
      {5.92e5, 4.17e6, 0.0, 1.67e9},
      {4.854, 2.639, 0.0, 198.0},
      {51.877, 625.764, 0.0, 52628.0},
      {113.456, 286.144, 0.0, 21344.0},
  }};
  spec.benign.p_signature = 0.35;
  spec.benign.p_debug = 0.5;
  return spec;
}

namespace {

const std::array<std::string_view, 12> kLibraries = {
    "kernel32.dll", "user32.dll",   "advapi32.dll", "gdi32.dll",    "shell32.dll", "ole32.dll",
    "oleaut32.dll", "ws2_32.dll",   "wininet.dll",  "comctl32.dll", "msvcrt.dll",  "ntdll.dll"};

std::vector<std::string> build_import_pool() {
  static constexpr std::array<std::string_view, 20> verbs = {
      "Get",  "Set",   "Create", "Open",  "Close",  "Read",  "Write",  "Query",  "Load",  "Free",
      "Find", "Enum",  "Delete", "Copy",  "Map",    "Init",  "Lock",   "Send",   "Wait",  "Post"};
  static constexpr std::array<std::string_view, 10> nouns = {
      "File", "Window", "Process", "Thread", "Value", "Module", "Handle", "Event", "Buffer", "Key"};
  std::vector<std::string> pool;
  pool.reserve(200);
  for (std::size_t i = 0; i < 200; ++i) {
    const auto lib = kLibraries[i % kLibraries.size()];
    std::string fn = std::string(verbs[i % verbs.size()]) + std::string(nouns[(i / verbs.size()) % nouns.size()]);
    fn += (i % 3 == 0) ? "W" : (i % 3 == 1 ? "A" : "Ex");
    pool.push_back(std::string(lib) + ":" + fn);
  }
  return pool;
}

double phi(double x) { return std::exp(-0.5 * x * x) / std::sqrt(2.0 * M_PI); }
double big_phi(double x) { return 0.5 * std::erfc(-x / std::sqrt(2.0)); }

struct Moments {
  double mean;
  double stddev;
};

/// exp(x^2) * erfc(x) for x >= 0, without underflow in the far tail.
double erfcx(double x) {
  if (x < 25.0) return std::exp(x * x) * std::erfc(x);
  const double x2 = x * x;
  double term = 1.0;
  double sum = 1.0;
  for (int n = 1; n < 8; ++n) {
    term *= -(2.0 * n - 1.0) / (2.0 * x2);
    sum += term;
  }
  return sum / (x * std::sqrt(M_PI));
}

/// Mean and std of a standard normal truncated to [a, b].
Moments standard_truncated_moments(double a, double b) {
  double pa = 0.0;  // phi(a) / Z
  double pb = 0.0;  // phi(b) / Z
  double sign = 1.0;
  if (a >= 0.0 || b <= 0.0) {
    if (b <= 0.0) {
      std::tie(a, b) = std::pair{-b, -a};
      sign = -1.0;
    }
    const double gap = std::isinf(b) ? 0.0 : std::exp(-0.5 * (b * b - a * a));
    const double ea = erfcx(a / std::sqrt(2.0));
    const double eb = std::isinf(b) ? 0.0 : gap * erfcx(b / std::sqrt(2.0));
    if (!(ea - eb > 0.0)) return {sign * a, 0.0};
    pa = 1.0 / std::sqrt(2.0 * M_PI) / (0.5 * (ea - eb));
    pb = pa * gap;
  } else {
    const double z = big_phi(b) - big_phi(a);
    pa = phi(a) / z;
    pb = std::isinf(b) ? 0.0 : phi(b) / z;
  }
  const double r = pa - pb;
  const double var = 1.0 + (std::isinf(a) ? 0.0 : a * pa) - (pb == 0.0 ? 0.0 : b * pb) - r * r;
  return {sign * r, std::sqrt(std::max(var, 0.0))};
}

Moments truncated_moments(double mu, double sigma, double lo, double hi) {
  const auto m = standard_truncated_moments((lo - mu) / sigma, (hi - mu) / sigma);
  return {mu + sigma * m.mean, sigma * m.stddev};
}

/// Sampler for one (class, feature) marginal. A truncated normal whose
/// truncated mean and std match the target when the family can reach them;
/// otherwise a log-normal shifted to the lower bound, clipped to the upper.
struct MarginalSampler {
  bool lognormal = false;
  double mu = 0.0;
  double sigma = 1.0;
  double lo = 0.0;
  double hi = 0.0;

  explicit MarginalSampler(const Marginal& m) : lo(m.min), hi(m.max) {
    if (fit_truncated_normal(m)) return;
    lognormal = true;
    const double shifted = std::max(m.mean - m.min, 1e-9);
    const double s2 = std::log(1.0 + (m.stddev * m.stddev) / (shifted * shifted));
    sigma = std::sqrt(s2);
    mu = std::log(shifted) - 0.5 * s2;
  }

  double mu_for_mean(double target, double s) const {
    double reach = 35.0 * s;
    while (truncated_moments(lo - reach, s, lo, hi).mean > target && reach < 1e300) reach *= 2.0;
    double left = lo - reach;
    reach = 35.0 * s;
    while (truncated_moments(hi + reach, s, lo, hi).mean < target && reach < 1e300) reach *= 2.0;
    double right = hi + reach;
    for (int i = 0; i < 200; ++i) {
      const double mid = 0.5 * (left + right);
      if (truncated_moments(mid, s, lo, hi).mean < target) left = mid; else right = mid;
    }
    return 0.5 * (left + right);
  }

  bool fit_truncated_normal(const Marginal& m) {
    if (!(m.mean > m.min && m.mean < m.max)) return false;
    double left = 1e-4 * m.stddev;
    double right = 50.0 * m.stddev;
    auto std_at = [&](double s) {
      const double mu_s = mu_for_mean(m.mean, s);
      const auto mom = truncated_moments(mu_s, s, lo, hi);
      return std::pair{mom, mu_s};
    };
    auto [top, mu_top] = std_at(right);
    if (top.stddev < m.stddev || std::abs(top.mean - m.mean) > 1e-6 * m.stddev) return false;
    for (int i = 0; i < 100; ++i) {
      const double mid = 0.5 * (left + right);
      if (std_at(mid).first.stddev < m.stddev) left = mid; else right = mid;
    }
    sigma = 0.5 * (left + right);
    auto [mom, mu_fit] = std_at(sigma);
    mu = mu_fit;
    return std::abs(mom.mean - m.mean) < 1e-6 * m.stddev &&
           std::abs(mom.stddev - m.stddev) < 1e-4 * m.stddev;
  }

  /// Standard normal restricted to [a, b] with 0 <= a (Robert, 1995).
  static double upper_tail(double a, double b, Rng& rng) {
    if ((b - a) * std::max(a, 1.0) <= 1.0) {
      for (;;) {
        const double z = rng.uniform(a, b);
        if (rng.uniform() <= std::exp(0.5 * (a * a - z * z))) return z;
      }
    }
    const double rate = 0.5 * (a + std::sqrt(a * a + 4.0));
    for (;;) {
      double u = rng.uniform();
      while (u <= 0.0) u = rng.uniform();
      const double z = a - std::log(u) / rate;
      if (z > b) continue;
      if (rng.uniform() <= std::exp(-0.5 * (z - rate) * (z - rate))) return z;
    }
  }

  static double standard_truncated(double a, double b, Rng& rng) {
    if (a >= 0.0) return upper_tail(a, b, rng);
    if (b <= 0.0) return -upper_tail(-b, -a, rng);
    if (big_phi(b) - big_phi(a) > 0.25) {
      for (;;) {
        const double z = rng.normal();
        if (z >= a && z <= b) return z;
      }
    }
    for (;;) {
      const double z = rng.uniform(a, b);
      if (rng.uniform() <= std::exp(-0.5 * z * z)) return z;
    }
  }

  double draw(Rng& rng) const {
    if (lognormal) return std::min(hi, lo + std::exp(mu + sigma * rng.normal()));
    const double x = mu + sigma * standard_truncated((lo - mu) / sigma, (hi - mu) / sigma, rng);
    return std::clamp(x, lo, hi);
  }
};

struct ImportProfile {
  double p_benign;
  double p_malicious;
};

std::vector<ImportProfile> import_profiles(std::size_t benign_exclusive) {
  const auto& pool = synthetic_import_pool();
  std::vector<ImportProfile> out(pool.size());
  for (std::size_t j = 0; j < pool.size(); ++j) {
    if (j < benign_exclusive) {
      out[j] = {0.45 - 0.02 * static_cast<double>(j), 0.0};
      continue;
    }
    // Golden-ratio sequences give a fixed spread of base rates and skews.
    const double u = std::fmod(0.6180339887498949 * static_cast<double>(j), 1.0);
    const double v = std::fmod(0.7548776662466927 * static_cast<double>(j), 1.0);
    const double base = 0.02 + 0.38 * u * u;
    const double skew = 0.4 + 1.2 * v;
    out[j] = {std::min(0.9, base), std::min(0.9, base * skew)};
  }
  return out;
}

std::string random_section_name(Rng& rng) {
  std::string name = ".";
  for (int i = 0; i < 5; ++i) name.push_back(static_cast<char>('a' + rng.uniform_index(26)));
  return name;
}

}  // namespace

const std::vector<std::string>& synthetic_import_pool() {
  static const std::vector<std::string> pool = build_import_pool();
  return pool;
}

std::vector<SampleRecord> generate_synthetic(std::size_t count_per_class, std::uint64_t seed,
                                             const SyntheticSpec& spec) {
  if (count_per_class < 1) throw ConfigError("count_per_class must be at least 1");
  Rng rng(seed);
  std::vector<std::string> entries = {".text", ".code", ".init"};
  while (entries.size() < 8) {
    auto name = random_section_name(rng);
    if (std::find(entries.begin(), entries.end(), name) == entries.end()) entries.push_back(name);
  }

  const auto& pool = synthetic_import_pool();
  const auto profiles = import_profiles(spec.benign_exclusive_functions);

  std::vector<SampleRecord> out;
  out.reserve(2 * count_per_class);
  for (const Label label : {Label::malicious, Label::benign}) {
    const bool mal = label == Label::malicious;
    const auto& cls = mal ? spec.malicious : spec.benign;
    std::vector<MarginalSampler> samplers;
    for (const auto& m : cls.numeric) samplers.emplace_back(m);
    for (std::size_t i = 0; i < count_per_class; ++i) {
      SampleRecord s;
      s.sample_id = std::string(mal ? "mal-" : "ben-") + std::to_string(seed) + "-" + std::to_string(i);
      s.label = label;
      auto count = [&](std::size_t f) {
        return static_cast<std::int64_t>(std::llround(samplers[f].draw(rng)));
      };
      s.strings_entropy = samplers[0].draw(rng);
      s.num_strings = count(1);
      s.file_size = count(2);
      s.timestamp = count(3);
      s.size_of_code = count(4);
      s.num_sections = count(5);
      s.num_exports = count(6);
      s.num_imports = count(7);
      s.has_signature = rng.uniform() < cls.p_signature;
      s.has_debug = rng.uniform() < cls.p_debug;
      if (rng.uniform() < spec.p_entry_text)
        s.entry_section = entries[0];
      else
        s.entry_section = entries[1 + rng.uniform_index(entries.size() - 1)];

      std::vector<std::string> functions;
      std::vector<std::string> libraries;
      for (std::size_t j = 0; j < pool.size(); ++j) {
        const double p = mal ? profiles[j].p_malicious : profiles[j].p_benign;
        if (rng.uniform() < p) {
          functions.push_back(pool[j]);
          libraries.push_back(pool[j].substr(0, pool[j].find(':')));
        }
      }
      s.imported_functions = StringSet(std::move(functions));
      s.imported_libraries = StringSet(std::move(libraries));
      out.push_back(std::move(s));
    }
  }
  return out;
}

}  // namespace evade
