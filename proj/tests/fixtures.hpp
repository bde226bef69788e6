#pragma once

#include <filesystem>
#include <string>

#include "evade/mutation.hpp"
#include "evade/sample.hpp"

namespace fixture {

/// 14 made-up benign-only imports and round targets.
inline evade::MutationContext context() {
  evade::MutationContext ctx;
  ctx.benign_entropy_target = 5.6;
  ctx.benign_timestamp_target = 1'330'000'000;
  for (int i = 0; i < 14; ++i) ctx.candidate_functions.push_back("lib" + std::to_string(i % 3) + ".dll:Fn" + std::to_string(i));
  ctx.rng_seed = 99;
  return ctx;
}

/// Malware record on which every mutation is allowed.
inline evade::SampleRecord malware(const std::string& id = "m0") {
  evade::SampleRecord s;
  s.sample_id = id;
  s.label = evade::Label::malicious;
  s.strings_entropy = 6.2;
  s.num_strings = 300;
  s.file_size = 1000;
  s.num_exports = 0;
  s.num_imports = 20;
  s.timestamp = 1'400'000'000;
  s.size_of_code = 4096;
  s.num_sections = 4;
  s.has_debug = true;
  s.has_signature = false;
  s.entry_section = ".text";
  s.imported_libraries = {"kernel32.dll"};
  s.imported_functions = {"kernel32.dll:CreateFileW"};
  return s;
}

inline std::filesystem::path scratch(const std::string& name) {
  auto dir = std::filesystem::path(EVADE_TEST_TMP) / name;
  std::filesystem::remove_all(dir);
  std::filesystem::create_directories(dir);
  return dir;
}

}  // namespace fixture
