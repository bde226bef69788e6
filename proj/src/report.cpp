#include "evade/report.hpp"

#include <cstdio>
#include <fstream>
#include <sstream>

#include <nlohmann/json.hpp>

namespace evade {

ReportFormat report_format_from_string(std::string_view text) {
  if (text == "json") return ReportFormat::json;
  if (text == "markdown" || text == "md") return ReportFormat::markdown;
  if (text == "csv") return ReportFormat::csv;
  throw ConfigError("unknown report format '" + std::string(text) + "' (expected json, markdown or csv)");
}

namespace {

Evaluation evaluation_from_json(const nlohmann::json& j) {
  Evaluation e;
  e.roc_auc = j.at("roc_auc").get<double>();
  e.f1 = j.at("f1").get<double>();
  e.precision = j.at("precision").get<double>();
  e.recall = j.at("recall").get<double>();
  e.accuracy = j.at("accuracy").get<double>();
  const auto& c = j.at("confusion");
  e.confusion = {c.at("true_positive").get<std::size_t>(), c.at("false_positive").get<std::size_t>(),
                 c.at("true_negative").get<std::size_t>(), c.at("false_negative").get<std::size_t>()};
  return e;
}

EngineReport engine_from_json(const nlohmann::json& j) {
  EngineReport r;
  r.engine = j.at("engine").get<std::string>();
  r.malware_total = j.at("malware_total").get<std::size_t>();
  r.mutated = j.at("mutated").get<std::size_t>();
  r.failed = j.at("failed").get<std::size_t>();
  r.invalid_paths = j.at("invalid_paths").get<std::size_t>();
  r.replay_mismatches = j.at("replay_mismatches").get<std::size_t>();
  r.victim_evaded = j.at("victim_evaded").get<std::size_t>();
  r.surrogate_queries = j.at("surrogate_queries").get<std::size_t>();
  r.surrogate_mutation_rate = j.at("surrogate_mutation_rate").get<double>();
  r.victim_evasion_rate_over_total = j.at("victim_evasion_rate_over_total").get<double>();
  r.victim_evasion_rate_over_mutated = j.at("victim_evasion_rate_over_mutated").get<double>();
  const auto& hist = j.at("mutation_count_histogram");
  std::size_t longest = 0;
  for (const auto& [key, _] : hist.items())
    if (key != "failed") longest = std::max<std::size_t>(longest, std::stoul(key));
  r.length_histogram.assign(longest + 1, 0);
  for (const auto& [key, value] : hist.items())
    if (key != "failed") r.length_histogram[std::stoul(key)] = value.get<std::size_t>();
  for (const auto& row : j.at("mutation_stats")) {
    const auto k = row.at("id").get<std::size_t>();
    if (k >= kMutationKindCount) throw Error("mutation id out of range in report");
    r.stats[k] = {row.at("alone").get<std::size_t>(), row.at("in_group").get<std::size_t>(),
                  row.at("repeats").get<std::size_t>(), row.at("affected_instances").get<std::size_t>(),
                  row.at("total_occurrence").get<std::size_t>()};
  }
  return r;
}

std::string fixed(double v, int digits = 4) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.*f", digits, v);
  return buf;
}

std::string percent(double v) { return fixed(100.0 * v, 2) + "%"; }

void write_text(const std::filesystem::path& file, const std::string& text) {
  std::ofstream out(file, std::ios::binary);
  if (!out) throw Error("cannot write " + file.string());
  out << text;
  if (!out) throw Error("write failed for " + file.string());
}

void model_row(std::ostringstream& md, const char* name, const std::optional<Evaluation>& e) {
  if (!e) {
    md << "| " << name << " | n/a | n/a | n/a | n/a | n/a |\n";
    return;
  }
  md << "| " << name << " | " << fixed(e->roc_auc) << " | " << fixed(e->f1) << " | " << fixed(e->precision) << " | "
     << fixed(e->recall) << " | " << fixed(e->accuracy) << " |\n";
}

}  // namespace

EvasionReport report_from_json(const nlohmann::json& j) {
  if (j.value("format", "") != "evade.report") throw Error("not an evade report document");
  try {
    EvasionReport r;
    r.config = j.at("config");
    const auto& s = j.at("seeds");
    r.seeds = {s.at("data").get<std::uint64_t>(),     s.at("split").get<std::uint64_t>(),
               s.at("surrogate_split").get<std::uint64_t>(), s.at("victim").get<std::uint64_t>(),
               s.at("mutation").get<std::uint64_t>(), s.at("mcts").get<std::uint64_t>(),
               s.at("random").get<std::uint64_t>()};
    const auto& c = j.at("corpus");
    r.defender_size = c.at("defender_size").get<std::size_t>();
    r.attacker_size = c.at("attacker_size").get<std::size_t>();
    r.attacker_malware = c.at("attacker_malware").get<std::size_t>();
    r.pre_benign_excluded = c.at("pre_benign_excluded").get<std::size_t>();
    if (!j.at("victim_eval").is_null()) r.victim_eval = evaluation_from_json(j.at("victim_eval"));
    if (!j.at("surrogate_eval").is_null()) r.surrogate_eval = evaluation_from_json(j.at("surrogate_eval"));
    for (const auto& e : j.at("engines")) r.engines.push_back(engine_from_json(e));
    r.warnings = j.at("warnings").get<std::vector<std::string>>();
    return r;
  } catch (const nlohmann::json::exception& e) {
    throw Error(std::string("malformed report: ") + e.what());
  }
}

std::string render_markdown(const EvasionReport& report) {
  std::ostringstream md;
  md << "# Evasion report\n\n";
  md << "Root seed: " << report.config.value("seed", std::uint64_t{0}) << "\n\n";
  md << "## Corpus\n\n";
  md << "| Split | Samples |\n|---|---:|\n";
  md << "| Defender | " << report.defender_size << " |\n";
  md << "| Attacker | " << report.attacker_size << " |\n";
  md << "| Attacker malware | " << report.attacker_malware << " |\n";
  md << "| Already benign on surrogate | " << report.pre_benign_excluded << " |\n\n";

  md << "## Models\n\n";
  md << "| Model | ROC-AUC | F1 | Precision | Recall | Accuracy |\n|---|---:|---:|---:|---:|---:|\n";
  model_row(md, "Victim (MLP)", report.victim_eval);
  model_row(md, "Surrogate (decision tree)", report.surrogate_eval);
  md << "\n";

  md << "## Evasion\n\n";
  md << "| Engine | Targets | Mutated | Victim evaded | Mutation rate | Evasion / total | Evasion / mutated | "
        "Surrogate queries |\n|---|---:|---:|---:|---:|---:|---:|---:|\n";
  for (const auto& e : report.engines) {
    md << "| " << e.engine << " | " << e.malware_total << " | " << e.mutated << " | " << e.victim_evaded << " | "
       << percent(e.surrogate_mutation_rate) << " | " << percent(e.victim_evasion_rate_over_total) << " | "
       << percent(e.victim_evasion_rate_over_mutated) << " | " << e.surrogate_queries << " |\n";
  }
  md << "\n";

  for (const auto& e : report.engines) {
    md << "## Mutation statistics (" << e.engine << ")\n\n";
    md << "| Mutation | Alone | In Group | Repeats | Affected Instances | Total Occurrence |\n"
          "|---|---:|---:|---:|---:|---:|\n";
    for (auto kind : all_mutation_kinds()) {
      const auto& s = e.stats[id(kind)];
      md << "| " << mutation_title(kind) << " | " << s.alone << " | " << s.in_group << " | " << s.repeats << " | "
         << s.affected_instances << " | " << s.total_occurrence << " |\n";
    }
    md << "\n### Mutations per sample\n\n| Mutations | Samples |\n|---:|---:|\n";
    for (std::size_t k = 1; k < e.length_histogram.size(); ++k)
      md << "| " << k << " | " << e.length_histogram[k] << " |\n";
    md << "| failed | " << e.failed << " |\n\n";
  }

  if (!report.warnings.empty()) {
    md << "## Warnings\n\n";
    for (const auto& w : report.warnings) md << "- " << w << "\n";
    md << "\n";
  }
  return md.str();
}

std::string render_stats_csv(const EngineReport& engine) {
  std::ostringstream csv;
  csv << "id,mutation,alone,in_group,repeats,affected_instances,total_occurrence\n";
  for (auto kind : all_mutation_kinds()) {
    const auto& s = engine.stats[id(kind)];
    csv << id(kind) << ',' << mutation_name(kind) << ',' << s.alone << ',' << s.in_group << ',' << s.repeats << ','
        << s.affected_instances << ',' << s.total_occurrence << '\n';
  }
  return csv.str();
}

std::string render_histogram_csv(const EngineReport& engine) {
  std::ostringstream csv;
  csv << "mutations,samples\n";
  for (std::size_t k = 1; k < engine.length_histogram.size(); ++k) csv << k << ',' << engine.length_histogram[k] << '\n';
  csv << "failed," << engine.failed << '\n';
  return csv.str();
}

std::vector<std::filesystem::path> emit_report(const EvasionReport& report, const std::filesystem::path& dir,
                                               const std::vector<ReportFormat>& formats) {
  std::filesystem::create_directories(dir);
  std::vector<std::filesystem::path> written;
  for (auto format : formats) {
    switch (format) {
      case ReportFormat::json:
        write_text(dir / "report.json", nlohmann::json(report).dump(2) + "\n");
        written.push_back(dir / "report.json");
        break;
      case ReportFormat::markdown:
        write_text(dir / "report.md", render_markdown(report));
        written.push_back(dir / "report.md");
        break;
      case ReportFormat::csv:
        for (const auto& e : report.engines) {
          write_text(dir / ("stats_" + e.engine + ".csv"), render_stats_csv(e));
          write_text(dir / ("histogram_" + e.engine + ".csv"), render_histogram_csv(e));
          written.push_back(dir / ("stats_" + e.engine + ".csv"));
          written.push_back(dir / ("histogram_" + e.engine + ".csv"));
        }
        break;
    }
  }
  return written;
}

std::vector<std::filesystem::path> emit_report(const EvasionReport& report, const std::filesystem::path& dir,
                                               std::initializer_list<ReportFormat> formats) {
  return emit_report(report, dir, std::vector<ReportFormat>(formats));
}

}  // namespace evade
