#pragma once

#include <filesystem>
#include <initializer_list>
#include <string>
#include <vector>

#include "evade/experiment.hpp"

namespace evade {

enum class ReportFormat { json, markdown, csv };

ReportFormat report_format_from_string(std::string_view text);

/// Inverse of to_json(EvasionReport); used to re-render a saved report.json.
EvasionReport report_from_json(const nlohmann::json& j);

/// Markdown summary: corpus sizes, model quality, evasion rates per engine,
/// the per-mutation statistics table and the mutation-count histogram.
std::string render_markdown(const EvasionReport& report);
/// One row per mutation kind: id,mutation,alone,in_group,repeats,affected_instances,total_occurrence.
std::string render_stats_csv(const EngineReport& engine);
/// mutations,samples rows, followed by a "failed" row.
std::string render_histogram_csv(const EngineReport& engine);

/// Writes report.json / report.md / stats_<engine>.csv and
/// histogram_<engine>.csv into `dir`. Returns the files written. Output is
/// byte-identical for identical reports.
std::vector<std::filesystem::path> emit_report(const EvasionReport& report, const std::filesystem::path& dir,
                                               std::initializer_list<ReportFormat> formats);
std::vector<std::filesystem::path> emit_report(const EvasionReport& report, const std::filesystem::path& dir,
                                               const std::vector<ReportFormat>& formats);

}  // namespace evade
