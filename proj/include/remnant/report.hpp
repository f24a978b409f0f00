#pragma once

#include <json.hpp>

#include "remnant/audit.hpp"
#include "remnant/forge.hpp"
#include "remnant/ftl.hpp"
#include "remnant/pipeline.hpp"

// Report model shared by every subcommand: one JSON object with meta,
// summary, files, audit and simulation sections (see docs/report_schema.md),
// plus a plain-text rendering that carries the same facts.
namespace remnant::report {

using json = nlohmann::ordered_json;

inline constexpr std::string_view kToolVersion = "0.1.0";

/// num/den * 100 rounded half-up to one decimal, computed on integers ("66.7").
std::string percent(std::uint64_t num, std::uint64_t den);

json scan_files(const ScanResult& scan);

/// Recovered rows, joined with the ground truth when one is given. In truth
/// mode, non-live truth files that nothing was recovered for get a row too,
/// so the summary can always be recomputed from `files`.
json recovery_files(const RecoveryResult& rec, const forge::GroundTruth* truth);

/// Per-class recovery summary recomputed from detail rows.
json recovery_summary(const json& files, bool with_truth);

json audit_section(const AuditResult& audit);

json remanence_section(const ftl::RemanenceReport& rem, std::span<const ftl::DumpEntry> dump);
json cycle_rows(const ftl::CycleResult& cycle);
json geometry_json(const ftl::FtlConfig& config);

std::string render_text(const json& report);

/// Tables and key/value lines of a rendered report, all values as strings.
json parse_text(std::string_view text);
/// What parse_text(render_text(report)) must return.
json text_facts(const json& report);

}  // namespace remnant::report
