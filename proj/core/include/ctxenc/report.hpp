#pragma once

#include <filesystem>
#include <string>

#include "ctxenc/harness.hpp"

namespace ctxenc {

/// Structured JSON for one run: config echo, per-fold metrics, aggregates,
/// software version. With include_volatile=false the timestamp and wall
/// times are omitted, leaving a byte-deterministic document.
std::string report_to_json(const RunReport& report, bool include_volatile = true);

void write_report_json(const RunReport& report, const std::filesystem::path& path,
                       bool include_volatile = true);

/// Parses a report written by write_report_json (volatile fields optional).
RunReport report_from_json_file(const std::filesystem::path& path);

/// Flat CSV, one row per fold, for tabulation.
std::string report_csv_header();
std::string report_to_csv_rows(const RunReport& report);
void write_report_csv(const RunReport& report, const std::filesystem::path& path);

/// Hex digest over the result-determining config fields (excludes jobs and
/// data_dir, which cannot change the numbers). Used to key cached runs.
std::string config_fingerprint(const ExperimentConfig& config);

}  // namespace ctxenc
