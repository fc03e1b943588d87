#pragma once

#include <wdist/simnet.hpp>

#include <json.hpp>

#include <filesystem>
#include <string>
#include <vector>

namespace wdist {

/// Deterministic part of a report: config echo, seed and metrics. Wall
/// times and the thread count are left out so that the document is a pure
/// function of the config.
nlohmann::json report_to_json(const ExperimentReport& report);
ExperimentReport report_from_json(const nlohmann::json& j);

/// Wall-clock seconds per estimator, kept apart from the report.
nlohmann::json timing_to_json(const std::vector<ExperimentReport>& reports);

nlohmann::json sweep_to_json(const std::vector<ExperimentReport>& reports);
std::vector<ExperimentReport> sweep_from_json(const nlohmann::json& j);

/// One row per (report, estimator, alpha); estimators without regions get a
/// single row with empty coverage fields.
std::string reports_csv(const std::vector<ExperimentReport>& reports);

/// Fixed-width text table; RMSE, SD and bias are multiplied by `scale`.
std::string reports_table(const std::vector<ExperimentReport>& reports, double scale = 100.0);

nlohmann::json estimate_to_json(const AggregateEstimate<double>& est);

/// Writes `content` to a temporary sibling and renames it over `path`.
void write_atomic(const std::filesystem::path& path, const std::string& content);
std::string read_file(const std::filesystem::path& path);

/// Numeric CSV rows, one observation per line. Blank lines, '#' comments
/// and a leading non-numeric header line are skipped.
DataBlock<double> read_block_csv(const std::filesystem::path& path, std::int64_t id);
std::string block_csv(const DataBlock<double>& block);

}  // namespace wdist
