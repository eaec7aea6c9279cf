#pragma once

#include <filesystem>
#include <optional>
#include <string>

#include <json.hpp>

#include "npudeploy/hwmodel.hpp"
#include "npudeploy/mapper.hpp"
#include "npudeploy/simcore.hpp"

namespace npu {

struct RunReport {
    std::string workload_label;
    double latency_s = 0.0;
    double throughput = 0.0;   // items per second
    double power_w = 0.0;
    double energy_j = 0.0;
    double efficiency = 0.0;   // items per second per watt
    std::optional<double> accuracy;

    bool operator==(const RunReport&) const = default;
};

enum class ReportFormat { Json, Csv };

ReportFormat parse_report_format(const std::string& text);

inline constexpr const char* kCsvHeader = "workload,latency_s,throughput,power_w,energy_j,efficiency,accuracy";

/// latency = fixed + sum(passes) * per_pass; power = static + dynamic_energy / latency;
/// energy = power * latency. A zero latency yields power = static and energy = 0.
RunReport estimate(const RunStats& stats, const AllocationPlan& plan, const ProcessorConfig& cfg,
                   const std::string& workload_label = "image");

/// Dynamic energy of a run in joules.
double dynamic_energy(const RunStats& stats, const AllocationPlan& plan, const CostModel& cost);
Count total_passes(const AllocationPlan& plan);

double throughput_from_latency(double latency_s);
double efficiency(double throughput, double power_w);

/// "FPS" or "KPS" depending on the workload.
std::string throughput_unit(const std::string& workload_label);

nlohmann::json report_to_json(const RunReport& report);
RunReport report_from_json(const nlohmann::json& doc);
std::string report_csv_row(const RunReport& report);
RunReport report_from_csv_row(const std::string& line);

/// Overwrites `path` with the report in the given format.
void write_report(const RunReport& report, const std::filesystem::path& path, ReportFormat format);
/// Appends one CSV row, writing the header first when the file is new or empty.
void append_report_row(const RunReport& report, const std::filesystem::path& path);
RunReport read_report(const std::filesystem::path& path, ReportFormat format);

/// Display rounding: latency ms with 2 decimals, power mW integer, energy 3 significant figures.
std::string format_summary(const RunReport& report);
std::string format_energy(double joules);

}  // namespace npu
