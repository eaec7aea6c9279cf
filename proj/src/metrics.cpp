#include "npudeploy/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>

#include "npudeploy/errors.hpp"

namespace npu {

using nlohmann::json;

ReportFormat parse_report_format(const std::string& text) {
    if (text == "json") return ReportFormat::Json;
    if (text == "csv") return ReportFormat::Csv;
    throw ParseError("unknown report format '" + text + "' (expected json|csv)");
}

Count total_passes(const AllocationPlan& plan) {
    Count n = 0;
    for (const auto& a : plan.layers) n += a.passes;
    return n;
}

double dynamic_energy(const RunStats& stats, const AllocationPlan& plan, const CostModel& cost) {
    double npu_passes = 0.0;
    for (const auto& a : plan.layers) npu_passes += static_cast<double>(a.passes) * static_cast<double>(a.npu_alloc);
    return cost.energy_per_synaptic_event * static_cast<double>(stats.synaptic_events) +
           cost.energy_per_neuron_update * static_cast<double>(stats.neuron_updates) +
           cost.energy_per_npu_pass * npu_passes;
}

RunReport estimate(const RunStats& stats, const AllocationPlan& plan, const ProcessorConfig& cfg,
                   const std::string& workload_label) {
    if (!cfg.cost_model) throw MissingCostModel("chip '" + cfg.name + "' has no cost model");
    const auto& cost = *cfg.cost_model;
    RunReport r;
    r.workload_label = workload_label;
    r.latency_s = cost.latency_fixed + static_cast<double>(total_passes(plan)) * cost.latency_per_pass;
    if (r.latency_s > 0.0) {
        r.power_w = cost.static_power + dynamic_energy(stats, plan, cost) / r.latency_s;
        r.throughput = throughput_from_latency(r.latency_s);
    } else {
        r.power_w = cost.static_power;
    }
    r.energy_j = r.power_w * r.latency_s;
    r.efficiency = r.power_w > 0.0 ? efficiency(r.throughput, r.power_w) : 0.0;
    return r;
}

double throughput_from_latency(double latency_s) {
    if (!(latency_s > 0.0)) throw NonPositiveLatency("latency must be positive");
    return 1.0 / latency_s;
}

double efficiency(double throughput, double power_w) {
    if (!(power_w > 0.0)) throw NonPositivePower("power must be positive");
    return throughput / power_w;
}

std::string throughput_unit(const std::string& workload_label) {
    return workload_label.rfind("keyword", 0) == 0 ? "KPS" : "FPS";
}

json report_to_json(const RunReport& r) {
    return {{"workload", r.workload_label},
            {"latency_s", r.latency_s},
            {"throughput", r.throughput},
            {"power_w", r.power_w},
            {"energy_j", r.energy_j},
            {"efficiency", r.efficiency},
            {"accuracy", r.accuracy ? json(*r.accuracy) : json(nullptr)}};
}

RunReport report_from_json(const json& j) {
    RunReport r;
    try {
        r.workload_label = j.at("workload").get<std::string>();
        r.latency_s = j.at("latency_s").get<double>();
        r.throughput = j.at("throughput").get<double>();
        r.power_w = j.at("power_w").get<double>();
        r.energy_j = j.at("energy_j").get<double>();
        r.efficiency = j.at("efficiency").get<double>();
        if (j.contains("accuracy") && !j["accuracy"].is_null()) r.accuracy = j["accuracy"].get<double>();
    } catch (const json::exception& e) {
        throw ParseError(std::string("report: ") + e.what());
    }
    return r;
}

namespace {
std::string exact(double v) {
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}
}  // namespace

std::string report_csv_row(const RunReport& r) {
    if (r.workload_label.find_first_of(",\n\"") != std::string::npos) {
        throw ValidationError("workload label may not contain commas, quotes or newlines");
    }
    std::ostringstream os;
    os << r.workload_label << ',' << exact(r.latency_s) << ',' << exact(r.throughput) << ',' << exact(r.power_w) << ','
       << exact(r.energy_j) << ',' << exact(r.efficiency) << ',';
    if (r.accuracy) os << exact(*r.accuracy);
    return os.str();
}

RunReport report_from_csv_row(const std::string& line) {
    std::vector<std::string> cells;
    std::stringstream ss(line);
    std::string cell;
    while (std::getline(ss, cell, ',')) cells.push_back(cell);
    if (!line.empty() && line.back() == ',') cells.emplace_back();
    if (cells.size() != 7) throw ParseError("report CSV row needs 7 fields, got " + std::to_string(cells.size()));
    RunReport r;
    try {
        r.workload_label = cells[0];
        r.latency_s = std::stod(cells[1]);
        r.throughput = std::stod(cells[2]);
        r.power_w = std::stod(cells[3]);
        r.energy_j = std::stod(cells[4]);
        r.efficiency = std::stod(cells[5]);
        if (!cells[6].empty()) r.accuracy = std::stod(cells[6]);
    } catch (const std::logic_error&) {
        throw ParseError("report CSV row has a non-numeric field");
    }
    return r;
}

void write_report(const RunReport& report, const std::filesystem::path& path, ReportFormat format) {
    std::ofstream os(path, std::ios::trunc);
    if (!os) throw IoError("cannot write report " + path.string());
    if (format == ReportFormat::Json) {
        os << report_to_json(report).dump(2) << '\n';
    } else {
        os << kCsvHeader << '\n' << report_csv_row(report) << '\n';
    }
    if (!os) throw IoError("write failed for " + path.string());
}

void append_report_row(const RunReport& report, const std::filesystem::path& path) {
    std::error_code ec;
    const bool fresh = !std::filesystem::exists(path, ec) || std::filesystem::file_size(path, ec) == 0;
    std::ofstream os(path, std::ios::app);
    if (!os) throw IoError("cannot append to report " + path.string());
    if (fresh) os << kCsvHeader << '\n';
    os << report_csv_row(report) << '\n';
    if (!os) throw IoError("write failed for " + path.string());
}

RunReport read_report(const std::filesystem::path& path, ReportFormat format) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open report " + path.string());
    if (format == ReportFormat::Json) {
        try {
            return report_from_json(json::parse(in));
        } catch (const json::exception& e) {
            throw ParseError(path.string() + ": " + e.what());
        }
    }
    std::string header;
    std::string row;
    std::getline(in, header);
    if (header != kCsvHeader) throw ParseError(path.string() + ": unexpected CSV header");
    if (!std::getline(in, row)) throw ParseError(path.string() + ": no report row");
    return report_from_csv_row(row);
}

std::string format_energy(double joules) {
    const char* unit = "J";
    double v = joules;
    if (std::fabs(joules) < 1e-3) {
        v = joules * 1e6;
        unit = "uJ";
    } else if (std::fabs(joules) < 1.0) {
        v = joules * 1e3;
        unit = "mJ";
    }
    // three significant figures, keeping trailing zeros
    int decimals = 2;
    if (v != 0.0) {
        int e = static_cast<int>(std::floor(std::log10(std::fabs(v))));
        const double step = std::pow(10.0, e - 2);
        if (std::fabs(std::round(v / step) * step) >= std::pow(10.0, e + 1)) ++e;
        decimals = std::max(0, 2 - e);
    }
    char buf[48];
    std::snprintf(buf, sizeof buf, "%.*f %s", decimals, v, unit);
    return buf;
}

std::string format_summary(const RunReport& r) {
    char buf[256];
    const auto unit = throughput_unit(r.workload_label);
    std::snprintf(buf, sizeof buf, "workload:   %s\nlatency:    %.2f ms\nthroughput: %.0f %s\npower:      %.0f mW\n",
                  r.workload_label.c_str(), r.latency_s * 1e3, std::floor(r.throughput), unit.c_str(), r.power_w * 1e3);
    std::string out = buf;
    out += "energy:     " + format_energy(r.energy_j) + "\n";
    std::snprintf(buf, sizeof buf, "efficiency: %.2f %s/W\n", r.efficiency, unit.c_str());
    out += buf;
    if (r.accuracy) {
        std::snprintf(buf, sizeof buf, "accuracy:   %.2f%%\n", *r.accuracy * 100.0);
        out += buf;
    }
    return out;
}

}  // namespace npu
