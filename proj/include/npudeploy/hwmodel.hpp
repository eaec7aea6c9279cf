#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>

#include <json.hpp>

#include "npudeploy/netir.hpp"

namespace npu {

/// Estimator coefficients. Fitted offline; see data/akida_calibration.json.
struct CostModel {
    double energy_per_synaptic_event = 0.0;   // J
    double energy_per_neuron_update = 0.0;    // J
    double energy_per_npu_pass = 0.0;         // J per allocated NPU per pass
    double static_power = 0.0;                // W
    double latency_per_pass = 0.0;            // s
    double latency_fixed = 0.0;               // s per inference

    bool operator==(const CostModel&) const = default;
};

struct ProcessorConfig {
    std::string name;
    Count n_npu = 0;
    Count npus_per_node = 1;
    Count buf_net_bytes = 0;   // per-NPU weight buffer
    Count buf_dat_bytes = 0;   // per-NPU spike/data buffer
    Count npes_per_npu = 1;
    double clock_hz = 0.0;
    // Neurons one NPE updates in a single sequential pass; sets the pass count of a layer.
    Count neurons_per_npe_pass = 1;
    std::optional<CostModel> cost_model;

    Count n_nodes() const { return n_npu / npus_per_node; }
    bool operator==(const ProcessorConfig&) const = default;
};

/// AKD1000 figures: 80 NPUs in 20 nodes, 40KiB + 60KiB SRAM per NPU, 8 NPEs, 300MHz,
/// with the shipped calibration for the cost model.
ProcessorConfig default_akida();

/// n_npu * (buf_net_bytes + buf_dat_bytes).
Count memory_budget_bytes(const ProcessorConfig& cfg);

void validate_chip(const ProcessorConfig& cfg);

ProcessorConfig chip_from_json(const nlohmann::json& doc);
nlohmann::json chip_to_json(const ProcessorConfig& cfg);
CostModel cost_model_from_json(const nlohmann::json& doc);
nlohmann::json cost_model_to_json(const CostModel& cm);

ProcessorConfig load_chip(const std::filesystem::path& path);
void save_chip(const ProcessorConfig& cfg, const std::filesystem::path& path);

/// The calibration document compiled into the library.
const nlohmann::json& shipped_calibration();

}  // namespace npu
