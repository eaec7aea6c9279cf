#pragma once

#include <string>
#include <vector>

#include <json.hpp>

#include "npudeploy/hwmodel.hpp"
#include "npudeploy/netir.hpp"

namespace npu {

/// Memory-driven NPU demand of one layer.
struct LayerNpuCost {
    std::size_t layer_index = 0;
    std::string layer_name;
    Count npu_net = 0;   // ceil(m_net / B_net)
    Count npu_dat = 0;   // ceil(m_dat / B_dat)
    Count npu_mem = 0;   // max(npu_net, npu_dat)
    Count m_net = 0;
    Count m_dat = 0;

    bool operator==(const LayerNpuCost&) const = default;
};

struct CompatReport {
    std::string model_name;
    std::vector<LayerNpuCost> per_layer;
    Count npu_total = 0;    // sum of npu_mem over all layers
    Count npu_budget = 0;
    Count mem_total = 0;    // sum of m_net + m_dat
    Count mem_budget = 0;
    bool compatible = false;

    bool operator==(const CompatReport&) const = default;
};

LayerNpuCost layer_npu_cost(const LayerSpec& layer, const ProcessorConfig& cfg);
/// Same computation from byte counts directly.
LayerNpuCost layer_npu_cost_from_bytes(Count m_net, Count m_dat, const ProcessorConfig& cfg);

CompatReport analyze(const NetworkModel& model, const ProcessorConfig& cfg);

nlohmann::json compat_to_json(const CompatReport& report);
/// Fixed-width per-layer table for terminals.
std::string format_compat_table(const CompatReport& report);

enum class RankingKey {
    AccuracyThenResolution,   // accuracy desc, input resolution desc, npu_total asc
    NpuTotal,                 // npu_total asc
};

RankingKey parse_ranking_key(const std::string& text);

struct SelectedNetwork {
    NetworkModel model;
    CompatReport report;
};

struct RejectedNetwork {
    std::string name;
    std::string reason;
};

struct Selection {
    std::vector<SelectedNetwork> ranked;
    std::vector<RejectedNetwork> rejected;
};

/// Keeps compatible candidates in ranking order. Throws EmptySelection if none fit.
Selection select_networks(const std::vector<NetworkModel>& candidates, const ProcessorConfig& cfg,
                          RankingKey key = RankingKey::AccuracyThenResolution);

}  // namespace npu
