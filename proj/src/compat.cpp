#include "npudeploy/compat.hpp"

#include <algorithm>
#include <cstdio>
#include <sstream>

#include "npudeploy/errors.hpp"

namespace npu {

namespace {
Count ceil_div(Count num, Count den) { return (num + den - 1) / den; }
}  // namespace

LayerNpuCost layer_npu_cost_from_bytes(Count m_net, Count m_dat, const ProcessorConfig& cfg) {
    LayerNpuCost c;
    c.m_net = m_net;
    c.m_dat = m_dat;
    c.npu_net = ceil_div(m_net, cfg.buf_net_bytes);
    c.npu_dat = ceil_div(m_dat, cfg.buf_dat_bytes);
    c.npu_mem = std::max(c.npu_net, c.npu_dat);
    return c;
}

LayerNpuCost layer_npu_cost(const LayerSpec& layer, const ProcessorConfig& cfg) {
    auto c = layer_npu_cost_from_bytes(layer_param_bytes(layer), layer_activation_bytes(layer), cfg);
    c.layer_name = layer.name;
    return c;
}

CompatReport analyze(const NetworkModel& model, const ProcessorConfig& cfg) {
    CompatReport r;
    r.model_name = model.name;
    r.npu_budget = cfg.n_npu;
    r.mem_budget = memory_budget_bytes(cfg);
    r.per_layer.reserve(model.layers.size());
    for (std::size_t i = 0; i < model.layers.size(); ++i) {
        auto c = layer_npu_cost(model.layers[i], cfg);
        c.layer_index = i;
        r.npu_total += c.npu_mem;
        r.mem_total += c.m_net + c.m_dat;
        r.per_layer.push_back(std::move(c));
    }
    r.compatible = r.npu_total <= r.npu_budget && r.mem_total <= r.mem_budget;
    return r;
}

nlohmann::json compat_to_json(const CompatReport& r) {
    nlohmann::json layers = nlohmann::json::array();
    for (const auto& c : r.per_layer) {
        layers.push_back({{"index", c.layer_index},
                          {"layer", c.layer_name},
                          {"m_net", c.m_net},
                          {"m_dat", c.m_dat},
                          {"npu_net", c.npu_net},
                          {"npu_dat", c.npu_dat},
                          {"npu_mem", c.npu_mem}});
    }
    return {{"model", r.model_name},
            {"layers", std::move(layers)},
            {"npu_total", r.npu_total},
            {"npu_budget", r.npu_budget},
            {"mem_total", r.mem_total},
            {"mem_budget", r.mem_budget},
            {"compatible", r.compatible}};
}

std::string format_compat_table(const CompatReport& r) {
    std::ostringstream os;
    char line[160];
    std::snprintf(line, sizeof line, "%-4s %-24s %10s %10s %7s %7s %7s\n", "idx", "layer", "m_net", "m_dat",
                  "npu_net", "npu_dat", "npu_mem");
    os << line;
    for (const auto& c : r.per_layer) {
        std::snprintf(line, sizeof line, "%-4zu %-24s %10lld %10lld %7lld %7lld %7lld\n", c.layer_index,
                      c.layer_name.c_str(), static_cast<long long>(c.m_net), static_cast<long long>(c.m_dat),
                      static_cast<long long>(c.npu_net), static_cast<long long>(c.npu_dat),
                      static_cast<long long>(c.npu_mem));
        os << line;
    }
    os << "NPUs:   " << r.npu_total << " / " << r.npu_budget << '\n';
    os << "Memory: " << r.mem_total << " / " << r.mem_budget << " bytes\n";
    os << (r.compatible ? "compatible" : "NOT compatible") << '\n';
    return os.str();
}

RankingKey parse_ranking_key(const std::string& text) {
    if (text == "accuracy") return RankingKey::AccuracyThenResolution;
    if (text == "npu") return RankingKey::NpuTotal;
    throw ParseError("unknown ranking key '" + text + "' (expected accuracy|npu)");
}

Selection select_networks(const std::vector<NetworkModel>& candidates, const ProcessorConfig& cfg, RankingKey key) {
    if (candidates.empty()) throw EmptySelection("no candidate networks given");
    Selection sel;
    for (const auto& m : candidates) {
        auto report = analyze(m, cfg);
        if (report.compatible) {
            sel.ranked.push_back({m, std::move(report)});
            continue;
        }
        std::ostringstream why;
        if (report.npu_total > report.npu_budget) {
            why << "needs " << report.npu_total << " NPUs, budget " << report.npu_budget;
        }
        if (report.mem_total > report.mem_budget) {
            if (why.tellp() > 0) why << "; ";
            why << "needs " << report.mem_total << " bytes, budget " << report.mem_budget;
        }
        sel.rejected.push_back({m.name, why.str()});
    }
    if (sel.ranked.empty()) {
        std::string msg = "no candidate fits the chip; select a smaller network";
        for (const auto& r : sel.rejected) msg += "\n  " + r.name + ": " + r.reason;
        throw EmptySelection(msg);
    }

    auto resolution = [](const NetworkModel& m) {
        return m.input_resolution ? m.input_resolution->first * m.input_resolution->second : Count{0};
    };
    auto before = [&](const SelectedNetwork& a, const SelectedNetwork& b) {
        if (key == RankingKey::AccuracyThenResolution) {
            const bool ha = a.model.accuracy.has_value();
            const bool hb = b.model.accuracy.has_value();
            if (ha != hb) return ha;
            if (ha && *a.model.accuracy != *b.model.accuracy) return *a.model.accuracy > *b.model.accuracy;
            if (ha && resolution(a.model) != resolution(b.model)) return resolution(a.model) > resolution(b.model);
        }
        return a.report.npu_total < b.report.npu_total;
    };
    std::stable_sort(sel.ranked.begin(), sel.ranked.end(), before);
    return sel;
}

}  // namespace npu
