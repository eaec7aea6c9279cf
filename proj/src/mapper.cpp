#include "npudeploy/mapper.hpp"

#include <algorithm>
#include <fstream>
#include <unordered_set>

#include "npudeploy/errors.hpp"

namespace npu {

using nlohmann::json;

namespace {
Count ceil_div(Count num, Count den) { return (num + den - 1) / den; }
}  // namespace

Count Utilization::hundredths() const {
    // round(cost * 10000 / n_npu), half-up
    return (2 * cost * 10000 + n_npu) / (2 * n_npu);
}

std::string Utilization::to_string() const {
    const Count h = hundredths();
    std::string frac = std::to_string(h % 100);
    if (frac.size() < 2) frac.insert(0, "0");
    return std::to_string(h / 100) + "." + frac;
}

Count SequentialPolicy::exe_npus(const LayerSpec&, const ProcessorConfig&) const { return 1; }

Count SequentialPolicy::passes(const LayerSpec& layer, const ProcessorConfig& cfg, Count npu_exe) const {
    const Count per_pass = npu_exe * cfg.npes_per_npu * cfg.neurons_per_npe_pass;
    return std::max<Count>(1, ceil_div(layer.out_shape.volume(), per_pass));
}

const ExecutionPolicy& sequential_policy() {
    static const SequentialPolicy policy;
    return policy;
}

Count min_exe_npus(const LayerSpec& layer, const ProcessorConfig& cfg) {
    return sequential_policy().exe_npus(layer, cfg);
}

AllocationPlan map(const NetworkModel& model, const ProcessorConfig& cfg, const ExecutionPolicy& policy) {
    const auto compat = analyze(model, cfg);
    if (!compat.compatible) {
        throw MappingError("model '" + model.name + "' needs " + std::to_string(compat.npu_total) +
                           " NPUs / " + std::to_string(compat.mem_total) + " bytes; chip offers " +
                           std::to_string(compat.npu_budget) + " NPUs / " + std::to_string(compat.mem_budget) +
                           " bytes");
    }

    AllocationPlan plan;
    plan.model_name = model.name;
    plan.chip = cfg;
    for (std::size_t i = 0; i < model.layers.size(); ++i) {
        const auto& layer = model.layers[i];
        LayerAllocation a;
        a.layer_index = i;
        a.layer_name = layer.name;
        a.npu_mem = compat.per_layer[i].npu_mem;
        a.npu_exe = policy.exe_npus(layer, cfg);
        a.npu_alloc = std::max(a.npu_mem, a.npu_exe);
        a.passes = policy.passes(layer, cfg, a.npu_exe);
        plan.cost_c += a.npu_alloc;
        plan.layers.push_back(std::move(a));
    }
    if (plan.cost_c > cfg.n_npu) {
        throw MappingError("execution NPUs push the allocation to " + std::to_string(plan.cost_c) + " NPUs");
    }

    // Contiguous ranges in layer order. A range of at least one node starts on a node
    // boundary when the remaining slack can absorb the gap.
    Count slack = cfg.n_npu - plan.cost_c;
    Count cursor = 0;
    for (auto& a : plan.layers) {
        if (a.npu_alloc >= cfg.npus_per_node) {
            const Count gap = (cfg.npus_per_node - cursor % cfg.npus_per_node) % cfg.npus_per_node;
            if (gap <= slack) {
                cursor += gap;
                slack -= gap;
            }
        }
        a.npu_ids.resize(static_cast<std::size_t>(a.npu_alloc));
        for (Count k = 0; k < a.npu_alloc; ++k) a.npu_ids[static_cast<std::size_t>(k)] = cursor + k;
        cursor += a.npu_alloc;
    }
    plan.utilization = Utilization{plan.cost_c, cfg.n_npu};
    check_plan(plan);
    return plan;
}

Utilization utilization(const AllocationPlan& plan) { return Utilization{plan.cost_c, plan.chip.n_npu}; }

void check_plan(const AllocationPlan& plan) {
    std::unordered_set<Count> seen;
    Count cost = 0;
    for (const auto& a : plan.layers) {
        if (a.npu_alloc != std::max(a.npu_mem, a.npu_exe)) throw InternalError("npu_alloc != max(npu_mem, npu_exe)");
        if (static_cast<Count>(a.npu_ids.size()) != a.npu_alloc) throw InternalError("npu_ids length != npu_alloc");
        if (a.passes < 1) throw InternalError("passes < 1");
        for (Count id : a.npu_ids) {
            if (id < 0 || id >= plan.chip.n_npu) throw InternalError("NPU id out of range");
            if (!seen.insert(id).second) throw InternalError("NPU id " + std::to_string(id) + " assigned twice");
        }
        cost += a.npu_alloc;
    }
    if (cost != plan.cost_c) throw InternalError("cost_c != sum of npu_alloc");
    if (plan.cost_c > plan.chip.n_npu) throw InternalError("plan over-allocates the chip");
    if (plan.utilization != Utilization{plan.cost_c, plan.chip.n_npu}) throw InternalError("utilization mismatch");
}

void check_plan_matches(const AllocationPlan& plan, const NetworkModel& model) {
    if (plan.layers.size() != model.layers.size()) {
        throw ValidationError("plan has " + std::to_string(plan.layers.size()) + " layers, model has " +
                              std::to_string(model.layers.size()));
    }
    for (std::size_t i = 0; i < plan.layers.size(); ++i) {
        if (plan.layers[i].layer_name != model.layers[i].name) {
            throw ValidationError("plan layer " + std::to_string(i) + " is '" + plan.layers[i].layer_name +
                                  "', model layer is '" + model.layers[i].name + "'");
        }
    }
}

json plan_to_json(const AllocationPlan& plan) {
    json layers = json::array();
    for (const auto& a : plan.layers) {
        layers.push_back({{"index", a.layer_index},
                          {"layer", a.layer_name},
                          {"npu_mem", a.npu_mem},
                          {"npu_exe", a.npu_exe},
                          {"npu_alloc", a.npu_alloc},
                          {"npu_ids", a.npu_ids},
                          {"passes", a.passes}});
    }
    return {{"model", plan.model_name},
            {"chip", plan.chip.name},
            {"n_npu", plan.chip.n_npu},
            {"layers", std::move(layers)},
            {"cost_c", plan.cost_c},
            {"utilization", static_cast<double>(plan.utilization.hundredths()) / 100.0}};
}

AllocationPlan plan_from_json(const json& doc, const ProcessorConfig& chip) {
    AllocationPlan plan;
    try {
        plan.model_name = doc.at("model").get<std::string>();
        if (doc.at("n_npu").get<Count>() != chip.n_npu) {
            throw ValidationError("plan was made for a " + std::to_string(doc.at("n_npu").get<Count>()) +
                                  "-NPU chip, current chip has " + std::to_string(chip.n_npu));
        }
        plan.chip = chip;
        for (const auto& lj : doc.at("layers")) {
            LayerAllocation a;
            a.layer_index = lj.at("index").get<std::size_t>();
            a.layer_name = lj.at("layer").get<std::string>();
            a.npu_mem = lj.at("npu_mem").get<Count>();
            a.npu_exe = lj.at("npu_exe").get<Count>();
            a.npu_alloc = lj.at("npu_alloc").get<Count>();
            a.npu_ids = lj.at("npu_ids").get<std::vector<Count>>();
            a.passes = lj.at("passes").get<Count>();
            plan.layers.push_back(std::move(a));
        }
        plan.cost_c = doc.at("cost_c").get<Count>();
    } catch (const json::exception& e) {
        throw ParseError(std::string("plan: ") + e.what());
    }
    plan.utilization = Utilization{plan.cost_c, chip.n_npu};
    try {
        check_plan(plan);
    } catch (const InternalError& e) {
        throw ValidationError(std::string("plan file is inconsistent: ") + e.what());
    }
    return plan;
}

AllocationPlan load_plan(const std::filesystem::path& path, const ProcessorConfig& chip) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open plan " + path.string());
    json doc;
    try {
        doc = json::parse(in);
    } catch (const json::exception& e) {
        throw ParseError(path.string() + ": " + e.what());
    }
    return plan_from_json(doc, chip);
}

}  // namespace npu
