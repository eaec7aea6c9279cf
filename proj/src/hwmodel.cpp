#include "npudeploy/hwmodel.hpp"

#include <fstream>

#include "calibration_data.hpp"
#include "npudeploy/errors.hpp"

namespace npu {

using nlohmann::json;

const json& shipped_calibration() {
    static const json doc = json::parse(kShippedCalibration);
    return doc;
}

ProcessorConfig default_akida() {
    ProcessorConfig cfg;
    cfg.name = "akida-akd1000";
    cfg.n_npu = 80;
    cfg.npus_per_node = 4;
    cfg.buf_net_bytes = 40 * 1024;
    cfg.buf_dat_bytes = 60 * 1024;
    cfg.npes_per_npu = 8;
    cfg.clock_hz = 300e6;
    const auto& cal = shipped_calibration();
    cfg.neurons_per_npe_pass = cal.at("neurons_per_npe_pass").get<Count>();
    cfg.cost_model = cost_model_from_json(cal.at("cost_model"));
    return cfg;
}

Count memory_budget_bytes(const ProcessorConfig& cfg) {
    return cfg.n_npu * (cfg.buf_net_bytes + cfg.buf_dat_bytes);
}

void validate_chip(const ProcessorConfig& cfg) {
    if (cfg.n_npu <= 0) throw ValidationError("n_npu must be positive");
    if (cfg.npus_per_node <= 0 || cfg.n_npu % cfg.npus_per_node != 0) {
        throw ValidationError("n_npu must be divisible by npus_per_node");
    }
    if (cfg.buf_net_bytes <= 0 || cfg.buf_dat_bytes <= 0) throw ValidationError("buffers must be positive");
    if (cfg.npes_per_npu <= 0 || cfg.neurons_per_npe_pass <= 0) {
        throw ValidationError("npes_per_npu and neurons_per_npe_pass must be positive");
    }
    if (cfg.cost_model) {
        const auto& c = *cfg.cost_model;
        for (double v : {c.energy_per_synaptic_event, c.energy_per_neuron_update, c.energy_per_npu_pass,
                         c.static_power, c.latency_per_pass, c.latency_fixed}) {
            if (!(v >= 0.0)) throw ValidationError("cost model coefficients must be >= 0");
        }
    }
}

CostModel cost_model_from_json(const json& j) {
    CostModel c;
    c.energy_per_synaptic_event = j.at("energy_per_synaptic_event").get<double>();
    c.energy_per_neuron_update = j.at("energy_per_neuron_update").get<double>();
    c.energy_per_npu_pass = j.at("energy_per_npu_pass").get<double>();
    c.static_power = j.at("static_power").get<double>();
    c.latency_per_pass = j.at("latency_per_pass").get<double>();
    c.latency_fixed = j.at("latency_fixed").get<double>();
    return c;
}

json cost_model_to_json(const CostModel& c) {
    return {{"energy_per_synaptic_event", c.energy_per_synaptic_event},
            {"energy_per_neuron_update", c.energy_per_neuron_update},
            {"energy_per_npu_pass", c.energy_per_npu_pass},
            {"static_power", c.static_power},
            {"latency_per_pass", c.latency_per_pass},
            {"latency_fixed", c.latency_fixed}};
}

ProcessorConfig chip_from_json(const json& j) {
    ProcessorConfig cfg;
    try {
        cfg.name = j.at("name").get<std::string>();
        cfg.n_npu = j.at("n_npu").get<Count>();
        cfg.npus_per_node = j.at("npus_per_node").get<Count>();
        cfg.buf_net_bytes = j.at("buf_net_bytes").get<Count>();
        cfg.buf_dat_bytes = j.at("buf_dat_bytes").get<Count>();
        cfg.npes_per_npu = j.value("npes_per_npu", Count{8});
        cfg.clock_hz = j.value("clock_hz", 300e6);
        cfg.neurons_per_npe_pass = j.value("neurons_per_npe_pass", Count{1});
        if (j.contains("cost_model") && !j["cost_model"].is_null()) {
            cfg.cost_model = cost_model_from_json(j["cost_model"]);
        }
    } catch (const json::exception& e) {
        throw ParseError(std::string("chip config: ") + e.what());
    }
    validate_chip(cfg);
    return cfg;
}

json chip_to_json(const ProcessorConfig& cfg) {
    json j = {{"name", cfg.name},
              {"n_npu", cfg.n_npu},
              {"npus_per_node", cfg.npus_per_node},
              {"buf_net_bytes", cfg.buf_net_bytes},
              {"buf_dat_bytes", cfg.buf_dat_bytes},
              {"npes_per_npu", cfg.npes_per_npu},
              {"clock_hz", cfg.clock_hz},
              {"neurons_per_npe_pass", cfg.neurons_per_npe_pass}};
    j["cost_model"] = cfg.cost_model ? cost_model_to_json(*cfg.cost_model) : json(nullptr);
    return j;
}

ProcessorConfig load_chip(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open chip config " + path.string());
    json doc;
    try {
        doc = json::parse(in);
    } catch (const json::exception& e) {
        throw ParseError(path.string() + ": " + e.what());
    }
    return chip_from_json(doc);
}

void save_chip(const ProcessorConfig& cfg, const std::filesystem::path& path) {
    std::ofstream os(path);
    if (!os) throw IoError("cannot write chip config " + path.string());
    os << chip_to_json(cfg).dump(2) << '\n';
}

}  // namespace npu
