#pragma once

// Straight-line NPU accounting computed from the raw manifest JSON, sharing no code with
// the library: bits are summed first, bytes and NPUs use quotient/remainder rounding.

#include <algorithm>
#include <cstdint>
#include <vector>

#include <json.hpp>

namespace npu::testing {

struct OracleLayer {
    std::int64_t m_net, m_dat, npu_net, npu_dat, npu_mem;
};

struct OracleResult {
    std::vector<OracleLayer> layers;
    std::int64_t npu_total = 0;
    std::int64_t mem_total = 0;
    bool compatible = false;
};

inline std::int64_t round_up_div(std::int64_t a, std::int64_t b) { return a / b + (a % b != 0 ? 1 : 0); }

inline OracleResult oracle_analyze(const nlohmann::json& manifest, std::int64_t n_npu, std::int64_t b_net,
                                   std::int64_t b_dat) {
    OracleResult r;
    for (const auto& l : manifest.at("layers")) {
        const std::int64_t par_bits = (l.at("n_weights").get<std::int64_t>() + l.value("n_bias", std::int64_t{0})) *
                                      l.at("bit_par").get<std::int64_t>();
        const auto& o = l.at("out_shape");
        const std::int64_t dat_bits =
            o[0].get<std::int64_t>() * o[1].get<std::int64_t>() * o[2].get<std::int64_t>() * l.at("bit_dat").get<std::int64_t>();
        OracleLayer ol{};
        ol.m_net = round_up_div(par_bits, 8);
        ol.m_dat = round_up_div(dat_bits, 8);
        ol.npu_net = round_up_div(ol.m_net, b_net);
        ol.npu_dat = round_up_div(ol.m_dat, b_dat);
        ol.npu_mem = ol.npu_net > ol.npu_dat ? ol.npu_net : ol.npu_dat;
        r.npu_total += ol.npu_mem;
        r.mem_total += ol.m_net + ol.m_dat;
        r.layers.push_back(ol);
    }
    r.compatible = r.npu_total <= n_npu && r.mem_total <= n_npu * (b_net + b_dat);
    return r;
}

}  // namespace npu::testing
