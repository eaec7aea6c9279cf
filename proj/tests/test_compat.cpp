#include <doctest.h>

#include "npudeploy/compat.hpp"
#include "npudeploy/errors.hpp"
#include "oracles/analytical_oracle.hpp"
#include "oracles/random_models.hpp"
#include "test_util.hpp"

using namespace npu;

namespace {

testing::GenLimits big_limits() {
    testing::GenLimits lim;
    lim.max_layers = 10;
    lim.max_hw = 64;
    lim.max_c = 256;
    lim.max_volume = 1 << 20;
    lim.max_fc_out = 4096;
    lim.with_weights = false;
    return lim;
}

LayerSpec unit_layer(const std::string& name) {
    LayerSpec l;
    l.name = name;
    l.kind = LayerKind::PointwiseConv;
    l.in_shape = {1, 1, 1};
    l.out_shape = {1, 1, 1};
    l.n_weights = 0;   // analysis-only degenerate layer
    return l;
}

}  // namespace

TEST_CASE("layer_npu_cost: ceil division per buffer") {
    const auto cfg = default_akida();
    auto c = layer_npu_cost_from_bytes(40960, 61440, cfg);
    CHECK(c.npu_net == 1);
    CHECK(c.npu_dat == 1);
    CHECK(c.npu_mem == 1);
    c = layer_npu_cost_from_bytes(40961, 100, cfg);
    CHECK(c.npu_net == 2);
    CHECK(c.npu_dat == 1);
    CHECK(c.npu_mem == 2);
    c = layer_npu_cost_from_bytes(100, 184320, cfg);
    CHECK(c.npu_net == 1);
    CHECK(c.npu_dat == 3);
    CHECK(c.npu_mem == 3);
    c = layer_npu_cost_from_bytes(0, 0, cfg);
    CHECK(c.npu_mem == 0);
}

TEST_CASE("analyze: unit-activation layers each cost one NPU") {
    NetworkModel m;
    m.name = "degenerate";
    for (int i = 0; i < 7; ++i) m.layers.push_back(unit_layer("u" + std::to_string(i)));
    const auto r = analyze(m, default_akida());
    CHECK(r.npu_total == 7);
    CHECK(r.compatible);
}

TEST_CASE("analyze: four-layer fixture equals the brute-force oracle") {
    const auto path = testing::fixture("four_layer.json");
    const auto model = load_model(path);
    const auto cfg = default_akida();
    const auto r = analyze(model, cfg);
    std::ifstream in(path);
    const auto o = testing::oracle_analyze(nlohmann::json::parse(in), cfg.n_npu, cfg.buf_net_bytes, cfg.buf_dat_bytes);
    REQUIRE(r.per_layer.size() == o.layers.size());
    for (std::size_t i = 0; i < o.layers.size(); ++i) {
        CHECK(r.per_layer[i].m_net == o.layers[i].m_net);
        CHECK(r.per_layer[i].m_dat == o.layers[i].m_dat);
        CHECK(r.per_layer[i].npu_mem == o.layers[i].npu_mem);
    }
    CHECK(r.npu_total == o.npu_total);
    CHECK(r.npu_total == 14);   // frozen from the oracle
}

TEST_CASE("analyze matches the oracle on randomized manifests") {
    testing::ModelGen gen(2024);
    const auto cfg = default_akida();
    for (int trial = 0; trial < 1000; ++trial) {
        const auto m = gen.model(big_limits());
        const auto doc = model_to_json(m);
        const auto parsed = model_from_json(doc);
        const auto r = analyze(parsed, cfg);
        const auto o = testing::oracle_analyze(doc, cfg.n_npu, cfg.buf_net_bytes, cfg.buf_dat_bytes);
        CHECK(r.npu_total == o.npu_total);
        CHECK(r.mem_total == o.mem_total);
        CHECK(r.compatible == o.compatible);
        for (const auto& c : r.per_layer) CHECK(c.npu_mem == std::max(c.npu_net, c.npu_dat));
    }
}

TEST_CASE("npu_total is monotone in layer sizes and layer count") {
    testing::ModelGen gen(99);
    const auto cfg = default_akida();
    for (int trial = 0; trial < 300; ++trial) {
        auto m = gen.model(big_limits());
        const auto base = analyze(m, cfg).npu_total;
        auto& l = m.layers[static_cast<std::size_t>(gen.uniform(0, static_cast<Count>(m.layers.size()) - 1))];
        switch (trial % 7) {
        case 0: l.n_weights += gen.uniform(1, 100000); break;
        case 1: l.n_bias += gen.uniform(1, 1000); break;
        case 2: l.out_shape.h += gen.uniform(1, 8); break;
        case 3: l.out_shape.w += gen.uniform(1, 8); break;
        case 4: l.out_shape.c += gen.uniform(1, 64); break;
        case 5: l.bit_par = std::min(8, l.bit_par * 2); break;
        default: l.bit_dat = std::min(8, l.bit_dat * 2); break;
        }
        CHECK(analyze(m, cfg).npu_total >= base);

        auto extended = m;
        extended.layers.push_back(unit_layer("extra"));
        CHECK(analyze(extended, cfg).npu_total >= analyze(m, cfg).npu_total + 1);
    }
}

TEST_CASE("compatibility is monotone in chip budgets") {
    testing::ModelGen gen(5);
    auto small = default_akida();
    small.n_npu = 8;
    for (int trial = 0; trial < 200; ++trial) {
        const auto m = gen.model(big_limits());
        auto large = small;
        large.n_npu = small.n_npu * gen.uniform(1, 20);
        large.buf_net_bytes += gen.uniform(0, 4096);
        large.buf_dat_bytes += gen.uniform(0, 4096);
        if (analyze(m, small).compatible) CHECK(analyze(m, large).compatible);
    }
}

TEST_CASE("full-scale fixtures against the default chip") {
    const auto cfg = default_akida();
    const auto yolo = analyze(load_model(testing::fixture("yolo_like_71.json")), cfg);
    CHECK(yolo.npu_total == 71);
    CHECK(yolo.compatible);
    const auto dscnn = analyze(load_model(testing::fixture("dscnn_like_5.json")), cfg);
    CHECK(dscnn.npu_total == 5);
    CHECK(dscnn.compatible);
    const auto over = analyze(load_model(testing::fixture("over_90npu.json")), cfg);
    CHECK(over.npu_total == 90);
    CHECK_FALSE(over.compatible);
}

TEST_CASE("select_networks") {
    const auto cfg = default_akida();
    const auto yolo = load_model(testing::fixture("yolo_like_71.json"));
    const auto dscnn = load_model(testing::fixture("dscnn_like_5.json"));
    const auto over = load_model(testing::fixture("over_90npu.json"));

    SUBCASE("both reference networks are retained") {
        const auto sel = select_networks({yolo, dscnn}, cfg);
        CHECK(sel.ranked.size() == 2);
        CHECK(sel.rejected.empty());
    }
    SUBCASE("a single 90-NPU candidate leaves nothing") {
        CHECK_THROWS_AS(select_networks({over}, cfg), EmptySelection);
    }
    SUBCASE("incompatible candidates are reported with a reason") {
        const auto sel = select_networks({over, dscnn}, cfg);
        REQUIRE(sel.ranked.size() == 1);
        REQUIRE(sel.rejected.size() == 1);
        CHECK(sel.rejected[0].name == over.name);
        CHECK(sel.rejected[0].reason.find("90") != std::string::npos);
    }
    SUBCASE("accuracy ranks first, then input resolution") {
        auto a = dscnn;
        a.name = "a";
        a.accuracy = 0.70;
        auto b = dscnn;
        b.name = "b";
        b.accuracy = 0.80;
        auto sel = select_networks({a, b}, cfg);
        CHECK(sel.ranked[0].model.name == "b");
        a.accuracy = 0.80;
        a.input_resolution = std::pair<Count, Count>{224, 224};
        b.input_resolution = std::pair<Count, Count>{160, 160};
        sel = select_networks({b, a}, cfg);
        CHECK(sel.ranked[0].model.name == "a");
    }
    SUBCASE("without accuracy the smaller network wins") {
        auto sel = select_networks({yolo, dscnn}, cfg, RankingKey::NpuTotal);
        CHECK(sel.ranked[0].report.npu_total == 5);
        CHECK_THROWS_AS(select_networks({}, cfg), EmptySelection);
    }
}
