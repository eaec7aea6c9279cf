#include <doctest.h>

#include <set>

#include "npudeploy/errors.hpp"
#include "npudeploy/mapper.hpp"
#include "oracles/random_models.hpp"
#include "test_util.hpp"

using namespace npu;

namespace {

NetworkModel unit_chain(int n) {
    NetworkModel m;
    m.name = "chain" + std::to_string(n);
    for (int i = 0; i < n; ++i) {
        LayerSpec l;
        l.name = "u" + std::to_string(i);
        l.kind = LayerKind::PointwiseConv;
        l.in_shape = {1, 1, 1};
        l.out_shape = {1, 1, 1};
        l.n_weights = 1;
        m.layers.push_back(l);
    }
    return m;
}

testing::GenLimits analysis_limits() {
    testing::GenLimits lim;
    lim.max_hw = 48;
    lim.max_c = 128;
    lim.max_volume = 1 << 18;
    lim.max_fc_out = 2048;
    lim.with_weights = false;
    return lim;
}

}  // namespace

TEST_CASE("sequential policy executes on one NPU") {
    const auto cfg = default_akida();
    const auto m = load_model(testing::fixture("conv3.json"));
    for (const auto& l : m.layers) CHECK(min_exe_npus(l, cfg) == 1);
    // 16*16*16 neurons over 8 NPEs
    const Count per_pass = cfg.npes_per_npu * cfg.neurons_per_npe_pass;
    CHECK(sequential_policy().passes(m.layers[0], cfg, 1) == (4096 + per_pass - 1) / per_pass);
}

TEST_CASE("utilization examples") {
    const auto cfg = default_akida();
    CHECK(map(load_model(testing::fixture("yolo_like_71.json")), cfg).utilization.to_string() == "88.75");
    CHECK(map(load_model(testing::fixture("dscnn_like_5.json")), cfg).utilization.to_string() == "6.25");
    CHECK(map(unit_chain(80), cfg).utilization.to_string() == "100.00");
    CHECK(Utilization{0, 80}.to_string() == "0.00");
    CHECK(Utilization{1, 3}.to_string() == "33.33");
    CHECK(Utilization{2, 3}.to_string() == "66.67");
    CHECK(Utilization{71, 80}.percent() == doctest::Approx(88.75));
    CHECK_THROWS_AS(map(unit_chain(81), cfg), MappingError);
    CHECK_THROWS_AS(map(load_model(testing::fixture("over_90npu.json")), cfg), MappingError);
}

TEST_CASE("plans are disjoint, bounded and match the analysis") {
    testing::ModelGen gen(31);
    const auto cfg = default_akida();
    int mapped = 0;
    for (int trial = 0; trial < 400; ++trial) {
        const auto m = gen.model(analysis_limits());
        const auto report = analyze(m, cfg);
        if (!report.compatible) {
            CHECK_THROWS_AS(map(m, cfg), MappingError);
            continue;
        }
        ++mapped;
        const auto plan = map(m, cfg);
        CHECK_NOTHROW(check_plan(plan));
        std::set<Count> seen;
        Count cost = 0;
        REQUIRE(plan.layers.size() == m.layers.size());
        for (std::size_t i = 0; i < plan.layers.size(); ++i) {
            const auto& la = plan.layers[i];
            CHECK(la.npu_mem == report.per_layer[i].npu_mem);
            CHECK(la.npu_alloc == std::max(la.npu_mem, la.npu_exe));
            CHECK(static_cast<Count>(la.npu_ids.size()) == la.npu_alloc);
            for (const Count id : la.npu_ids) {
                CHECK(id >= 0);
                CHECK(id < cfg.n_npu);
                CHECK(seen.insert(id).second);
            }
            cost += la.npu_alloc;
        }
        CHECK(plan.cost_c == cost);
        CHECK(plan.cost_c <= cfg.n_npu);
        CHECK(plan.utilization.percent() <= 100.0);
        // with one execution NPU per layer the cost equals N_tot whenever every layer has memory
        bool all_nonzero = true;
        for (const auto& c : report.per_layer) all_nonzero = all_nonzero && c.npu_mem > 0;
        if (all_nonzero) CHECK(plan.cost_c == report.npu_total);
        CHECK(map(m, cfg) == plan);
    }
    CHECK(mapped > 100);
}

TEST_CASE("plan JSON round-trip and mismatch detection") {
    testing::TempDir dir;
    const auto cfg = default_akida();
    const auto m = load_model(testing::fixture("yolo_like_71.json"));
    const auto plan = map(m, cfg);
    const auto doc = plan_to_json(plan);
    CHECK(plan_from_json(doc, cfg) == plan);
    testing::write_text(dir / "plan.json", doc.dump(2));
    CHECK(load_plan(dir / "plan.json", cfg) == plan);
    CHECK_NOTHROW(check_plan_matches(plan, m));
    CHECK_THROWS_AS(check_plan_matches(plan, load_model(testing::fixture("dscnn_like_5.json"))), ValidationError);

    auto other = cfg;
    other.n_npu = 40;
    CHECK_THROWS_AS(plan_from_json(doc, other), ValidationError);
    auto broken = doc;
    broken["layers"][1]["npu_ids"] = broken["layers"][0]["npu_ids"];
    CHECK_THROWS_AS(plan_from_json(broken, cfg), ValidationError);
}
