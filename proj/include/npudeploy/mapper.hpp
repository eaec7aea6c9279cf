#pragma once

#include <memory>
#include <string>
#include <vector>

#include <json.hpp>

#include "npudeploy/compat.hpp"
#include "npudeploy/hwmodel.hpp"
#include "npudeploy/netir.hpp"

namespace npu {

struct LayerAllocation {
    std::size_t layer_index = 0;
    std::string layer_name;
    Count npu_mem = 0;
    Count npu_exe = 0;
    Count npu_alloc = 0;   // max(npu_mem, npu_exe)
    std::vector<Count> npu_ids;
    Count passes = 1;

    bool operator==(const LayerAllocation&) const = default;
};

/// Utilization kept as the exact ratio cost / n_npu.
struct Utilization {
    Count cost = 0;
    Count n_npu = 1;

    double percent() const { return static_cast<double>(cost) * 100.0 / static_cast<double>(n_npu); }
    /// Percent rounded half-up to hundredths, computed in integers.
    Count hundredths() const;
    std::string to_string() const;   // e.g. "88.75"
    bool operator==(const Utilization&) const = default;
};

struct AllocationPlan {
    std::string model_name;
    std::vector<LayerAllocation> layers;
    Count cost_c = 0;
    Utilization utilization;
    ProcessorConfig chip;

    bool operator==(const AllocationPlan&) const = default;
};

/// Decides how many NPUs execute a layer and how many sequential passes that takes.
class ExecutionPolicy {
public:
    virtual ~ExecutionPolicy() = default;
    virtual Count exe_npus(const LayerSpec& layer, const ProcessorConfig& cfg) const = 0;
    virtual Count passes(const LayerSpec& layer, const ProcessorConfig& cfg, Count npu_exe) const = 0;
};

/// One execution NPU per layer; passes = ceil(neurons / (npu_exe * npes * neurons_per_npe_pass)).
class SequentialPolicy final : public ExecutionPolicy {
public:
    Count exe_npus(const LayerSpec& layer, const ProcessorConfig& cfg) const override;
    Count passes(const LayerSpec& layer, const ProcessorConfig& cfg, Count npu_exe) const override;
};

const ExecutionPolicy& sequential_policy();

Count min_exe_npus(const LayerSpec& layer, const ProcessorConfig& cfg);

/// Places every layer on a disjoint contiguous NPU range, in layer order.
/// Throws MappingError when the model does not fit.
AllocationPlan map(const NetworkModel& model, const ProcessorConfig& cfg,
                   const ExecutionPolicy& policy = sequential_policy());

Utilization utilization(const AllocationPlan& plan);

/// Checks plan invariants (disjoint ids, totals, bounds); throws InternalError.
void check_plan(const AllocationPlan& plan);
/// Checks that `plan` was produced for `model`; throws ValidationError.
void check_plan_matches(const AllocationPlan& plan, const NetworkModel& model);

nlohmann::json plan_to_json(const AllocationPlan& plan);
AllocationPlan plan_from_json(const nlohmann::json& doc, const ProcessorConfig& chip);
AllocationPlan load_plan(const std::filesystem::path& path, const ProcessorConfig& chip);

}  // namespace npu
