#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <vector>

#include <json.hpp>

#include "npudeploy/mapper.hpp"
#include "npudeploy/netir.hpp"

namespace npu {

// Spike representation --------------------------------------------------------

struct SpikeEvent {
    std::int32_t h = 0;
    std::int32_t w = 0;
    std::int32_t c = 0;
    std::int32_t magnitude = 1;   // >= 1; zero events are never stored
    bool operator==(const SpikeEvent&) const = default;
};

struct SpikeFrame {
    Shape3 shape;
    std::int64_t t = 0;
    std::vector<SpikeEvent> events;
    bool operator==(const SpikeFrame&) const = default;
};

// Dense input tensors ---------------------------------------------------------

enum class InputDType : std::uint16_t { U8 = 1, U16 = 2 };

/// Dense non-negative integer tensor in (h, w, c) row-major order.
struct InputTensor {
    Shape3 shape;
    InputDType dtype = InputDType::U8;
    std::vector<std::int32_t> values;

    std::int32_t max_value() const { return dtype == InputDType::U8 ? 255 : 65535; }
    bool operator==(const InputTensor&) const = default;
};

/// File layout: "NPUT", u32 H, u32 W, u16 C, u16 dtype, then little-endian values.
InputTensor read_input_tensor(const std::filesystem::path& path);
void write_input_tensor(const InputTensor& tensor, const std::filesystem::path& path);

enum class EncodeMode { Threshold, Rate };

EncodeMode parse_encode_mode(const std::string& text);

struct EncodeOptions {
    std::optional<std::int32_t> v_max;   // defaults to the dtype maximum
    std::int32_t threshold = 1;          // threshold mode: minimum value that spikes
    int magnitude_bits = 8;              // threshold mode: graded spike resolution
};

/// Converts a dense tensor into `timesteps` frames.
/// Threshold: frame 0 carries every value >= threshold with magnitude round(v * (2^bits-1) / v_max).
/// Rate: value v emits round(v / v_max * T) unit events at steps floor(i * T / n).
std::vector<SpikeFrame> encode(const InputTensor& input, std::int64_t timesteps, EncodeMode mode,
                               const EncodeOptions& options = {});

// LIF dynamics ---------------------------------------------------------------

/// Per-step decay factor in Q16 fixed point (65536 == 1.0).
struct Leak {
    static constexpr std::uint32_t kOne = 1u << 16;
    std::uint32_t q16 = kOne;

    static Leak from_ratio(double ratio);   // rounds to nearest 1/65536, clamps to [0, 1]
    double ratio() const { return static_cast<double>(q16) / kOne; }
    bool operator==(const Leak&) const = default;
};

struct NeuronState {
    std::int64_t u_mem = 0;
    std::int64_t u_thr = 1;
    std::int64_t u_rst = 0;
    Leak leak;
    bool operator==(const NeuronState&) const = default;
};

struct StepResult {
    NeuronState state;
    bool fired = false;
};

/// u' = u_rst + floor(leak * (u - u_rst)) + input; fires and hard-resets to u_rst when u' >= u_thr.
StepResult step_neuron(NeuronState state, std::int64_t input_current);

/// Membrane update used by the simulator and step_neuron.
inline std::int64_t integrate(std::int64_t u, std::int64_t u_rst, Leak leak, std::int64_t input) {
    return u_rst + (((u - u_rst) * static_cast<std::int64_t>(leak.q16)) >> 16) + input;
}

// Execution ------------------------------------------------------------------

struct RunParams {
    std::int64_t timesteps = 1;
    std::int64_t u_rst = 0;
    Leak leak;
    std::vector<std::optional<std::int64_t>> u_thr;   // per-layer override, may be shorter than L
    int workers = 1;
    std::optional<std::size_t> capture_layer;          // record per-neuron spike counts of this layer
};

struct RunStats {
    std::int64_t synaptic_events = 0;
    std::int64_t neuron_updates = 0;
    std::vector<std::int64_t> output_spikes;   // per class
    std::int64_t timesteps = 0;
    std::size_t predicted_class = 0;
    std::vector<std::int64_t> layer_spikes;     // total spikes emitted per layer
    std::vector<std::int64_t> captured_counts;  // per neuron of capture_layer

    bool operator==(const RunStats&) const = default;
};

/// Threshold used when neither params nor the manifest provide one:
/// max over output channels of the positive fan-in weight sum (plus positive bias), halved, at least 1.
std::int64_t default_threshold(const LayerSpec& layer, const LayerWeights& weights);

/// Effective per-layer thresholds after applying overrides.
std::vector<std::int64_t> resolve_thresholds(const NetworkModel& model, const RunParams& params);

/// Per-neuron thresholds of a learnable head, ceil(popcount(row) / 2) at least 1. Empty when the
/// last layer is not a head or an explicit threshold overrides it.
std::vector<std::int64_t> head_thresholds(const NetworkModel& model, const RunParams& params);

/// Layer-sequential event-driven execution of a mapped network.
RunStats run(const NetworkModel& model, const AllocationPlan& plan, const std::vector<SpikeFrame>& frames,
             const RunParams& params);

/// argmax with ties to the lowest index; 0 for an empty vector.
std::size_t argmax_lowest(const std::vector<std::int64_t>& values);

nlohmann::json stats_to_json(const RunStats& stats);
RunStats stats_from_json(const nlohmann::json& doc);
RunStats load_stats(const std::filesystem::path& path);

}  // namespace npu
