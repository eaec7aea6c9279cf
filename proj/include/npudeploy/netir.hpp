#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

namespace npu {

using Count = std::int64_t;

enum class LayerKind { Conv, DepthwiseConv, PointwiseConv, FullyConnected, InputConv };
enum class Padding { Same, Valid };

std::string_view to_string(LayerKind kind);
std::string_view to_string(Padding padding);
LayerKind parse_layer_kind(std::string_view text);
Padding parse_padding(std::string_view text);

/// Feature-map dimensions in (height, width, channels) order.
struct Shape3 {
    Count h = 1;
    Count w = 1;
    Count c = 1;

    Count volume() const { return h * w * c; }
    /// Row-major (h, w, c) flat index.
    Count index(Count y, Count x, Count ch) const { return (y * w + x) * c + ch; }
    bool operator==(const Shape3&) const = default;
};

struct Kernel {
    Count h = 1;
    Count w = 1;
    bool operator==(const Kernel&) const = default;
};

/// Class bookkeeping for a learnable classifier head stored as the last layer.
/// Neuron `i` belongs to class slot `i / neurons_per_class`.
struct HeadMeta {
    Count n_old_classes = 0;
    Count n_new_slots = 0;
    Count neurons_per_class = 1;
    Count w_max = 0;
    std::vector<Count> neuron_class;        // -1 = unassigned
    std::vector<std::string> class_names;   // one per class slot, may be empty strings

    Count total_neurons() const { return (n_old_classes + n_new_slots) * neurons_per_class; }
    bool operator==(const HeadMeta&) const = default;
};

struct LayerSpec {
    std::string name;
    LayerKind kind = LayerKind::FullyConnected;
    Shape3 in_shape;
    Shape3 out_shape;
    std::optional<Kernel> kernel;
    std::optional<Count> stride;
    Padding padding = Padding::Same;
    Count n_weights = 0;
    Count n_bias = 0;
    int bit_par = 8;
    int bit_dat = 8;
    std::optional<std::int64_t> u_thr;   // firing threshold from conversion metadata
    std::optional<HeadMeta> head;

    Count stride_or_one() const { return stride.value_or(1); }
    bool operator==(const LayerSpec&) const = default;
};

/// Quantized integer parameters of one layer.
/// Weights are row-major (out-channel, in-channel, kh, kw); FC uses (out, in).
struct LayerWeights {
    std::vector<std::int32_t> weights;
    std::vector<std::int32_t> bias;
    bool operator==(const LayerWeights&) const = default;
};

struct NetworkModel {
    std::string name;
    std::optional<double> alpha;
    std::optional<std::pair<Count, Count>> input_resolution;
    std::vector<LayerSpec> layers;
    std::optional<Count> total_param_bytes;   // declared; checked against the layer sum
    std::optional<double> accuracy;           // declared metadata used for ranking
    std::optional<std::string> weight_blob;   // path relative to the manifest
    std::optional<std::vector<LayerWeights>> weights;

    bool has_weights() const { return weights.has_value(); }
    bool operator==(const NetworkModel&) const = default;
};

// Parameter accounting ------------------------------------------------------

/// M_net: ceil((N_w + N_b) * bit_par / 8) bytes.
Count layer_param_bytes(const LayerSpec& layer);
/// M_dat: ceil(H * W * C * bit_dat / 8) bytes over the layer output.
Count layer_activation_bytes(const LayerSpec& layer);
Count model_param_bytes(const NetworkModel& model);

/// Weight count implied by the layer geometry.
Count expected_weight_count(const LayerSpec& layer);
/// Output channels (FC: flattened output size), i.e. the legal non-zero bias count.
Count output_channels(const LayerSpec& layer);
/// Output spatial extent along one axis for the declared padding.
Count conv_output_extent(Count in, Count kernel, Count stride, Padding padding);
/// Leading (top/left) zero padding used by a conv along one axis.
Count conv_pad_before(Count in, Count out, Count kernel, Count stride, Padding padding);

/// Inclusive signed range representable by `bits` (1-bit weights are {0,1}).
std::pair<std::int32_t, std::int32_t> weight_range(int bits);

// Validation and I/O -------------------------------------------------------

/// Throws ValidationError describing the first violated invariant.
void validate_layer(const LayerSpec& layer, std::size_t index);
void validate_model(const NetworkModel& model);

NetworkModel model_from_json(const nlohmann::json& doc, const std::filesystem::path& base_dir = {});
nlohmann::json model_to_json(const NetworkModel& model);

/// Reads a manifest (and its weight blob when referenced) and validates it.
NetworkModel load_model(const std::filesystem::path& path);
/// Writes the manifest; weights go to `weight_blob` (default: <stem>.bin next to it).
void save_model(const NetworkModel& model, const std::filesystem::path& path);

std::vector<LayerWeights> read_weight_blob(const std::filesystem::path& path,
                                           const std::vector<LayerSpec>& layers);
void write_weight_blob(const std::filesystem::path& path, const std::vector<LayerSpec>& layers,
                       const std::vector<LayerWeights>& weights);
std::vector<std::uint8_t> pack_layer(const LayerSpec& layer, const LayerWeights& weights);
LayerWeights unpack_layer(const LayerSpec& layer, const std::uint8_t* data, std::size_t size);

}  // namespace npu
