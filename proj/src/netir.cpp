#include "npudeploy/netir.hpp"

#include <fstream>
#include <sstream>

#include "npudeploy/errors.hpp"

namespace npu {

using nlohmann::json;

namespace {

Count ceil_div(Count num, Count den) { return (num + den - 1) / den; }

bool valid_bits(int bits) { return bits == 1 || bits == 2 || bits == 4 || bits == 8; }

std::string layer_tag(const LayerSpec& layer, std::size_t index) {
    std::ostringstream os;
    os << "layer " << index << " (" << layer.name << ")";
    return os.str();
}

json shape_json(const Shape3& s) { return json::array({s.h, s.w, s.c}); }

Shape3 shape_from(const json& j, const char* field) {
    if (!j.is_array() || j.size() != 3) {
        throw ParseError(std::string(field) + " must be an array [H, W, C]");
    }
    return Shape3{j[0].get<Count>(), j[1].get<Count>(), j[2].get<Count>()};
}

}  // namespace

std::string_view to_string(LayerKind kind) {
    switch (kind) {
    case LayerKind::Conv: return "conv";
    case LayerKind::DepthwiseConv: return "depthwise_conv";
    case LayerKind::PointwiseConv: return "pointwise_conv";
    case LayerKind::FullyConnected: return "fully_connected";
    case LayerKind::InputConv: return "input_conv";
    }
    return "?";
}

std::string_view to_string(Padding padding) { return padding == Padding::Same ? "same" : "valid"; }

LayerKind parse_layer_kind(std::string_view text) {
    for (auto kind : {LayerKind::Conv, LayerKind::DepthwiseConv, LayerKind::PointwiseConv,
                      LayerKind::FullyConnected, LayerKind::InputConv}) {
        if (to_string(kind) == text) return kind;
    }
    throw ParseError("unknown layer kind '" + std::string(text) + "'");
}

Padding parse_padding(std::string_view text) {
    if (text == "same") return Padding::Same;
    if (text == "valid") return Padding::Valid;
    throw ParseError("unknown padding '" + std::string(text) + "'");
}

Count layer_param_bytes(const LayerSpec& layer) {
    return ceil_div((layer.n_weights + layer.n_bias) * layer.bit_par, 8);
}

Count layer_activation_bytes(const LayerSpec& layer) {
    return ceil_div(layer.out_shape.volume() * layer.bit_dat, 8);
}

Count model_param_bytes(const NetworkModel& model) {
    Count total = 0;
    for (const auto& layer : model.layers) total += layer_param_bytes(layer);
    return total;
}

Count expected_weight_count(const LayerSpec& layer) {
    const auto& in = layer.in_shape;
    const auto& out = layer.out_shape;
    switch (layer.kind) {
    case LayerKind::FullyConnected:
        return in.volume() * out.volume();
    case LayerKind::Conv:
    case LayerKind::InputConv: {
        const Kernel k = layer.kernel.value_or(Kernel{});
        return k.h * k.w * in.c * out.c;
    }
    case LayerKind::DepthwiseConv: {
        const Kernel k = layer.kernel.value_or(Kernel{});
        return k.h * k.w * in.c;
    }
    case LayerKind::PointwiseConv:
        return in.c * out.c;
    }
    return 0;
}

Count output_channels(const LayerSpec& layer) {
    return layer.kind == LayerKind::FullyConnected ? layer.out_shape.volume() : layer.out_shape.c;
}

Count conv_output_extent(Count in, Count kernel, Count stride, Padding padding) {
    if (padding == Padding::Same) return ceil_div(in, stride);
    if (in < kernel) return 0;
    return (in - kernel) / stride + 1;
}

Count conv_pad_before(Count in, Count out, Count kernel, Count stride, Padding padding) {
    if (padding == Padding::Valid) return 0;
    const Count total = std::max<Count>((out - 1) * stride + kernel - in, 0);
    return total / 2;
}

std::pair<std::int32_t, std::int32_t> weight_range(int bits) {
    if (bits == 1) return {0, 1};
    return {-(1 << (bits - 1)), (1 << (bits - 1)) - 1};
}

void validate_layer(const LayerSpec& layer, std::size_t index) {
    const auto tag = layer_tag(layer, index);
    auto fail = [&](const std::string& msg) { throw ValidationError(tag + ": " + msg); };

    if (layer.name.empty()) fail("empty name");
    for (const auto* s : {&layer.in_shape, &layer.out_shape}) {
        if (s->h <= 0 || s->w <= 0 || s->c <= 0) fail("shape dimensions must be positive");
    }
    if (!valid_bits(layer.bit_par)) fail("bit_par must be 1, 2, 4 or 8");
    if (!valid_bits(layer.bit_dat)) fail("bit_dat must be 1, 2, 4 or 8");
    if (layer.n_weights < 0 || layer.n_bias < 0) fail("negative parameter count");
    if (layer.stride && *layer.stride <= 0) fail("stride must be positive");

    const bool spatial = layer.kind != LayerKind::FullyConnected;
    if (!spatial && layer.kernel) fail("fully_connected layers take no kernel");
    if ((layer.kind == LayerKind::Conv || layer.kind == LayerKind::InputConv ||
         layer.kind == LayerKind::DepthwiseConv) && !layer.kernel) {
        fail("kernel required");
    }
    if (layer.kernel && (layer.kernel->h <= 0 || layer.kernel->w <= 0)) fail("kernel must be positive");
    if (layer.kind == LayerKind::PointwiseConv && layer.kernel && !(layer.kernel->h == 1 && layer.kernel->w == 1)) {
        fail("pointwise_conv kernel must be 1x1");
    }
    if (layer.kind == LayerKind::DepthwiseConv && layer.out_shape.c != layer.in_shape.c) {
        fail("depthwise_conv must preserve channel count");
    }

    if (spatial) {
        const Kernel k = layer.kernel.value_or(Kernel{});
        const Count s = layer.stride_or_one();
        const Count oh = conv_output_extent(layer.in_shape.h, k.h, s, layer.padding);
        const Count ow = conv_output_extent(layer.in_shape.w, k.w, s, layer.padding);
        if (oh != layer.out_shape.h || ow != layer.out_shape.w) {
            std::ostringstream os;
            os << "out_shape spatial " << layer.out_shape.h << "x" << layer.out_shape.w
               << " inconsistent with kernel/stride/padding (expected " << oh << "x" << ow << ")";
            fail(os.str());
        }
    }

    const Count expected = expected_weight_count(layer);
    if (layer.n_weights != expected) {
        fail("n_weights " + std::to_string(layer.n_weights) + " != expected " + std::to_string(expected));
    }
    if (layer.n_bias != 0 && layer.n_bias != output_channels(layer)) {
        fail("n_bias must be 0 or the output channel count " + std::to_string(output_channels(layer)));
    }

    if (layer.head) {
        const auto& h = *layer.head;
        if (layer.kind != LayerKind::FullyConnected || layer.bit_par != 1) fail("head layer must be 1-bit fully_connected");
        if (h.neurons_per_class < 1 || h.n_old_classes < 0 || h.n_new_slots < 0) fail("bad head dimensions");
        if (h.total_neurons() != layer.out_shape.volume()) fail("head neuron count does not match out_shape");
        if (static_cast<Count>(h.neuron_class.size()) != h.total_neurons()) fail("head neuron_class length mismatch");
        const Count n_classes = h.n_old_classes + h.n_new_slots;
        for (std::size_t i = 0; i < h.neuron_class.size(); ++i) {
            const Count c = h.neuron_class[i];
            if (c != -1 && c != static_cast<Count>(i) / h.neurons_per_class) fail("head neuron assigned outside its class slot");
        }
        if (!h.class_names.empty() && static_cast<Count>(h.class_names.size()) != n_classes) {
            fail("head class_names length mismatch");
        }
    }
}

void validate_model(const NetworkModel& model) {
    if (model.name.empty()) throw ValidationError("model name is empty");
    if (model.layers.empty()) throw ValidationError("model has no layers");
    if (model.alpha && !(*model.alpha > 0.0 && *model.alpha <= 1.0)) {
        throw ValidationError("alpha must lie in (0, 1]");
    }
    for (std::size_t i = 0; i < model.layers.size(); ++i) {
        validate_layer(model.layers[i], i);
        if (i > 0 && model.layers[i - 1].out_shape != model.layers[i].in_shape) {
            throw ValidationError(layer_tag(model.layers[i], i) + ": in_shape does not chain from previous out_shape");
        }
    }
    if (model.total_param_bytes && *model.total_param_bytes != model_param_bytes(model)) {
        throw ValidationError("declared total_param_bytes " + std::to_string(*model.total_param_bytes) +
                              " != layer sum " + std::to_string(model_param_bytes(model)));
    }
    if (model.weights) {
        if (model.weights->size() != model.layers.size()) throw ValidationError("weight tensor count != layer count");
        for (std::size_t i = 0; i < model.layers.size(); ++i) {
            const auto& layer = model.layers[i];
            const auto& w = (*model.weights)[i];
            if (static_cast<Count>(w.weights.size()) != layer.n_weights ||
                static_cast<Count>(w.bias.size()) != layer.n_bias) {
                throw ValidationError(layer_tag(layer, i) + ": weight tensor size != n_weights + n_bias");
            }
            const auto [lo, hi] = weight_range(layer.bit_par);
            for (const auto* v : {&w.weights, &w.bias}) {
                for (auto x : *v) {
                    if (x < lo || x > hi) throw ValidationError(layer_tag(layer, i) + ": value outside bit_par range");
                }
            }
        }
    }
}

// JSON ---------------------------------------------------------------------

namespace {

LayerSpec layer_from_json(const json& j) {
    LayerSpec l;
    l.name = j.at("name").get<std::string>();
    l.kind = parse_layer_kind(j.at("kind").get<std::string>());
    l.in_shape = shape_from(j.at("in_shape"), "in_shape");
    l.out_shape = shape_from(j.at("out_shape"), "out_shape");
    if (j.contains("kernel") && !j["kernel"].is_null()) {
        const auto& k = j["kernel"];
        if (!k.is_array() || k.size() != 2) throw ParseError("kernel must be [kh, kw]");
        l.kernel = Kernel{k[0].get<Count>(), k[1].get<Count>()};
    }
    if (j.contains("stride") && !j["stride"].is_null()) l.stride = j["stride"].get<Count>();
    if (j.contains("padding")) {
        l.padding = parse_padding(j["padding"].get<std::string>());
    }
    l.n_weights = j.at("n_weights").get<Count>();
    l.n_bias = j.value("n_bias", Count{0});
    l.bit_par = j.at("bit_par").get<int>();
    l.bit_dat = j.at("bit_dat").get<int>();
    if (j.contains("u_thr") && !j["u_thr"].is_null()) l.u_thr = j["u_thr"].get<std::int64_t>();
    if (j.contains("head") && !j["head"].is_null()) {
        const auto& h = j["head"];
        HeadMeta m;
        m.n_old_classes = h.at("n_old_classes").get<Count>();
        m.n_new_slots = h.at("n_new_slots").get<Count>();
        m.neurons_per_class = h.at("neurons_per_class").get<Count>();
        m.w_max = h.at("w_max").get<Count>();
        m.neuron_class = h.at("neuron_class").get<std::vector<Count>>();
        m.class_names = h.value("class_names", std::vector<std::string>{});
        l.head = std::move(m);
    }
    return l;
}

json layer_to_json(const LayerSpec& l) {
    json j;
    j["name"] = l.name;
    j["kind"] = to_string(l.kind);
    j["in_shape"] = shape_json(l.in_shape);
    j["out_shape"] = shape_json(l.out_shape);
    j["kernel"] = l.kernel ? json::array({l.kernel->h, l.kernel->w}) : json(nullptr);
    j["stride"] = l.stride ? json(*l.stride) : json(nullptr);
    if (l.kind != LayerKind::FullyConnected) j["padding"] = to_string(l.padding);
    j["n_weights"] = l.n_weights;
    j["n_bias"] = l.n_bias;
    j["bit_par"] = l.bit_par;
    j["bit_dat"] = l.bit_dat;
    if (l.u_thr) j["u_thr"] = *l.u_thr;
    if (l.head) {
        const auto& m = *l.head;
        j["head"] = {{"n_old_classes", m.n_old_classes},
                     {"n_new_slots", m.n_new_slots},
                     {"neurons_per_class", m.neurons_per_class},
                     {"w_max", m.w_max},
                     {"neuron_class", m.neuron_class},
                     {"class_names", m.class_names}};
    }
    return j;
}

}  // namespace

NetworkModel model_from_json(const json& doc, const std::filesystem::path& base_dir) {
    NetworkModel m;
    try {
        if (!doc.is_object()) throw ParseError("manifest must be a JSON object");
        m.name = doc.at("name").get<std::string>();
        if (doc.contains("alpha") && !doc["alpha"].is_null()) m.alpha = doc["alpha"].get<double>();
        if (doc.contains("input_resolution") && !doc["input_resolution"].is_null()) {
            const auto& r = doc["input_resolution"];
            if (!r.is_array() || r.size() != 2) throw ParseError("input_resolution must be [H, W]");
            m.input_resolution = std::pair{r[0].get<Count>(), r[1].get<Count>()};
        }
        if (doc.contains("total_param_bytes") && !doc["total_param_bytes"].is_null()) {
            m.total_param_bytes = doc["total_param_bytes"].get<Count>();
        }
        if (doc.contains("accuracy") && !doc["accuracy"].is_null()) m.accuracy = doc["accuracy"].get<double>();
        const auto& layers = doc.at("layers");
        if (!layers.is_array()) throw ParseError("layers must be an array");
        for (const auto& lj : layers) m.layers.push_back(layer_from_json(lj));
        if (doc.contains("weight_blob") && !doc["weight_blob"].is_null()) {
            m.weight_blob = doc["weight_blob"].get<std::string>();
        }
    } catch (const nlohmann::json::exception& e) {
        throw ParseError(e.what());
    }
    if (m.weight_blob) {
        validate_model(m);   // blob layout depends on valid counts
        m.weights = read_weight_blob(base_dir / *m.weight_blob, m.layers);
    }
    validate_model(m);
    return m;
}

json model_to_json(const NetworkModel& m) {
    json j;
    j["name"] = m.name;
    j["alpha"] = m.alpha ? json(*m.alpha) : json(nullptr);
    j["input_resolution"] = m.input_resolution
                                ? json::array({m.input_resolution->first, m.input_resolution->second})
                                : json(nullptr);
    if (m.total_param_bytes) j["total_param_bytes"] = *m.total_param_bytes;
    if (m.accuracy) j["accuracy"] = *m.accuracy;
    json layers = json::array();
    for (const auto& l : m.layers) layers.push_back(layer_to_json(l));
    j["layers"] = std::move(layers);
    if (m.weight_blob) j["weight_blob"] = *m.weight_blob;
    return j;
}

NetworkModel load_model(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open model manifest " + path.string());
    json doc;
    try {
        doc = json::parse(in);
    } catch (const nlohmann::json::exception& e) {
        throw ParseError(path.string() + ": " + e.what());
    }
    return model_from_json(doc, path.parent_path());
}

void save_model(const NetworkModel& model, const std::filesystem::path& path) {
    NetworkModel out = model;
    if (model.weights) {
        if (!out.weight_blob) out.weight_blob = path.stem().string() + ".bin";
        write_weight_blob(path.parent_path() / *out.weight_blob, model.layers, *model.weights);
    } else {
        out.weight_blob.reset();
    }
    std::ofstream os(path);
    if (!os) throw IoError("cannot write model manifest " + path.string());
    os << model_to_json(out).dump(2) << '\n';
    if (!os) throw IoError("write failed for " + path.string());
}

// Weight blob ----------------------------------------------------------------

std::vector<std::uint8_t> pack_layer(const LayerSpec& layer, const LayerWeights& w) {
    const int bits = layer.bit_par;
    std::vector<std::uint8_t> out(static_cast<std::size_t>(layer_param_bytes(layer)), 0);
    const std::uint32_t mask = (1u << bits) - 1u;
    std::size_t bitpos = 0;
    auto put = [&](std::int32_t v) {
        const std::uint32_t raw = static_cast<std::uint32_t>(v) & mask;
        for (int b = 0; b < bits; ++b, ++bitpos) {
            if (raw & (1u << b)) out[bitpos / 8] |= static_cast<std::uint8_t>(1u << (bitpos % 8));
        }
    };
    for (auto v : w.weights) put(v);
    for (auto v : w.bias) put(v);
    return out;
}

LayerWeights unpack_layer(const LayerSpec& layer, const std::uint8_t* data, std::size_t size) {
    const int bits = layer.bit_par;
    if (static_cast<Count>(size) != layer_param_bytes(layer)) {
        throw ParseError("weight blob section size mismatch for layer " + layer.name);
    }
    std::size_t bitpos = 0;
    auto get = [&]() {
        std::uint32_t raw = 0;
        for (int b = 0; b < bits; ++b, ++bitpos) {
            if (data[bitpos / 8] & (1u << (bitpos % 8))) raw |= 1u << b;
        }
        if (bits > 1 && (raw & (1u << (bits - 1)))) {
            return static_cast<std::int32_t>(raw) - (1 << bits);
        }
        return static_cast<std::int32_t>(raw);
    };
    LayerWeights w;
    w.weights.resize(static_cast<std::size_t>(layer.n_weights));
    w.bias.resize(static_cast<std::size_t>(layer.n_bias));
    for (auto& v : w.weights) v = get();
    for (auto& v : w.bias) v = get();
    return w;
}

std::vector<LayerWeights> read_weight_blob(const std::filesystem::path& path, const std::vector<LayerSpec>& layers) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open weight blob " + path.string());
    std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    std::vector<LayerWeights> out;
    std::size_t offset = 0;
    for (const auto& layer : layers) {
        const auto n = static_cast<std::size_t>(layer_param_bytes(layer));
        if (offset + n > bytes.size()) throw ParseError("weight blob truncated at layer " + layer.name);
        out.push_back(unpack_layer(layer, bytes.data() + offset, n));
        offset += n;
    }
    if (offset != bytes.size()) throw ParseError("weight blob has trailing bytes");
    return out;
}

void write_weight_blob(const std::filesystem::path& path, const std::vector<LayerSpec>& layers,
                       const std::vector<LayerWeights>& weights) {
    if (layers.size() != weights.size()) throw ValidationError("weight tensor count != layer count");
    std::ofstream os(path, std::ios::binary);
    if (!os) throw IoError("cannot write weight blob " + path.string());
    for (std::size_t i = 0; i < layers.size(); ++i) {
        const auto bytes = pack_layer(layers[i], weights[i]);
        os.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
    }
    if (!os) throw IoError("write failed for " + path.string());
}

}  // namespace npu
