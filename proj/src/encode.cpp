#include <array>
#include <fstream>

#include "npudeploy/errors.hpp"
#include "npudeploy/simcore.hpp"

namespace npu {

namespace {

constexpr std::array<char, 4> kMagic{'N', 'P', 'U', 'T'};

template <typename T>
void put_le(std::vector<std::uint8_t>& out, T value, int bytes) {
    for (int i = 0; i < bytes; ++i) out.push_back(static_cast<std::uint8_t>((static_cast<std::uint64_t>(value) >> (8 * i)) & 0xFF));
}

std::uint64_t get_le(const std::uint8_t* p, int bytes) {
    std::uint64_t v = 0;
    for (int i = 0; i < bytes; ++i) v |= static_cast<std::uint64_t>(p[i]) << (8 * i);
    return v;
}

int value_bytes(InputDType dtype) { return dtype == InputDType::U8 ? 1 : 2; }

}  // namespace

InputTensor read_input_tensor(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open input tensor " + path.string());
    std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    if (bytes.size() < 16 || !std::equal(kMagic.begin(), kMagic.end(), bytes.begin())) {
        throw ParseError(path.string() + ": not an input tensor (bad magic)");
    }
    InputTensor t;
    t.shape = Shape3{static_cast<Count>(get_le(&bytes[4], 4)), static_cast<Count>(get_le(&bytes[8], 4)),
                     static_cast<Count>(get_le(&bytes[12], 2))};
    const auto code = static_cast<std::uint16_t>(get_le(&bytes[14], 2));
    if (code != 1 && code != 2) throw ParseError(path.string() + ": unknown dtype code " + std::to_string(code));
    t.dtype = static_cast<InputDType>(code);
    if (t.shape.h <= 0 || t.shape.w <= 0 || t.shape.c <= 0) throw ParseError(path.string() + ": empty shape");
    const int vb = value_bytes(t.dtype);
    const auto n = static_cast<std::size_t>(t.shape.volume());
    if (bytes.size() != 16 + n * static_cast<std::size_t>(vb)) {
        throw ParseError(path.string() + ": payload size does not match header");
    }
    t.values.resize(n);
    for (std::size_t i = 0; i < n; ++i) {
        t.values[i] = static_cast<std::int32_t>(get_le(&bytes[16 + i * vb], vb));
    }
    return t;
}

void write_input_tensor(const InputTensor& t, const std::filesystem::path& path) {
    if (static_cast<Count>(t.values.size()) != t.shape.volume()) throw ShapeMismatch("tensor value count != shape volume");
    std::vector<std::uint8_t> out(kMagic.begin(), kMagic.end());
    put_le(out, t.shape.h, 4);
    put_le(out, t.shape.w, 4);
    put_le(out, t.shape.c, 2);
    put_le(out, static_cast<std::uint16_t>(t.dtype), 2);
    const int vb = value_bytes(t.dtype);
    for (auto v : t.values) {
        if (v < 0 || v > t.max_value()) throw EncodingError("value " + std::to_string(v) + " does not fit dtype");
        put_le(out, v, vb);
    }
    std::ofstream os(path, std::ios::binary);
    if (!os) throw IoError("cannot write input tensor " + path.string());
    os.write(reinterpret_cast<const char*>(out.data()), static_cast<std::streamsize>(out.size()));
}

EncodeMode parse_encode_mode(const std::string& text) {
    if (text == "threshold") return EncodeMode::Threshold;
    if (text == "rate") return EncodeMode::Rate;
    throw ParseError("unknown encode mode '" + text + "' (expected rate|threshold)");
}

std::vector<SpikeFrame> encode(const InputTensor& input, std::int64_t timesteps, EncodeMode mode,
                               const EncodeOptions& options) {
    if (timesteps < 1) throw EncodingError("timesteps must be >= 1");
    if (static_cast<Count>(input.values.size()) != input.shape.volume()) {
        throw EncodingError("tensor value count != shape volume");
    }
    const std::int64_t v_max = options.v_max.value_or(input.max_value());
    if (v_max <= 0) throw EncodingError("v_max must be positive");
    if (options.magnitude_bits < 1 || options.magnitude_bits > 16) throw EncodingError("magnitude_bits out of range");
    const std::int64_t mag_max = (std::int64_t{1} << options.magnitude_bits) - 1;

    std::vector<SpikeFrame> frames(static_cast<std::size_t>(timesteps));
    for (std::int64_t t = 0; t < timesteps; ++t) {
        frames[static_cast<std::size_t>(t)].shape = input.shape;
        frames[static_cast<std::size_t>(t)].t = t;
    }

    const auto& s = input.shape;
    for (Count y = 0; y < s.h; ++y) {
        for (Count x = 0; x < s.w; ++x) {
            for (Count ch = 0; ch < s.c; ++ch) {
                const std::int64_t v = input.values[static_cast<std::size_t>(s.index(y, x, ch))];
                if (v < 0 || v > v_max) {
                    throw EncodingError("value " + std::to_string(v) + " outside [0, " + std::to_string(v_max) + "]");
                }
                if (v == 0) continue;
                SpikeEvent ev{static_cast<std::int32_t>(y), static_cast<std::int32_t>(x), static_cast<std::int32_t>(ch), 1};
                if (mode == EncodeMode::Threshold) {
                    if (v < options.threshold) continue;
                    const std::int64_t q = (2 * v * mag_max + v_max) / (2 * v_max);
                    ev.magnitude = static_cast<std::int32_t>(std::max<std::int64_t>(q, 1));
                    frames[0].events.push_back(ev);
                } else {
                    const std::int64_t n = (2 * v * timesteps + v_max) / (2 * v_max);
                    for (std::int64_t i = 0; i < n; ++i) {
                        frames[static_cast<std::size_t>(i * timesteps / n)].events.push_back(ev);
                    }
                }
            }
        }
    }
    return frames;
}

}  // namespace npu
