#include "npudeploy/simcore.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <thread>

#include "npudeploy/errors.hpp"

namespace npu {

namespace {

struct Geometry {
    LayerKind kind;
    Shape3 in;
    Shape3 out;
    Count kh = 1;
    Count kw = 1;
    Count stride = 1;
    Count pad_top = 0;
    Count pad_left = 0;
};

Geometry geometry_of(const LayerSpec& layer) {
    Geometry g{layer.kind, layer.in_shape, layer.out_shape};
    if (layer.kind == LayerKind::FullyConnected) return g;
    const Kernel k = layer.kernel.value_or(Kernel{});
    g.kh = k.h;
    g.kw = k.w;
    g.stride = layer.stride_or_one();
    g.pad_top = conv_pad_before(g.in.h, g.out.h, g.kh, g.stride, layer.padding);
    g.pad_left = conv_pad_before(g.in.w, g.out.w, g.kw, g.stride, layer.padding);
    return g;
}

// Adds every synaptic contribution of one input event to `cur`. Zero weights are skipped
// and do not count as synaptic events.
void scatter(const Geometry& g, const std::vector<std::int32_t>& w, const SpikeEvent& ev,
             std::vector<std::int64_t>& cur, std::int64_t& syn) {
    const std::int64_t mag = ev.magnitude;
    if (g.kind == LayerKind::FullyConnected) {
        const Count in_vol = g.in.volume();
        const Count i = g.in.index(ev.h, ev.w, ev.c);
        const Count out_vol = g.out.volume();
        for (Count o = 0; o < out_vol; ++o) {
            const std::int32_t wt = w[static_cast<std::size_t>(o * in_vol + i)];
            if (wt == 0) continue;
            cur[static_cast<std::size_t>(o)] += wt * mag;
            ++syn;
        }
        return;
    }
    const bool depthwise = g.kind == LayerKind::DepthwiseConv;
    for (Count ky = 0; ky < g.kh; ++ky) {
        const Count ty = ev.h + g.pad_top - ky;
        if (ty < 0 || ty % g.stride != 0) continue;
        const Count oy = ty / g.stride;
        if (oy >= g.out.h) continue;
        for (Count kx = 0; kx < g.kw; ++kx) {
            const Count tx = ev.w + g.pad_left - kx;
            if (tx < 0 || tx % g.stride != 0) continue;
            const Count ox = tx / g.stride;
            if (ox >= g.out.w) continue;
            const Count base = g.out.index(oy, ox, 0);
            if (depthwise) {
                const std::int32_t wt = w[static_cast<std::size_t>((ev.c * g.kh + ky) * g.kw + kx)];
                if (wt == 0) continue;
                cur[static_cast<std::size_t>(base + ev.c)] += wt * mag;
                ++syn;
                continue;
            }
            const Count oc_stride = g.in.c * g.kh * g.kw;
            Count widx = (ev.c * g.kh + ky) * g.kw + kx;
            for (Count oc = 0; oc < g.out.c; ++oc, widx += oc_stride) {
                const std::int32_t wt = w[static_cast<std::size_t>(widx)];
                if (wt == 0) continue;
                cur[static_cast<std::size_t>(base + oc)] += wt * mag;
                ++syn;
            }
        }
    }
}

// Runs fn(task) for every task; worker k takes tasks k, k + W, k + 2W, ...
template <typename Fn>
void for_each_task(int workers, std::size_t n_tasks, Fn&& fn) {
    const auto n_workers = static_cast<std::size_t>(std::max(1, workers));
    if (n_workers == 1 || n_tasks <= 1) {
        for (std::size_t t = 0; t < n_tasks; ++t) fn(t);
        return;
    }
    const std::size_t used = std::min(n_workers, n_tasks);
    std::vector<std::jthread> pool;
    pool.reserve(used);
    for (std::size_t k = 0; k < used; ++k) {
        pool.emplace_back([&, k] {
            for (std::size_t t = k; t < n_tasks; t += used) fn(t);
        });
    }
}

}  // namespace

Leak Leak::from_ratio(double ratio) {
    const double clamped = std::clamp(ratio, 0.0, 1.0);
    return Leak{static_cast<std::uint32_t>(std::llround(clamped * kOne))};
}

StepResult step_neuron(NeuronState state, std::int64_t input_current) {
    state.u_mem = integrate(state.u_mem, state.u_rst, state.leak, input_current);
    const bool fired = state.u_mem >= state.u_thr;
    if (fired) state.u_mem = state.u_rst;
    return {state, fired};
}

std::int64_t default_threshold(const LayerSpec& layer, const LayerWeights& weights) {
    const auto& w = weights.weights;
    const Count n_out = output_channels(layer);
    const Count fan = n_out > 0 ? static_cast<Count>(w.size()) / n_out : 0;
    std::int64_t best = 0;
    for (Count o = 0; o < n_out; ++o) {
        std::int64_t sum = 0;
        for (Count k = 0; k < fan; ++k) sum += std::max<std::int32_t>(w[static_cast<std::size_t>(o * fan + k)], 0);
        if (!weights.bias.empty()) sum += std::max<std::int32_t>(weights.bias[static_cast<std::size_t>(o)], 0);
        best = std::max(best, sum);
    }
    return std::max<std::int64_t>(1, best / 2);
}

std::vector<std::int64_t> resolve_thresholds(const NetworkModel& model, const RunParams& params) {
    std::vector<std::int64_t> thr;
    thr.reserve(model.layers.size());
    for (std::size_t l = 0; l < model.layers.size(); ++l) {
        if (l < params.u_thr.size() && params.u_thr[l]) {
            thr.push_back(*params.u_thr[l]);
        } else if (model.layers[l].u_thr) {
            thr.push_back(*model.layers[l].u_thr);
        } else {
            if (!model.weights) throw MissingWeights("model '" + model.name + "' has no weight blob");
            thr.push_back(default_threshold(model.layers[l], (*model.weights)[l]));
        }
    }
    return thr;
}

std::vector<std::int64_t> head_thresholds(const NetworkModel& model, const RunParams& params) {
    if (model.layers.empty() || !model.layers.back().head || !model.weights) return {};
    const std::size_t l = model.layers.size() - 1;
    if ((l < params.u_thr.size() && params.u_thr[l]) || model.layers[l].u_thr) return {};
    const auto& last = model.layers[l];
    const auto fan = static_cast<std::size_t>(last.in_shape.volume());
    const auto& w = model.weights->back().weights;
    std::vector<std::int64_t> thr(static_cast<std::size_t>(last.out_shape.volume()));
    for (std::size_t n = 0; n < thr.size(); ++n) {
        std::int64_t pop = 0;
        for (std::size_t i = 0; i < fan; ++i) pop += w[n * fan + i] != 0;
        thr[n] = std::max<std::int64_t>(1, (pop + 1) / 2);
    }
    return thr;
}

std::size_t argmax_lowest(const std::vector<std::int64_t>& values) {
    std::size_t best = 0;
    for (std::size_t i = 1; i < values.size(); ++i) {
        if (values[i] > values[best]) best = i;
    }
    return best;
}

RunStats run(const NetworkModel& model, const AllocationPlan& plan, const std::vector<SpikeFrame>& frames,
             const RunParams& params) {
    if (!model.weights) throw MissingWeights("model '" + model.name + "' has no weight blob");
    if (params.timesteps < 1) throw ValidationError("timesteps must be >= 1");
    check_plan_matches(plan, model);
    const auto& layers = model.layers;
    const std::size_t n_layers = layers.size();
    if (params.capture_layer && *params.capture_layer >= n_layers) {
        throw ValidationError("capture_layer out of range");
    }

    const Shape3 in_shape = layers.front().in_shape;
    std::vector<std::vector<SpikeEvent>> input_by_t(static_cast<std::size_t>(params.timesteps));
    for (const auto& f : frames) {
        if (f.shape != in_shape) throw ShapeMismatch("frame shape does not match the first layer input");
        if (f.t < 0 || f.t >= params.timesteps) throw ShapeMismatch("frame timestep " + std::to_string(f.t) + " outside run");
        for (const auto& ev : f.events) {
            if (ev.h < 0 || ev.h >= in_shape.h || ev.w < 0 || ev.w >= in_shape.w || ev.c < 0 || ev.c >= in_shape.c) {
                throw ShapeMismatch("event coordinate outside frame shape");
            }
            if (ev.magnitude < 1) throw ShapeMismatch("event magnitude must be >= 1");
        }
        auto& slot = input_by_t[static_cast<std::size_t>(f.t)];
        slot.insert(slot.end(), f.events.begin(), f.events.end());
    }

    const auto thresholds = resolve_thresholds(model, params);
    const auto head_thr = head_thresholds(model, params);
    std::vector<Geometry> geo;
    std::vector<std::vector<std::int64_t>> membrane;
    for (const auto& layer : layers) {
        geo.push_back(geometry_of(layer));
        membrane.emplace_back(static_cast<std::size_t>(layer.out_shape.volume()), params.u_rst);
    }

    RunStats stats;
    stats.timesteps = params.timesteps;
    stats.layer_spikes.assign(n_layers, 0);
    std::vector<std::int64_t> last_counts(static_cast<std::size_t>(layers.back().out_shape.volume()), 0);
    if (params.capture_layer) {
        stats.captured_counts.assign(static_cast<std::size_t>(layers[*params.capture_layer].out_shape.volume()), 0);
    }

    const auto n_workers = static_cast<std::size_t>(std::max(1, params.workers));
    std::vector<std::vector<std::int64_t>> scratch(n_workers);
    std::vector<std::int64_t> syn_per_chunk(n_workers);

    for (std::int64_t t = 0; t < params.timesteps; ++t) {
        std::vector<SpikeEvent> events = input_by_t[static_cast<std::size_t>(t)];
        for (std::size_t l = 0; l < n_layers; ++l) {
            const auto& layer = layers[l];
            const auto& g = geo[l];
            const auto& w = (*model.weights)[l];
            const auto n_out = static_cast<std::size_t>(layer.out_shape.volume());

            // Synaptic accumulation: events are split into contiguous chunks, one per worker.
            const std::size_t chunks = std::max<std::size_t>(1, std::min(n_workers, events.size()));
            for (std::size_t k = 0; k < chunks; ++k) {
                scratch[k].assign(n_out, 0);
                syn_per_chunk[k] = 0;
            }
            for_each_task(params.workers, chunks, [&](std::size_t k) {
                const std::size_t lo = events.size() * k / chunks;
                const std::size_t hi = events.size() * (k + 1) / chunks;
                for (std::size_t e = lo; e < hi; ++e) scatter(g, w.weights, events[e], scratch[k], syn_per_chunk[k]);
            });
            auto& current = scratch[0];
            for (std::size_t k = 1; k < chunks; ++k) {
                for (std::size_t j = 0; j < n_out; ++j) current[j] += scratch[k][j];
            }
            for (std::size_t k = 0; k < chunks; ++k) stats.synaptic_events += syn_per_chunk[k];
            if (!w.bias.empty()) {
                const auto n_ch = static_cast<std::size_t>(output_channels(layer));
                for (std::size_t j = 0; j < n_out; ++j) current[j] += w.bias[j % n_ch];
            }

            // Neuron updates, swept in the layer's sequential passes.
            const auto passes = static_cast<std::size_t>(std::max<Count>(1, plan.layers[l].passes));
            std::vector<std::vector<std::uint32_t>> fired(passes);
            auto& u = membrane[l];
            const std::int64_t layer_thr = thresholds[l];
            const bool per_neuron = l + 1 == n_layers && !head_thr.empty();
            for_each_task(params.workers, passes, [&](std::size_t p) {
                const std::size_t lo = n_out * p / passes;
                const std::size_t hi = n_out * (p + 1) / passes;
                for (std::size_t j = lo; j < hi; ++j) {
                    const std::int64_t v = integrate(u[j], params.u_rst, params.leak, current[j]);
                    if (v >= (per_neuron ? head_thr[j] : layer_thr)) {
                        u[j] = params.u_rst;
                        fired[p].push_back(static_cast<std::uint32_t>(j));
                    } else {
                        u[j] = v;
                    }
                }
            });
            stats.neuron_updates += static_cast<std::int64_t>(n_out);

            std::vector<SpikeEvent> next;
            const Shape3& os = layer.out_shape;
            for (const auto& part : fired) {
                for (auto j : part) {
                    const auto idx = static_cast<Count>(j);
                    next.push_back(SpikeEvent{static_cast<std::int32_t>(idx / (os.w * os.c)),
                                              static_cast<std::int32_t>((idx / os.c) % os.w),
                                              static_cast<std::int32_t>(idx % os.c), 1});
                    if (params.capture_layer && *params.capture_layer == l) ++stats.captured_counts[j];
                    if (l + 1 == n_layers) ++last_counts[j];
                }
            }
            stats.layer_spikes[l] += static_cast<std::int64_t>(next.size());
            events = std::move(next);
        }
    }

    const auto& last = layers.back();
    if (last.head) {
        const auto& h = *last.head;
        stats.output_spikes.assign(static_cast<std::size_t>(h.n_old_classes + h.n_new_slots), 0);
        for (std::size_t j = 0; j < last_counts.size(); ++j) {
            if (h.neuron_class[j] >= 0) stats.output_spikes[static_cast<std::size_t>(h.neuron_class[j])] += last_counts[j];
        }
    } else {
        stats.output_spikes = std::move(last_counts);
    }
    stats.predicted_class = argmax_lowest(stats.output_spikes);
    return stats;
}

nlohmann::json stats_to_json(const RunStats& s) {
    nlohmann::json j = {{"synaptic_events", s.synaptic_events},
                        {"neuron_updates", s.neuron_updates},
                        {"output_spikes", s.output_spikes},
                        {"timesteps", s.timesteps},
                        {"predicted_class", s.predicted_class},
                        {"layer_spikes", s.layer_spikes}};
    if (!s.captured_counts.empty()) j["captured_counts"] = s.captured_counts;
    return j;
}

RunStats stats_from_json(const nlohmann::json& j) {
    RunStats s;
    try {
        s.synaptic_events = j.at("synaptic_events").get<std::int64_t>();
        s.neuron_updates = j.at("neuron_updates").get<std::int64_t>();
        s.output_spikes = j.at("output_spikes").get<std::vector<std::int64_t>>();
        s.timesteps = j.at("timesteps").get<std::int64_t>();
        s.predicted_class = j.at("predicted_class").get<std::size_t>();
        s.layer_spikes = j.value("layer_spikes", std::vector<std::int64_t>{});
        s.captured_counts = j.value("captured_counts", std::vector<std::int64_t>{});
    } catch (const nlohmann::json::exception& e) {
        throw ParseError(std::string("stats: ") + e.what());
    }
    return s;
}

RunStats load_stats(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open stats " + path.string());
    try {
        return stats_from_json(nlohmann::json::parse(in));
    } catch (const nlohmann::json::exception& e) {
        throw ParseError(path.string() + ": " + e.what());
    }
}

}  // namespace npu
