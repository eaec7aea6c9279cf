#include "npudeploy/learn.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <numeric>

#include "npudeploy/errors.hpp"

namespace npu {

BitVector BitVector::from_bools(const std::vector<std::uint8_t>& bits) {
    BitVector v(bits.size());
    for (std::size_t i = 0; i < bits.size(); ++i) {
        if (bits[i]) v.set(i);
    }
    return v;
}

void BitVector::set(std::size_t i, bool on) {
    const std::uint64_t mask = std::uint64_t{1} << (i % 64);
    if (on) {
        words_[i / 64] |= mask;
    } else {
        words_[i / 64] &= ~mask;
    }
}

std::size_t BitVector::popcount() const {
    std::size_t n = 0;
    for (auto w : words_) n += static_cast<std::size_t>(std::popcount(w));
    return n;
}

std::size_t BitVector::overlap(const BitVector& other) const {
    if (other.size_ != size_) throw DimensionMismatch("bit vector lengths differ");
    std::size_t n = 0;
    for (std::size_t k = 0; k < words_.size(); ++k) n += static_cast<std::size_t>(std::popcount(words_[k] & other.words_[k]));
    return n;
}

std::vector<std::uint8_t> BitVector::to_bools() const {
    std::vector<std::uint8_t> out(size_);
    for (std::size_t i = 0; i < size_; ++i) out[i] = test(i) ? 1 : 0;
    return out;
}

namespace {

std::size_t threshold_for(const BitVector& row, double ratio) {
    return static_cast<std::size_t>(std::ceil(ratio * static_cast<double>(row.popcount())));
}

// Keeps the `budget` positive weights with the largest values (ties: lower index).
BitVector binarize_row(const std::int32_t* row, std::size_t n, std::size_t budget) {
    std::vector<std::size_t> idx;
    for (std::size_t i = 0; i < n; ++i) {
        if (row[i] > 0) idx.push_back(i);
    }
    std::stable_sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) { return row[a] > row[b]; });
    BitVector out(n);
    for (std::size_t k = 0; k < std::min(budget, idx.size()); ++k) out.set(idx[k]);
    return out;
}

void reset_hits(LearnableHead& head) {
    head.hits.assign(head.total_neurons(), std::vector<std::uint32_t>(head.in_features, 0));
    for (std::size_t n = 0; n < head.total_neurons(); ++n) {
        for (std::size_t i = 0; i < head.in_features; ++i) head.hits[n][i] = head.weights[n].test(i) ? 1 : 0;
    }
}

}  // namespace

std::pair<NetworkModel, LearnableHead> replace_head(const NetworkModel& model, std::size_t n_new_slots,
                                                    std::size_t neurons_per_class, const HeadOptions& options) {
    if (model.layers.empty()) throw HeadIncompatible("model has no layers");
    const auto& last = model.layers.back();
    if (last.kind != LayerKind::FullyConnected) {
        throw HeadIncompatible("last layer '" + last.name + "' is " + std::string(to_string(last.kind)) +
                               ", a fully_connected classifier is required");
    }
    if (neurons_per_class < 1) throw HeadIncompatible("neurons per class must be >= 1");

    LearnableHead head;
    head.in_features = static_cast<std::size_t>(last.in_shape.volume());
    head.n_old_classes = static_cast<std::size_t>(last.out_shape.volume());
    head.n_new_slots = n_new_slots;
    head.neurons_per_class = neurons_per_class;
    head.w_max = options.w_max.value_or((head.in_features + 3) / 4);
    head.class_names.assign(head.n_classes(), "");

    std::vector<BitVector> old_rows(head.n_old_classes, BitVector(head.in_features));
    if (model.weights) {
        const auto& w = model.weights->back().weights;
        std::vector<std::size_t> positives;
        for (std::size_t o = 0; o < head.n_old_classes; ++o) {
            const auto* row = &w[o * head.in_features];
            positives.push_back(static_cast<std::size_t>(std::count_if(row, row + head.in_features, [](auto v) { return v > 0; })));
        }
        auto sorted = positives;
        std::sort(sorted.begin(), sorted.end());
        const std::size_t k = std::min(head.w_max, sorted.empty() ? std::size_t{0} : sorted[(sorted.size() - 1) / 2]);
        for (std::size_t o = 0; o < head.n_old_classes; ++o) {
            old_rows[o] = binarize_row(&w[o * head.in_features], head.in_features, k);
        }
    }

    const std::size_t total = head.total_neurons();
    head.weights.assign(total, BitVector(head.in_features));
    head.neuron_class.assign(total, std::nullopt);
    for (std::size_t c = 0; c < head.n_old_classes; ++c) {
        for (std::size_t k = 0; k < neurons_per_class; ++k) {
            head.weights[c * neurons_per_class + k] = old_rows[c];
            head.neuron_class[c * neurons_per_class + k] = c;
        }
    }
    head.fire_threshold.resize(total);
    for (std::size_t n = 0; n < total; ++n) head.fire_threshold[n] = threshold_for(head.weights[n], options.threshold_ratio);
    reset_hits(head);

    return {store_head(model, head), std::move(head)};
}

LearnableHead learn_class(LearnableHead head, const std::vector<BitVector>& samples, std::size_t class_label,
                          double threshold_ratio) {
    if (class_label < head.n_old_classes || class_label >= head.n_classes()) {
        throw ValidationError("class " + std::to_string(class_label) + " is not a new-class slot");
    }
    if (samples.empty()) throw ValidationError("no samples given");
    const std::size_t K = head.neurons_per_class;
    const std::size_t first = class_label * K;

    for (const auto& x : samples) {
        if (x.size() != head.in_features) {
            throw DimensionMismatch("sample has " + std::to_string(x.size()) + " bits, head expects " +
                                    std::to_string(head.in_features));
        }
        std::optional<std::size_t> best;
        std::size_t best_overlap = 0;
        for (std::size_t n = first; n < first + K; ++n) {
            if (!head.neuron_class[n]) continue;
            const std::size_t ov = head.weights[n].overlap(x);
            if (!best || ov > best_overlap) {
                best = n;
                best_overlap = ov;
            }
        }
        std::size_t target = 0;
        if (best && best_overlap >= head.fire_threshold[*best]) {
            target = *best;
        } else {
            std::optional<std::size_t> free;
            for (std::size_t n = first; n < first + K; ++n) {
                if (!head.neuron_class[n]) {
                    free = n;
                    break;
                }
            }
            if (!free) {
                throw SlotsExhausted("all " + std::to_string(K) + " neurons of class " + std::to_string(class_label) +
                                     " are in use and none matches; raise neurons per class");
            }
            target = *free;
        }

        // Bounded OR: the sample's bits join the neuron's, then only the w_max inputs with the
        // highest hit counts survive (ties keep the lower index).
        auto& hits = head.hits[target];
        for (std::size_t i = 0; i < head.in_features; ++i) {
            if (x.test(i)) ++hits[i];
        }
        std::vector<std::size_t> order;
        for (std::size_t i = 0; i < head.in_features; ++i) {
            if (hits[i] > 0) order.push_back(i);
        }
        std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return hits[a] > hits[b]; });
        BitVector row(head.in_features);
        for (std::size_t k = 0; k < std::min(head.w_max, order.size()); ++k) row.set(order[k]);
        head.weights[target] = std::move(row);
        head.neuron_class[target] = class_label;
        head.fire_threshold[target] = threshold_for(head.weights[target], threshold_ratio);
    }
    return head;
}

HeadDecision infer_head(const LearnableHead& head, const BitVector& input) {
    if (input.size() != head.in_features) {
        throw DimensionMismatch("input has " + std::to_string(input.size()) + " bits, head expects " +
                                std::to_string(head.in_features));
    }
    HeadDecision d;
    bool any = false;
    std::size_t best_pop = 0;
    for (std::size_t n = 0; n < head.total_neurons(); ++n) {
        if (!head.neuron_class[n]) continue;
        const std::size_t score = head.weights[n].overlap(input);
        const std::size_t pop = head.weights[n].popcount();
        // equal scores: the row with fewer unmatched bits wins, then the lower index
        const bool better = !any || score > d.score ||
                            (score == d.score && score > 0 && score * best_pop > d.score * pop);
        if (better) {
            any = true;
            d.score = score;
            d.neuron = n;
            d.class_id = head.neuron_class[n];
            best_pop = pop;
        }
    }
    if (any) d.matched = d.score >= head.fire_threshold[d.neuron];
    return d;
}

BitVector binarize_counts(const std::vector<std::int64_t>& counts, std::int64_t timesteps) {
    BitVector v(counts.size());
    for (std::size_t i = 0; i < counts.size(); ++i) {
        if (counts[i] > 0 && 2 * counts[i] >= timesteps) v.set(i);
    }
    return v;
}

NetworkModel store_head(const NetworkModel& model, const LearnableHead& head) {
    NetworkModel out = model;
    auto& last = out.layers.back();
    const auto total = static_cast<Count>(head.total_neurons());
    last.kind = LayerKind::FullyConnected;
    last.out_shape = Shape3{1, 1, total};
    last.kernel.reset();
    last.stride.reset();
    last.n_weights = last.in_shape.volume() * total;
    last.n_bias = 0;
    last.bit_par = 1;
    last.u_thr.reset();

    HeadMeta meta;
    meta.n_old_classes = static_cast<Count>(head.n_old_classes);
    meta.n_new_slots = static_cast<Count>(head.n_new_slots);
    meta.neurons_per_class = static_cast<Count>(head.neurons_per_class);
    meta.w_max = static_cast<Count>(head.w_max);
    for (const auto& c : head.neuron_class) meta.neuron_class.push_back(c ? static_cast<Count>(*c) : Count{-1});
    meta.class_names = head.class_names;
    last.head = std::move(meta);

    if (out.weights) {
        LayerWeights lw;
        lw.weights.reserve(static_cast<std::size_t>(last.n_weights));
        for (const auto& row : head.weights) {
            for (std::size_t i = 0; i < head.in_features; ++i) lw.weights.push_back(row.test(i) ? 1 : 0);
        }
        out.weights->back() = std::move(lw);
    }
    if (out.total_param_bytes) out.total_param_bytes = model_param_bytes(out);
    return out;
}

LearnableHead head_from_model(const NetworkModel& model, double threshold_ratio) {
    if (model.layers.empty() || !model.layers.back().head) throw HeadIncompatible("last layer carries no learnable head");
    const auto& last = model.layers.back();
    const auto& m = *last.head;
    LearnableHead head;
    head.in_features = static_cast<std::size_t>(last.in_shape.volume());
    head.n_old_classes = static_cast<std::size_t>(m.n_old_classes);
    head.n_new_slots = static_cast<std::size_t>(m.n_new_slots);
    head.neurons_per_class = static_cast<std::size_t>(m.neurons_per_class);
    head.w_max = static_cast<std::size_t>(m.w_max);
    head.class_names = m.class_names;
    if (head.class_names.empty()) head.class_names.assign(head.n_classes(), "");
    const std::size_t total = head.total_neurons();
    head.weights.assign(total, BitVector(head.in_features));
    if (model.weights) {
        const auto& w = model.weights->back().weights;
        for (std::size_t n = 0; n < total; ++n) {
            for (std::size_t i = 0; i < head.in_features; ++i) {
                if (w[n * head.in_features + i]) head.weights[n].set(i);
            }
        }
    }
    for (auto c : m.neuron_class) {
        head.neuron_class.push_back(c >= 0 ? std::optional<std::size_t>(static_cast<std::size_t>(c)) : std::nullopt);
    }
    head.fire_threshold.resize(total);
    for (std::size_t n = 0; n < total; ++n) head.fire_threshold[n] = threshold_for(head.weights[n], threshold_ratio);
    reset_hits(head);
    return head;
}

std::optional<std::size_t> next_free_slot(const LearnableHead& head) {
    for (std::size_t c = head.n_old_classes; c < head.n_classes(); ++c) {
        bool empty = true;
        for (std::size_t k = 0; k < head.neurons_per_class; ++k) {
            if (head.neuron_class[c * head.neurons_per_class + k]) empty = false;
        }
        if (empty) return c;
    }
    return std::nullopt;
}

}  // namespace npu
