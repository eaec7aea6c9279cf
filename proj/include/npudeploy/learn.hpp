#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "npudeploy/netir.hpp"
#include "npudeploy/simcore.hpp"

namespace npu {

/// Packed binary vector.
class BitVector {
public:
    BitVector() = default;
    explicit BitVector(std::size_t size) : size_(size), words_((size + 63) / 64, 0) {}
    static BitVector from_bools(const std::vector<std::uint8_t>& bits);

    std::size_t size() const { return size_; }
    bool test(std::size_t i) const { return (words_[i / 64] >> (i % 64)) & 1u; }
    void set(std::size_t i, bool on = true);
    std::size_t popcount() const;
    /// popcount(*this AND other)
    std::size_t overlap(const BitVector& other) const;
    std::vector<std::uint8_t> to_bools() const;

    bool operator==(const BitVector&) const = default;

private:
    std::size_t size_ = 0;
    std::vector<std::uint64_t> words_;
};

/// Binary fully-connected classifier replacing a network's last layer.
/// Class slot c owns neurons [c*K, (c+1)*K); slots [0, n_old) are the original classes.
struct LearnableHead {
    std::size_t in_features = 0;
    std::size_t n_old_classes = 0;
    std::size_t n_new_slots = 0;
    std::size_t neurons_per_class = 1;
    std::size_t w_max = 0;                        // weight budget per neuron
    std::vector<BitVector> weights;               // one row per neuron
    std::vector<std::optional<std::size_t>> neuron_class;
    std::vector<std::size_t> fire_threshold;      // coincident active inputs needed to match
    std::vector<std::vector<std::uint32_t>> hits; // per neuron, per input: learning hit counters
    std::vector<std::string> class_names;

    std::size_t n_classes() const { return n_old_classes + n_new_slots; }
    std::size_t total_neurons() const { return n_classes() * neurons_per_class; }
    bool operator==(const LearnableHead&) const = default;
};

struct HeadOptions {
    std::optional<std::size_t> w_max;   // default ceil(in_features / 4)
    double threshold_ratio = 0.5;       // fire_threshold = ceil(ratio * popcount(row))
};

/// Swaps the classifier for a learnable head with K neurons per class and `n_new_slots`
/// empty class slots. Old classes keep the top min(k, w_max) positive weights of their row,
/// k being the median positive count over rows.
std::pair<NetworkModel, LearnableHead> replace_head(const NetworkModel& model, std::size_t n_new_slots,
                                                    std::size_t neurons_per_class, const HeadOptions& options = {});

/// Few-shot update of one new class from binary samples.
LearnableHead learn_class(LearnableHead head, const std::vector<BitVector>& samples, std::size_t class_label,
                          double threshold_ratio = 0.5);

struct HeadDecision {
    std::optional<std::size_t> class_id;   // empty only when no neuron is assigned
    std::size_t score = 0;
    std::size_t neuron = 0;
    bool matched = false;                  // score reached the neuron's fire_threshold
};

/// Argmax over assigned neurons of popcount(row AND input). Equal scores go to the row with the
/// higher score / popcount ratio, then to the lower index.
HeadDecision infer_head(const LearnableHead& head, const BitVector& input);

/// Penultimate spike counts -> binary head input: count * 2 >= T and count > 0.
BitVector binarize_counts(const std::vector<std::int64_t>& counts, std::int64_t timesteps);

/// Writes the head's weights and bookkeeping into the model's last layer (bit_par = 1).
NetworkModel store_head(const NetworkModel& model, const LearnableHead& head);
/// Rebuilds a head from a model whose last layer carries head metadata.
LearnableHead head_from_model(const NetworkModel& model, double threshold_ratio = 0.5);

/// Index of the first class slot with no assigned neuron, if any.
std::optional<std::size_t> next_free_slot(const LearnableHead& head);

}  // namespace npu
