#ifndef QCQA_CORE_HPP
#define QCQA_CORE_HPP

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "qcqa/errors.hpp"
#include "qcqa/rng.hpp"

namespace qcqa {

// Dense row-major matrix of 64-bit reals. Holds one head's projection weights
// (rows = head feature dimension, cols = model dimension) or one head's
// feature tensor (rows = sequence length, cols = head dimension).
class HeadMatrix {
public:
    HeadMatrix() = default;
    HeadMatrix(int rows, int cols);
    HeadMatrix(int rows, int cols, std::vector<double> data);

    int rows() const { return rows_; }
    int cols() const { return cols_; }

    double operator()(int r, int c) const { return data_[static_cast<std::size_t>(r) * cols_ + c]; }
    double& operator()(int r, int c) { return data_[static_cast<std::size_t>(r) * cols_ + c]; }

    std::span<const double> data() const { return data_; }
    std::span<double> data() { return data_; }

    bool same_shape(const HeadMatrix& other) const { return rows_ == other.rows_ && cols_ == other.cols_; }
    bool operator==(const HeadMatrix&) const = default;

private:
    int rows_ = 0;
    int cols_ = 0;
    std::vector<double> data_;
};

// Key and value projection weights of one attention layer, one matrix per head.
struct LayerWeights {
    std::vector<HeadMatrix> keys;
    std::vector<HeadMatrix> values;

    int head_count() const { return static_cast<int>(keys.size()); }

    // keys and values have equal length >= 1; each list shares one shape.
    void validate() const;
};

// All layers of a checkpoint. Search entry points require a uniform head
// count; archives produced by pooling may be ragged across layers.
struct WeightArchive {
    std::vector<LayerWeights> layers;

    int layer_count() const { return static_cast<int>(layers.size()); }
    bool uniform_heads() const;
    int heads_per_layer() const; // throws ShapeError when ragged

    void validate() const;

    bool operator==(const WeightArchive&) const;
};

// Partition of head indices {0..H-1} into non-empty groups, kept in canonical
// form: members ascending within a group, groups ordered by smallest member.
class LayerGrouping {
public:
    LayerGrouping(std::vector<std::vector<int>> groups, int head_count);

    int head_count() const { return head_count_; }
    int group_count() const { return static_cast<int>(groups_.size()); }
    const std::vector<std::vector<int>>& groups() const { return groups_; }

    // Index of the group containing the given head.
    int group_of(int head) const;

    bool operator==(const LayerGrouping&) const = default;

    static LayerGrouping singletons(int head_count);
    static LayerGrouping single_group(int head_count);

private:
    std::vector<std::vector<int>> groups_;
    int head_count_ = 0;
};

// Arbitrary-cardinality genome: labels[i] is the group of head i, each label
// in {0..max_groups-1}. Unused labels are legal and shrink the effective
// group count.
struct AcCandidate {
    std::vector<int> labels;
    int max_groups = 0;

    int head_count() const { return static_cast<int>(labels.size()); }
    bool operator==(const AcCandidate&) const = default;
};

// Equal-cardinality genome: a permutation of {0..H-1}; each consecutive block
// of block_size positions forms one group.
struct EcCandidate {
    std::vector<int> perm;
    int block_size = 0;

    int head_count() const { return static_cast<int>(perm.size()); }
    int group_count() const { return block_size > 0 ? head_count() / block_size : 0; }
    bool operator==(const EcCandidate&) const = default;
};

// Per-layer choice: nullopt keeps the layer in its MHA form, a grouping
// replaces it with grouped attention.
struct ModelPlan {
    std::vector<std::optional<LayerGrouping>> per_layer;

    int layer_count() const { return static_cast<int>(per_layer.size()); }

    static ModelPlan all_mha(int layer_count);
    bool operator==(const ModelPlan&) const = default;
};

// One point of a Pareto front with the candidate that produced it. Fronts are
// kept sorted by ascending kv and mutually non-dominated.
template <typename Candidate>
struct FrontPoint {
    double kv = 1.0;
    double wse = 0.0;
    Candidate candidate;
};

template <typename Candidate>
using ParetoFront = std::vector<FrontPoint<Candidate>>;

LayerGrouping decode_ac(const AcCandidate& candidate, int head_count);
LayerGrouping decode_ec(const EcCandidate& candidate);

// Identity permutation with swap_count uniformly sampled position-pair swaps.
EcCandidate random_ec(int head_count, int group_count, int swap_count, Rng& rng);

// P consecutive equal blocks; P = 1 is the MQA grouping.
LayerGrouping gqa_baseline(int head_count, int group_count);

std::string describe(const AcCandidate& candidate);
std::string describe(const EcCandidate& candidate);

} // namespace qcqa

#endif
