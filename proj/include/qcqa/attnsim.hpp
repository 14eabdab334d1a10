#ifndef QCQA_ATTNSIM_HPP
#define QCQA_ATTNSIM_HPP

#include <cstdint>
#include <vector>

#include "qcqa/core.hpp"

namespace qcqa {

// Per-head query/key/value feature tensors of one layer, each [T x d].
struct AttentionInputs {
    std::vector<HeadMatrix> queries;
    std::vector<HeadMatrix> keys;
    std::vector<HeadMatrix> values;

    int head_count() const { return static_cast<int>(queries.size()); }
    int seq_len() const { return queries.empty() ? 0 : queries.front().rows(); }
    int head_dim() const { return queries.empty() ? 0 : queries.front().cols(); }

    void validate() const;
};

// softmax(Q K^T / sqrt(d)) V for one head.
HeadMatrix mha_attention(const AttentionInputs& inputs, int head, bool causal_mask = false);

// Attention of one head's query against its group's mean-pooled key and value
// features.
HeadMatrix grouped_attention(const AttentionInputs& inputs, const LayerGrouping& grouping,
                             int head, bool causal_mask = false);

// Mean over heads of the mean squared difference between plain and grouped
// attention outputs.
double divergence(const AttentionInputs& inputs, const LayerGrouping& grouping, bool causal_mask = false);

struct SynthLayer {
    LayerWeights weights;
    AttentionInputs inputs;
    HeadMatrix embeddings; // [T x d_model] token embeddings behind the features
};

// Deterministic synthetic fixture: Gaussian projection weights scaled by
// 1/sqrt(d_model), random token embeddings, features = embeddings * W^T.
SynthLayer synth_layer(int heads, int seq_len, int head_dim, int model_dim, std::uint64_t seed);

} // namespace qcqa

#endif
