#include "qcqa/attnsim.hpp"

#include <cmath>

#include "qcqa/wse.hpp"

namespace qcqa {

void AttentionInputs::validate() const
{
    if (queries.empty() || queries.size() != keys.size() || queries.size() != values.size()) {
        throw ShapeError("need equally many query, key and value heads (>= 1)");
    }
    for (std::size_t h = 0; h < queries.size(); ++h) {
        if (!queries[h].same_shape(queries.front()) || !keys[h].same_shape(queries.front())
            || !values[h].same_shape(queries.front())) {
            throw ShapeError("attention feature tensors must share one [T x d] shape");
        }
    }
}

namespace {

    // softmax(q k^T / sqrt(d)) v
    HeadMatrix attention_of(const HeadMatrix& q, const HeadMatrix& k, const HeadMatrix& v, bool causal_mask)
    {
        const int seq = q.rows();
        const int dim = q.cols();
        const double scale = 1.0 / std::sqrt(static_cast<double>(dim));

        HeadMatrix out(seq, dim);
        std::vector<double> logits(static_cast<std::size_t>(seq));
        for (int i = 0; i < seq; ++i) {
            const int visible = causal_mask ? i + 1 : seq;
            double max_logit = -std::numeric_limits<double>::infinity();
            for (int j = 0; j < visible; ++j) {
                double dot = 0.0;
                for (int c = 0; c < dim; ++c) {
                    dot += q(i, c) * k(j, c);
                }
                logits[j] = dot * scale;
                max_logit = std::max(max_logit, logits[j]);
            }
            if (!std::isfinite(max_logit)) {
                throw NumericError("attention logits are not finite");
            }
            double normalizer = 0.0;
            for (int j = 0; j < visible; ++j) {
                logits[j] = std::exp(logits[j] - max_logit);
                normalizer += logits[j];
            }
            for (int j = 0; j < visible; ++j) {
                const double weight = logits[j] / normalizer;
                for (int c = 0; c < dim; ++c) {
                    out(i, c) += weight * v(j, c);
                }
            }
        }
        return out;
    }

} // namespace

HeadMatrix mha_attention(const AttentionInputs& inputs, int head, bool causal_mask)
{
    inputs.validate();
    if (head < 0 || head >= inputs.head_count()) {
        throw PartitionError("head index out of range");
    }
    return attention_of(inputs.queries[head], inputs.keys[head], inputs.values[head], causal_mask);
}

HeadMatrix grouped_attention(const AttentionInputs& inputs, const LayerGrouping& grouping,
                             int head, bool causal_mask)
{
    inputs.validate();
    if (grouping.head_count() != inputs.head_count()) {
        throw PartitionError("grouping head count does not match inputs");
    }
    const auto& group = grouping.groups()[grouping.group_of(head)];
    const HeadMatrix pooled_k = mean_pool(inputs.keys, group);
    const HeadMatrix pooled_v = mean_pool(inputs.values, group);
    return attention_of(inputs.queries[head], pooled_k, pooled_v, causal_mask);
}

double divergence(const AttentionInputs& inputs, const LayerGrouping& grouping, bool causal_mask)
{
    inputs.validate();
    if (grouping.head_count() != inputs.head_count()) {
        throw PartitionError("grouping head count does not match inputs");
    }
    double total = 0.0;
    for (int head = 0; head < inputs.head_count(); ++head) {
        const HeadMatrix plain = mha_attention(inputs, head, causal_mask);
        const HeadMatrix grouped = grouped_attention(inputs, grouping, head, causal_mask);
        const auto a = plain.data();
        const auto b = grouped.data();
        double sum_sq = 0.0;
        for (std::size_t i = 0; i < a.size(); ++i) {
            const double d = a[i] - b[i];
            sum_sq += d * d;
        }
        total += sum_sq / static_cast<double>(a.size());
    }
    return total / static_cast<double>(inputs.head_count());
}

SynthLayer synth_layer(int heads, int seq_len, int head_dim, int model_dim, std::uint64_t seed)
{
    if (heads < 1 || seq_len < 1 || head_dim < 1 || model_dim < 1) {
        throw ConfigError("synthetic layer dimensions must be positive");
    }
    Rng rng(seed);
    const double weight_scale = 1.0 / std::sqrt(static_cast<double>(model_dim));

    const auto random_matrix = [&](int rows, int cols, double scale) {
        HeadMatrix m(rows, cols);
        for (double& v : m.data()) {
            v = scale * next_normal(rng);
        }
        return m;
    };

    SynthLayer layer;
    std::vector<HeadMatrix> query_weights;
    for (int h = 0; h < heads; ++h) {
        query_weights.push_back(random_matrix(head_dim, model_dim, weight_scale));
        layer.weights.keys.push_back(random_matrix(head_dim, model_dim, weight_scale));
        layer.weights.values.push_back(random_matrix(head_dim, model_dim, weight_scale));
    }
    layer.embeddings = random_matrix(seq_len, model_dim, 1.0);

    // features = embeddings * W^T, [T x d]
    const auto project = [&](const HeadMatrix& weight) {
        HeadMatrix features(seq_len, head_dim);
        for (int t = 0; t < seq_len; ++t) {
            for (int r = 0; r < head_dim; ++r) {
                double dot = 0.0;
                for (int c = 0; c < model_dim; ++c) {
                    dot += layer.embeddings(t, c) * weight(r, c);
                }
                features(t, r) = dot;
            }
        }
        return features;
    };

    for (int h = 0; h < heads; ++h) {
        layer.inputs.queries.push_back(project(query_weights[h]));
        layer.inputs.keys.push_back(project(layer.weights.keys[h]));
        layer.inputs.values.push_back(project(layer.weights.values[h]));
    }
    return layer;
}

} // namespace qcqa
