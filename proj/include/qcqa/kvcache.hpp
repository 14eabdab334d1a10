#ifndef QCQA_KVCACHE_HPP
#define QCQA_KVCACHE_HPP

#include "qcqa/core.hpp"

namespace qcqa {

// KV-cache size normalized by the MHA baseline; batch, sequence length and
// head dimension cancel, leaving retained heads over original heads.
struct KvFraction {
    double value = 1.0;

    KvFraction() = default;
    explicit KvFraction(double v);
};

// group count / H for one layer.
KvFraction layer_kv_fraction(const LayerGrouping& grouping, int head_count);

// Retained key/value heads of the whole plan over H * layer_count; MHA layers
// retain all H heads.
KvFraction model_kv_fraction(const ModelPlan& plan, int head_count);

} // namespace qcqa

#endif
