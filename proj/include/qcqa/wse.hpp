#ifndef QCQA_WSE_HPP
#define QCQA_WSE_HPP

#include <span>

#include "qcqa/core.hpp"

namespace qcqa {

// Coefficients of the key and value terms of the weight-sharing error.
struct WseWeights {
    double key = 1.0;
    double value = 1.0;
};

// Non-negative, finite sum of mean-squared deviations.
struct WseValue {
    double value = 0.0;

    WseValue() = default;
    explicit WseValue(double v);
};

// Element-wise arithmetic mean over the group's matrices.
HeadMatrix mean_pool(std::span<const HeadMatrix> heads, std::span<const int> group);

// Sum over groups and member heads of the per-entry mean squared deviation of
// the key and value weights from their group means. Zero exactly when every
// group's member matrices are identical.
WseValue layer_wse(const LayerWeights& layer, const LayerGrouping& grouping, const WseWeights& weights = {});

// Sum of layer_wse over the plan's grouped layers; MHA layers contribute 0.
WseValue model_wse(const WeightArchive& archive, const ModelPlan& plan, const WseWeights& weights = {});

// Same deviation sum evaluated over per-head feature tensors instead of
// projection weights.
WseValue feature_wse(std::span<const HeadMatrix> key_features,
                     std::span<const HeadMatrix> value_features,
                     const LayerGrouping& grouping,
                     const WseWeights& weights = {});

} // namespace qcqa

#endif
