#include "qcqa/wse.hpp"

#include <algorithm>
#include <cmath>

namespace qcqa {

WseValue::WseValue(double v)
    : value(v)
{
    if (!std::isfinite(v) || v < 0.0) {
        throw NumericError("weight-sharing error must be finite and non-negative");
    }
}

HeadMatrix mean_pool(std::span<const HeadMatrix> heads, std::span<const int> group)
{
    if (group.empty()) {
        throw PartitionError("cannot pool an empty group");
    }
    for (int idx : group) {
        if (idx < 0 || static_cast<std::size_t>(idx) >= heads.size()) {
            throw PartitionError("group references a head outside the layer");
        }
        if (!heads[idx].same_shape(heads[group.front()])) {
            throw ShapeError("pooled heads must share a shape");
        }
    }
    const HeadMatrix& first = heads[group.front()];
    // Identical members pool to themselves bit-exactly; this also covers the
    // singleton case.
    const bool all_equal = std::all_of(group.begin(), group.end(),
                                       [&](int idx) { return heads[idx] == first; });
    if (all_equal) {
        return first;
    }
    HeadMatrix pooled(first.rows(), first.cols());
    auto out = pooled.data();
    for (int idx : group) {
        auto in = heads[idx].data();
        for (std::size_t i = 0; i < out.size(); ++i) {
            out[i] += in[i];
        }
    }
    const double scale = static_cast<double>(group.size());
    for (double& v : out) {
        v /= scale;
    }
    return pooled;
}

namespace {

    // Sum over groups and members of mean((M_i - pooled)^2).
    double grouped_deviation(std::span<const HeadMatrix> heads, const LayerGrouping& grouping)
    {
        double total = 0.0;
        for (const auto& group : grouping.groups()) {
            const HeadMatrix pooled = mean_pool(heads, group);
            const auto pooled_data = pooled.data();
            for (int idx : group) {
                const auto head_data = heads[idx].data();
                double sum_sq = 0.0;
                for (std::size_t i = 0; i < head_data.size(); ++i) {
                    const double d = head_data[i] - pooled_data[i];
                    sum_sq += d * d;
                }
                total += sum_sq / static_cast<double>(head_data.size());
            }
        }
        return total;
    }

} // namespace

WseValue layer_wse(const LayerWeights& layer, const LayerGrouping& grouping, const WseWeights& weights)
{
    layer.validate();
    if (grouping.head_count() != layer.head_count()) {
        throw PartitionError("grouping head count does not match layer");
    }
    const double key_term = grouped_deviation(layer.keys, grouping);
    const double value_term = grouped_deviation(layer.values, grouping);
    return WseValue(weights.key * key_term + weights.value * value_term);
}

WseValue model_wse(const WeightArchive& archive, const ModelPlan& plan, const WseWeights& weights)
{
    if (plan.layer_count() != archive.layer_count()) {
        throw PlanError("plan length does not match archive layer count");
    }
    double total = 0.0;
    for (int i = 0; i < plan.layer_count(); ++i) {
        if (plan.per_layer[i]) {
            total += layer_wse(archive.layers[i], *plan.per_layer[i], weights).value;
        }
    }
    return WseValue(total);
}

WseValue feature_wse(std::span<const HeadMatrix> key_features,
                     std::span<const HeadMatrix> value_features,
                     const LayerGrouping& grouping,
                     const WseWeights& weights)
{
    if (key_features.size() != value_features.size()
        || static_cast<int>(key_features.size()) != grouping.head_count()) {
        throw ShapeError("feature lists must match the grouping's head count");
    }
    const double key_term = grouped_deviation(key_features, grouping);
    const double value_term = grouped_deviation(value_features, grouping);
    return WseValue(weights.key * key_term + weights.value * value_term);
}

} // namespace qcqa
