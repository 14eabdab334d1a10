#include "qcqa/kvcache.hpp"

#include <cmath>

namespace qcqa {

KvFraction::KvFraction(double v)
    : value(v)
{
    if (!std::isfinite(v) || v <= 0.0 || v > 1.0) {
        throw NumericError("kv fraction must lie in (0, 1]");
    }
}

KvFraction layer_kv_fraction(const LayerGrouping& grouping, int head_count)
{
    if (grouping.head_count() != head_count) {
        throw PartitionError("grouping head count does not match layer");
    }
    return KvFraction(static_cast<double>(grouping.group_count()) / static_cast<double>(head_count));
}

KvFraction model_kv_fraction(const ModelPlan& plan, int head_count)
{
    if (plan.layer_count() < 1) {
        throw PlanError("plan has no layers");
    }
    long long retained = 0;
    for (const auto& choice : plan.per_layer) {
        if (choice) {
            if (choice->head_count() != head_count) {
                throw PlanError("plan grouping head count does not match model");
            }
            retained += choice->group_count();
        } else {
            retained += head_count;
        }
    }
    const long long baseline = static_cast<long long>(head_count) * plan.layer_count();
    return KvFraction(static_cast<double>(retained) / static_cast<double>(baseline));
}

} // namespace qcqa
