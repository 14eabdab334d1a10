#ifndef QCQA_ORACLE_HPP
#define QCQA_ORACLE_HPP

#include <cstdint>
#include <optional>
#include <vector>

#include <boost/multiprecision/cpp_int.hpp>

#include "qcqa/core.hpp"
#include "qcqa/wse.hpp"

namespace qcqa {

using BigInt = boost::multiprecision::cpp_int;

// Stirling number of the second kind, exact.
BigInt stirling2(int n, int k);

// Number of partitions of an n-set into at most max_groups blocks.
BigInt partition_count(int head_count, int max_groups);

// Walks every partition of {0..H-1} with at most max_groups blocks exactly
// once, in restricted-growth-string lexicographic order. Construction refuses
// enumerations beyond kBudget partitions.
class PartitionIterator {
public:
    static constexpr std::int64_t kBudget = 10'000'000;

    PartitionIterator(int head_count, int max_groups);

    std::optional<LayerGrouping> next();

private:
    int head_count_;
    int max_groups_;
    std::vector<int> rgs_;
    bool started_ = false;
    bool done_ = false;
};

// Evaluates every admissible partition of one layer and returns the exact
// non-dominated (kv, wse) set, ordered by ascending kv.
ParetoFront<LayerGrouping> exact_pareto(const LayerWeights& layer, int max_groups,
                                        const WseWeights& weights = {});

// Exact front over all 2^nlayers keep-or-group selections for fixed per-layer
// groupings. Refuses more than 2^20 combinations.
ParetoFront<ModelPlan> exact_plan_front(const WeightArchive& archive,
                                        const std::vector<LayerGrouping>& per_layer,
                                        const WseWeights& weights = {});

} // namespace qcqa

#endif
