#ifndef QCQA_SEARCH_HPP
#define QCQA_SEARCH_HPP

#include <array>
#include <cstdint>
#include <vector>

#include "qcqa/core.hpp"
#include "qcqa/nsga2.hpp"
#include "qcqa/wse.hpp"

namespace qcqa {

enum class Encoding {
    ac, // arbitrary-cardinality label vector
    ec, // equal-cardinality permutation blocks
};

inline constexpr std::array<int, 5> kPercentiles{ 0, 25, 50, 75, 100 };

struct SearchOptions {
    int pop_size = 64;
    int generations = 200;
    std::uint64_t seed = 42;
    int threads = 1;
    WseWeights wse_weights{};
};

// One collated grouping per layer at each of the five KV-fraction percentiles
// of the per-layer fronts.
struct PercentileBuckets {
    std::array<std::vector<LayerGrouping>, 5> buckets;

    int layer_count() const { return static_cast<int>(buckets.front().size()); }
    const std::vector<LayerGrouping>& at_percentile(int percentile) const;
};

// Nearest-rank percentile index into a sorted list of the given size.
int percentile_index(int size, int percentile);

// Evolves groupings of a single layer against (wse, kv) and returns the final
// rank-0 front, deduplicated and sorted by ascending kv.
ParetoFront<LayerGrouping> layer_grouping_front(const LayerWeights& layer, int max_groups,
                                                Encoding encoding, const SearchOptions& options);

// First stage: per-layer grouping search, collated into percentile buckets.
// Layers search independently (seed + layer offset) and may run concurrently.
PercentileBuckets qcqa_groups(const WeightArchive& archive, int max_groups,
                              Encoding encoding, const SearchOptions& options);

// Second stage: evolves keep-MHA-or-group selections over one bucket's
// groupings against (model wse, model kv) and returns the rank-0 front.
ParetoFront<ModelPlan> qcqa_select_layers(const WeightArchive& archive, const PercentileBuckets& buckets,
                                          int percentile, const SearchOptions& options);

// Runs the second stage for every bucket and merges the fronts.
ParetoFront<ModelPlan> qcqa_select_all_buckets(const WeightArchive& archive, const PercentileBuckets& buckets,
                                               const SearchOptions& options);

// Non-dominated, kv-sorted union; equal objective pairs keep the first plan.
ParetoFront<ModelPlan> nondominated_union(const std::vector<ParetoFront<ModelPlan>>& fronts);

} // namespace qcqa

#endif
