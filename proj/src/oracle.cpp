#include "qcqa/oracle.hpp"

#include <algorithm>

#include "qcqa/kvcache.hpp"

namespace qcqa {

BigInt stirling2(int n, int k)
{
    if (n < 0 || k < 0) {
        throw ConfigError("stirling2 arguments must be non-negative");
    }
    if (k > n) {
        return 0;
    }
    if (n == 0) {
        return k == 0 ? 1 : 0;
    }
    if (k == 0) {
        return 0;
    }
    // S(n, k) = k * S(n-1, k) + S(n-1, k-1), rolled over one row.
    std::vector<BigInt> row(static_cast<std::size_t>(k) + 1, 0);
    row[0] = 1; // S(0, 0)
    for (int i = 1; i <= n; ++i) {
        for (int j = std::min(i, k); j >= 1; --j) {
            row[j] = j * row[j] + row[j - 1];
        }
        row[0] = 0;
    }
    return row[k];
}

BigInt partition_count(int head_count, int max_groups)
{
    BigInt total = 0;
    for (int k = 1; k <= max_groups; ++k) {
        total += stirling2(head_count, k);
    }
    return total;
}

PartitionIterator::PartitionIterator(int head_count, int max_groups)
    : head_count_(head_count)
    , max_groups_(max_groups)
{
    if (head_count < 1 || max_groups < 1 || max_groups > head_count) {
        throw ConfigError("need 1 <= max_groups <= head count");
    }
    const BigInt total = partition_count(head_count, max_groups);
    if (total > kBudget) {
        throw BudgetError("enumeration of " + total.str() + " partitions exceeds the budget of "
                          + std::to_string(kBudget));
    }
    rgs_.assign(static_cast<std::size_t>(head_count), 0);
}

std::optional<LayerGrouping> PartitionIterator::next()
{
    if (done_) {
        return std::nullopt;
    }
    if (started_) {
        // Advance to the next restricted growth string: bump the rightmost
        // position that may grow, reset everything after it to 0.
        int pos = head_count_ - 1;
        for (; pos >= 1; --pos) {
            int prefix_max = 0;
            for (int i = 0; i < pos; ++i) {
                prefix_max = std::max(prefix_max, rgs_[i]);
            }
            const int cap = std::min(prefix_max + 1, max_groups_ - 1);
            if (rgs_[pos] < cap) {
                ++rgs_[pos];
                std::fill(rgs_.begin() + pos + 1, rgs_.end(), 0);
                break;
            }
        }
        if (pos < 1) {
            done_ = true;
            return std::nullopt;
        }
    }
    started_ = true;

    int block_count = 0;
    for (int label : rgs_) {
        block_count = std::max(block_count, label + 1);
    }
    std::vector<std::vector<int>> groups(static_cast<std::size_t>(block_count));
    for (int h = 0; h < head_count_; ++h) {
        groups[rgs_[h]].push_back(h);
    }
    return LayerGrouping(std::move(groups), head_count_);
}

namespace {

    // Incremental non-dominated archive; duplicate objective points keep the
    // first-seen candidate.
    template <typename Candidate>
    class FrontArchive {
    public:
        void offer(double kv, double wse, const Candidate& candidate)
        {
            for (const auto& p : points_) {
                const bool no_worse = p.kv <= kv && p.wse <= wse;
                if (no_worse) {
                    return; // dominated or duplicate
                }
            }
            std::erase_if(points_, [&](const FrontPoint<Candidate>& p) {
                return kv <= p.kv && wse <= p.wse;
            });
            points_.push_back(FrontPoint<Candidate>{ kv, wse, candidate });
        }

        ParetoFront<Candidate> take()
        {
            std::sort(points_.begin(), points_.end(),
                      [](const FrontPoint<Candidate>& a, const FrontPoint<Candidate>& b) { return a.kv < b.kv; });
            return std::move(points_);
        }

    private:
        ParetoFront<Candidate> points_;
    };

} // namespace

ParetoFront<LayerGrouping> exact_pareto(const LayerWeights& layer, int max_groups, const WseWeights& weights)
{
    layer.validate();
    PartitionIterator it(layer.head_count(), max_groups);
    FrontArchive<LayerGrouping> archive;
    while (auto grouping = it.next()) {
        const double kv = layer_kv_fraction(*grouping, layer.head_count()).value;
        const double wse = layer_wse(layer, *grouping, weights).value;
        archive.offer(kv, wse, *grouping);
    }
    return archive.take();
}

ParetoFront<ModelPlan> exact_plan_front(const WeightArchive& archive,
                                        const std::vector<LayerGrouping>& per_layer,
                                        const WseWeights& weights)
{
    archive.validate();
    const int layers = archive.layer_count();
    const int heads = archive.heads_per_layer();
    if (static_cast<int>(per_layer.size()) != layers) {
        throw PlanError("per-layer groupings do not match archive layer count");
    }
    if (layers > 20) {
        throw BudgetError("exhaustive layer-selection walk limited to 2^20 combinations");
    }

    std::vector<double> layer_errors(per_layer.size());
    std::vector<int> layer_groups(per_layer.size());
    for (int i = 0; i < layers; ++i) {
        layer_errors[i] = layer_wse(archive.layers[i], per_layer[i], weights).value;
        layer_groups[i] = per_layer[i].group_count();
    }

    FrontArchive<std::uint32_t> masks;
    const std::uint32_t combinations = 1u << layers;
    for (std::uint32_t mask = 0; mask < combinations; ++mask) {
        double wse = 0.0;
        long long retained = 0;
        for (int i = 0; i < layers; ++i) {
            if (mask & (1u << i)) {
                wse += layer_errors[i];
                retained += layer_groups[i];
            } else {
                retained += heads;
            }
        }
        const double kv = static_cast<double>(retained) / static_cast<double>(static_cast<long long>(heads) * layers);
        masks.offer(kv, wse, mask);
    }

    ParetoFront<ModelPlan> front;
    for (const auto& point : masks.take()) {
        ModelPlan plan = ModelPlan::all_mha(layers);
        for (int i = 0; i < layers; ++i) {
            if (point.candidate & (1u << i)) {
                plan.per_layer[i] = per_layer[i];
            }
        }
        front.push_back(FrontPoint<ModelPlan>{ point.kv, point.wse, std::move(plan) });
    }
    return front;
}

} // namespace qcqa
