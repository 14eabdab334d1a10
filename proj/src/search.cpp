#include "qcqa/search.hpp"

#include <algorithm>
#include <cmath>

#include "qcqa/kvcache.hpp"
#include "qcqa/parallel.hpp"

namespace qcqa {

namespace {

    // Distinct stream per derived purpose so initial sampling and the evolve
    // loop never share draws.
    constexpr std::uint64_t kSeedGamma = 0x9e3779b97f4a7c15ull;

    // Rank-0 members of the final population mapped to candidates; duplicate
    // objective points keep the first member, result sorted by ascending kv.
    template <typename Genome, typename ToCandidate>
    auto extract_front(const Population<Genome>& pop, ToCandidate to_candidate)
        -> ParetoFront<decltype(to_candidate(pop.members.front()))>
    {
        using Candidate = decltype(to_candidate(pop.members.front()));
        const std::vector<int> rank = fast_nondominated_sort(pop.points);
        ParetoFront<Candidate> front;
        for (std::size_t i = 0; i < pop.size(); ++i) {
            if (rank[i] != 0) {
                continue;
            }
            const bool duplicate = std::any_of(front.begin(), front.end(), [&](const auto& p) {
                return p.kv == pop.points[i].kv && p.wse == pop.points[i].wse;
            });
            if (!duplicate) {
                front.push_back({ pop.points[i].kv, pop.points[i].wse, to_candidate(pop.members[i]) });
            }
        }
        std::sort(front.begin(), front.end(), [](const auto& a, const auto& b) { return a.kv < b.kv; });
        return front;
    }

    void check_options(const SearchOptions& options)
    {
        if (options.pop_size < 4 || options.pop_size % 2 != 0) {
            throw ConfigError("population size must be even and at least 4");
        }
        if (options.generations < 1) {
            throw ConfigError("generation count must be positive");
        }
    }

} // namespace

const std::vector<LayerGrouping>& PercentileBuckets::at_percentile(int percentile) const
{
    for (std::size_t b = 0; b < kPercentiles.size(); ++b) {
        if (kPercentiles[b] == percentile) {
            return buckets[b];
        }
    }
    throw ConfigError("percentile must be one of 0, 25, 50, 75, 100");
}

int percentile_index(int size, int percentile)
{
    if (size < 1) {
        throw ConfigError("cannot take a percentile of an empty front");
    }
    if (percentile < 0 || percentile > 100) {
        throw ConfigError("percentile must lie in [0, 100]");
    }
    if (percentile == 0) {
        return 0;
    }
    const int rank = static_cast<int>(std::ceil(percentile / 100.0 * size));
    return rank - 1;
}

ParetoFront<LayerGrouping> layer_grouping_front(const LayerWeights& layer, int max_groups,
                                                Encoding encoding, const SearchOptions& options)
{
    layer.validate();
    check_options(options);
    const int heads = layer.head_count();
    if (max_groups < 1 || max_groups > heads) {
        throw ConfigError("need 1 <= max_groups <= head count");
    }

    const VariationRates rates = VariationRates::defaults_for(heads);
    EvolveOptions evolve_options;
    evolve_options.generations = options.generations;
    evolve_options.seed = options.seed + kSeedGamma;
    evolve_options.threads = options.threads;

    Rng init_rng(options.seed);

    if (encoding == Encoding::ac) {
        Population<AcCandidate> initial;
        initial.members.reserve(static_cast<std::size_t>(options.pop_size));
        for (int i = 0; i < options.pop_size; ++i) {
            AcCandidate candidate;
            candidate.max_groups = max_groups;
            candidate.labels.resize(static_cast<std::size_t>(heads));
            for (int& label : candidate.labels) {
                label = static_cast<int>(next_below(init_rng, static_cast<std::uint64_t>(max_groups)));
            }
            initial.members.push_back(std::move(candidate));
        }
        const auto final_pop = evolve<AcCandidate>(
            std::move(initial),
            [&](const AcCandidate& g) {
                const LayerGrouping grouping = decode_ac(g, heads);
                return ObjectivePoint{ layer_wse(layer, grouping, options.wse_weights).value,
                                       layer_kv_fraction(grouping, heads).value };
            },
            [&](const AcCandidate& a, const AcCandidate& b, Rng& rng) { return vary_ac(a, b, rates, rng); },
            evolve_options);
        return extract_front(final_pop, [&](const AcCandidate& g) { return decode_ac(g, heads); });
    }

    if (heads % max_groups != 0) {
        throw ConfigError("equal-cardinality encoding needs max_groups to divide head count");
    }
    Population<EcCandidate> initial;
    initial.members.reserve(static_cast<std::size_t>(options.pop_size));
    for (int i = 0; i < options.pop_size; ++i) {
        initial.members.push_back(random_ec(heads, max_groups, heads, init_rng));
    }
    const auto final_pop = evolve<EcCandidate>(
        std::move(initial),
        [&](const EcCandidate& g) {
            const LayerGrouping grouping = decode_ec(g);
            return ObjectivePoint{ layer_wse(layer, grouping, options.wse_weights).value,
                                   layer_kv_fraction(grouping, heads).value };
        },
        [&](const EcCandidate& a, const EcCandidate& b, Rng& rng) { return vary_ec(a, b, rates, rng); },
        evolve_options);
    return extract_front(final_pop, [](const EcCandidate& g) { return decode_ec(g); });
}

PercentileBuckets qcqa_groups(const WeightArchive& archive, int max_groups,
                              Encoding encoding, const SearchOptions& options)
{
    archive.validate();
    archive.heads_per_layer();
    check_options(options);
    const int layers = archive.layer_count();

    std::vector<ParetoFront<LayerGrouping>> fronts(static_cast<std::size_t>(layers));
    parallel_indexed(static_cast<std::size_t>(layers), options.threads, [&](std::size_t i) {
        SearchOptions layer_options = options;
        layer_options.seed = options.seed + i;
        layer_options.threads = 1; // parallelism is across layers here
        fronts[i] = layer_grouping_front(archive.layers[i], max_groups, encoding, layer_options);
    });

    PercentileBuckets collated;
    for (std::size_t b = 0; b < kPercentiles.size(); ++b) {
        collated.buckets[b].reserve(static_cast<std::size_t>(layers));
        for (int i = 0; i < layers; ++i) {
            const auto& front = fronts[i];
            if (front.empty()) {
                throw Error("layer " + std::to_string(i) + " produced an empty front");
            }
            const int idx = percentile_index(static_cast<int>(front.size()), kPercentiles[b]);
            collated.buckets[b].push_back(front[idx].candidate);
        }
    }
    return collated;
}

ParetoFront<ModelPlan> qcqa_select_layers(const WeightArchive& archive, const PercentileBuckets& buckets,
                                          int percentile, const SearchOptions& options)
{
    archive.validate();
    const int heads = archive.heads_per_layer();
    check_options(options);
    const int layers = archive.layer_count();
    const std::vector<LayerGrouping>& chosen = buckets.at_percentile(percentile);
    if (static_cast<int>(chosen.size()) != layers) {
        throw PlanError("bucket length does not match archive layer count");
    }

    // Per-layer contributions are fixed by the bucket, so fitness reduces to
    // masked sums identical to model_wse / model_kv_fraction.
    std::vector<double> layer_errors(static_cast<std::size_t>(layers));
    std::vector<int> layer_groups(static_cast<std::size_t>(layers));
    for (int i = 0; i < layers; ++i) {
        layer_errors[i] = layer_wse(archive.layers[i], chosen[i], options.wse_weights).value;
        layer_groups[i] = chosen[i].group_count();
    }
    const double baseline = static_cast<double>(static_cast<long long>(heads) * layers);

    const VariationRates rates = VariationRates::defaults_for(layers);
    EvolveOptions evolve_options;
    evolve_options.generations = options.generations;
    evolve_options.seed = options.seed + kSeedGamma;
    evolve_options.threads = options.threads;

    Rng init_rng(options.seed);
    Population<LayerMask> initial;
    initial.members.reserve(static_cast<std::size_t>(options.pop_size));
    for (int i = 0; i < options.pop_size; ++i) {
        LayerMask mask(static_cast<std::size_t>(layers));
        for (auto& bit : mask) {
            bit = next_bool(init_rng, 0.5) ? 1 : 0;
        }
        initial.members.push_back(std::move(mask));
    }

    const auto final_pop = evolve<LayerMask>(
        std::move(initial),
        [&](const LayerMask& mask) {
            double wse = 0.0;
            long long retained = 0;
            for (int i = 0; i < layers; ++i) {
                if (mask[i]) {
                    wse += layer_errors[i];
                    retained += layer_groups[i];
                } else {
                    retained += heads;
                }
            }
            return ObjectivePoint{ wse, static_cast<double>(retained) / baseline };
        },
        [&](const LayerMask& a, const LayerMask& b, Rng& rng) { return vary_mask(a, b, rates, rng); },
        evolve_options);

    return extract_front(final_pop, [&](const LayerMask& mask) {
        ModelPlan plan = ModelPlan::all_mha(layers);
        for (int i = 0; i < layers; ++i) {
            if (mask[i]) {
                plan.per_layer[i] = chosen[i];
            }
        }
        return plan;
    });
}

ParetoFront<ModelPlan> qcqa_select_all_buckets(const WeightArchive& archive, const PercentileBuckets& buckets,
                                               const SearchOptions& options)
{
    std::vector<ParetoFront<ModelPlan>> fronts;
    fronts.reserve(kPercentiles.size());
    for (std::size_t b = 0; b < kPercentiles.size(); ++b) {
        SearchOptions bucket_options = options;
        bucket_options.seed = options.seed + b;
        fronts.push_back(qcqa_select_layers(archive, buckets, kPercentiles[b], bucket_options));
    }
    return nondominated_union(fronts);
}

ParetoFront<ModelPlan> nondominated_union(const std::vector<ParetoFront<ModelPlan>>& fronts)
{
    ParetoFront<ModelPlan> merged;
    for (const auto& front : fronts) {
        merged.insert(merged.end(), front.begin(), front.end());
    }
    std::vector<ObjectivePoint> points;
    points.reserve(merged.size());
    for (const auto& p : merged) {
        points.push_back({ p.wse, p.kv });
    }
    ParetoFront<ModelPlan> result;
    for (std::size_t i : nondominated_indices(points)) {
        const bool duplicate = std::any_of(result.begin(), result.end(), [&](const auto& p) {
            return p.kv == merged[i].kv && p.wse == merged[i].wse;
        });
        if (!duplicate) {
            result.push_back(merged[i]);
        }
    }
    std::sort(result.begin(), result.end(), [](const auto& a, const auto& b) { return a.kv < b.kv; });
    return result;
}

} // namespace qcqa
