#ifndef QCQA_NSGA2_HPP
#define QCQA_NSGA2_HPP

#include <concepts>
#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "qcqa/core.hpp"
#include "qcqa/parallel.hpp"
#include "qcqa/rng.hpp"

namespace qcqa {

// Fitness pair, both objectives minimized.
struct ObjectivePoint {
    double wse = 0.0;
    double kv = 1.0;

    bool operator==(const ObjectivePoint&) const = default;
};

// a dominates b: no worse in both objectives, strictly better in one.
inline bool dominates(const ObjectivePoint& a, const ObjectivePoint& b)
{
    return a.wse <= b.wse && a.kv <= b.kv && (a.wse < b.wse || a.kv < b.kv);
}

// Deb's fast non-dominated sort; rank 0 is the non-dominated set.
std::vector<int> fast_nondominated_sort(std::span<const ObjectivePoint> points);

// Crowding distance within one front. Boundary points per objective get
// +infinity; fronts of size <= 2 are all infinite; objectives with zero range
// contribute nothing. Duplicate objective points: the first copy carries the
// distinct-point distance, later copies get 0, so truncation sheds duplicates
// before losing coverage.
std::vector<double> crowding_distance(std::span<const ObjectivePoint> front);

// Indices of the non-dominated subset, in input order.
std::vector<std::size_t> nondominated_indices(std::span<const ObjectivePoint> points);

// Area dominated by the (minimized) points up to the reference corner.
double hypervolume(std::span<const ObjectivePoint> points, ObjectivePoint reference);

struct VariationRates {
    double crossover_prob = 0.9;
    double mutation_prob = 0.1; // per position (AC labels, selection bits)
    int max_swaps = 2;          // EC mutation draws a swap count from {0..max_swaps}
    double merge_prob = 0.2;    // AC only: chance to fuse two label classes

    static VariationRates defaults_for(int genome_length)
    {
        VariationRates rates;
        rates.mutation_prob = genome_length > 0 ? 1.0 / genome_length : 0.0;
        return rates;
    }
};

// Uniform crossover, then per-position label resets, then possibly one
// class-merge move (all positions of one used label adopt another used
// label). Resets split groups but almost never coalesce them, so without the
// merge move the coarse end of the front is unreachable in practice.
std::pair<AcCandidate, AcCandidate> vary_ac(const AcCandidate& a, const AcCandidate& b,
                                            const VariationRates& rates, Rng& rng);

// Order crossover then transposition mutation; children stay permutations.
std::pair<EcCandidate, EcCandidate> vary_ec(const EcCandidate& a, const EcCandidate& b,
                                            const VariationRates& rates, Rng& rng);

// Keeps positions [lo, hi) of `a` and fills the rest with the missing values
// in `b` order. Exposed for direct testing.
EcCandidate order_crossover(const EcCandidate& a, const EcCandidate& b, int lo, int hi);

// Layer-selection genome for the second search stage: 1 applies the layer's
// grouping, 0 keeps the layer as MHA.
using LayerMask = std::vector<std::uint8_t>;

// Uniform crossover then per-bit flips.
std::pair<LayerMask, LayerMask> vary_mask(const LayerMask& a, const LayerMask& b,
                                          const VariationRates& rates, Rng& rng);

std::string describe(const LayerMask& mask);

template <typename Genome>
struct Population {
    std::vector<Genome> members;
    std::vector<ObjectivePoint> points;

    std::size_t size() const { return members.size(); }
};

struct EvolveOptions {
    int generations = 1;
    std::uint64_t seed = 0;
    int threads = 1;
};

namespace detail {

    struct RankedPoints {
        std::vector<int> rank;
        std::vector<double> crowding;
    };

    RankedPoints rank_population(std::span<const ObjectivePoint> points);

    // Binary tournament on (rank asc, crowding desc), ties to the lower index.
    std::size_t tournament(Rng& rng, const RankedPoints& ranked, std::size_t size);

    // Survivor order for mu+lambda truncation: rank asc, crowding desc, index asc.
    std::vector<std::size_t> selection_order(const RankedPoints& ranked, std::size_t size);

    template <typename G>
    concept DescribableGenome = requires(const G& g) {
        { describe(g) } -> std::convertible_to<std::string>;
    };

    template <typename Genome>
    std::string genome_label(const Genome& genome, std::size_t index)
    {
        if constexpr (DescribableGenome<Genome>) {
            return describe(genome);
        } else {
            return "member #" + std::to_string(index);
        }
    }

    template <typename Genome>
    void evaluate_all(const std::vector<Genome>& genomes, std::vector<ObjectivePoint>& out,
                      const std::function<ObjectivePoint(const Genome&)>& evaluate, int threads)
    {
        out.resize(genomes.size());
        parallel_indexed(genomes.size(), threads, [&](std::size_t i) {
            try {
                out[i] = evaluate(genomes[i]);
            } catch (const std::exception& e) {
                throw Error("fitness evaluation failed for " + genome_label(genomes[i], i) + ": " + e.what());
            }
        });
    }

} // namespace detail

template <typename Genome>
using GenerationObserver = std::function<void(int generation, const Population<Genome>&)>;

// Standard elitist NSGA-II generational loop: binary tournament parent
// selection, caller-supplied variation, mu+lambda truncation by
// (rank, crowding). Deterministic for a fixed seed: all random draws happen
// on the calling thread, fitness evaluation may fan out over `threads`.
template <typename Genome>
Population<Genome> evolve(Population<Genome> initial,
                          const std::function<ObjectivePoint(const Genome&)>& evaluate,
                          const std::function<std::pair<Genome, Genome>(const Genome&, const Genome&, Rng&)>& vary,
                          const EvolveOptions& options,
                          const GenerationObserver<Genome>& observer = {})
{
    const std::size_t pop_size = initial.members.size();
    if (pop_size < 4 || pop_size % 2 != 0) {
        throw ConfigError("population size must be even and at least 4");
    }
    if (options.generations < 1) {
        throw ConfigError("generation count must be positive");
    }
    if (initial.points.empty()) {
        detail::evaluate_all(initial.members, initial.points, evaluate, options.threads);
    } else if (initial.points.size() != pop_size) {
        throw ConfigError("population members and points differ in length");
    }

    Rng rng(options.seed);
    Population<Genome> pop = std::move(initial);
    if (observer) {
        observer(0, pop);
    }

    std::vector<Genome> children;
    std::vector<ObjectivePoint> child_points;
    children.reserve(pop_size);
    for (int gen = 1; gen <= options.generations; ++gen) {
        const detail::RankedPoints ranked = detail::rank_population(pop.points);

        children.clear();
        while (children.size() < pop_size) {
            const std::size_t p1 = detail::tournament(rng, ranked, pop_size);
            const std::size_t p2 = detail::tournament(rng, ranked, pop_size);
            auto [c1, c2] = vary(pop.members[p1], pop.members[p2], rng);
            children.push_back(std::move(c1));
            children.push_back(std::move(c2));
        }
        detail::evaluate_all(children, child_points, evaluate, options.threads);

        Population<Genome> combined;
        combined.members.reserve(2 * pop_size);
        combined.points.reserve(2 * pop_size);
        combined.members = std::move(pop.members);
        combined.points = std::move(pop.points);
        for (std::size_t i = 0; i < pop_size; ++i) {
            combined.members.push_back(std::move(children[i]));
            combined.points.push_back(child_points[i]);
        }

        const detail::RankedPoints combined_ranked = detail::rank_population(combined.points);
        const std::vector<std::size_t> order = detail::selection_order(combined_ranked, combined.size());

        pop.members.clear();
        pop.points.clear();
        pop.members.reserve(pop_size);
        pop.points.reserve(pop_size);
        for (std::size_t i = 0; i < pop_size; ++i) {
            pop.members.push_back(std::move(combined.members[order[i]]));
            pop.points.push_back(combined.points[order[i]]);
        }
        if (observer) {
            observer(gen, pop);
        }
    }
    return pop;
}

} // namespace qcqa

#endif
