#include "qcqa/nsga2.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <sstream>

namespace qcqa {

std::vector<int> fast_nondominated_sort(std::span<const ObjectivePoint> points)
{
    const std::size_t n = points.size();
    std::vector<int> rank(n, -1);
    std::vector<int> dominated_by(n, 0);
    std::vector<std::vector<std::size_t>> dominates_list(n);

    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t j = i + 1; j < n; ++j) {
            if (dominates(points[i], points[j])) {
                dominates_list[i].push_back(j);
                ++dominated_by[j];
            } else if (dominates(points[j], points[i])) {
                dominates_list[j].push_back(i);
                ++dominated_by[i];
            }
        }
    }

    std::vector<std::size_t> current;
    for (std::size_t i = 0; i < n; ++i) {
        if (dominated_by[i] == 0) {
            rank[i] = 0;
            current.push_back(i);
        }
    }
    int level = 0;
    while (!current.empty()) {
        std::vector<std::size_t> next;
        for (std::size_t i : current) {
            for (std::size_t j : dominates_list[i]) {
                if (--dominated_by[j] == 0) {
                    rank[j] = level + 1;
                    next.push_back(j);
                }
            }
        }
        ++level;
        current = std::move(next);
    }
    return rank;
}

std::vector<double> crowding_distance(std::span<const ObjectivePoint> front)
{
    const std::size_t n = front.size();
    constexpr double inf = std::numeric_limits<double>::infinity();
    if (n <= 2) {
        return std::vector<double>(n, inf);
    }

    // Distances are computed over the distinct objective points; the first
    // copy of each point carries that distance, later copies get 0. Surplus
    // duplicates are therefore shed before any distinct point, which keeps
    // the retained non-dominated set (and its hypervolume) from regressing
    // under mu+lambda truncation.
    std::vector<std::size_t> unique_of(n);
    std::vector<std::size_t> first_copy;
    for (std::size_t i = 0; i < n; ++i) {
        std::size_t u = first_copy.size();
        for (std::size_t k = 0; k < first_copy.size(); ++k) {
            if (front[first_copy[k]] == front[i]) {
                u = k;
                break;
            }
        }
        if (u == first_copy.size()) {
            first_copy.push_back(i);
        }
        unique_of[i] = u;
    }

    const std::size_t m = first_copy.size();
    std::vector<double> unique_distance(m, 0.0);
    if (m <= 2) {
        std::fill(unique_distance.begin(), unique_distance.end(), inf);
    } else {
        std::vector<std::size_t> order(m);
        const auto accumulate_objective = [&](auto value_of) {
            std::iota(order.begin(), order.end(), std::size_t{ 0 });
            std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
                return value_of(front[first_copy[a]]) < value_of(front[first_copy[b]]);
            });
            unique_distance[order.front()] = inf;
            unique_distance[order.back()] = inf;
            const double range = value_of(front[first_copy[order.back()]])
                - value_of(front[first_copy[order.front()]]);
            if (range <= 0.0) {
                return; // degenerate objective: interior points keep distance 0
            }
            for (std::size_t k = 1; k + 1 < m; ++k) {
                unique_distance[order[k]] += (value_of(front[first_copy[order[k + 1]]])
                                              - value_of(front[first_copy[order[k - 1]]]))
                    / range;
            }
        };
        accumulate_objective([](const ObjectivePoint& p) { return p.wse; });
        accumulate_objective([](const ObjectivePoint& p) { return p.kv; });
    }

    std::vector<double> distance(n, 0.0);
    std::vector<char> taken(m, 0);
    for (std::size_t i = 0; i < n; ++i) {
        if (!taken[unique_of[i]]) {
            taken[unique_of[i]] = 1;
            distance[i] = unique_distance[unique_of[i]];
        }
    }
    return distance;
}

std::vector<std::size_t> nondominated_indices(std::span<const ObjectivePoint> points)
{
    std::vector<std::size_t> result;
    for (std::size_t i = 0; i < points.size(); ++i) {
        bool dominated = false;
        for (std::size_t j = 0; j < points.size() && !dominated; ++j) {
            dominated = j != i && dominates(points[j], points[i]);
        }
        if (!dominated) {
            result.push_back(i);
        }
    }
    return result;
}

double hypervolume(std::span<const ObjectivePoint> points, ObjectivePoint reference)
{
    std::vector<ObjectivePoint> front;
    for (std::size_t i : nondominated_indices(points)) {
        if (points[i].kv <= reference.kv && points[i].wse <= reference.wse) {
            front.push_back(points[i]);
        }
    }
    std::sort(front.begin(), front.end(),
              [](const ObjectivePoint& a, const ObjectivePoint& b) { return a.kv < b.kv; });
    double volume = 0.0;
    for (std::size_t i = 0; i < front.size(); ++i) {
        const double next_kv = i + 1 < front.size() ? front[i + 1].kv : reference.kv;
        volume += (next_kv - front[i].kv) * (reference.wse - front[i].wse);
    }
    return volume;
}

std::pair<AcCandidate, AcCandidate> vary_ac(const AcCandidate& a, const AcCandidate& b,
                                            const VariationRates& rates, Rng& rng)
{
    if (a.labels.size() != b.labels.size() || a.max_groups != b.max_groups) {
        throw EncodingError("parents must share length and label cap");
    }
    AcCandidate child1 = a;
    AcCandidate child2 = b;
    if (next_bool(rng, rates.crossover_prob)) {
        for (std::size_t i = 0; i < child1.labels.size(); ++i) {
            if (next_bool(rng, 0.5)) {
                std::swap(child1.labels[i], child2.labels[i]);
            }
        }
    }
    for (AcCandidate* child : { &child1, &child2 }) {
        for (int& label : child->labels) {
            if (next_bool(rng, rates.mutation_prob)) {
                label = static_cast<int>(next_below(rng, static_cast<std::uint64_t>(child->max_groups)));
            }
        }
        if (next_bool(rng, rates.merge_prob)) {
            std::vector<int> used;
            for (int label : child->labels) {
                if (std::find(used.begin(), used.end(), label) == used.end()) {
                    used.push_back(label);
                }
            }
            if (used.size() >= 2) {
                const auto i = static_cast<std::size_t>(next_below(rng, used.size()));
                auto j = static_cast<std::size_t>(next_below(rng, used.size() - 1));
                if (j >= i) {
                    ++j;
                }
                std::replace(child->labels.begin(), child->labels.end(), used[i], used[j]);
            }
        }
    }
    return { std::move(child1), std::move(child2) };
}

EcCandidate order_crossover(const EcCandidate& a, const EcCandidate& b, int lo, int hi)
{
    const int heads = a.head_count();
    EcCandidate child;
    child.block_size = a.block_size;
    child.perm.assign(static_cast<std::size_t>(heads), -1);
    std::vector<char> taken(static_cast<std::size_t>(heads), 0);
    for (int i = lo; i < hi; ++i) {
        child.perm[i] = a.perm[i];
        taken[a.perm[i]] = 1;
    }
    std::size_t source = 0;
    for (int i = 0; i < heads; ++i) {
        if (i >= lo && i < hi) {
            continue;
        }
        while (taken[b.perm[source]]) {
            ++source;
        }
        child.perm[i] = b.perm[source];
        taken[b.perm[source]] = 1;
    }
    return child;
}

std::pair<EcCandidate, EcCandidate> vary_ec(const EcCandidate& a, const EcCandidate& b,
                                            const VariationRates& rates, Rng& rng)
{
    if (a.perm.size() != b.perm.size() || a.block_size != b.block_size) {
        throw EncodingError("parents must share length and block size");
    }
    const int heads = a.head_count();
    EcCandidate child1 = a;
    EcCandidate child2 = b;
    if (next_bool(rng, rates.crossover_prob)) {
        const int c1 = static_cast<int>(next_below(rng, static_cast<std::uint64_t>(heads) + 1));
        const int c2 = static_cast<int>(next_below(rng, static_cast<std::uint64_t>(heads) + 1));
        const int lo = std::min(c1, c2);
        const int hi = std::max(c1, c2);
        child1 = order_crossover(a, b, lo, hi);
        child2 = order_crossover(b, a, lo, hi);
    }
    for (EcCandidate* child : { &child1, &child2 }) {
        const auto swaps = next_below(rng, static_cast<std::uint64_t>(rates.max_swaps) + 1);
        for (std::uint64_t s = 0; s < swaps; ++s) {
            const auto i = static_cast<std::size_t>(next_below(rng, static_cast<std::uint64_t>(heads)));
            const auto j = static_cast<std::size_t>(next_below(rng, static_cast<std::uint64_t>(heads)));
            std::swap(child->perm[i], child->perm[j]);
        }
    }
    return { std::move(child1), std::move(child2) };
}

std::pair<LayerMask, LayerMask> vary_mask(const LayerMask& a, const LayerMask& b,
                                          const VariationRates& rates, Rng& rng)
{
    if (a.size() != b.size()) {
        throw EncodingError("parents must share length");
    }
    LayerMask child1 = a;
    LayerMask child2 = b;
    if (next_bool(rng, rates.crossover_prob)) {
        for (std::size_t i = 0; i < child1.size(); ++i) {
            if (next_bool(rng, 0.5)) {
                std::swap(child1[i], child2[i]);
            }
        }
    }
    for (LayerMask* child : { &child1, &child2 }) {
        for (auto& bit : *child) {
            if (next_bool(rng, rates.mutation_prob)) {
                bit = bit ? 0 : 1;
            }
        }
    }
    return { std::move(child1), std::move(child2) };
}

std::string describe(const LayerMask& mask)
{
    std::ostringstream out;
    out << "mask[";
    for (auto bit : mask) {
        out << (bit ? '1' : '0');
    }
    out << "]";
    return out.str();
}

namespace detail {

    RankedPoints rank_population(std::span<const ObjectivePoint> points)
    {
        RankedPoints ranked;
        ranked.rank = fast_nondominated_sort(points);
        ranked.crowding.assign(points.size(), 0.0);

        const int max_rank = points.empty() ? -1 : *std::max_element(ranked.rank.begin(), ranked.rank.end());
        std::vector<std::size_t> front_indices;
        std::vector<ObjectivePoint> front_points;
        for (int level = 0; level <= max_rank; ++level) {
            front_indices.clear();
            front_points.clear();
            for (std::size_t i = 0; i < points.size(); ++i) {
                if (ranked.rank[i] == level) {
                    front_indices.push_back(i);
                    front_points.push_back(points[i]);
                }
            }
            const std::vector<double> distance = crowding_distance(front_points);
            for (std::size_t k = 0; k < front_indices.size(); ++k) {
                ranked.crowding[front_indices[k]] = distance[k];
            }
        }
        return ranked;
    }

    std::size_t tournament(Rng& rng, const RankedPoints& ranked, std::size_t size)
    {
        const auto a = static_cast<std::size_t>(next_below(rng, size));
        const auto b = static_cast<std::size_t>(next_below(rng, size));
        if (ranked.rank[a] != ranked.rank[b]) {
            return ranked.rank[a] < ranked.rank[b] ? a : b;
        }
        if (ranked.crowding[a] != ranked.crowding[b]) {
            return ranked.crowding[a] > ranked.crowding[b] ? a : b;
        }
        return std::min(a, b);
    }

    std::vector<std::size_t> selection_order(const RankedPoints& ranked, std::size_t size)
    {
        std::vector<std::size_t> order(size);
        std::iota(order.begin(), order.end(), std::size_t{ 0 });
        std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
            if (ranked.rank[a] != ranked.rank[b]) {
                return ranked.rank[a] < ranked.rank[b];
            }
            return ranked.crowding[a] > ranked.crowding[b];
        });
        return order;
    }

} // namespace detail

} // namespace qcqa
