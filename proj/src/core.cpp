#include "qcqa/core.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>

namespace qcqa {

HeadMatrix::HeadMatrix(int rows, int cols)
    : rows_(rows)
    , cols_(cols)
    , data_(static_cast<std::size_t>(rows) * cols, 0.0)
{
    if (rows < 1 || cols < 1) {
        throw ShapeError("matrix dimensions must be positive");
    }
}

HeadMatrix::HeadMatrix(int rows, int cols, std::vector<double> data)
    : rows_(rows)
    , cols_(cols)
    , data_(std::move(data))
{
    if (rows < 1 || cols < 1) {
        throw ShapeError("matrix dimensions must be positive");
    }
    if (data_.size() != static_cast<std::size_t>(rows) * cols) {
        throw ShapeError("matrix data length does not match dimensions");
    }
    for (double v : data_) {
        if (!std::isfinite(v)) {
            throw NumericError("matrix entries must be finite");
        }
    }
}

void LayerWeights::validate() const
{
    if (keys.empty() || keys.size() != values.size()) {
        throw ShapeError("layer needs equally many key and value heads (>= 1)");
    }
    for (const auto& k : keys) {
        if (!k.same_shape(keys.front())) {
            throw ShapeError("key heads of one layer must share a shape");
        }
    }
    for (const auto& v : values) {
        if (!v.same_shape(values.front())) {
            throw ShapeError("value heads of one layer must share a shape");
        }
    }
}

bool WeightArchive::uniform_heads() const
{
    return std::all_of(layers.begin(), layers.end(), [&](const LayerWeights& l) {
        return l.head_count() == layers.front().head_count();
    });
}

int WeightArchive::heads_per_layer() const
{
    if (layers.empty()) {
        throw ShapeError("archive has no layers");
    }
    if (!uniform_heads()) {
        throw ShapeError("archive layers carry differing head counts");
    }
    return layers.front().head_count();
}

void WeightArchive::validate() const
{
    if (layers.empty()) {
        throw ShapeError("archive has no layers");
    }
    for (const auto& layer : layers) {
        layer.validate();
    }
}

bool WeightArchive::operator==(const WeightArchive& other) const
{
    if (layers.size() != other.layers.size()) {
        return false;
    }
    for (std::size_t i = 0; i < layers.size(); ++i) {
        if (layers[i].keys != other.layers[i].keys || layers[i].values != other.layers[i].values) {
            return false;
        }
    }
    return true;
}

LayerGrouping::LayerGrouping(std::vector<std::vector<int>> groups, int head_count)
    : groups_(std::move(groups))
    , head_count_(head_count)
{
    if (head_count_ < 1) {
        throw PartitionError("head count must be positive");
    }
    std::vector<char> seen(static_cast<std::size_t>(head_count_), 0);
    std::size_t total = 0;
    for (auto& group : groups_) {
        if (group.empty()) {
            throw PartitionError("groups must be non-empty");
        }
        std::sort(group.begin(), group.end());
        for (int head : group) {
            if (head < 0 || head >= head_count_) {
                throw PartitionError("head index out of range");
            }
            if (seen[head]) {
                throw PartitionError("head assigned to more than one group");
            }
            seen[head] = 1;
        }
        total += group.size();
    }
    if (total != static_cast<std::size_t>(head_count_)) {
        throw PartitionError("groups do not cover all heads");
    }
    std::sort(groups_.begin(), groups_.end(),
              [](const std::vector<int>& a, const std::vector<int>& b) { return a.front() < b.front(); });
}

int LayerGrouping::group_of(int head) const
{
    for (std::size_t g = 0; g < groups_.size(); ++g) {
        if (std::binary_search(groups_[g].begin(), groups_[g].end(), head)) {
            return static_cast<int>(g);
        }
    }
    throw PartitionError("head " + std::to_string(head) + " missing from partition");
}

LayerGrouping LayerGrouping::singletons(int head_count)
{
    std::vector<std::vector<int>> groups(static_cast<std::size_t>(head_count));
    for (int h = 0; h < head_count; ++h) {
        groups[h] = { h };
    }
    return LayerGrouping(std::move(groups), head_count);
}

LayerGrouping LayerGrouping::single_group(int head_count)
{
    std::vector<int> all(static_cast<std::size_t>(head_count));
    std::iota(all.begin(), all.end(), 0);
    return LayerGrouping({ std::move(all) }, head_count);
}

ModelPlan ModelPlan::all_mha(int layer_count)
{
    ModelPlan plan;
    plan.per_layer.assign(static_cast<std::size_t>(layer_count), std::nullopt);
    return plan;
}

LayerGrouping decode_ac(const AcCandidate& candidate, int head_count)
{
    if (candidate.head_count() != head_count) {
        throw EncodingError("label vector length does not match head count");
    }
    if (candidate.max_groups < 1) {
        throw EncodingError("label cap must be positive");
    }
    std::vector<std::vector<int>> classes(static_cast<std::size_t>(candidate.max_groups));
    for (int h = 0; h < head_count; ++h) {
        const int label = candidate.labels[h];
        if (label < 0 || label >= candidate.max_groups) {
            throw EncodingError("label " + std::to_string(label) + " outside {0.." + std::to_string(candidate.max_groups - 1) + "}");
        }
        classes[label].push_back(h);
    }
    std::vector<std::vector<int>> groups;
    for (auto& cls : classes) {
        if (!cls.empty()) {
            groups.push_back(std::move(cls));
        }
    }
    return LayerGrouping(std::move(groups), head_count);
}

LayerGrouping decode_ec(const EcCandidate& candidate)
{
    const int heads = candidate.head_count();
    if (heads < 1) {
        throw EncodingError("permutation is empty");
    }
    if (candidate.block_size < 1 || heads % candidate.block_size != 0) {
        throw EncodingError("head count does not divide into equal blocks");
    }
    std::vector<char> seen(static_cast<std::size_t>(heads), 0);
    for (int v : candidate.perm) {
        if (v < 0 || v >= heads || seen[v]) {
            throw EncodingError("perm is not a permutation of 0.." + std::to_string(heads - 1));
        }
        seen[v] = 1;
    }
    std::vector<std::vector<int>> groups;
    groups.reserve(static_cast<std::size_t>(candidate.group_count()));
    for (int start = 0; start < heads; start += candidate.block_size) {
        groups.emplace_back(candidate.perm.begin() + start, candidate.perm.begin() + start + candidate.block_size);
    }
    return LayerGrouping(std::move(groups), heads);
}

EcCandidate random_ec(int head_count, int group_count, int swap_count, Rng& rng)
{
    if (head_count < 1 || group_count < 1 || head_count % group_count != 0) {
        throw ConfigError("group count must divide head count");
    }
    if (swap_count < 0) {
        throw ConfigError("swap count must be non-negative");
    }
    EcCandidate candidate;
    candidate.perm.resize(static_cast<std::size_t>(head_count));
    std::iota(candidate.perm.begin(), candidate.perm.end(), 0);
    candidate.block_size = head_count / group_count;
    for (int s = 0; s < swap_count; ++s) {
        const auto a = static_cast<std::size_t>(next_below(rng, static_cast<std::uint64_t>(head_count)));
        const auto b = static_cast<std::size_t>(next_below(rng, static_cast<std::uint64_t>(head_count)));
        std::swap(candidate.perm[a], candidate.perm[b]);
    }
    return candidate;
}

LayerGrouping gqa_baseline(int head_count, int group_count)
{
    if (head_count < 1 || group_count < 1 || head_count % group_count != 0) {
        throw ConfigError("group count must divide head count");
    }
    const int block = head_count / group_count;
    std::vector<std::vector<int>> groups;
    groups.reserve(static_cast<std::size_t>(group_count));
    for (int start = 0; start < head_count; start += block) {
        std::vector<int> group(static_cast<std::size_t>(block));
        std::iota(group.begin(), group.end(), start);
        groups.push_back(std::move(group));
    }
    return LayerGrouping(std::move(groups), head_count);
}

std::string describe(const AcCandidate& candidate)
{
    std::ostringstream out;
    out << "ac[";
    for (std::size_t i = 0; i < candidate.labels.size(); ++i) {
        out << (i ? " " : "") << candidate.labels[i];
    }
    out << "]";
    return out.str();
}

std::string describe(const EcCandidate& candidate)
{
    std::ostringstream out;
    out << "ec[";
    for (std::size_t i = 0; i < candidate.perm.size(); ++i) {
        out << (i ? " " : "") << candidate.perm[i];
    }
    out << "]/" << candidate.block_size;
    return out.str();
}

} // namespace qcqa
