#ifndef QCQA_TESTUTIL_HPP
#define QCQA_TESTUTIL_HPP

#include <bit>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "qcqa/core.hpp"
#include "qcqa/rng.hpp"

namespace qcqa::test {

inline HeadMatrix random_matrix(int rows, int cols, Rng& rng, double scale = 1.0)
{
    HeadMatrix m(rows, cols);
    for (double& v : m.data()) {
        v = scale * next_normal(rng);
    }
    return m;
}

inline LayerWeights random_layer(int heads, int key_dim, int value_dim, int model_dim, Rng& rng)
{
    LayerWeights layer;
    for (int h = 0; h < heads; ++h) {
        layer.keys.push_back(random_matrix(key_dim, model_dim, rng));
        layer.values.push_back(random_matrix(value_dim, model_dim, rng));
    }
    return layer;
}

inline WeightArchive random_archive(int layers, int heads, int key_dim, int value_dim, int model_dim,
                                    std::uint64_t seed)
{
    Rng rng(seed);
    WeightArchive archive;
    for (int i = 0; i < layers; ++i) {
        archive.layers.push_back(random_layer(heads, key_dim, value_dim, model_dim, rng));
    }
    return archive;
}

// Uniform random label vector decoded to a partition.
inline LayerGrouping random_grouping(int heads, Rng& rng)
{
    AcCandidate candidate;
    candidate.max_groups = heads;
    candidate.labels.resize(static_cast<std::size_t>(heads));
    for (int& label : candidate.labels) {
        label = static_cast<int>(next_below(rng, static_cast<std::uint64_t>(heads)));
    }
    return decode_ac(candidate, heads);
}

// Coarsening of `grouping` by merging two random groups; nullopt when there
// is only one group.
inline std::optional<LayerGrouping> merge_two_groups(const LayerGrouping& grouping, Rng& rng)
{
    const auto& groups = grouping.groups();
    if (groups.size() < 2) {
        return std::nullopt;
    }
    const auto a = static_cast<std::size_t>(next_below(rng, groups.size()));
    auto b = static_cast<std::size_t>(next_below(rng, groups.size() - 1));
    if (b >= a) {
        ++b;
    }
    std::vector<std::vector<int>> merged;
    for (std::size_t g = 0; g < groups.size(); ++g) {
        if (g == b) {
            continue;
        }
        merged.push_back(groups[g]);
        if (g == a) {
            merged.back().insert(merged.back().end(), groups[b].begin(), groups[b].end());
        }
    }
    return LayerGrouping(std::move(merged), grouping.head_count());
}

// Chain member with `group_count` groups: singletons {0}, {1}, ... peeled off
// the front, remainder in one block. Each step of the chain splits one group,
// so wse is monotone along it.
inline LayerGrouping peel_chain_grouping(int heads, int group_count)
{
    std::vector<std::vector<int>> groups;
    for (int h = 0; h + 1 < group_count; ++h) {
        groups.push_back({ h });
    }
    std::vector<int> tail;
    for (int h = group_count - 1; h < heads; ++h) {
        tail.push_back(h);
    }
    groups.push_back(std::move(tail));
    return LayerGrouping(std::move(groups), heads);
}

struct RawEntry {
    std::string name;
    std::string dtype = "f64";
    std::vector<std::int64_t> shape;
    std::vector<double> values;
    std::int64_t offset_override = -1; // payload offset; -1 packs sequentially
};

inline void append_u64_le(std::string& out, std::uint64_t v)
{
    for (int i = 0; i < 8; ++i) {
        out.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
    }
}

inline void append_u32_le(std::string& out, std::uint32_t v)
{
    for (int i = 0; i < 4; ++i) {
        out.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
    }
}

// Hand-rolled tensor-file writer, independent of the library's serializer,
// with knobs for crafting malformed files.
inline void write_raw_file(const std::filesystem::path& path, const std::vector<RawEntry>& entries,
                           std::int64_t truncate_payload_to = -1, const std::string& magic = "QKVWTS01",
                           const std::string& header_override = "")
{
    nlohmann::json header = nlohmann::json::array();
    std::string payload;
    std::uint64_t cursor = 0;
    for (const auto& entry : entries) {
        const std::uint64_t elem = entry.dtype == "f32" ? 4 : 8;
        const std::uint64_t len = entry.values.size() * elem;
        const std::uint64_t offset = entry.offset_override >= 0
            ? static_cast<std::uint64_t>(entry.offset_override)
            : cursor;
        header.push_back({ { "name", entry.name },
                           { "dtype", entry.dtype },
                           { "shape", entry.shape },
                           { "byte_offset", offset },
                           { "byte_len", len } });
        if (payload.size() < offset + len) {
            payload.resize(offset + len, '\0');
        }
        std::string bytes;
        for (double v : entry.values) {
            if (entry.dtype == "f32") {
                append_u32_le(bytes, std::bit_cast<std::uint32_t>(static_cast<float>(v)));
            } else {
                append_u64_le(bytes, std::bit_cast<std::uint64_t>(v));
            }
        }
        std::memcpy(payload.data() + offset, bytes.data(), bytes.size());
        cursor = std::max<std::uint64_t>(cursor, offset + len);
    }
    const std::string header_text = header_override.empty() ? header.dump() : header_override;
    if (truncate_payload_to >= 0) {
        payload.resize(static_cast<std::size_t>(truncate_payload_to));
    }

    std::string bytes = magic;
    append_u64_le(bytes, header_text.size());
    bytes += header_text;
    bytes += payload;
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
}

} // namespace qcqa::test

#endif
