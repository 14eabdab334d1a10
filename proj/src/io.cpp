#include "qcqa/io.hpp"

#include <algorithm>
#include <bit>
#include <charconv>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <map>
#include <optional>

#include <json.hpp>

#include "qcqa/kvcache.hpp"
#include "qcqa/nsga2.hpp"
#include "qcqa/wse.hpp"

namespace qcqa {

namespace {

    using nlohmann::json;

    void store_u64_le(std::string& out, std::uint64_t v)
    {
        for (int i = 0; i < 8; ++i) {
            out.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
        }
    }

    std::uint64_t load_u64_le(const unsigned char* p)
    {
        std::uint64_t v = 0;
        for (int i = 0; i < 8; ++i) {
            v |= static_cast<std::uint64_t>(p[i]) << (8 * i);
        }
        return v;
    }

    std::uint32_t load_u32_le(const unsigned char* p)
    {
        std::uint32_t v = 0;
        for (int i = 0; i < 4; ++i) {
            v |= static_cast<std::uint32_t>(p[i]) << (8 * i);
        }
        return v;
    }

    struct RawTensor {
        std::string name;
        int rows = 0;
        int cols = 0;
        std::vector<double> values;
    };

    std::string read_file(const std::filesystem::path& path)
    {
        std::ifstream in(path, std::ios::binary);
        if (!in) {
            throw IoError("cannot open " + path.string());
        }
        std::string bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
        return bytes;
    }

    void write_file(const std::filesystem::path& path, const std::string& bytes)
    {
        std::ofstream out(path, std::ios::binary | std::ios::trunc);
        if (!out) {
            throw IoError("cannot open " + path.string() + " for writing");
        }
        out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
        if (!out) {
            throw IoError("write to " + path.string() + " failed");
        }
    }

    std::vector<RawTensor> read_tensor_file(const std::filesystem::path& path)
    {
        const std::string bytes = read_file(path);
        const auto* data = reinterpret_cast<const unsigned char*>(bytes.data());
        if (bytes.size() < 16 || std::memcmp(bytes.data(), kArchiveMagic, 8) != 0) {
            throw IoError(path.string() + ": bad magic");
        }
        const std::uint64_t header_len = load_u64_le(data + 8);
        if (16 + header_len > bytes.size()) {
            throw IoError(path.string() + ": header out of bounds");
        }
        json header;
        try {
            header = json::parse(bytes.substr(16, header_len));
        } catch (const json::exception& e) {
            throw IoError(path.string() + ": malformed JSON header: " + e.what());
        }
        if (!header.is_array()) {
            throw IoError(path.string() + ": header must be a JSON array of entries");
        }

        const std::size_t payload_offset = 16 + header_len;
        const std::size_t payload_size = bytes.size() - payload_offset;

        struct Extent {
            std::uint64_t begin;
            std::uint64_t end;
        };
        std::vector<Extent> extents;
        std::vector<RawTensor> tensors;
        for (const auto& entry : header) {
            if (!entry.contains("name") || !entry.contains("dtype") || !entry.contains("shape")
                || !entry.contains("byte_offset") || !entry.contains("byte_len")) {
                throw IoError(path.string() + ": header entry missing a required field");
            }
            RawTensor tensor;
            tensor.name = entry.at("name").get<std::string>();
            const std::string dtype = entry.at("dtype").get<std::string>();
            const auto shape = entry.at("shape").get<std::vector<std::int64_t>>();
            const auto byte_offset = entry.at("byte_offset").get<std::uint64_t>();
            const auto byte_len = entry.at("byte_len").get<std::uint64_t>();

            if (dtype != "f32" && dtype != "f64") {
                throw IoError(path.string() + ": unsupported dtype '" + dtype + "' for " + tensor.name);
            }
            if (shape.size() != 2 || shape[0] < 1 || shape[1] < 1) {
                throw IoError(path.string() + ": tensor " + tensor.name + " needs a positive 2-d shape");
            }
            tensor.rows = static_cast<int>(shape[0]);
            tensor.cols = static_cast<int>(shape[1]);
            const std::uint64_t count = static_cast<std::uint64_t>(shape[0]) * static_cast<std::uint64_t>(shape[1]);
            const std::uint64_t expected_len = count * (dtype == "f32" ? 4 : 8);
            if (byte_len != expected_len) {
                throw IoError(path.string() + ": byte length of " + tensor.name + " does not match its shape");
            }
            if (byte_offset + byte_len > payload_size) {
                throw IoError(path.string() + ": payload out of bounds for " + tensor.name);
            }
            extents.push_back({ byte_offset, byte_offset + byte_len });

            tensor.values.resize(count);
            const unsigned char* src = data + payload_offset + byte_offset;
            if (dtype == "f32") {
                for (std::uint64_t i = 0; i < count; ++i) {
                    tensor.values[i] = static_cast<double>(std::bit_cast<float>(load_u32_le(src + 4 * i)));
                }
            } else {
                for (std::uint64_t i = 0; i < count; ++i) {
                    tensor.values[i] = std::bit_cast<double>(load_u64_le(src + 8 * i));
                }
            }
            tensors.push_back(std::move(tensor));
        }

        std::sort(extents.begin(), extents.end(), [](const Extent& a, const Extent& b) { return a.begin < b.begin; });
        for (std::size_t i = 1; i < extents.size(); ++i) {
            if (extents[i].begin < extents[i - 1].end) {
                throw IoError(path.string() + ": overlapping offsets in header");
            }
        }
        return tensors;
    }

    void write_tensor_file(const std::filesystem::path& path, const std::vector<RawTensor>& tensors)
    {
        json header = json::array();
        std::uint64_t offset = 0;
        for (const auto& tensor : tensors) {
            const std::uint64_t byte_len = tensor.values.size() * 8;
            header.push_back({ { "name", tensor.name },
                               { "dtype", "f64" },
                               { "shape", { tensor.rows, tensor.cols } },
                               { "byte_offset", offset },
                               { "byte_len", byte_len } });
            offset += byte_len;
        }
        const std::string header_text = header.dump();

        std::string bytes;
        bytes.reserve(16 + header_text.size() + offset);
        bytes.append(kArchiveMagic, 8);
        store_u64_le(bytes, header_text.size());
        bytes.append(header_text);
        for (const auto& tensor : tensors) {
            for (double v : tensor.values) {
                store_u64_le(bytes, std::bit_cast<std::uint64_t>(v));
            }
        }
        write_file(path, bytes);
    }

    // "layers.<i>.k_proj.head.<h>" -> (layer, is_key, head)
    std::optional<std::tuple<int, bool, int>> parse_head_name(const std::string& name)
    {
        constexpr std::string_view prefix = "layers.";
        if (!name.starts_with(prefix)) {
            return std::nullopt;
        }
        std::size_t pos = prefix.size();
        const std::size_t dot1 = name.find('.', pos);
        if (dot1 == std::string::npos) {
            return std::nullopt;
        }
        int layer = -1;
        if (std::from_chars(name.data() + pos, name.data() + dot1, layer).ptr != name.data() + dot1 || layer < 0) {
            return std::nullopt;
        }
        pos = dot1 + 1;
        bool is_key = false;
        if (name.compare(pos, 7, "k_proj.") == 0) {
            is_key = true;
        } else if (name.compare(pos, 7, "v_proj.") == 0) {
            is_key = false;
        } else {
            return std::nullopt;
        }
        pos += 7;
        if (name.compare(pos, 5, "head.") != 0) {
            return std::nullopt;
        }
        pos += 5;
        int head = -1;
        const char* end = name.data() + name.size();
        if (std::from_chars(name.data() + pos, end, head).ptr != end || head < 0) {
            return std::nullopt;
        }
        return std::make_tuple(layer, is_key, head);
    }

    std::string head_name(int layer, bool is_key, int head)
    {
        return "layers." + std::to_string(layer) + (is_key ? ".k_proj.head." : ".v_proj.head.")
            + std::to_string(head);
    }

    std::string format_double(double v)
    {
        char buf[64];
        std::snprintf(buf, sizeof(buf), "%.17g", v);
        return buf;
    }

    json plan_to_json(const PlanFileData& data)
    {
        json per_layer = json::array();
        for (const auto& choice : data.plan.per_layer) {
            if (choice) {
                per_layer.push_back({ { "mode", "grouped" }, { "groups", choice->groups() } });
            } else {
                per_layer.push_back({ { "mode", "mha" } });
            }
        }
        return { { "version", 1 },
                 { "H", data.heads },
                 { "nlayers", data.plan.layer_count() },
                 { "encoding", data.encoding },
                 { "objectives", { { "wse", data.wse }, { "kv_fraction", data.kv_fraction } } },
                 { "per_layer", per_layer } };
    }

    PlanFileData plan_from_json(const json& j)
    {
        PlanFileData data;
        try {
            if (j.at("version").get<int>() != 1) {
                throw IoError("unsupported plan file version");
            }
            data.heads = j.at("H").get<int>();
            data.encoding = j.at("encoding").get<std::string>();
            data.wse = j.at("objectives").at("wse").get<double>();
            data.kv_fraction = j.at("objectives").at("kv_fraction").get<double>();
            const auto& per_layer = j.at("per_layer");
            const int nlayers = j.at("nlayers").get<int>();
            if (!per_layer.is_array() || static_cast<int>(per_layer.size()) != nlayers) {
                throw IoError("plan per_layer length disagrees with nlayers");
            }
            for (const auto& entry : per_layer) {
                const std::string mode = entry.at("mode").get<std::string>();
                if (mode == "mha") {
                    data.plan.per_layer.push_back(std::nullopt);
                } else if (mode == "grouped") {
                    auto groups = entry.at("groups").get<std::vector<std::vector<int>>>();
                    data.plan.per_layer.emplace_back(LayerGrouping(std::move(groups), data.heads));
                } else {
                    throw IoError("plan layer mode must be 'mha' or 'grouped'");
                }
            }
        } catch (const json::exception& e) {
            throw IoError(std::string("malformed plan file: ") + e.what());
        }
        return data;
    }

} // namespace

WeightArchive load_archive(const std::filesystem::path& path)
{
    const std::vector<RawTensor> tensors = read_tensor_file(path);

    std::map<int, std::map<int, HeadMatrix>> keys;
    std::map<int, std::map<int, HeadMatrix>> values;
    for (const auto& tensor : tensors) {
        const auto parsed = parse_head_name(tensor.name);
        if (!parsed) {
            throw IoError(path.string() + ": unrecognized entry name '" + tensor.name + "'");
        }
        const auto [layer, is_key, head] = *parsed;
        auto& slot = (is_key ? keys : values)[layer];
        if (slot.count(head)) {
            throw IoError(path.string() + ": duplicate entry '" + tensor.name + "'");
        }
        try {
            slot.emplace(head, HeadMatrix(tensor.rows, tensor.cols, tensor.values));
        } catch (const NumericError&) {
            throw IoError(path.string() + ": non-finite value in '" + tensor.name + "'");
        }
    }

    WeightArchive archive;
    if (keys.empty() || values.empty()) {
        throw IoError(path.string() + ": archive contains no head tensors");
    }
    const int layer_count = std::max(keys.rbegin()->first, values.rbegin()->first) + 1;
    for (int layer = 0; layer < layer_count; ++layer) {
        const auto k_it = keys.find(layer);
        const auto v_it = values.find(layer);
        if (k_it == keys.end() || v_it == values.end()) {
            throw IoError(path.string() + ": missing tensors for layer " + std::to_string(layer));
        }
        if (k_it->second.size() != v_it->second.size()) {
            throw IoError(path.string() + ": layer " + std::to_string(layer)
                          + " has unequal key and value head counts");
        }
        LayerWeights lw;
        const int heads = static_cast<int>(k_it->second.size());
        for (int head = 0; head < heads; ++head) {
            if (!k_it->second.count(head) || !v_it->second.count(head)) {
                throw IoError(path.string() + ": missing (layer " + std::to_string(layer) + ", head "
                              + std::to_string(head) + ") pair");
            }
            lw.keys.push_back(k_it->second.at(head));
            lw.values.push_back(v_it->second.at(head));
        }
        archive.layers.push_back(std::move(lw));
    }
    archive.validate();
    return archive;
}

void save_archive(const WeightArchive& archive, const std::filesystem::path& path)
{
    archive.validate();
    std::vector<RawTensor> tensors;
    for (int layer = 0; layer < archive.layer_count(); ++layer) {
        const LayerWeights& lw = archive.layers[layer];
        for (int head = 0; head < lw.head_count(); ++head) {
            const auto push = [&](bool is_key, const HeadMatrix& m) {
                RawTensor tensor;
                tensor.name = head_name(layer, is_key, head);
                tensor.rows = m.rows();
                tensor.cols = m.cols();
                tensor.values.assign(m.data().begin(), m.data().end());
                tensors.push_back(std::move(tensor));
            };
            push(true, lw.keys[head]);
            push(false, lw.values[head]);
        }
    }
    write_tensor_file(path, tensors);
}

WeightArchive apply_plan(const WeightArchive& archive, const ModelPlan& plan)
{
    archive.validate();
    if (plan.layer_count() != archive.layer_count()) {
        throw PlanError("plan length does not match archive layer count");
    }
    WeightArchive pooled;
    for (int i = 0; i < archive.layer_count(); ++i) {
        const LayerWeights& layer = archive.layers[i];
        if (!plan.per_layer[i]) {
            pooled.layers.push_back(layer);
            continue;
        }
        const LayerGrouping& grouping = *plan.per_layer[i];
        if (grouping.head_count() != layer.head_count()) {
            throw PlanError("plan grouping head count does not match layer " + std::to_string(i));
        }
        LayerWeights out;
        for (const auto& group : grouping.groups()) {
            out.keys.push_back(mean_pool(layer.keys, group));
            out.values.push_back(mean_pool(layer.values, group));
        }
        pooled.layers.push_back(std::move(out));
    }
    return pooled;
}

void save_plan(const PlanFileData& data, const std::filesystem::path& path)
{
    write_file(path, plan_to_json(data).dump(2) + "\n");
}

PlanFileData load_plan(const std::filesystem::path& path)
{
    json j;
    try {
        j = json::parse(read_file(path));
    } catch (const json::exception& e) {
        throw IoError(path.string() + ": malformed JSON: " + e.what());
    }
    return plan_from_json(j);
}

std::vector<PlanFileData> load_plans(const std::filesystem::path& path)
{
    json j;
    try {
        j = json::parse(read_file(path));
    } catch (const json::exception& e) {
        throw IoError(path.string() + ": malformed JSON: " + e.what());
    }
    std::vector<PlanFileData> plans;
    if (j.is_array()) {
        for (const auto& entry : j) {
            plans.push_back(plan_from_json(entry));
        }
    } else {
        plans.push_back(plan_from_json(j));
    }
    return plans;
}

void save_front(const FrontFileData& data, const std::filesystem::path& csv_path,
                const std::filesystem::path& plans_path)
{
    std::string csv = "kv_fraction,wse,plan_id\n";
    json plans = json::array();
    for (std::size_t i = 0; i < data.front.size(); ++i) {
        const auto& point = data.front[i];
        csv += format_double(point.kv) + "," + format_double(point.wse) + "," + std::to_string(i) + "\n";
        PlanFileData plan_data;
        plan_data.heads = data.heads;
        plan_data.encoding = data.encoding;
        plan_data.wse = point.wse;
        plan_data.kv_fraction = point.kv;
        plan_data.plan = point.candidate;
        plans.push_back(plan_to_json(plan_data));
    }
    write_file(csv_path, csv);
    write_file(plans_path, plans.dump(2) + "\n");
}

FrontFileData load_front(const std::filesystem::path& csv_path, const std::filesystem::path& plans_path)
{
    json plans;
    try {
        plans = json::parse(read_file(plans_path));
    } catch (const json::exception& e) {
        throw IoError(plans_path.string() + ": malformed JSON: " + e.what());
    }
    if (!plans.is_array()) {
        throw IoError(plans_path.string() + ": plan sidecar must be a JSON array");
    }
    std::vector<PlanFileData> plan_list;
    for (const auto& entry : plans) {
        plan_list.push_back(plan_from_json(entry));
    }

    const std::string csv = read_file(csv_path);
    std::vector<std::array<double, 2>> rows;
    std::vector<std::size_t> plan_ids;
    std::size_t line_start = 0;
    int line_no = 0;
    while (line_start < csv.size()) {
        std::size_t line_end = csv.find('\n', line_start);
        if (line_end == std::string::npos) {
            line_end = csv.size();
        }
        const std::string_view line(csv.data() + line_start, line_end - line_start);
        line_start = line_end + 1;
        ++line_no;
        if (line.empty()) {
            continue;
        }
        if (line_no == 1) {
            if (line != "kv_fraction,wse,plan_id") {
                throw IoError(csv_path.string() + ": unexpected CSV header");
            }
            continue;
        }
        const std::size_t c1 = line.find(',');
        const std::size_t c2 = c1 == std::string_view::npos ? std::string_view::npos : line.find(',', c1 + 1);
        if (c2 == std::string_view::npos) {
            throw IoError(csv_path.string() + ": line " + std::to_string(line_no) + ": expected 3 fields");
        }
        double kv = 0.0;
        double wse = 0.0;
        std::size_t plan_id = 0;
        const auto parse_field = [&](std::string_view text, auto& out) {
            const auto result = std::from_chars(text.data(), text.data() + text.size(), out);
            if (result.ec != std::errc{} || result.ptr != text.data() + text.size()) {
                throw IoError(csv_path.string() + ": line " + std::to_string(line_no)
                              + ": bad numeric field '" + std::string(text) + "'");
            }
        };
        parse_field(line.substr(0, c1), kv);
        parse_field(line.substr(c1 + 1, c2 - c1 - 1), wse);
        parse_field(line.substr(c2 + 1), plan_id);
        rows.push_back({ kv, wse });
        plan_ids.push_back(plan_id);
    }

    FrontFileData data;
    for (std::size_t i = 0; i < rows.size(); ++i) {
        if (plan_ids[i] >= plan_list.size()) {
            throw IoError(csv_path.string() + ": row " + std::to_string(i) + " references a missing plan");
        }
        const PlanFileData& plan_data = plan_list[plan_ids[i]];
        if (plan_data.kv_fraction != rows[i][0] || plan_data.wse != rows[i][1]) {
            throw IoError(csv_path.string() + ": row " + std::to_string(i)
                          + " objectives disagree with its plan file");
        }
        if (i > 0 && rows[i][0] <= rows[i - 1][0]) {
            throw IoError(csv_path.string() + ": rows not sorted by ascending kv_fraction");
        }
        data.front.push_back({ rows[i][0], rows[i][1], plan_data.plan });
        data.heads = plan_data.heads;
        data.encoding = plan_data.encoding;
    }
    for (std::size_t i = 0; i < data.front.size(); ++i) {
        for (std::size_t j = 0; j < data.front.size(); ++j) {
            if (i != j
                && dominates(ObjectivePoint{ data.front[j].wse, data.front[j].kv },
                             ObjectivePoint{ data.front[i].wse, data.front[i].kv })) {
                throw IoError(csv_path.string() + ": dominated row " + std::to_string(i));
            }
        }
    }
    return data;
}

void convert_fused_checkpoint(const std::filesystem::path& in_path,
                              const std::filesystem::path& out_path, int heads)
{
    if (heads < 1) {
        throw ConfigError("head count must be positive");
    }
    const std::vector<RawTensor> tensors = read_tensor_file(in_path);
    std::vector<RawTensor> sliced;
    for (const auto& tensor : tensors) {
        constexpr std::string_view prefix = "layers.";
        bool is_key = false;
        if (tensor.name.ends_with(".k_proj")) {
            is_key = true;
        } else if (!tensor.name.ends_with(".v_proj")) {
            throw IoError(in_path.string() + ": unrecognized fused entry '" + tensor.name + "'");
        }
        int layer = -1;
        const std::size_t digits_end = tensor.name.size() - 7;
        if (!tensor.name.starts_with(prefix)
            || std::from_chars(tensor.name.data() + prefix.size(), tensor.name.data() + digits_end, layer).ptr
                != tensor.name.data() + digits_end
            || layer < 0) {
            throw IoError(in_path.string() + ": unrecognized fused entry '" + tensor.name + "'");
        }
        if (tensor.rows % heads != 0) {
            throw IoError(in_path.string() + ": rows of '" + tensor.name + "' not divisible by "
                          + std::to_string(heads) + " heads");
        }
        const int head_dim = tensor.rows / heads;
        for (int head = 0; head < heads; ++head) {
            RawTensor slice;
            slice.name = head_name(layer, is_key, head);
            slice.rows = head_dim;
            slice.cols = tensor.cols;
            const auto begin = tensor.values.begin()
                + static_cast<std::ptrdiff_t>(head) * head_dim * tensor.cols;
            slice.values.assign(begin, begin + static_cast<std::ptrdiff_t>(head_dim) * tensor.cols);
            sliced.push_back(std::move(slice));
        }
    }
    write_tensor_file(out_path, sliced);
    load_archive(out_path); // re-validate the produced file
}

} // namespace qcqa
