#ifndef QCQA_IO_HPP
#define QCQA_IO_HPP

#include <filesystem>
#include <string>

#include "qcqa/core.hpp"

namespace qcqa {

// Binary tensor archive: 8-byte magic "QKVWTS01", u64 little-endian header
// length, UTF-8 JSON header (array of {name, dtype, shape, byte_offset,
// byte_len}), then raw little-endian tensor payload. Offsets are relative to
// the payload start. Head tensors are named
// "layers.<i>.k_proj.head.<h>" / "layers.<i>.v_proj.head.<h>".
inline constexpr char kArchiveMagic[9] = "QKVWTS01";

WeightArchive load_archive(const std::filesystem::path& path);
void save_archive(const WeightArchive& archive, const std::filesystem::path& path);

// Grouped layers get one mean-pooled key and value head per group, MHA layers
// are copied unchanged. Query-side weights are not part of the archive.
WeightArchive apply_plan(const WeightArchive& archive, const ModelPlan& plan);

struct PlanFileData {
    int heads = 0;
    std::string encoding = "ac";
    double wse = 0.0;
    double kv_fraction = 1.0;
    ModelPlan plan;
};

void save_plan(const PlanFileData& data, const std::filesystem::path& path);
PlanFileData load_plan(const std::filesystem::path& path);

// Accepts either a single plan object or a JSON array of them (the front
// sidecar layout) and returns all plans.
std::vector<PlanFileData> load_plans(const std::filesystem::path& path);

struct FrontFileData {
    int heads = 0;
    std::string encoding = "ac";
    ParetoFront<ModelPlan> front;
};

// Front CSV ("kv_fraction,wse,plan_id", doubles at 17 significant digits,
// rows sorted by ascending kv) plus a sidecar JSON array of plan files
// indexed by plan_id.
void save_front(const FrontFileData& data, const std::filesystem::path& csv_path,
                const std::filesystem::path& plans_path);
FrontFileData load_front(const std::filesystem::path& csv_path,
                         const std::filesystem::path& plans_path);

// Adapts an externally produced checkpoint whose entries are fused per-layer
// projections "layers.<i>.k_proj" / "layers.<i>.v_proj" of shape
// [H*d, d_model]: rows are sliced into per-head tensors and written in the
// core archive layout.
void convert_fused_checkpoint(const std::filesystem::path& in_path,
                              const std::filesystem::path& out_path, int heads);

} // namespace qcqa

#endif
