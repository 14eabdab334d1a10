#include <chrono>
#include <cmath>
#include <filesystem>
#include <iostream>
#include <thread>

#include <CLI11.hpp>
#include <json.hpp>

#include "qcqa/attnsim.hpp"
#include "qcqa/io.hpp"
#include "qcqa/kvcache.hpp"
#include "qcqa/oracle.hpp"
#include "qcqa/search.hpp"
#include "qcqa/stats.hpp"
#include "qcqa/wse.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace qcqa;

namespace {

struct RunConfig {
    std::string checkpoint;
    std::string out_dir;
    std::string plan_path;
    int plan_id = 0;
    int max_groups = 4;
    std::string encoding = "ac";
    int pop_size1 = 64;
    int ngen1 = 200;
    int pop_size2 = 64;
    int ngen2 = 100;
    std::string bucket = "all";
    std::uint64_t seed = 42;
    int threads = 0; // 0 = available parallelism
    double kv_weight = 1.0;
    double v_weight = 1.0;
    // synthetic-layer dimensions (validate) / head count (convert)
    int heads = 8;
    int seq_len = 32;
    int head_dim = 16;
    int model_dim = 32;
    int samples = 50;
};

int resolved_threads(const RunConfig& config)
{
    if (config.threads > 0) {
        return config.threads;
    }
    const unsigned hw = std::thread::hardware_concurrency();
    return hw > 0 ? static_cast<int>(hw) : 1;
}

WseWeights wse_weights(const RunConfig& config)
{
    return WseWeights{ config.kv_weight, config.v_weight };
}

int parse_bucket(const std::string& bucket)
{
    for (int p : kPercentiles) {
        if (bucket == "p" + std::to_string(p)) {
            return p;
        }
    }
    throw ConfigError("bucket must be one of p0, p25, p50, p75, p100, all");
}

json config_json(const std::string& command, const RunConfig& config)
{
    return { { "command", command },
             { "checkpoint", config.checkpoint },
             { "out", config.out_dir },
             { "plan", config.plan_path },
             { "max_groups", config.max_groups },
             { "encoding", config.encoding },
             { "pop_size1", config.pop_size1 },
             { "ngen1", config.ngen1 },
             { "pop_size2", config.pop_size2 },
             { "ngen2", config.ngen2 },
             { "bucket", config.bucket },
             { "seed", config.seed },
             { "threads", config.threads },
             { "kv_weight", config.kv_weight },
             { "v_weight", config.v_weight },
             { "heads", config.heads },
             { "seq_len", config.seq_len },
             { "head_dim", config.head_dim },
             { "model_dim", config.model_dim },
             { "samples", config.samples } };
}

void write_text(const fs::path& path, const std::string& text)
{
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) {
        throw IoError("cannot open " + path.string() + " for writing");
    }
    out << text;
    if (!out) {
        throw IoError("write to " + path.string() + " failed");
    }
}

// Every run leaves a manifest sufficient to reproduce it: full config, seed
// and the format versions of the files it wrote.
void write_manifest(const std::string& command, const RunConfig& config, const fs::path& out_dir,
                    double wall_time_s)
{
    json manifest = { { "config", config_json(command, config) },
                      { "format_versions", { { "archive", 1 }, { "plan", 1 }, { "front", 1 } } },
                      { "wall_time_s", wall_time_s } };
    write_text(out_dir / "manifest.json", manifest.dump(2) + "\n");
}

SearchOptions stage1_options(const RunConfig& config)
{
    SearchOptions options;
    options.pop_size = config.pop_size1;
    options.generations = config.ngen1;
    options.seed = config.seed;
    options.threads = resolved_threads(config);
    options.wse_weights = wse_weights(config);
    return options;
}

SearchOptions stage2_options(const RunConfig& config)
{
    SearchOptions options = stage1_options(config);
    options.pop_size = config.pop_size2;
    options.generations = config.ngen2;
    return options;
}

Encoding parse_encoding(const RunConfig& config, int heads)
{
    if (config.encoding == "ac") {
        return Encoding::ac;
    }
    if (config.encoding == "ec") {
        if (heads % config.max_groups != 0) {
            throw ConfigError("encoding 'ec' needs --max-groups to divide the archive's head count");
        }
        return Encoding::ec;
    }
    throw ConfigError("encoding must be 'ac' or 'ec'");
}

// Writes front.csv + plans.json and re-loads them so invariant violations
// fail the run.
void emit_front(const ParetoFront<ModelPlan>& front, int heads, const std::string& encoding,
                const fs::path& out_dir, const std::string& stem = "front")
{
    FrontFileData data;
    data.heads = heads;
    data.encoding = encoding;
    data.front = front;
    const fs::path csv = out_dir / (stem + ".csv");
    const fs::path plans = out_dir / (stem + "_plans.json");
    save_front(data, csv, plans);
    load_front(csv, plans);
}

int cmd_search(const RunConfig& config)
{
    const auto start = std::chrono::steady_clock::now();
    const WeightArchive archive = load_archive(config.checkpoint);
    const int heads = archive.heads_per_layer();
    const Encoding encoding = parse_encoding(config, heads);

    const PercentileBuckets buckets = qcqa_groups(archive, config.max_groups, encoding, stage1_options(config));
    const ParetoFront<ModelPlan> front = config.bucket == "all"
        ? qcqa_select_all_buckets(archive, buckets, stage2_options(config))
        : qcqa_select_layers(archive, buckets, parse_bucket(config.bucket), stage2_options(config));

    fs::create_directories(config.out_dir);
    emit_front(front, heads, config.encoding, config.out_dir);
    const double elapsed = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    write_manifest("search", config, config.out_dir, elapsed);
    std::cout << "front of " << front.size() << " plans written to " << config.out_dir << "\n";
    return 0;
}

int cmd_gqa(const RunConfig& config, bool max_groups_given)
{
    const auto start = std::chrono::steady_clock::now();
    const WeightArchive archive = load_archive(config.checkpoint);
    const int heads = archive.heads_per_layer();

    std::vector<int> group_counts;
    if (max_groups_given) {
        group_counts.push_back(config.max_groups);
    } else {
        for (int p = 1; p <= heads; ++p) {
            if (heads % p == 0) {
                group_counts.push_back(p);
            }
        }
    }

    ParetoFront<ModelPlan> points;
    for (int groups : group_counts) {
        ModelPlan plan;
        for (int i = 0; i < archive.layer_count(); ++i) {
            plan.per_layer.emplace_back(gqa_baseline(heads, groups));
        }
        points.push_back({ model_kv_fraction(plan, heads).value,
                           model_wse(archive, plan, wse_weights(config)).value, std::move(plan) });
    }
    const ParetoFront<ModelPlan> front = nondominated_union({ points });

    fs::create_directories(config.out_dir);
    emit_front(front, heads, "gqa", config.out_dir);
    const double elapsed = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    write_manifest("gqa", config, config.out_dir, elapsed);
    std::cout << "gqa front of " << front.size() << " points written to " << config.out_dir << "\n";
    return 0;
}

int cmd_oracle(const RunConfig& config)
{
    const auto start = std::chrono::steady_clock::now();
    const WeightArchive archive = load_archive(config.checkpoint);
    const int heads = archive.heads_per_layer();
    const int layers = archive.layer_count();

    fs::create_directories(config.out_dir);

    // exact per-layer fronts, written as single-layer plans
    std::vector<ParetoFront<LayerGrouping>> layer_fronts;
    for (int i = 0; i < layers; ++i) {
        layer_fronts.push_back(exact_pareto(archive.layers[i], config.max_groups, wse_weights(config)));
        ParetoFront<ModelPlan> as_plans;
        for (const auto& point : layer_fronts.back()) {
            ModelPlan plan;
            plan.per_layer.emplace_back(point.candidate);
            as_plans.push_back({ point.kv, point.wse, std::move(plan) });
        }
        emit_front(as_plans, heads, "oracle", config.out_dir, "layer" + std::to_string(i) + "_front");
    }

    // exact percentile buckets, then the exact keep-or-group front per bucket
    std::vector<ParetoFront<ModelPlan>> bucket_fronts;
    for (std::size_t b = 0; b < kPercentiles.size(); ++b) {
        if (config.bucket != "all" && parse_bucket(config.bucket) != kPercentiles[b]) {
            continue;
        }
        std::vector<LayerGrouping> chosen;
        for (int i = 0; i < layers; ++i) {
            const auto& front = layer_fronts[i];
            chosen.push_back(front[percentile_index(static_cast<int>(front.size()), kPercentiles[b])].candidate);
        }
        bucket_fronts.push_back(exact_plan_front(archive, chosen, wse_weights(config)));
    }
    emit_front(nondominated_union(bucket_fronts), heads, "oracle", config.out_dir);

    const double elapsed = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    write_manifest("oracle", config, config.out_dir, elapsed);
    std::cout << "exact fronts for " << layers << " layers written to " << config.out_dir << "\n";
    return 0;
}

int cmd_validate(const RunConfig& config)
{
    const auto start = std::chrono::steady_clock::now();
    const SynthLayer layer = synth_layer(config.heads, config.seq_len, config.head_dim,
                                         config.model_dim, config.seed);
    fs::create_directories(config.out_dir);

    Rng rng(config.seed + 1);
    std::vector<double> wses;
    std::vector<double> divergences;
    std::string samples_csv = "sample,kv_fraction,wse,divergence\n";
    for (int s = 0; s < config.samples; ++s) {
        AcCandidate candidate;
        candidate.max_groups = config.heads;
        candidate.labels.resize(static_cast<std::size_t>(config.heads));
        for (int& label : candidate.labels) {
            label = static_cast<int>(next_below(rng, static_cast<std::uint64_t>(config.heads)));
        }
        const LayerGrouping grouping = decode_ac(candidate, config.heads);
        const double kv = layer_kv_fraction(grouping, config.heads).value;
        const double wse = layer_wse(layer.weights, grouping, wse_weights(config)).value;
        const double div = divergence(layer.inputs, grouping);
        wses.push_back(wse);
        divergences.push_back(div);
        char row[160];
        std::snprintf(row, sizeof(row), "%d,%.17g,%.17g,%.17g\n", s, kv, wse, div);
        samples_csv += row;
    }
    write_text(fs::path(config.out_dir) / "samples.csv", samples_csv);

    // kv sweep along a refinement chain: splitting groups one at a time keeps
    // wse monotone while kv rises
    std::string sweep_csv = "group_count,kv_fraction,wse\n";
    bool monotone = true;
    double previous = std::numeric_limits<double>::infinity();
    for (int groups = 1; groups <= config.heads; ++groups) {
        std::vector<std::vector<int>> chain;
        for (int h = 0; h + 1 < groups; ++h) {
            chain.push_back({ h });
        }
        std::vector<int> tail;
        for (int h = groups - 1; h < config.heads; ++h) {
            tail.push_back(h);
        }
        chain.push_back(std::move(tail));
        const LayerGrouping grouping(std::move(chain), config.heads);
        const double wse = layer_wse(layer.weights, grouping, wse_weights(config)).value;
        monotone = monotone && wse <= previous + 1e-12;
        previous = wse;
        char row[128];
        std::snprintf(row, sizeof(row), "%d,%.17g,%.17g\n", groups,
                      layer_kv_fraction(grouping, config.heads).value, wse);
        sweep_csv += row;
    }
    write_text(fs::path(config.out_dir) / "sweep.csv", sweep_csv);

    const double rho = spearman(wses, divergences);
    json report = { { "samples", config.samples },
                    { "sweep_monotone_non_increasing", monotone },
                    { "degenerate", std::isnan(rho) } };
    if (std::isnan(rho)) {
        report["spearman"] = "degenerate";
    } else {
        report["spearman"] = rho;
    }
    write_text(fs::path(config.out_dir) / "report.json", report.dump(2) + "\n");

    const double elapsed = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    write_manifest("validate", config, config.out_dir, elapsed);
    std::cout << "wse-divergence report written to " << config.out_dir << "\n";
    return 0;
}

int cmd_apply(const RunConfig& config)
{
    const auto start = std::chrono::steady_clock::now();
    const WeightArchive archive = load_archive(config.checkpoint);
    const std::vector<PlanFileData> plans = load_plans(config.plan_path);
    if (config.plan_id < 0 || static_cast<std::size_t>(config.plan_id) >= plans.size()) {
        throw ConfigError("--plan-id " + std::to_string(config.plan_id) + " outside the "
                          + std::to_string(plans.size()) + " plans in " + config.plan_path);
    }
    const WeightArchive pooled = apply_plan(archive, plans[config.plan_id].plan);
    fs::create_directories(config.out_dir);
    const fs::path out_path = fs::path(config.out_dir) / "pooled.qkv";
    save_archive(pooled, out_path);
    load_archive(out_path);
    const double elapsed = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    write_manifest("apply", config, config.out_dir, elapsed);
    std::cout << "pooled checkpoint written to " << out_path << "\n";
    return 0;
}

int cmd_convert(const RunConfig& config)
{
    const auto start = std::chrono::steady_clock::now();
    fs::create_directories(config.out_dir);
    const fs::path out_path = fs::path(config.out_dir) / "converted.qkv";
    convert_fused_checkpoint(config.checkpoint, out_path, config.heads);
    const double elapsed = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    write_manifest("convert", config, config.out_dir, elapsed);
    std::cout << "per-head checkpoint written to " << out_path << "\n";
    return 0;
}

} // namespace

int main(int argc, char** argv)
{
    CLI::App app{ "quality- and capacity-aware grouping of transformer query heads" };
    app.require_subcommand(1);
    RunConfig config;

    const auto add_common = [&](CLI::App* cmd, bool needs_checkpoint) {
        if (needs_checkpoint) {
            cmd->add_option("--checkpoint", config.checkpoint, "input checkpoint (.qkv)")->required();
        }
        cmd->add_option("--out", config.out_dir, "output directory")->required();
        cmd->add_option("--seed", config.seed, "random seed");
        cmd->add_option("--threads", config.threads, "worker threads (0 = all cores)");
        cmd->add_option("--kv-weight", config.kv_weight, "weight of the key-projection error term");
        cmd->add_option("--v-weight", config.v_weight, "weight of the value-projection error term");
    };

    CLI::App* search = app.add_subcommand("search", "two-stage grouping search");
    add_common(search, true);
    search->add_option("--max-groups", config.max_groups, "largest group count explored per layer");
    search->add_option("--encoding", config.encoding, "candidate encoding: ac or ec");
    search->add_option("--pop-size1", config.pop_size1, "stage-1 population size");
    search->add_option("--ngen1", config.ngen1, "stage-1 generations");
    search->add_option("--pop-size2", config.pop_size2, "stage-2 population size");
    search->add_option("--ngen2", config.ngen2, "stage-2 generations");
    search->add_option("--bucket", config.bucket, "percentile bucket: p0, p25, p50, p75, p100 or all");

    CLI::App* gqa = app.add_subcommand("gqa", "consecutive-blocks baseline front");
    add_common(gqa, true);
    CLI::Option* gqa_groups_opt = gqa->add_option("--max-groups", config.max_groups,
                                                  "group count (default: every divisor of H)");

    CLI::App* oracle = app.add_subcommand("oracle", "exact fronts by exhaustive enumeration");
    add_common(oracle, true);
    oracle->add_option("--max-groups", config.max_groups, "largest group count enumerated per layer");
    oracle->add_option("--bucket", config.bucket, "percentile bucket: p0, p25, p50, p75, p100 or all");

    CLI::App* validate = app.add_subcommand("validate", "wse vs attention-divergence report on a synthetic layer");
    add_common(validate, false);
    validate->add_option("--heads", config.heads, "synthetic head count");
    validate->add_option("--seq-len", config.seq_len, "synthetic sequence length");
    validate->add_option("--head-dim", config.head_dim, "synthetic head dimension");
    validate->add_option("--model-dim", config.model_dim, "synthetic model dimension");
    validate->add_option("--samples", config.samples, "number of sampled groupings");

    CLI::App* apply = app.add_subcommand("apply", "mean-pool a checkpoint according to a plan");
    add_common(apply, true);
    apply->add_option("--plan", config.plan_path, "plan file or front plan sidecar (.json)")->required();
    apply->add_option("--plan-id", config.plan_id, "plan index when --plan holds an array");

    CLI::App* convert = app.add_subcommand("convert", "slice fused per-layer projections into per-head tensors");
    add_common(convert, true);
    convert->add_option("--heads", config.heads, "number of heads per layer")->required();

    CLI11_PARSE(app, argc, argv);

    try {
        if (search->parsed()) {
            return cmd_search(config);
        }
        if (gqa->parsed()) {
            return cmd_gqa(config, gqa_groups_opt->count() > 0);
        }
        if (oracle->parsed()) {
            return cmd_oracle(config);
        }
        if (validate->parsed()) {
            return cmd_validate(config);
        }
        if (apply->parsed()) {
            return cmd_apply(config);
        }
        if (convert->parsed()) {
            return cmd_convert(config);
        }
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 1;
}
