// End-to-end checks of the command-line tool. Expects the tool path as
// argv[1] (wired up by ctest).

#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <string>

#include <json.hpp>

#include "qcqa/io.hpp"
#include "qcqa/kvcache.hpp"
#include "qcqa/oracle.hpp"
#include "qcqa/wse.hpp"
#include "testutil.hpp"

using namespace qcqa;
namespace fs = std::filesystem;
using nlohmann::json;

namespace {

int g_failures = 0;

void check(bool condition, const std::string& what)
{
    if (!condition) {
        ++g_failures;
        std::cerr << "FAILED: " << what << "\n";
    }
}

int run(const std::string& command)
{
    const int status = std::system(command.c_str());
    return status == 0 ? 0 : 1;
}

std::string slurp(const fs::path& path)
{
    std::ifstream in(path, std::ios::binary);
    return std::string((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
}

} // namespace

int main(int argc, char** argv)
{
    if (argc < 2) {
        std::cerr << "usage: qcqa_cli_test <path-to-qcqa-binary>\n";
        return 2;
    }
    const std::string tool = argv[1];
    const fs::path dir = fs::temp_directory_path() / "qcqa_cli_test";
    fs::remove_all(dir);
    fs::create_directories(dir);

    const WeightArchive archive = test::random_archive(2, 6, 4, 4, 8, 31337);
    const fs::path checkpoint = dir / "toy.qkv";
    save_archive(archive, checkpoint);

    const std::string common = " --checkpoint " + checkpoint.string() + " --seed 9 --threads 2";

    // search: determinism and the MHA extreme
    const std::string search_args = " --max-groups 3 --pop-size1 64 --ngen1 200 --pop-size2 64 --ngen2 100";
    check(run(tool + " search" + common + search_args + " --out " + (dir / "run1").string()) == 0,
          "search exits 0");
    check(run(tool + " search" + common + search_args + " --out " + (dir / "run2").string()) == 0,
          "search rerun exits 0");
    const std::string front1 = slurp(dir / "run1" / "front.csv");
    check(!front1.empty(), "search wrote front.csv");
    check(front1 == slurp(dir / "run2" / "front.csv"), "same config and seed give a byte-identical front");
    check(fs::exists(dir / "run1" / "manifest.json"), "search wrote a manifest");
    {
        const json manifest = json::parse(slurp(dir / "run1" / "manifest.json"));
        check(manifest.at("config").at("seed") == 9, "manifest records the seed");
        const FrontFileData front = load_front(dir / "run1" / "front.csv", dir / "run1" / "front_plans.json");
        check(!front.front.empty() && front.front.back().kv == 1.0 && front.front.back().wse == 0.0,
              "search front keeps the all-MHA point");
    }

    // oracle agrees with the evolved search at oracle-friendly scale
    check(run(tool + " oracle" + common + " --max-groups 3 --out " + (dir / "oracle").string()) == 0,
          "oracle exits 0");
    {
        const FrontFileData evolved = load_front(dir / "run1" / "front.csv", dir / "run1" / "front_plans.json");
        const FrontFileData exact = load_front(dir / "oracle" / "front.csv", dir / "oracle" / "front_plans.json");
        check(evolved.front.size() == exact.front.size(), "evolved and exact fronts have equal size");
        if (evolved.front.size() == exact.front.size()) {
            for (std::size_t i = 0; i < evolved.front.size(); ++i) {
                check(evolved.front[i].kv == exact.front[i].kv, "front kv matches the oracle");
                check(std::abs(evolved.front[i].wse - exact.front[i].wse) <= 1e-9,
                      "front wse matches the oracle");
            }
        }
        check(fs::exists(dir / "oracle" / "layer0_front.csv") && fs::exists(dir / "oracle" / "layer1_front.csv"),
              "oracle wrote per-layer fronts");
    }

    // gqa: single requested group count and the divisor sweep
    check(run(tool + " gqa" + common + " --max-groups 2 --out " + (dir / "gqa2").string()) == 0,
          "gqa exits 0");
    {
        const FrontFileData front = load_front(dir / "gqa2" / "front.csv", dir / "gqa2" / "front_plans.json");
        check(front.front.size() == 1 && front.front[0].kv == 2.0 / 6.0, "gqa --max-groups 2 emits kv=P/H");
        ModelPlan expected = ModelPlan::all_mha(2);
        for (auto& choice : expected.per_layer) {
            choice = gqa_baseline(6, 2);
        }
        check(front.front[0].candidate == expected, "gqa plan groups consecutive heads in every layer");
        check(front.front[0].wse == model_wse(archive, expected).value, "gqa wse matches the library");
    }
    check(run(tool + " gqa" + common + " --out " + (dir / "gqa_all").string()) == 0, "gqa sweep exits 0");
    {
        const FrontFileData front = load_front(dir / "gqa_all" / "front.csv", dir / "gqa_all" / "front_plans.json");
        check(front.front.size() == 4, "gqa sweep covers the divisors of 6"); // P in {1,2,3,6}
    }

    // validate: report with a finite correlation and a monotone sweep
    check(run(tool + " validate --out " + (dir / "validate").string()
              + " --seed 42 --heads 8 --seq-len 16 --head-dim 8 --model-dim 16 --samples 40")
              == 0,
          "validate exits 0");
    {
        const json report = json::parse(slurp(dir / "validate" / "report.json"));
        check(report.at("degenerate") == false, "validate correlation is not degenerate");
        check(report.at("spearman").is_number() && report.at("spearman").get<double>() > 0.5,
              "validate reports spearman > 0.5");
        check(report.at("sweep_monotone_non_increasing") == true, "validate sweep is monotone");
        check(!slurp(dir / "validate" / "samples.csv").empty(), "validate wrote samples.csv");
        check(!slurp(dir / "validate" / "sweep.csv").empty(), "validate wrote sweep.csv");
    }

    // apply: pooled checkpoint honors the chosen plan's kv accounting
    check(run(tool + " apply" + common + " --plan " + (dir / "run1" / "front_plans.json").string()
              + " --plan-id 0 --out " + (dir / "apply").string())
              == 0,
          "apply exits 0");
    {
        const WeightArchive pooled = load_archive(dir / "apply" / "pooled.qkv");
        const std::vector<PlanFileData> plans = load_plans(dir / "run1" / "front_plans.json");
        long long heads_total = 0;
        for (const auto& layer : pooled.layers) {
            heads_total += layer.head_count();
        }
        check(static_cast<double>(heads_total) / (6.0 * 2.0) == plans[0].kv_fraction,
              "pooled head count matches the plan's kv fraction");
    }

    // convert: fused projections sliced into heads
    const fs::path fused = dir / "fused.qkv";
    {
        std::vector<test::RawEntry> entries;
        for (int layer = 0; layer < 2; ++layer) {
            test::RawEntry k{ "layers." + std::to_string(layer) + ".k_proj", "f64", { 6, 3 }, {}, -1 };
            test::RawEntry v{ "layers." + std::to_string(layer) + ".v_proj", "f64", { 6, 3 }, {}, -1 };
            for (int i = 0; i < 18; ++i) {
                k.values.push_back(layer * 100 + i);
                v.values.push_back(layer * 100 + 50 + i);
            }
            entries.push_back(std::move(k));
            entries.push_back(std::move(v));
        }
        test::write_raw_file(fused, entries);
    }
    check(run(tool + " convert --checkpoint " + fused.string() + " --heads 3 --out "
              + (dir / "convert").string())
              == 0,
          "convert exits 0");
    {
        const WeightArchive converted = load_archive(dir / "convert" / "converted.qkv");
        check(converted.layer_count() == 2 && converted.heads_per_layer() == 3,
              "convert produced 2 layers of 3 heads");
        check(converted.layers[0].keys[1] == HeadMatrix(2, 3, { 6, 7, 8, 9, 10, 11 }),
              "convert sliced rows into the right heads");
    }

    // failure paths exit nonzero
    check(run(tool + " search --checkpoint " + (dir / "missing.qkv").string() + " --out "
              + (dir / "x").string())
              != 0,
          "missing checkpoint fails");
    check(run(tool + " search" + common + " --encoding ec --max-groups 4 --out " + (dir / "y").string()) != 0,
          "ec with non-dividing group count fails");

    if (g_failures == 0) {
        std::cout << "cli test passed\n";
        return 0;
    }
    std::cerr << g_failures << " cli checks failed\n";
    return 1;
}
