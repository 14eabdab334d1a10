#include <doctest.h>

#include <cmath>

#include "qcqa/oracle.hpp"
#include "qcqa/wse.hpp"
#include "testutil.hpp"

using namespace qcqa;

TEST_CASE("mean_pool")
{
    const std::vector<HeadMatrix> heads{
        HeadMatrix(1, 2, { 1, 3 }),
        HeadMatrix(1, 2, { 3, 5 }),
        HeadMatrix(1, 2, { 1, 3 }),
    };
    SUBCASE("singleton mean is identity")
    {
        const std::vector<int> group{ 0 };
        CHECK(mean_pool(heads, group) == heads[0]);
    }
    SUBCASE("arithmetic mean")
    {
        const std::vector<int> group{ 0, 1 };
        CHECK(mean_pool(heads, group) == HeadMatrix(1, 2, { 2, 4 }));
    }
    SUBCASE("mean of identical matrices is the matrix")
    {
        const std::vector<int> group{ 0, 2 };
        CHECK(mean_pool(heads, group) == heads[0]);
    }
    SUBCASE("errors")
    {
        const std::vector<int> empty;
        CHECK_THROWS_AS(mean_pool(heads, empty), PartitionError);
        const std::vector<HeadMatrix> ragged{ HeadMatrix(1, 2), HeadMatrix(2, 2) };
        const std::vector<int> both{ 0, 1 };
        CHECK_THROWS_AS(mean_pool(ragged, both), ShapeError);
    }
}

TEST_CASE("layer_wse hand examples")
{
    SUBCASE("all-singleton grouping is zero")
    {
        Rng rng(3);
        const LayerWeights layer = test::random_layer(4, 3, 2, 5, rng);
        CHECK(layer_wse(layer, LayerGrouping::singletons(4)).value == 0.0);
    }
    SUBCASE("two 1x1 heads, one group")
    {
        LayerWeights layer;
        layer.keys = { HeadMatrix(1, 1, { 2 }), HeadMatrix(1, 1, { 4 }) };
        layer.values = { HeadMatrix(1, 1, { 0 }), HeadMatrix(1, 1, { 0 }) };
        CHECK(layer_wse(layer, LayerGrouping::single_group(2)).value == doctest::Approx(2.0).epsilon(1e-15));
    }
    SUBCASE("term weights scale the key and value contributions")
    {
        LayerWeights layer;
        layer.keys = { HeadMatrix(1, 1, { 2 }), HeadMatrix(1, 1, { 4 }) };
        layer.values = { HeadMatrix(1, 1, { 1 }), HeadMatrix(1, 1, { 3 }) };
        const double base_k = 2.0;
        const double base_v = 2.0;
        const double got = layer_wse(layer, LayerGrouping::single_group(2), WseWeights{ 0.5, 2.0 }).value;
        CHECK(got == doctest::Approx(0.5 * base_k + 2.0 * base_v).epsilon(1e-15));
    }
    SUBCASE("grouping must match the layer")
    {
        Rng rng(4);
        const LayerWeights layer = test::random_layer(4, 2, 2, 3, rng);
        CHECK_THROWS_AS(layer_wse(layer, LayerGrouping::singletons(5)), PartitionError);
    }
}

TEST_CASE("refinement never increases wse")
{
    Rng rng(17);
    const LayerWeights layer = test::random_layer(4, 3, 3, 6, rng);
    for (int trial = 0; trial < 100; ++trial) {
        const LayerGrouping fine = test::random_grouping(4, rng);
        const auto coarse = test::merge_two_groups(fine, rng);
        if (!coarse) {
            continue;
        }
        CHECK(layer_wse(layer, *coarse).value >= layer_wse(layer, fine).value - 1e-12);
    }
}

TEST_CASE("singleton minimizes and single group maximizes over all partitions")
{
    Rng rng(23);
    const LayerWeights layer = test::random_layer(5, 2, 2, 4, rng);
    const double coarsest = layer_wse(layer, LayerGrouping::single_group(5)).value;
    PartitionIterator it(5, 5);
    while (auto grouping = it.next()) {
        const double wse = layer_wse(layer, *grouping).value;
        CHECK(wse >= 0.0);
        CHECK(wse <= coarsest + 1e-12);
    }
}

TEST_CASE("translation invariance and scale covariance")
{
    Rng rng(29);
    const LayerWeights layer = test::random_layer(4, 2, 3, 4, rng);
    const LayerGrouping grouping = test::random_grouping(4, rng);
    const double base = layer_wse(layer, grouping).value;

    SUBCASE("adding one constant matrix to every head changes nothing")
    {
        const HeadMatrix key_shift = test::random_matrix(2, 4, rng);
        const HeadMatrix value_shift = test::random_matrix(3, 4, rng);
        LayerWeights shifted = layer;
        for (int h = 0; h < 4; ++h) {
            for (std::size_t i = 0; i < key_shift.data().size(); ++i) {
                shifted.keys[h].data()[i] += key_shift.data()[i];
            }
            for (std::size_t i = 0; i < value_shift.data().size(); ++i) {
                shifted.values[h].data()[i] += value_shift.data()[i];
            }
        }
        CHECK(layer_wse(shifted, grouping).value == doctest::Approx(base).epsilon(1e-9));
    }
    SUBCASE("scaling all weights by s scales wse by s^2")
    {
        for (const double s : { 2.0, 1.7 }) {
            LayerWeights scaled = layer;
            for (int h = 0; h < 4; ++h) {
                for (double& v : scaled.keys[h].data()) {
                    v *= s;
                }
                for (double& v : scaled.values[h].data()) {
                    v *= s;
                }
            }
            CHECK(layer_wse(scaled, grouping).value == doctest::Approx(s * s * base).epsilon(1e-12));
        }
    }
}

TEST_CASE("zero wse exactly when groups hold identical weights")
{
    Rng rng(31);
    SUBCASE("identical heads inside every group give exactly zero")
    {
        for (int trial = 0; trial < 50; ++trial) {
            const LayerGrouping grouping = test::random_grouping(6, rng);
            LayerWeights layer;
            layer.keys.resize(6);
            layer.values.resize(6);
            for (const auto& group : grouping.groups()) {
                const HeadMatrix k = test::random_matrix(3, 4, rng);
                const HeadMatrix v = test::random_matrix(2, 4, rng);
                for (int h : group) {
                    layer.keys[h] = k;
                    layer.values[h] = v;
                }
            }
            CHECK(layer_wse(layer, grouping).value == 0.0);
        }
    }
    SUBCASE("any within-group difference gives strictly positive wse")
    {
        for (int trial = 0; trial < 50; ++trial) {
            const LayerWeights layer = test::random_layer(6, 3, 2, 4, rng);
            const LayerGrouping grouping = test::random_grouping(6, rng);
            const bool has_merged_group = grouping.group_count() < 6;
            if (has_merged_group) {
                CHECK(layer_wse(layer, grouping).value > 0.0);
            }
        }
    }
}

TEST_CASE("model_wse")
{
    const WeightArchive archive = test::random_archive(3, 4, 2, 2, 5, 41);
    SUBCASE("all layers kept as MHA give zero")
    {
        CHECK(model_wse(archive, ModelPlan::all_mha(3)).value == 0.0);
    }
    SUBCASE("a single grouped layer contributes its layer value")
    {
        ModelPlan plan = ModelPlan::all_mha(3);
        plan.per_layer[1] = LayerGrouping::single_group(4);
        CHECK(model_wse(archive, plan).value
              == layer_wse(archive.layers[1], LayerGrouping::single_group(4)).value);
    }
    SUBCASE("grouped layers sum")
    {
        Rng rng(5);
        ModelPlan plan;
        double expected = 0.0;
        for (int i = 0; i < 3; ++i) {
            const LayerGrouping grouping = test::random_grouping(4, rng);
            plan.per_layer.emplace_back(grouping);
            expected += layer_wse(archive.layers[i], grouping).value;
        }
        CHECK(model_wse(archive, plan).value == doctest::Approx(expected).epsilon(1e-15));
    }
    SUBCASE("length mismatch is a plan error")
    {
        CHECK_THROWS_AS(model_wse(archive, ModelPlan::all_mha(2)), PlanError);
    }
}

TEST_CASE("feature_wse")
{
    SUBCASE("identical features within every group give zero")
    {
        Rng rng(47);
        const HeadMatrix f = test::random_matrix(4, 3, rng);
        const std::vector<HeadMatrix> features{ f, f, f };
        CHECK(feature_wse(features, features, LayerGrouping::single_group(3)).value == 0.0);
    }
    SUBCASE("singleton grouping gives zero")
    {
        Rng rng(48);
        std::vector<HeadMatrix> keys;
        std::vector<HeadMatrix> values;
        for (int h = 0; h < 3; ++h) {
            keys.push_back(test::random_matrix(4, 3, rng));
            values.push_back(test::random_matrix(4, 3, rng));
        }
        CHECK(feature_wse(keys, values, LayerGrouping::singletons(3)).value == 0.0);
    }
    SUBCASE("hand example, T=2 d=1")
    {
        const std::vector<HeadMatrix> keys{ HeadMatrix(2, 1, { 1, 1 }), HeadMatrix(2, 1, { 3, 3 }) };
        const std::vector<HeadMatrix> values{ HeadMatrix(2, 1, { 0, 0 }), HeadMatrix(2, 1, { 0, 0 }) };
        CHECK(feature_wse(keys, values, LayerGrouping::single_group(2)).value
              == doctest::Approx(2.0).epsilon(1e-15));
    }
    SUBCASE("shape mismatch")
    {
        const std::vector<HeadMatrix> keys{ HeadMatrix(2, 1), HeadMatrix(2, 1) };
        const std::vector<HeadMatrix> values{ HeadMatrix(2, 1) };
        CHECK_THROWS_AS(feature_wse(keys, values, LayerGrouping::single_group(2)), ShapeError);
    }
}
