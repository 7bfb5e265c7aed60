// Copyright (c) 2026, The pmq authors
// SPDX-License-Identifier: Apache-2.0

#include "pmq/calib.hpp"
#include "pmq/errors.hpp"
#include "pmq/merge.hpp"
#include "pmq/synthetic.hpp"
#include "test_util.hpp"

#include <catch_amalgamated.hpp>

#include <filesystem>

using namespace pmq;

namespace {

Checkpoint stack(test::Rng& rng, const std::vector<std::size_t>& dims) {
    Checkpoint c;
    std::vector<Activation> acts;
    for (std::size_t l = 0; l + 1 < dims.size(); ++l) {
        c.layers.push_back({"l" + std::to_string(l), test::random_matrix(rng, dims[l + 1], dims[l], 0.5),
                            std::vector<double>(dims[l + 1], 0.05)});
        acts.push_back(l + 2 == dims.size() ? Activation::Identity : Activation::Relu);
    }
    c.manifest = manifest_for(c.layers, acts);
    return c;
}

CalibSet calib_for(test::Rng& rng, std::size_t d, std::vector<std::size_t> sizes) {
    CalibSet s;
    for (std::size_t i = 0; i < sizes.size(); ++i) {
        s.tasks.push_back({i, test::random_matrix(rng, d, sizes[i]), std::nullopt});
    }
    s.samples_per_task = sizes.empty() ? 0 : sizes[0];
    return s;
}

Matrix gram_oracle(const Matrix& x) {
    return test::naive_matmul(x, x.transpose());
}

}  // namespace

TEST_CASE("first-layer statistics use raw inputs", "[calib]") {
    test::Rng rng(61);
    const Checkpoint c = stack(rng, {5, 6, 3});
    Model m(c);
    const CalibSet calib = calib_for(rng, 5, {40, 33});
    const auto before = collect_layer_stats(m, calib, 0);
    QuantConfig cfg;
    cfg.bits = 2;
    m.replace_layer(0, rtn_quantize(c.layers[0].weight, cfg));
    const auto after = collect_layer_stats(m, calib, 0);
    for (std::size_t i = 0; i < 2; ++i) {
        CHECK(before.activations[i] == calib.tasks[i].inputs);
        CHECK(after.activations[i] == calib.tasks[i].inputs);
        CHECK(max_abs_diff(before.stats.hessians[i], gram_oracle(calib.tasks[i].inputs)) <= 1e-10);
    }
    CHECK(before.stats.counts == std::vector<std::size_t>{40, 33});
    CHECK(before.stats.dim == 5);
}

TEST_CASE("single sample gives a rank-one hessian", "[calib]") {
    const std::vector<Matrix> acts{Matrix{{1.0}, {-2.0}, {3.0}}};
    const LayerCalibStats s = stats_from_activations(acts);
    CHECK(s.hessians[0] == Matrix{{1, -2, 3}, {-2, 4, -6}, {3, -6, 9}});
    CHECK(s.energies[0] == 14.0);
    CHECK(s.total_energy() == 14.0);
}

TEST_CASE("incremental cache matches a full re-run", "[calib]") {
    test::Rng rng(62);
    const Checkpoint c = stack(rng, {6, 8, 7, 4});
    Model m(c);
    const CalibSet calib = calib_for(rng, 6, {50, 70});
    QuantConfig cfg;
    cfg.bits = 3;
    cfg.group_size = 4;

    std::vector<Matrix> cache;
    for (const auto& t : calib.tasks) {
        cache.push_back(t.inputs);
    }
    for (std::size_t l = 0; l < m.num_layers(); ++l) {
        const auto inc = collect_layer_stats(m, calib, l, &cache);
        const auto full = collect_layer_stats(m, calib, l);
        for (std::size_t i = 0; i < calib.num_tasks(); ++i) {
            CHECK(max_abs_diff(inc.stats.hessians[i], full.stats.hessians[i]) <= 1e-10);
            CHECK(std::abs(inc.stats.energies[i] - full.stats.energies[i]) <= 1e-10 * full.stats.energies[i]);
        }
        m.replace_layer(l, rtn_quantize(c.layers[l].weight, cfg));
        for (auto& x : cache) {
            x = propagate_through_layer(x, m.layer(l));
        }
    }

    std::vector<Matrix> wrong{Matrix(3, 50), Matrix(3, 70)};
    CHECK_THROWS_AS(collect_layer_stats(m, calib, 1, &wrong), ShapeError);
    std::vector<Matrix> short_cache{calib.tasks[0].inputs};
    CHECK_THROWS_AS(collect_layer_stats(m, calib, 0, &short_cache), ShapeError);
}

TEST_CASE("statistics are invariant to chunking", "[calib][property]") {
    test::Rng rng(63);
    const Checkpoint c = stack(rng, {4, 9, 5});
    const Model m(c);
    const CalibSet calib = calib_for(rng, 4, {65, 17});
    const auto ref = collect_layer_stats(m, calib, 1, nullptr, 32);
    for (std::size_t chunk : {1, 7, 32, 1000}) {
        const auto s = collect_layer_stats(m, calib, 1, nullptr, chunk);
        for (std::size_t i = 0; i < 2; ++i) {
            CHECK(max_abs_diff(s.stats.hessians[i], ref.stats.hessians[i]) <= 1e-10);
            CHECK(s.activations[i] == ref.activations[i]);
        }
    }
}

TEST_CASE("hessians are symmetric PSD with trace equal to energy", "[calib][property]") {
    test::Rng rng(64);
    std::normal_distribution<double> n(0.0, 1.0);
    for (int rep = 0; rep < 30; ++rep) {
        const Checkpoint c = stack(rng, {5, 7, 6, 3});
        const Model m(c);
        const CalibSet calib = calib_for(rng, 5, {static_cast<std::size_t>(1 + rep), 12});
        for (std::size_t l = 0; l < m.num_layers(); ++l) {
            const auto s = collect_layer_stats(m, calib, l).stats;
            for (std::size_t i = 0; i < 2; ++i) {
                const Matrix& h = s.hessians[i];
                double tr = 0.0;
                for (std::size_t k = 0; k < h.rows(); ++k) {
                    tr += h(k, k);
                }
                CHECK(std::abs(tr - s.energies[i]) <= 1e-9 * std::max(1.0, s.energies[i]));
                CHECK(h == h.transpose());
                for (int probe = 0; probe < 5; ++probe) {
                    Matrix v(1, h.rows());
                    for (double& x : v.data()) {
                        x = n(rng);
                    }
                    const double vv = test::frob(v) * test::frob(v);
                    CHECK(test::quad_form(v, Matrix(1, h.rows()), h) >= -1e-8 * vv * tr);
                }
            }
        }
    }
}

TEST_CASE("anchor_lambda", "[calib]") {
    LayerCalibStats s;
    s.dim = 4;
    s.hessians = {Matrix(4, 4), Matrix(4, 4)};
    s.energies = {8.0, 8.0};
    s.counts = {1, 1};
    CHECK(anchor_lambda(s, 0.0) == 0.0);
    CHECK(std::abs(anchor_lambda(s, 0.1) - 0.4) <= 1e-15);

    test::Rng rng(65);
    for (int rep = 0; rep < 50; ++rep) {
        const std::vector<Matrix> acts{test::random_matrix(rng, 6, 10), test::random_matrix(rng, 6, 3)};
        const LayerCalibStats st = stats_from_activations(acts);
        Matrix pooled = gram_oracle(acts[0]) + gram_oracle(acts[1]);
        double tr = 0.0;
        for (std::size_t k = 0; k < 6; ++k) {
            tr += pooled(k, k);
        }
        const double want = 0.37 / 6.0 * tr;
        CHECK(std::abs(anchor_lambda(st, 0.37) - want) <= 1e-9 * want);
    }
    const std::vector<Matrix> zeros{Matrix(3, 4)};
    CHECK(anchor_lambda(stats_from_activations(zeros), 5.0) == 0.0);
}

TEST_CASE("calibration sets round trip through disk", "[calib][io]") {
    test::Rng rng(66);
    CalibSet s = calib_for(rng, 3, {4, 6});
    s.tasks[1].targets = test::random_matrix(rng, 2, 6);
    s.seed = 99;
    const auto dir = std::filesystem::temp_directory_path() / "pmq_test_calib";
    std::filesystem::remove_all(dir);
    save_calib_set(s, dir);
    CHECK(std::filesystem::exists(dir / "task1.safetensors"));
    CHECK(std::filesystem::exists(dir / "task2.safetensors"));
    const CalibSet back = load_calib_set(dir);
    REQUIRE(back.num_tasks() == 2);
    CHECK(back.seed == 99);
    CHECK(back.tasks[0].inputs == s.tasks[0].inputs);
    CHECK_FALSE(back.tasks[0].targets);
    CHECK(*back.tasks[1].targets == *s.tasks[1].targets);

    const CalibSet cut = s.truncated(2);
    CHECK(cut.tasks[1].inputs.cols() == 2);
    CHECK(cut.tasks[1].targets->cols() == 2);
}

TEST_CASE("synthetic tasks are deterministic", "[calib][synthetic]") {
    SyntheticOptions o;
    o.seed = 5;
    o.dims = {6, 8, 3};
    o.train_steps = 20;
    o.samples_per_task = 16;
    const auto a = make_synthetic_tasks(o);
    const auto b = make_synthetic_tasks(o);
    CHECK(a.base == b.base);
    REQUIRE(a.experts.size() == 2);
    CHECK(a.experts[1] == b.experts[1]);
    CHECK(a.calib.tasks[0].inputs == b.calib.tasks[0].inputs);
    CHECK(*a.heldout.tasks[1].targets == *b.heldout.tasks[1].targets);
    CHECK(a.calib.tasks[0].inputs.cols() == 16);
    CHECK(a.calib.tasks[0].inputs != a.heldout.tasks[0].inputs.col_slice(0, 16));
    o.seed = 6;
    CHECK_FALSE(make_synthetic_tasks(o).base == a.base);
}

TEST_CASE("one task with no training steps merges back to the base", "[calib][synthetic]") {
    SyntheticOptions o;
    o.num_tasks = 1;
    o.train_steps = 0;
    o.dims = {4, 5, 2};
    const auto p = make_synthetic_tasks(o);
    CHECK(p.experts[0] == p.base);
    for (auto method : {MergeMethod::Average, MergeMethod::TaskArithmetic, MergeMethod::Ties}) {
        MergeSpec spec;
        spec.method = method;
        CHECK(merge(spec, p.base, p.experts) == p.base);
    }
}

TEST_CASE("gradient descent reduces the training loss", "[calib][synthetic]") {
    test::Rng rng(67);
    Checkpoint c = stack(rng, {3, 6, 2});
    const Matrix x = test::random_matrix(rng, 3, 40);
    const Matrix y = test::random_matrix(rng, 2, 40);
    const double before = mean_squared_loss(c, x, y);
    gradient_descent(c, x, y, 50, 0.01);
    CHECK(mean_squared_loss(c, x, y) < before);
}

TEST_CASE("trained experts beat the base on their own task", "[calib][synthetic]") {
    int wins = 0;
    int total = 0;
    for (std::uint64_t seed = 0; seed < 40; ++seed) {
        SyntheticOptions o;
        o.seed = seed;
        const auto p = make_synthetic_tasks(o);
        for (std::size_t t = 0; t < p.experts.size(); ++t) {
            const auto& h = p.heldout.tasks[t];
            wins += mean_squared_loss(p.experts[t], h.inputs, *h.targets) <
                    mean_squared_loss(p.base, h.inputs, *h.targets);
            ++total;
        }
    }
    CHECK(wins >= 0.95 * total);
}
