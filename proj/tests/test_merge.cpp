// Copyright (c) 2026, The pmq authors
// SPDX-License-Identifier: Apache-2.0

#include "pmq/errors.hpp"
#include "pmq/merge.hpp"
#include "test_util.hpp"

#include <catch_amalgamated.hpp>

#include <algorithm>
#include <cmath>

using namespace pmq;

namespace {

Checkpoint random_ckpt(test::Rng& rng, bool bias = true) {
    Checkpoint c;
    std::vector<double> b1{0.1, -0.2, 0.3};
    if (bias) {
        const Matrix b = test::random_matrix(rng, 1, 3);
        b1.assign(b.data().begin(), b.data().end());
    }
    c.layers.push_back({"a", test::random_matrix(rng, 3, 4), b1});
    c.layers.push_back({"b", test::random_matrix(rng, 2, 3), std::nullopt});
    c.manifest = manifest_for(c.layers, {Activation::Relu, Activation::Identity});
    return c;
}

Checkpoint scalar_ckpt(double w) {
    Checkpoint c;
    c.layers.push_back({"s", Matrix{{w}}, std::nullopt});
    c.manifest = manifest_for(c.layers, {Activation::Identity});
    return c;
}

/// Steps (1)-(5) on one flat tensor, written without sorting.
std::vector<double> ties_reference(const std::vector<double>& base, const std::vector<std::vector<double>>& experts,
                                   double coefficient, double density) {
    const std::size_t n = base.size();
    const auto keep = static_cast<std::size_t>(std::ceil(density * static_cast<double>(n)));
    std::vector<std::vector<double>> trimmed;
    for (const auto& e : experts) {
        std::vector<double> tau(n);
        for (std::size_t j = 0; j < n; ++j) {
            tau[j] = e[j] - base[j];
        }
        std::vector<double> t(n, 0.0);
        for (std::size_t j = 0; j < n; ++j) {
            std::size_t ahead = 0;
            for (std::size_t k = 0; k < n; ++k) {
                if (std::abs(tau[k]) > std::abs(tau[j]) || (std::abs(tau[k]) == std::abs(tau[j]) && k < j)) {
                    ++ahead;
                }
            }
            if (ahead < keep) {
                t[j] = tau[j];
            }
        }
        trimmed.push_back(t);
    }
    std::vector<double> out(n);
    for (std::size_t j = 0; j < n; ++j) {
        double sum = 0.0;
        for (const auto& t : trimmed) {
            sum += t[j];
        }
        const double sign = sum >= 0.0 ? 1.0 : -1.0;
        double acc = 0.0;
        int count = 0;
        for (const auto& t : trimmed) {
            if (t[j] * sign > 0.0) {
                acc += t[j];
                ++count;
            }
        }
        out[j] = base[j] + coefficient * (count ? acc / count : 0.0);
    }
    return out;
}

std::vector<double> flat(const Matrix& m) {
    return {m.data().begin(), m.data().end()};
}

}  // namespace

TEST_CASE("merge_average", "[merge]") {
    test::Rng rng(51);
    const Checkpoint a = random_ckpt(rng);
    const std::vector<Checkpoint> one{a};
    CHECK(merge_average(one) == a);

    Checkpoint neg = a;
    for (auto& l : neg.layers) {
        l.weight = -1.0 * l.weight;
        if (l.bias) {
            for (double& v : *l.bias) {
                v = -v;
            }
        }
    }
    const std::vector<Checkpoint> pair{a, neg};
    const Checkpoint zero = merge_average(pair);
    for (const auto& l : zero.layers) {
        CHECK(test::frob(l.weight) == 0.0);
    }

    const std::vector<Checkpoint> three{random_ckpt(rng), random_ckpt(rng), random_ckpt(rng)};
    const Checkpoint m = merge_average(three);
    for (std::size_t l = 0; l < m.layers.size(); ++l) {
        for (std::size_t i = 0; i < m.layers[l].weight.size(); ++i) {
            double s = 0.0;
            for (const auto& e : three) {
                s += e.layers[l].weight.data()[i];
            }
            CHECK(m.layers[l].weight.data()[i] == s / 3.0);
        }
    }
    REQUIRE(m.layers[0].bias);
    CHECK((*m.layers[0].bias)[1] ==
          ((*three[0].layers[0].bias)[1] + (*three[1].layers[0].bias)[1] + (*three[2].layers[0].bias)[1]) / 3.0);
}

TEST_CASE("merge_average is permutation invariant", "[merge][property]") {
    test::Rng rng(52);
    for (int rep = 0; rep < 20; ++rep) {
        std::vector<Checkpoint> e{random_ckpt(rng), random_ckpt(rng), random_ckpt(rng), random_ckpt(rng)};
        const Checkpoint m = merge_average(e);
        std::shuffle(e.begin(), e.end(), rng);
        const Checkpoint p = merge_average(e);
        for (std::size_t l = 0; l < m.layers.size(); ++l) {
            CHECK(max_abs_diff(m.layers[l].weight, p.layers[l].weight) <= 1e-15);
        }
    }
}

TEST_CASE("merge_task_arithmetic", "[merge]") {
    test::Rng rng(53);
    const Checkpoint base = random_ckpt(rng);
    const std::vector<Checkpoint> two{random_ckpt(rng), random_ckpt(rng)};
    CHECK(merge_task_arithmetic(base, two, 0.0) == base);

    const std::vector<Checkpoint> one{two[0]};
    CHECK(merge_task_arithmetic(base, one, 1.0) == two[0]);

    const Checkpoint m = merge_task_arithmetic(base, two, 0.3);
    for (std::size_t l = 0; l < m.layers.size(); ++l) {
        for (std::size_t i = 0; i < m.layers[l].weight.size(); ++i) {
            const double b = base.layers[l].weight.data()[i];
            double s = 0.0;
            for (const auto& e : two) {
                s += e.layers[l].weight.data()[i] - b;
            }
            CHECK(std::abs(m.layers[l].weight.data()[i] - (b + 0.3 * s)) <= 1e-14);
        }
    }
    CHECK(std::abs((*m.layers[0].bias)[2] -
                   ((*base.layers[0].bias)[2] + 0.3 * ((*two[0].layers[0].bias)[2] - (*base.layers[0].bias)[2] +
                                                       (*two[1].layers[0].bias)[2] - (*base.layers[0].bias)[2]))) <=
          1e-14);
}

TEST_CASE("merge_ties hand cases", "[merge]") {
    const Checkpoint base = scalar_ckpt(0.0);
    const std::vector<Checkpoint> e{scalar_ckpt(1.0), scalar_ckpt(3.0), scalar_ckpt(-2.0)};
    CHECK(merge_ties(base, e, 1.0, 1.0).layers[0].weight(0, 0) == 2.0);
    CHECK(merge_ties(base, e, 0.3, 1.0).layers[0].weight(0, 0) == 0.3 * 2.0);

    // Zero sum elects +; no positive contributions leaves the base.
    const std::vector<Checkpoint> cancel{scalar_ckpt(1.0), scalar_ckpt(-1.0)};
    CHECK(merge_ties(base, cancel, 1.0, 1.0).layers[0].weight(0, 0) == 1.0);
    const std::vector<Checkpoint> none{scalar_ckpt(0.0), scalar_ckpt(0.0)};
    CHECK(merge_ties(base, none, 1.0, 1.0).layers[0].weight(0, 0) == 0.0);

    // Trimming: equal magnitudes keep the lower flat index.
    Checkpoint b2;
    b2.layers.push_back({"s", Matrix{{0.0, 0.0, 0.0}}, std::nullopt});
    b2.manifest = manifest_for(b2.layers, {Activation::Identity});
    Checkpoint x = b2;
    x.layers[0].weight = Matrix{{1.0, -1.0, 0.5}};
    const std::vector<Checkpoint> ex{x};
    CHECK(merge_ties(b2, ex, 1.0, 0.34).layers[0].weight == Matrix{{1.0, -1.0, 0.0}});
    CHECK(merge_ties(b2, ex, 1.0, 0.2).layers[0].weight == Matrix{{1.0, 0.0, 0.0}});
}

TEST_CASE("merge_ties matches a literal reference", "[merge]") {
    test::Rng rng(54);
    for (int rep = 0; rep < 30; ++rep) {
        Checkpoint base;
        base.layers.push_back({"a", test::random_matrix(rng, 4, 4), std::vector<double>{0.5, 0.0, -0.5, 1.0}});
        base.manifest = manifest_for(base.layers, {Activation::Identity});
        std::vector<Checkpoint> experts;
        for (int k = 0; k < 3; ++k) {
            Checkpoint e = base;
            e.layers[0].weight = test::random_matrix(rng, 4, 4);
            const Matrix b = test::random_matrix(rng, 1, 4);
            e.layers[0].bias = flat(b);
            experts.push_back(e);
        }
        const double density = rep % 3 == 0 ? 0.5 : rep % 3 == 1 ? 0.2 : 1.0;
        const Checkpoint m = merge_ties(base, experts, 0.7, density);

        std::vector<std::vector<double>> ew, eb;
        for (const auto& e : experts) {
            ew.push_back(flat(e.layers[0].weight));
            eb.push_back(*e.layers[0].bias);
        }
        const auto rw = ties_reference(flat(base.layers[0].weight), ew, 0.7, density);
        const auto rb = ties_reference(*base.layers[0].bias, eb, 0.7, density);
        for (std::size_t i = 0; i < rw.size(); ++i) {
            CHECK(std::abs(m.layers[0].weight.data()[i] - rw[i]) <= 1e-14);
        }
        for (std::size_t i = 0; i < rb.size(); ++i) {
            CHECK(std::abs((*m.layers[0].bias)[i] - rb[i]) <= 1e-14);
        }
    }
}

TEST_CASE("ties with unanimous signs reduces to a mean task vector", "[merge][property]") {
    test::Rng rng(55);
    std::uniform_real_distribution<double> mag(0.1, 2.0);
    for (int rep = 0; rep < 20; ++rep) {
        const Checkpoint base = random_ckpt(rng);
        std::vector<Checkpoint> experts(3, base);
        for (std::size_t l = 0; l < base.layers.size(); ++l) {
            for (std::size_t i = 0; i < base.layers[l].weight.size(); ++i) {
                const double sign = (i + l) % 2 ? 1.0 : -1.0;
                for (auto& e : experts) {
                    e.layers[l].weight.data()[i] += sign * mag(rng);
                }
            }
        }
        const Checkpoint ties = merge_ties(base, experts, 0.4, 1.0);
        // base + 0.4 * mean(tau) == task arithmetic with coefficient 0.4 / K.
        const Checkpoint ta = merge_task_arithmetic(base, experts, 0.4 / 3.0);
        for (std::size_t l = 0; l < base.layers.size(); ++l) {
            CHECK(max_abs_diff(ties.layers[l].weight, ta.layers[l].weight) <= 1e-13);
        }

        const std::vector<Checkpoint> same(3, experts[0]);
        const Checkpoint t2 = merge_ties(base, same, 0.4, 1.0);
        for (std::size_t l = 0; l < base.layers.size(); ++l) {
            CHECK(max_abs_diff(t2.layers[l].weight,
                               base.layers[l].weight + 0.4 * (experts[0].layers[l].weight - base.layers[l].weight)) <=
                  1e-14);
        }
    }
}

TEST_CASE("merge rejects mismatched experts and bad specs", "[merge]") {
    test::Rng rng(56);
    const Checkpoint a = random_ckpt(rng);
    Checkpoint b = random_ckpt(rng);
    b.layers[1].weight = Matrix(2, 3);
    b.manifest.layers[1].activation = Activation::Gelu;
    const std::vector<Checkpoint> e{a, b};
    CHECK_THROWS_AS(merge_average(e), ShapeError);
    CHECK_THROWS_AS(merge_average(std::span<const Checkpoint>{}), ShapeError);

    MergeSpec s;
    s.method = MergeMethod::Ties;
    s.density = 0.0;
    CHECK_THROWS_AS(s.validate(), ConfigError);
    s.density = 1.0;
    s.coefficient = -1.0;
    CHECK_THROWS_AS(s.validate(), ConfigError);
    CHECK(merge_method_from_name("ties") == MergeMethod::Ties);
}
