// Copyright (c) 2026, The pmq authors
// SPDX-License-Identifier: Apache-2.0

#include "pmq/merge.hpp"

#include "pmq/errors.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <numeric>
#include <string>
#include <vector>

namespace pmq {

std::string_view merge_method_name(MergeMethod m) noexcept {
    switch (m) {
        case MergeMethod::Average: return "average";
        case MergeMethod::TaskArithmetic: return "task_arithmetic";
        case MergeMethod::Ties: return "ties";
    }
    return "?";
}

MergeMethod merge_method_from_name(std::string_view name) {
    for (MergeMethod m : {MergeMethod::Average, MergeMethod::TaskArithmetic, MergeMethod::Ties}) {
        if (name == merge_method_name(m)) {
            return m;
        }
    }
    throw ConfigError("unknown merge method '" + std::string(name) + "'");
}

void MergeSpec::validate() const {
    if (method != MergeMethod::Average && !(coefficient > 0.0)) {
        throw ConfigError("merge coefficient must be > 0");
    }
    if (method == MergeMethod::Ties && !(density > 0.0 && density <= 1.0)) {
        throw ConfigError("ties density must be in (0, 1]");
    }
}

namespace {

void require_experts(std::span<const Checkpoint> experts, const Checkpoint* base) {
    if (experts.empty()) {
        throw ShapeError("merge needs at least one expert");
    }
    for (const auto& e : experts) {
        e.validate();
        require_same_architecture(experts[0], e);
    }
    if (base) {
        base->validate();
        require_same_architecture(*base, experts[0]);
    }
}

using TensorMerge = std::function<void(std::span<const std::span<const double>> experts,
                                       std::span<const double> base, std::span<double> out)>;

// Applies `fn` to every weight and bias tensor. `base` may be null; then the
// first expert stands in for the layout.
Checkpoint merge_tensors(const Checkpoint* base, std::span<const Checkpoint> experts, const TensorMerge& fn) {
    Checkpoint out = base ? *base : experts[0];
    std::vector<std::span<const double>> views(experts.size());
    for (std::size_t l = 0; l < out.layers.size(); ++l) {
        for (std::size_t e = 0; e < experts.size(); ++e) {
            views[e] = experts[e].layers[l].weight.data();
        }
        const std::span<const double> b = base ? base->layers[l].weight.data() : std::span<const double>{};
        Matrix merged(out.layers[l].weight.rows(), out.layers[l].weight.cols());
        fn(views, b, merged.data());
        out.layers[l].weight = std::move(merged);

        if (out.layers[l].bias) {
            for (std::size_t e = 0; e < experts.size(); ++e) {
                views[e] = *experts[e].layers[l].bias;
            }
            const std::span<const double> bb = base ? std::span<const double>(*base->layers[l].bias)
                                                    : std::span<const double>{};
            std::vector<double> mb(out.layers[l].bias->size());
            fn(views, bb, mb);
            out.layers[l].bias = std::move(mb);
        }
    }
    return out;
}

// Indices of the `keep` largest |v|, ties to the lower index.
std::vector<bool> top_magnitude_mask(std::span<const double> v, std::size_t keep) {
    std::vector<std::size_t> order(v.size());
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::stable_sort(order.begin(), order.end(),
                     [&](std::size_t a, std::size_t b) { return std::abs(v[a]) > std::abs(v[b]); });
    std::vector<bool> mask(v.size(), false);
    for (std::size_t i = 0; i < keep && i < order.size(); ++i) {
        mask[order[i]] = true;
    }
    return mask;
}

}  // namespace

Checkpoint merge_average(std::span<const Checkpoint> experts) {
    require_experts(experts, nullptr);
    const auto k = static_cast<double>(experts.size());
    return merge_tensors(nullptr, experts, [k](auto ex, auto, std::span<double> out) {
        for (std::size_t j = 0; j < out.size(); ++j) {
            double s = 0.0;
            for (const auto& e : ex) {
                s += e[j];
            }
            out[j] = s / k;
        }
    });
}

Checkpoint merge_task_arithmetic(const Checkpoint& base, std::span<const Checkpoint> experts, double coefficient) {
    require_experts(experts, &base);
    // K * coefficient == 1: the base cancels exactly.
    const bool base_cancels = static_cast<double>(experts.size()) * coefficient == 1.0;
    return merge_tensors(&base, experts, [&](auto ex, auto b, std::span<double> out) {
        for (std::size_t j = 0; j < out.size(); ++j) {
            double s = 0.0;
            for (const auto& e : ex) {
                s += base_cancels ? e[j] : e[j] - b[j];
            }
            out[j] = base_cancels ? coefficient * s : b[j] + coefficient * s;
        }
    });
}

Checkpoint merge_ties(const Checkpoint& base, std::span<const Checkpoint> experts, double coefficient,
                      double density) {
    require_experts(experts, &base);
    if (!(density > 0.0 && density <= 1.0)) {
        throw ConfigError("ties density must be in (0, 1]");
    }
    return merge_tensors(&base, experts, [&](auto ex, auto b, std::span<double> out) {
        const std::size_t n = out.size();
        const auto keep = static_cast<std::size_t>(std::ceil(density * static_cast<double>(n)));
        std::vector<std::vector<double>> trimmed(ex.size(), std::vector<double>(n));
        for (std::size_t e = 0; e < ex.size(); ++e) {
            for (std::size_t j = 0; j < n; ++j) {
                trimmed[e][j] = ex[e][j] - b[j];
            }
            const auto mask = top_magnitude_mask(trimmed[e], keep);
            for (std::size_t j = 0; j < n; ++j) {
                if (!mask[j]) {
                    trimmed[e][j] = 0.0;
                }
            }
        }
        for (std::size_t j = 0; j < n; ++j) {
            double total = 0.0;
            for (const auto& t : trimmed) {
                total += t[j];
            }
            const bool positive = total >= 0.0;
            double s = 0.0;
            std::size_t agree = 0;
            for (const auto& t : trimmed) {
                // Zeroed (trimmed) entries carry no sign and never count.
                if ((positive && t[j] > 0.0) || (!positive && t[j] < 0.0)) {
                    s += t[j];
                    ++agree;
                }
            }
            const double tau = agree ? s / static_cast<double>(agree) : 0.0;
            out[j] = b[j] + coefficient * tau;
        }
    });
}

Checkpoint merge(const MergeSpec& spec, const Checkpoint& base, std::span<const Checkpoint> experts) {
    spec.validate();
    switch (spec.method) {
        case MergeMethod::Average: return merge_average(experts);
        case MergeMethod::TaskArithmetic: return merge_task_arithmetic(base, experts, spec.coefficient);
        case MergeMethod::Ties: return merge_ties(base, experts, spec.coefficient, spec.density);
    }
    throw ConfigError("unknown merge method");
}

}  // namespace pmq
