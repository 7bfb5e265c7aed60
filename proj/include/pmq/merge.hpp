// Copyright (c) 2026, The pmq authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include "pmq/checkpoint.hpp"

#include <span>
#include <string_view>

namespace pmq {

enum class MergeMethod { Average, TaskArithmetic, Ties };

std::string_view merge_method_name(MergeMethod m) noexcept;
MergeMethod merge_method_from_name(std::string_view name);

struct MergeSpec {
    MergeMethod method = MergeMethod::TaskArithmetic;
    double coefficient = 0.3;  // task-vector scaling
    double density = 0.2;      // TIES: fraction of entries kept per task vector

    void validate() const;
};

/// Elementwise mean of the experts, biases included.
Checkpoint merge_average(std::span<const Checkpoint> experts);

/// base + coefficient * sum_i (expert_i - base). When K * coefficient == 1 the
/// result is coefficient * sum_i expert_i, so K = 1, coefficient 1 returns the
/// expert exactly.
Checkpoint merge_task_arithmetic(const Checkpoint& base, std::span<const Checkpoint> experts, double coefficient);

/// TIES: trim each task vector to its top ceil(density * n) magnitudes (lower
/// flat index wins magnitude ties), elect a sign per entry from the sum of
/// trimmed values (zero counts as +), average only the experts agreeing with
/// it, and add coefficient * that disjoint mean to base.
Checkpoint merge_ties(const Checkpoint& base, std::span<const Checkpoint> experts, double coefficient,
                      double density);

Checkpoint merge(const MergeSpec& spec, const Checkpoint& base, std::span<const Checkpoint> experts);

}  // namespace pmq
