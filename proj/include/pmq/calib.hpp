// Copyright (c) 2026, The pmq authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include "pmq/matrix.hpp"
#include "pmq/model.hpp"

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <vector>

namespace pmq {

/// Samples for one task. Inputs are d_in x n; targets (held-out sets only)
/// are d_out x n of the final layer.
struct TaskBatch {
    std::size_t task = 0;  // 0-based
    Matrix inputs;
    std::optional<Matrix> targets;
};

struct CalibSet {
    std::vector<TaskBatch> tasks;
    std::size_t samples_per_task = 0;
    std::uint64_t seed = 0;

    [[nodiscard]] std::size_t num_tasks() const noexcept { return tasks.size(); }
    void validate() const;
    /// First `n` samples of every task.
    [[nodiscard]] CalibSet truncated(std::size_t n) const;
};

/// Per-task statistics of one layer's inputs. Hessians are unnormalized X X^T.
struct LayerCalibStats {
    std::size_t dim = 0;
    std::vector<Matrix> hessians;
    std::vector<double> energies;  // ||X_i||_F^2
    std::vector<std::size_t> counts;

    [[nodiscard]] Matrix pooled_hessian() const;
    [[nodiscard]] double total_energy() const;
};

struct LayerCollection {
    LayerCalibStats stats;
    std::vector<Matrix> activations;  // per task, d x n_i
};

/// Forward chunk width used while collecting activations.
inline constexpr std::size_t kCalibChunk = 32;

/// Layer-`index` inputs per task under the current model, and their stats.
/// `cached`, when given, must already hold those inputs (the pipeline keeps
/// them current by pushing them through each newly quantized layer).
LayerCollection collect_layer_stats(const Model& model, const CalibSet& calib, std::size_t index,
                                    const std::vector<Matrix>* cached = nullptr, std::size_t chunk = kCalibChunk);

/// Statistics of already-materialized activations.
LayerCalibStats stats_from_activations(const std::vector<Matrix>& activations, std::size_t chunk = kCalibChunk);

/// (alpha / d) * sum_i ||X_i||_F^2
double anchor_lambda(const LayerCalibStats& stats, double alpha);

/// `dir/task<i>.safetensors` (tensor `inputs`, plus `targets` when present)
/// and `dir/index.json` {K, samples_per_task, seed}. Task files are 1-based.
void save_calib_set(const CalibSet& set, const std::filesystem::path& dir);
CalibSet load_calib_set(const std::filesystem::path& dir);

}  // namespace pmq
