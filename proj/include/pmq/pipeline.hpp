// Copyright (c) 2026, The pmq authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include "pmq/calib.hpp"
#include "pmq/checkpoint.hpp"
#include "pmq/model.hpp"
#include "pmq/quant.hpp"
#include "pmq/solver.hpp"

#include <cstdint>
#include <span>
#include <string>
#include <vector>

namespace pmq {

/// Where baseline calibration activations come from.
enum class Trajectory {
    Quantized,      // the partially quantized model (default)
    FullPrecision,  // the untouched merged model
};

struct PipelineOptions {
    /// Re-run the model prefix for every layer instead of advancing the cache.
    bool recompute_trajectory = false;
    Trajectory baseline_trajectory = Trajectory::Quantized;
    std::size_t chunk = kCalibChunk;
};

struct PmqRun {
    QuantConfig cfg;
    Checkpoint merged;
    std::vector<Checkpoint> experts;  // empty for baselines
    std::vector<SolveReport> reports; // one per layer, forward order
    /// Checksum of the realized prefix the layer's statistics were collected under.
    std::vector<std::uint64_t> trajectory_checksums;
    Model quantized;
};

/// Forward-order expert-guided quantization with trajectory-consistent calibration.
PmqRun run_epmq(const Checkpoint& merged, std::span<const Checkpoint> experts, const CalibSet& calib,
                const QuantConfig& cfg, const PipelineOptions& opts = {});

/// RTN or GPTQ on the merged model with pooled Hessians and merged targets.
PmqRun run_naive_ptq(const Checkpoint& merged, const CalibSet& calib, const QuantConfig& cfg,
                     const PipelineOptions& opts = {});

struct DeviationEntry {
    std::size_t layer = 0;
    std::size_t task = 0;
    double quant_norm = 0.0;     // ||Q X - W_m X||_F
    double merge_norm = 0.0;     // ||W_m X - W_i X||_F
    double combined_norm = 0.0;  // ||Q X - W_i X||_F
    double identity_residual = 0.0;  // max |(QX - W_iX) - (dq + dm)|
};

struct DeviationReport {
    std::vector<DeviationEntry> entries;
    double max_identity_residual = 0.0;
    bool identity_holds = true;
};

/// Splits each layer's output deviation from expert i into its quantization
/// and merging parts on held-out activations of the quantized trajectory.
/// Biases are left out of all three terms.
DeviationReport deviation_diagnostics(const Model& quantized, const Checkpoint& merged,
                                      std::span<const Checkpoint> experts, const CalibSet& heldout,
                                      double tolerance = 1e-9);
DeviationReport deviation_diagnostics(const PmqRun& run, const CalibSet& heldout, double tolerance = 1e-9);

struct EvalResult {
    std::vector<double> task_mse;
    double macro_mse = 0.0;
};

/// Mean over all output elements of (f(x) - y)^2, per task, then the task mean.
EvalResult evaluate(const Model& model, const CalibSet& heldout);

/// Expert-guided anchored objective of the emitted layer, recomputed from
/// activations (not Hessians), as a cross-check of SolveReport::objective.
double layer_objective_from_activations(const Matrix& q, std::span<const Matrix> experts, const Matrix& merged,
                                        std::span<const Matrix> activations, double lambda);

std::string run_json(const PmqRun& run, const DeviationReport* deviation = nullptr);

}  // namespace pmq
