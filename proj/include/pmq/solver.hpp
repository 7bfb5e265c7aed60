// Copyright (c) 2026, The pmq authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include "pmq/calib.hpp"
#include "pmq/matrix.hpp"
#include "pmq/quant.hpp"

#include <cstddef>
#include <span>
#include <string>
#include <vector>

namespace pmq {

/// Quantize `target` toward minimal tr((Q - target) H (Q - target)^T), with
/// grids fitted on `grid_source`. H is the undamped curvature.
struct SolverProblem {
    Matrix target;
    Matrix curvature;
    Matrix grid_source;
    QuantConfig cfg;
};

struct SolveReport {
    QuantizedLayer quantized;
    /// Full objective of the emitted codes (no constant dropped).
    double objective = 0.0;
    double lambda = 0.0;
    /// Diagonal loading added before the GPTQ factorization.
    double damping = 0.0;
    /// Extra loading the closed-form solve needed because H_E was singular.
    double continuous_damping = 0.0;
    std::vector<double> column_comp_norms;
    SolverKind solver = SolverKind::Gptq;

    [[nodiscard]] bool damped() const noexcept { return continuous_damping > 0.0; }
};

struct EpmqStatistics {
    Matrix curvature;  // sum_i H_i + lambda I
    Matrix rhs;        // sum_i W_i H_i + lambda W_m
    double lambda = 0.0;
};

EpmqStatistics build_epmq_statistics(std::span<const Matrix> experts, const Matrix& merged,
                                     const LayerCalibStats& stats, double alpha);

struct ContinuousSolution {
    Matrix weight;
    double damping = 0.0;  // 0 unless the fallback kicked in
};

/// rhs * curvature^{-1}. When the curvature is numerically singular and
/// `fallback_percdamp` > 0, retries with fallback_percdamp * mean(diag) on the
/// diagonal and reports it; otherwise throws SingularError.
ContinuousSolution continuous_solution(const Matrix& curvature, const Matrix& rhs, double fallback_percdamp = 0.0);

/// tr((Q - W) H (Q - W)^T)
double quadratic_objective(const Matrix& q, const Matrix& w, const Matrix& h);

/// sum_i tr((Q - W_i) H_i (Q - W_i)^T) + lambda ||Q - W_m||_F^2
double epmq_objective(const Matrix& q, std::span<const Matrix> experts, const Matrix& merged,
                      const LayerCalibStats& stats, double lambda);

/// Sequential column rounding with inverse-Hessian error feedback.
SolveReport gptq_solve(const SolverProblem& problem);

/// Builds H_E and R, rounds toward W* = R H_E^{-1} under H_E, reports the
/// anchored expert-guided objective.
SolveReport epmq_solve(std::span<const Matrix> experts, const Matrix& merged, const LayerCalibStats& stats,
                       const QuantConfig& cfg);

struct BruteForceResult {
    QuantizedLayer quantized;
    double objective = 0.0;  // quadratic_objective against the given target/curvature
};

/// Exact minimizer of quadratic_objective over all code assignments on the
/// grids already stored in `grids`. Rows are solved independently. Throws
/// when a row has more than `max_assignments` candidates.
BruteForceResult brute_force_optimum(const Matrix& target, const Matrix& curvature, const QuantizedLayer& grids,
                                     std::size_t max_assignments = 10'000'000);

/// {objective, lambda, damping, per_column_comp_norms, bits, group_size, solver, damped}
std::string solve_report_json(const SolveReport& r);

}  // namespace pmq
