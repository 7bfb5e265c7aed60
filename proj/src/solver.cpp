// Copyright (c) 2026, The pmq authors
// SPDX-License-Identifier: Apache-2.0

#include "pmq/solver.hpp"

#include "pmq/errors.hpp"
#include "pmq/kernels.hpp"
#include "pmq/linalg.hpp"

#include <json.hpp>

#include <cmath>
#include <limits>

namespace pmq {

EpmqStatistics build_epmq_statistics(std::span<const Matrix> experts, const Matrix& merged,
                                     const LayerCalibStats& stats, double alpha) {
    if (experts.size() != stats.hessians.size()) {
        throw ShapeError("build_epmq_statistics: " + std::to_string(experts.size()) + " experts but " +
                         std::to_string(stats.hessians.size()) + " task Hessians");
    }
    if (merged.cols() != stats.dim) {
        throw ShapeError("build_epmq_statistics: merged weight has " + std::to_string(merged.cols()) +
                         " inputs, statistics " + std::to_string(stats.dim));
    }
    for (const auto& w : experts) {
        if (w.rows() != merged.rows() || w.cols() != merged.cols()) {
            throw ShapeError("build_epmq_statistics: expert weight shape differs from merged");
        }
    }
    EpmqStatistics s;
    s.lambda = anchor_lambda(stats, alpha);
    s.curvature = add_diagonal(stats.pooled_hessian(), s.lambda);
    s.rhs = s.lambda * merged;
    for (std::size_t i = 0; i < experts.size(); ++i) {
        s.rhs = s.rhs + matmul(experts[i], stats.hessians[i]);
    }
    return s;
}

namespace {

double mean_diagonal(const Matrix& h) {
    return h.rows() ? trace(h) / static_cast<double>(h.rows()) : 0.0;
}

// Treats pivots below n * eps * max diag as zero so rank-deficient Gram
// matrices fail instead of yielding a garbage factor.
Matrix guarded_cholesky(const Matrix& h) {
    double max_diag = 0.0;
    for (std::size_t i = 0; i < h.rows(); ++i) {
        max_diag = std::max(max_diag, h(i, i));
    }
    const double floor = static_cast<double>(h.rows()) * std::numeric_limits<double>::epsilon() * max_diag;
    Matrix l = cholesky_lower(h);
    for (std::size_t i = 0; i < l.rows(); ++i) {
        if (l(i, i) * l(i, i) <= floor) {
            throw SingularError(i, "cholesky: pivot " + std::to_string(i) + " is numerically zero");
        }
    }
    return l;
}

}  // namespace

ContinuousSolution continuous_solution(const Matrix& curvature, const Matrix& rhs, double fallback_percdamp) {
    try {
        return {cholesky_solve_factored(guarded_cholesky(curvature), rhs), 0.0};
    } catch (const SingularError&) {
        if (!(fallback_percdamp > 0.0)) {
            throw;
        }
    }
    double mean = mean_diagonal(curvature);
    if (!(mean > 0.0)) {
        mean = 1.0;
    }
    const double damping = fallback_percdamp * mean;
    return {cholesky_solve(add_diagonal(curvature, damping), rhs), damping};
}

double quadratic_objective(const Matrix& q, const Matrix& w, const Matrix& h) {
    const Matrix e = q - w;
    if (h.rows() != e.cols() || h.cols() != e.cols()) {
        throw ShapeError("quadratic_objective: curvature does not match weight columns");
    }
    double total = 0.0;
    for (std::size_t r = 0; r < e.rows(); ++r) {
        const auto er = e.row(r);
        for (std::size_t a = 0; a < er.size(); ++a) {
            double s = 0.0;
            for (std::size_t b = 0; b < er.size(); ++b) {
                s += h(a, b) * er[b];
            }
            total += er[a] * s;
        }
    }
    return total;
}

double epmq_objective(const Matrix& q, std::span<const Matrix> experts, const Matrix& merged,
                      const LayerCalibStats& stats, double lambda) {
    if (experts.size() != stats.hessians.size()) {
        throw ShapeError("epmq_objective: expert count differs from task count");
    }
    double total = 0.0;
    for (std::size_t i = 0; i < experts.size(); ++i) {
        total += quadratic_objective(q, experts[i], stats.hessians[i]);
    }
    return total + lambda * frobenius_sq(q - merged);
}

SolveReport gptq_solve(const SolverProblem& problem) {
    const auto& cfg = problem.cfg;
    const Matrix& w = problem.target;
    const std::size_t d = w.cols();
    if (problem.curvature.rows() != d || problem.curvature.cols() != d) {
        throw ShapeError("gptq_solve: curvature is not " + std::to_string(d) + "x" + std::to_string(d));
    }
    if (problem.grid_source.rows() != w.rows() || problem.grid_source.cols() != d) {
        throw ShapeError("gptq_solve: grid source shape differs from target");
    }
    if (!(cfg.percdamp > 0.0)) {
        throw ConfigError("gptq_solve: percdamp must be > 0");
    }
    if (!w.all_finite()) {
        throw NumericError("gptq_solve: non-finite target weight");
    }

    SolveReport report;
    report.solver = SolverKind::Gptq;
    double mean = mean_diagonal(problem.curvature);
    if (!(mean > 0.0)) {
        mean = 1.0;  // all-zero activations: fall back to plain rounding
    }
    report.damping = cfg.percdamp * mean;
    const Matrix damped = add_diagonal(problem.curvature, report.damping);

    // Upper factor U of H^{-1} = U^T U; row j of U drives the feedback from column j.
    Matrix upper;
    try {
        upper = cholesky_lower(spd_inverse(damped)).transpose();
    } catch (const SingularError& e) {
        throw SingularError(e.pivot(), std::string("gptq_solve: curvature not positive definite after damping; "
                                                   "increase percdamp (") + e.what() + ")");
    }

    report.quantized = fit_grids(problem.grid_source, cfg.bits, cfg.group_size);
    QuantizedLayer& q = report.quantized;
    const auto& k = kernels::active();
    std::vector<double> comp_sq(d, 0.0);
    std::vector<double> row(d);
    for (std::size_t r = 0; r < w.rows(); ++r) {
        std::copy(w.row(r).begin(), w.row(r).end(), row.begin());
        for (std::size_t j = 0; j < d; ++j) {
            const GroupGrid grid = q.grid(r, j / cfg.group_size);
            const std::uint8_t code = quantize_value(row[j], grid, cfg.bits);
            q.codes[r * d + j] = code;
            const double err = (row[j] - dequantize_value(code, grid)) / upper(j, j);
            comp_sq[j] += err * err;
            if (j + 1 < d) {
                k.axpy(-err, upper.row(j).data() + j + 1, row.data() + j + 1, d - j - 1);
            }
        }
    }
    for (double c : comp_sq) {
        report.column_comp_norms.push_back(std::sqrt(c));
    }
    report.objective = quadratic_objective(dequantize(q), w, problem.curvature);
    return report;
}

SolveReport epmq_solve(std::span<const Matrix> experts, const Matrix& merged, const LayerCalibStats& stats,
                       const QuantConfig& cfg) {
    const EpmqStatistics s = build_epmq_statistics(experts, merged, stats, cfg.alpha);
    const ContinuousSolution target = continuous_solution(s.curvature, s.rhs, cfg.percdamp);
    if (!target.weight.all_finite()) {
        throw NumericError("epmq_solve: closed-form target is not finite");
    }
    SolverProblem problem{target.weight, s.curvature,
                          cfg.grid_source == GridSource::Target ? target.weight : merged, cfg};
    SolveReport report = gptq_solve(problem);
    report.solver = SolverKind::Epmq;
    report.lambda = s.lambda;
    report.continuous_damping = target.damping;
    report.objective = epmq_objective(dequantize(report.quantized), experts, merged, stats, s.lambda);
    return report;
}

BruteForceResult brute_force_optimum(const Matrix& target, const Matrix& curvature, const QuantizedLayer& grids,
                                     std::size_t max_assignments) {
    const std::size_t d = target.cols();
    if (grids.rows != target.rows() || grids.cols != d) {
        throw ShapeError("brute_force_optimum: grid shape differs from target");
    }
    const std::size_t levels = std::size_t{1} << grids.bits;
    std::size_t total = 1;
    for (std::size_t j = 0; j < d; ++j) {
        if (total > max_assignments / levels) {
            throw NumericError("brute_force_optimum: search space exceeds " + std::to_string(max_assignments));
        }
        total *= levels;
    }

    BruteForceResult best{grids, 0.0};
    std::vector<double> e(d);
    std::vector<std::size_t> digits(d);
    for (std::size_t r = 0; r < target.rows(); ++r) {
        double best_row = std::numeric_limits<double>::infinity();
        std::vector<std::size_t> best_digits(d, 0);
        for (std::size_t idx = 0; idx < total; ++idx) {
            std::size_t rem = idx;
            for (std::size_t j = 0; j < d; ++j) {
                digits[j] = rem % levels;
                rem /= levels;
                const GroupGrid g = grids.grid(r, j / grids.group_size);
                e[j] = dequantize_value(static_cast<std::uint8_t>(digits[j]), g) - target(r, j);
            }
            double obj = 0.0;
            for (std::size_t a = 0; a < d; ++a) {
                double s = 0.0;
                for (std::size_t b = 0; b < d; ++b) {
                    s += curvature(a, b) * e[b];
                }
                obj += e[a] * s;
            }
            if (obj < best_row) {
                best_row = obj;
                best_digits = digits;
            }
        }
        for (std::size_t j = 0; j < d; ++j) {
            best.quantized.codes[r * d + j] = static_cast<std::uint8_t>(best_digits[j]);
        }
    }
    best.objective = quadratic_objective(dequantize(best.quantized), target, curvature);
    return best;
}

std::string solve_report_json(const SolveReport& r) {
    const nlohmann::json j = {{"objective", r.objective},
                              {"lambda", r.lambda},
                              {"damping", r.damping},
                              {"continuous_damping", r.continuous_damping},
                              {"damped", r.damped()},
                              {"per_column_comp_norms", r.column_comp_norms},
                              {"bits", r.quantized.bits},
                              {"group_size", r.quantized.group_size},
                              {"solver", solver_name(r.solver)}};
    return j.dump();
}

}  // namespace pmq
