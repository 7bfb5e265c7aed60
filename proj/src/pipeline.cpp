// Copyright (c) 2026, The pmq authors
// SPDX-License-Identifier: Apache-2.0

#include "pmq/pipeline.hpp"

#include "pmq/errors.hpp"
#include "pmq/linalg.hpp"

#include <json.hpp>

#include <cmath>

namespace pmq {

namespace {

std::vector<Matrix> task_inputs(const CalibSet& calib) {
    std::vector<Matrix> xs;
    for (const auto& t : calib.tasks) {
        xs.push_back(t.inputs);
    }
    return xs;
}

// Runs `solve` per layer in forward order, keeping the per-task activation
// cache on the quantized trajectory.
template <typename Solve>
void run_layers(PmqRun& run, const CalibSet& calib, const PipelineOptions& opts, const Model* frozen, Solve&& solve) {
    calib.validate();
    const Model& source = frozen ? *frozen : run.quantized;
    std::vector<Matrix> cache = task_inputs(calib);
    for (std::size_t l = 0; l < run.quantized.num_layers(); ++l) {
        const auto& layer = run.quantized.layer(l);
        try {
            const std::uint64_t checksum = source.prefix_checksum(l);
            const bool use_cache = !opts.recompute_trajectory && frozen == nullptr;
            LayerCollection col = collect_layer_stats(source, calib, l, use_cache ? &cache : nullptr, opts.chunk);
            SolveReport report = solve(l, col);
            if (source.prefix_checksum(l) != checksum) {
                throw NumericError("model prefix changed between collection and replacement");
            }
            run.quantized.replace_layer(l, report.quantized);
            run.reports.push_back(std::move(report));
            run.trajectory_checksums.push_back(checksum);
            if (use_cache && l + 1 < run.quantized.num_layers()) {
                for (auto& x : col.activations) {
                    x = propagate_through_layer(x, run.quantized.layer(l));
                }
                cache = std::move(col.activations);
            }
        } catch (const SingularError& e) {
            throw SingularError(e.pivot(), "layer '" + layer.id + "': " + e.what());
        } catch (const NumericError& e) {
            throw NumericError("layer '" + layer.id + "': " + e.what());
        } catch (const ShapeError& e) {
            throw ShapeError("layer '" + layer.id + "': " + e.what());
        }
    }
}

}  // namespace

PmqRun run_epmq(const Checkpoint& merged, std::span<const Checkpoint> experts, const CalibSet& calib,
                const QuantConfig& cfg, const PipelineOptions& opts) {
    cfg.validate();
    if (cfg.solver != SolverKind::Epmq) {
        throw ConfigError("run_epmq requires solver = epmq");
    }
    if (experts.size() != calib.num_tasks()) {
        throw ShapeError("run_epmq: " + std::to_string(experts.size()) + " experts but " +
                         std::to_string(calib.num_tasks()) + " calibration tasks");
    }
    for (const auto& e : experts) {
        require_same_architecture(merged, e);
    }
    PmqRun run{cfg, merged, {experts.begin(), experts.end()}, {}, {}, Model(merged)};
    std::vector<Matrix> expert_weights(experts.size());
    run_layers(run, calib, opts, nullptr, [&](std::size_t l, const LayerCollection& col) {
        for (std::size_t i = 0; i < experts.size(); ++i) {
            expert_weights[i] = experts[i].layers[l].weight;
        }
        return epmq_solve(expert_weights, merged.layers[l].weight, col.stats, cfg);
    });
    return run;
}

PmqRun run_naive_ptq(const Checkpoint& merged, const CalibSet& calib, const QuantConfig& cfg,
                     const PipelineOptions& opts) {
    cfg.validate();
    if (cfg.solver == SolverKind::Epmq) {
        throw ConfigError("run_naive_ptq requires solver = rtn or gptq");
    }
    PmqRun run{cfg, merged, {}, {}, {}, Model(merged)};
    if (cfg.solver == SolverKind::Rtn) {
        for (std::size_t l = 0; l < run.quantized.num_layers(); ++l) {
            SolveReport r;
            r.solver = SolverKind::Rtn;
            r.quantized = rtn_quantize(merged.layers[l].weight, cfg);
            run.trajectory_checksums.push_back(run.quantized.prefix_checksum(l));
            run.quantized.replace_layer(l, r.quantized);
            run.reports.push_back(std::move(r));
        }
        return run;
    }
    const Model frozen(merged);
    const bool use_frozen = opts.baseline_trajectory == Trajectory::FullPrecision;
    run_layers(run, calib, opts, use_frozen ? &frozen : nullptr, [&](std::size_t l, const LayerCollection& col) {
        const Matrix& w = merged.layers[l].weight;
        return gptq_solve({w, col.stats.pooled_hessian(), w, cfg});
    });
    return run;
}

DeviationReport deviation_diagnostics(const Model& quantized, const Checkpoint& merged,
                                      std::span<const Checkpoint> experts, const CalibSet& heldout,
                                      double tolerance) {
    heldout.validate();
    if (experts.size() != heldout.num_tasks()) {
        throw ShapeError("deviation_diagnostics: expert count differs from held-out task count");
    }
    DeviationReport rep;
    for (std::size_t i = 0; i < heldout.num_tasks(); ++i) {
        Matrix x = heldout.tasks[i].inputs;
        for (std::size_t l = 0; l < quantized.num_layers(); ++l) {
            const auto& layer = quantized.layer(l);
            const Matrix qx = matmul(layer.weight, x);
            const Matrix mx = matmul(merged.layers[l].weight, x);
            const Matrix ex = matmul(experts[i].layers[l].weight, x);
            const Matrix dq = qx - mx;
            const Matrix dm = mx - ex;
            const Matrix combined = qx - ex;
            DeviationEntry e{l, i, std::sqrt(frobenius_sq(dq)), std::sqrt(frobenius_sq(dm)),
                             std::sqrt(frobenius_sq(combined)), max_abs_diff(combined, dq + dm)};
            rep.max_identity_residual = std::max(rep.max_identity_residual, e.identity_residual);
            rep.entries.push_back(e);
            if (l + 1 < quantized.num_layers()) {
                x = propagate_through_layer(x, layer);
            }
        }
    }
    rep.identity_holds = rep.max_identity_residual <= tolerance;
    return rep;
}

DeviationReport deviation_diagnostics(const PmqRun& run, const CalibSet& heldout, double tolerance) {
    return deviation_diagnostics(run.quantized, run.merged, run.experts, heldout, tolerance);
}

EvalResult evaluate(const Model& model, const CalibSet& heldout) {
    EvalResult r;
    for (const auto& t : heldout.tasks) {
        if (!t.targets) {
            throw ShapeError("evaluate: task " + std::to_string(t.task) + " has no targets");
        }
        const Matrix out = forward(model, t.inputs);
        if (out.rows() != t.targets->rows() || out.cols() != t.targets->cols()) {
            throw ShapeError("evaluate: model output shape differs from targets");
        }
        r.task_mse.push_back(frobenius_sq(out - *t.targets) / static_cast<double>(out.size()));
    }
    double s = 0.0;
    for (double m : r.task_mse) {
        s += m;
    }
    r.macro_mse = r.task_mse.empty() ? 0.0 : s / static_cast<double>(r.task_mse.size());
    return r;
}

double layer_objective_from_activations(const Matrix& q, std::span<const Matrix> experts, const Matrix& merged,
                                        std::span<const Matrix> activations, double lambda) {
    if (experts.size() != activations.size()) {
        throw ShapeError("layer_objective_from_activations: expert/activation count mismatch");
    }
    double total = 0.0;
    for (std::size_t i = 0; i < experts.size(); ++i) {
        total += frobenius_sq(matmul(q, activations[i]) - matmul(experts[i], activations[i]));
    }
    return total + lambda * frobenius_sq(q - merged);
}

std::string run_json(const PmqRun& run, const DeviationReport* deviation) {
    using nlohmann::json;
    json j;
    j["config"] = {{"bits", run.cfg.bits},
                   {"group_size", run.cfg.group_size},
                   {"percdamp", run.cfg.percdamp},
                   {"alpha", run.cfg.alpha},
                   {"solver", solver_name(run.cfg.solver)},
                   {"samples_per_task", run.cfg.samples_per_task},
                   {"grid_source", grid_source_name(run.cfg.grid_source)}};
    j["layers"] = json::array();
    for (std::size_t l = 0; l < run.reports.size(); ++l) {
        json layer = json::parse(solve_report_json(run.reports[l]));
        layer["id"] = run.quantized.layer(l).id;
        layer["trajectory_checksum"] = run.trajectory_checksums[l];
        j["layers"].push_back(std::move(layer));
    }
    if (deviation) {
        json d;
        d["max_identity_residual"] = deviation->max_identity_residual;
        d["identity_holds"] = deviation->identity_holds;
        d["entries"] = json::array();
        for (const auto& e : deviation->entries) {
            d["entries"].push_back({{"layer", e.layer},
                                    {"task", e.task},
                                    {"quant_norm", e.quant_norm},
                                    {"merge_norm", e.merge_norm},
                                    {"combined_norm", e.combined_norm},
                                    {"identity_residual", e.identity_residual}});
        }
        j["deviation"] = std::move(d);
    }
    return j.dump(2) + "\n";
}

}  // namespace pmq
