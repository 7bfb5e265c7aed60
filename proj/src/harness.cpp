// Copyright (c) 2026, The pmq authors
// SPDX-License-Identifier: Apache-2.0

#include "pmq/harness.hpp"

#include "pmq/errors.hpp"
#include "pmq/safetensors.hpp"

#include <json.hpp>

#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>

#include <sys/wait.h>
#include <unistd.h>

namespace pmq::harness {

namespace fs = std::filesystem;

std::string files::expert(std::size_t index) { return "expert" + std::to_string(index + 1) + ".safetensors"; }

int exit_code_for(const std::exception& e) noexcept {
    if (dynamic_cast<const ConfigError*>(&e)) {
        return kConfigError;
    }
    if (dynamic_cast<const NumericError*>(&e)) {
        return kNumericError;
    }
    if (dynamic_cast<const IoError*>(&e) || dynamic_cast<const ShapeError*>(&e) ||
        dynamic_cast<const fs::filesystem_error*>(&e)) {
        return kIoError;
    }
    return kNumericError;
}

namespace {

void write_text(const fs::path& path, const std::string& text) {
    st::write_bytes(path, {reinterpret_cast<const std::uint8_t*>(text.data()), text.size()});
}

std::string read_text(const fs::path& path) {
    const auto bytes = st::read_bytes(path);
    return {bytes.begin(), bytes.end()};
}

std::vector<Checkpoint> load_experts(const RunConfig& cfg) {
    std::vector<Checkpoint> experts;
    for (std::size_t i = 0; i < cfg.synth.num_tasks; ++i) {
        experts.push_back(load_checkpoint(cfg.out / files::expert(i)));
    }
    return experts;
}

// Canonical number formatting shared by every CSV writer.
std::string num(double v) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.10g", v);
    return buf;
}

PmqRun quantize_with(const RunConfig& cfg, const QuantConfig& q, const Checkpoint& merged,
                     std::span<const Checkpoint> experts, const CalibSet& calib) {
    if (q.solver == SolverKind::Epmq) {
        return run_epmq(merged, experts, calib, q, cfg.pipeline);
    }
    return run_naive_ptq(merged, calib, q, cfg.pipeline);
}

}  // namespace

void cmd_gen(const RunConfig& cfg) {
    const SyntheticProblem p = make_synthetic_tasks(cfg.synth);
    fs::create_directories(cfg.out);
    save_checkpoint(p.base, cfg.out / files::kBase);
    for (std::size_t i = 0; i < p.experts.size(); ++i) {
        save_checkpoint(p.experts[i], cfg.out / files::expert(i));
    }
    save_calib_set(p.calib, cfg.out / files::kCalibDir);
    save_calib_set(p.heldout, cfg.out / files::kHeldoutDir);
}

void cmd_merge(const RunConfig& cfg) {
    const Checkpoint base = load_checkpoint(cfg.out / files::kBase);
    const auto experts = load_experts(cfg);
    save_checkpoint(merge(cfg.merge, base, experts), cfg.out / files::kMerged);
}

void cmd_quantize(const RunConfig& cfg) {
    const Checkpoint merged = load_checkpoint(cfg.out / files::kMerged);
    std::vector<Checkpoint> experts;
    CalibSet calib;
    if (cfg.quant.solver != SolverKind::Rtn) {
        calib = load_calib_set(cfg.out / files::kCalibDir);
        if (calib.tasks.front().inputs.cols() > cfg.synth.samples_per_task) {
            calib = calib.truncated(cfg.synth.samples_per_task);
        }
    }
    if (cfg.quant.solver == SolverKind::Epmq) {
        experts = load_experts(cfg);
    }
    const PmqRun run = quantize_with(cfg, cfg.quant, merged, experts, calib);
    save_model(run.quantized, cfg.out / files::kQuantized);
    write_text(cfg.out / files::kRunJson, run_json(run));
}

void cmd_eval(const RunConfig& cfg) {
    const Model quantized = load_model(cfg.out / files::kQuantized);
    const Checkpoint merged = load_checkpoint(cfg.out / files::kMerged);
    const auto experts = load_experts(cfg);
    const CalibSet heldout = load_calib_set(cfg.out / files::kHeldoutDir);

    const EvalResult eval = evaluate(quantized, heldout);
    const DeviationReport dev = deviation_diagnostics(quantized, merged, experts, heldout);

    std::ostringstream csv;
    csv << "task,method,bits,alpha,samples,mse\n";
    const std::string tail = std::string(solver_name(cfg.quant.solver)) + "," + std::to_string(cfg.quant.bits) + "," +
                             num(cfg.quant.alpha) + "," + std::to_string(cfg.synth.samples_per_task) + ",";
    for (std::size_t i = 0; i < eval.task_mse.size(); ++i) {
        csv << "task" << (i + 1) << "," << tail << num(eval.task_mse[i]) << "\n";
    }
    csv << "macro," << tail << num(eval.macro_mse) << "\n";
    write_text(cfg.out / files::kMetrics, csv.str());

    const fs::path run_path = cfg.out / files::kRunJson;
    nlohmann::json run = fs::exists(run_path) ? nlohmann::json::parse(read_text(run_path)) : nlohmann::json::object();
    nlohmann::json d = {{"max_identity_residual", dev.max_identity_residual},
                        {"identity_holds", dev.identity_holds},
                        {"macro_mse", eval.macro_mse},
                        {"task_mse", eval.task_mse},
                        {"entries", nlohmann::json::array()}};
    for (const auto& e : dev.entries) {
        d["entries"].push_back({{"layer", e.layer},
                                {"task", e.task},
                                {"quant_norm", e.quant_norm},
                                {"merge_norm", e.merge_norm},
                                {"combined_norm", e.combined_norm},
                                {"identity_residual", e.identity_residual}});
    }
    run["deviation"] = std::move(d);
    write_text(run_path, run.dump(2) + "\n");
    if (!dev.identity_holds) {
        throw NumericError("deviation decomposition residual " + num(dev.max_identity_residual) +
                           " exceeds tolerance");
    }
}

std::string sweep_csv_header(std::size_t num_tasks) {
    std::string h = "axis_value,method";
    for (std::size_t i = 0; i < num_tasks; ++i) {
        h += ",mse_task" + std::to_string(i + 1);
    }
    return h + ",macro_mse,wall_time,damped,error\n";
}

std::string sweep_csv_row(const SweepRow& row, std::size_t num_tasks) {
    std::string s = num(row.axis_value) + "," + std::string(solver_name(row.method));
    for (std::size_t i = 0; i < num_tasks; ++i) {
        s += ",";
        if (!row.error && i < row.task_mse.size()) {
            s += num(row.task_mse[i]);
        }
    }
    s += ",";
    if (!row.error) {
        s += num(row.macro_mse);
    }
    s += "," + num(row.wall_time) + "," + (row.damped ? "true" : "false") + ",";
    if (row.error) {
        std::string e = *row.error;
        for (char& c : e) {
            if (c == ',' || c == '\n' || c == '"') {
                c = ' ';
            }
        }
        s += e;
    }
    return s + "\n";
}

std::vector<SweepRow> run_sweep_point(const RunConfig& cfg, const SyntheticProblem& problem, const Checkpoint& merged,
                                      double axis_value) {
    std::vector<SweepRow> rows;
    for (SolverKind method : cfg.sweep.methods) {
        SweepRow row;
        row.axis_value = axis_value;
        row.method = method;
        try {
            QuantConfig q = cfg.quant;
            q.solver = method;
            CalibSet calib = problem.calib;
            switch (cfg.sweep.axis) {
                case SweepAxis::Bits:
                    q.bits = static_cast<int>(axis_value);
                    if (static_cast<double>(q.bits) != axis_value) {
                        throw ConfigError("bits must be an integer");
                    }
                    break;
                case SweepAxis::Alpha:
                    q.alpha = axis_value;
                    break;
                case SweepAxis::Samples: {
                    if (!(axis_value >= 1.0) || std::floor(axis_value) != axis_value) {
                        throw ConfigError("samples must be a positive integer");
                    }
                    const auto n = static_cast<std::size_t>(axis_value);
                    calib = problem.calib.truncated(n);
                    q.samples_per_task = n;
                    break;
                }
            }
            const auto start = std::chrono::steady_clock::now();
            const PmqRun run = quantize_with(cfg, q, merged, problem.experts, calib);
            row.wall_time = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
            for (const auto& r : run.reports) {
                row.damped = row.damped || r.damped();
            }
            const EvalResult eval = evaluate(run.quantized, problem.heldout);
            row.task_mse = eval.task_mse;
            row.macro_mse = eval.macro_mse;
        } catch (const std::exception& e) {
            row.error = e.what();
        }
        rows.push_back(std::move(row));
    }
    return rows;
}

void cmd_sweep(const RunConfig& cfg, unsigned jobs) {
    RunConfig gen_cfg = cfg;
    if (cfg.sweep.axis == SweepAxis::Samples) {
        // Generate once at the largest budget; each point uses a prefix.
        for (double v : cfg.sweep.values) {
            if (v > static_cast<double>(gen_cfg.synth.samples_per_task)) {
                gen_cfg.synth.samples_per_task = static_cast<std::size_t>(v);
            }
        }
    }
    const SyntheticProblem problem = make_synthetic_tasks(gen_cfg.synth);
    const Checkpoint merged = merge(cfg.merge, problem.base, problem.experts);
    const std::size_t k = cfg.synth.num_tasks;

    std::vector<std::string> chunks(cfg.sweep.values.size());
    if (jobs <= 1) {
        for (std::size_t p = 0; p < cfg.sweep.values.size(); ++p) {
            for (const auto& row : run_sweep_point(cfg, problem, merged, cfg.sweep.values[p])) {
                chunks[p] += sweep_csv_row(row, k);
            }
        }
    } else {
        const fs::path work = cfg.out / ("sweep_" + std::string(sweep_axis_name(cfg.sweep.axis)));
        fs::create_directories(work);
        std::vector<pid_t> running;
        auto point_file = [&](std::size_t p) { return work / ("point" + std::to_string(p)) / "rows.csv"; };
        auto reap_one = [&]() {
            int status = 0;
            const pid_t pid = ::wait(&status);
            std::erase(running, pid);
        };
        for (std::size_t p = 0; p < cfg.sweep.values.size(); ++p) {
            while (running.size() >= jobs) {
                reap_one();
            }
            std::fflush(nullptr);
            const pid_t pid = ::fork();
            if (pid < 0) {
                throw IoError("fork failed");
            }
            if (pid == 0) {
                int code = 0;
                try {
                    std::string text;
                    for (const auto& row : run_sweep_point(cfg, problem, merged, cfg.sweep.values[p])) {
                        text += sweep_csv_row(row, k);
                    }
                    write_text(point_file(p), text);
                } catch (...) {
                    code = 1;
                }
                ::_exit(code);
            }
            running.push_back(pid);
        }
        while (!running.empty()) {
            reap_one();
        }
        for (std::size_t p = 0; p < cfg.sweep.values.size(); ++p) {
            if (fs::exists(point_file(p))) {
                chunks[p] = read_text(point_file(p));
            } else {
                for (SolverKind m : cfg.sweep.methods) {
                    SweepRow row;
                    row.axis_value = cfg.sweep.values[p];
                    row.method = m;
                    row.error = "worker process failed";
                    chunks[p] += sweep_csv_row(row, k);
                }
            }
        }
    }
    std::string csv = sweep_csv_header(k);
    for (const auto& c : chunks) {
        csv += c;
    }
    write_text(cfg.out / ("sweep_" + std::string(sweep_axis_name(cfg.sweep.axis)) + ".csv"), csv);
}

}  // namespace pmq::harness
