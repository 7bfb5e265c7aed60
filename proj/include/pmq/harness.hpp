// Copyright (c) 2026, The pmq authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include "pmq/config.hpp"

#include <exception>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

namespace pmq::harness {

// Output layout under RunConfig::out:
//   base.safetensors, expert<i>.safetensors (+ .manifest.json sidecars)
//   calib/, heldout/           calibration and held-out task files
//   merged.safetensors         cmd_merge
//   quantized.safetensors      cmd_quantize, with run.json
//   metrics.csv                cmd_eval
//   sweep_<axis>.csv           cmd_sweep
namespace files {
inline constexpr const char* kBase = "base.safetensors";
inline constexpr const char* kMerged = "merged.safetensors";
inline constexpr const char* kQuantized = "quantized.safetensors";
inline constexpr const char* kRunJson = "run.json";
inline constexpr const char* kMetrics = "metrics.csv";
inline constexpr const char* kCalibDir = "calib";
inline constexpr const char* kHeldoutDir = "heldout";
std::string expert(std::size_t index);  // 0-based index, 1-based file name
}  // namespace files

enum ExitCode : int { kOk = 0, kConfigError = 2, kNumericError = 3, kIoError = 4 };

/// Maps a library exception onto the CLI exit code.
int exit_code_for(const std::exception& e) noexcept;

void cmd_gen(const RunConfig& cfg);
void cmd_merge(const RunConfig& cfg);
void cmd_quantize(const RunConfig& cfg);
void cmd_eval(const RunConfig& cfg);
/// Writes sweep_<axis>.csv; `jobs` > 1 runs points in forked worker processes.
void cmd_sweep(const RunConfig& cfg, unsigned jobs = 1);

struct SweepRow {
    double axis_value = 0.0;
    SolverKind method = SolverKind::Gptq;
    std::vector<double> task_mse;
    double macro_mse = 0.0;
    double wall_time = 0.0;  // seconds, quantization only
    bool damped = false;
    std::optional<std::string> error;
};

std::string sweep_csv_header(std::size_t num_tasks);
std::string sweep_csv_row(const SweepRow& row, std::size_t num_tasks);

/// Rows for one axis value, one per method, in method order.
std::vector<SweepRow> run_sweep_point(const RunConfig& cfg, const SyntheticProblem& problem, const Checkpoint& merged,
                                      double axis_value);

}  // namespace pmq::harness
