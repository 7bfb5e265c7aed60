// Copyright (c) 2026, The pmq authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include "pmq/merge.hpp"
#include "pmq/pipeline.hpp"
#include "pmq/quant.hpp"
#include "pmq/synthetic.hpp"

#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

namespace pmq {

enum class SweepAxis { Bits, Alpha, Samples };

std::string_view sweep_axis_name(SweepAxis a) noexcept;
SweepAxis sweep_axis_from_name(std::string_view name);

struct SweepSpec {
    SweepAxis axis = SweepAxis::Bits;
    std::vector<double> values{3, 4, 5, 6, 7, 8};
    std::vector<SolverKind> methods{SolverKind::Gptq, SolverKind::Epmq};
};

/// Everything one harness invocation needs. Loaded from a single JSON file;
/// unknown keys are rejected.
struct RunConfig {
    SyntheticOptions synth;
    MergeSpec merge;
    QuantConfig quant;
    PipelineOptions pipeline;
    SweepSpec sweep;
    std::filesystem::path out = "out";

    void validate() const;
};

/// Parses JSON text, applies `key=value` overrides (dotted keys such as
/// `quant.bits=3`; values parsed as JSON, else taken as strings) and an
/// optional seed override. Throws ConfigError on any problem.
RunConfig parse_run_config(std::string_view json_text, const std::vector<std::string>& overrides = {},
                           const char* seed_override = nullptr);
RunConfig load_run_config(const std::filesystem::path& path, const std::vector<std::string>& overrides = {},
                          const char* seed_override = nullptr);

std::string run_config_json(const RunConfig& cfg);

}  // namespace pmq
