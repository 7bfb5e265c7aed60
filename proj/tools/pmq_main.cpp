// Copyright (c) 2026, The pmq authors
// SPDX-License-Identifier: Apache-2.0
//
// pmq gen|merge|quantize|eval|sweep --config path [--set k=v]... [--out dir]

#include "pmq/errors.hpp"
#include "pmq/harness.hpp"
#include "pmq/kernels.hpp"

#include <CLI11.hpp>

#include <cstdlib>
#include <iostream>

int main(int argc, char** argv) {
    CLI::App app{"Post-merge quantization toolkit"};
    app.require_subcommand(1);

    std::string config_path;
    std::vector<std::string> overrides;
    std::string out_dir;
    unsigned jobs = 1;
    std::string axis;

    auto add_common = [&](CLI::App* sub) {
        sub->add_option("--config", config_path, "JSON run configuration")->required()->check(CLI::ExistingFile);
        sub->add_option("--set", overrides, "override a config key, e.g. quant.bits=3")->take_all();
        sub->add_option("--out", out_dir, "output directory (overrides config 'out')");
    };
    auto* gen = app.add_subcommand("gen", "generate base, experts, calibration and held-out sets");
    auto* merge = app.add_subcommand("merge", "merge experts into merged.safetensors");
    auto* quantize = app.add_subcommand("quantize", "quantize the merged model, write run.json");
    auto* eval = app.add_subcommand("eval", "evaluate the quantized model, write metrics.csv");
    auto* sweep = app.add_subcommand("sweep", "sweep bits, alpha or samples; write sweep_<axis>.csv");
    for (auto* s : {gen, merge, quantize, eval, sweep}) {
        add_common(s);
    }
    sweep->add_option("--axis", axis, "bits | alpha | samples (overrides sweep.axis)");
    sweep->add_option("--jobs", jobs, "parallel worker processes")->check(CLI::PositiveNumber);

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : pmq::harness::kConfigError;
    }

    try {
        if (!axis.empty()) {
            overrides.push_back("sweep.axis=" + axis);
        }
        if (!out_dir.empty()) {
            overrides.push_back("out=\"" + out_dir + "\"");
        }
        const pmq::RunConfig cfg = pmq::load_run_config(config_path, overrides, std::getenv("PMQ_SEED"));
        if (gen->parsed()) {
            pmq::harness::cmd_gen(cfg);
        } else if (merge->parsed()) {
            pmq::harness::cmd_merge(cfg);
        } else if (quantize->parsed()) {
            pmq::harness::cmd_quantize(cfg);
        } else if (eval->parsed()) {
            pmq::harness::cmd_eval(cfg);
        } else if (sweep->parsed()) {
            pmq::harness::cmd_sweep(cfg, jobs);
        }
    } catch (const std::exception& e) {
        std::cerr << "pmq: " << e.what() << "\n";
        return pmq::harness::exit_code_for(e);
    }
    return 0;
}
