// Copyright (c) 2026, The pmq authors
// SPDX-License-Identifier: Apache-2.0

#include "pmq/config.hpp"

#include "pmq/errors.hpp"
#include "pmq/safetensors.hpp"

#include <json.hpp>

#include <set>

namespace pmq {

using nlohmann::json;

std::string_view sweep_axis_name(SweepAxis a) noexcept {
    switch (a) {
        case SweepAxis::Bits: return "bits";
        case SweepAxis::Alpha: return "alpha";
        case SweepAxis::Samples: return "samples";
    }
    return "?";
}

SweepAxis sweep_axis_from_name(std::string_view name) {
    for (SweepAxis a : {SweepAxis::Bits, SweepAxis::Alpha, SweepAxis::Samples}) {
        if (name == sweep_axis_name(a)) {
            return a;
        }
    }
    throw ConfigError("unknown sweep axis '" + std::string(name) + "' (expected bits, alpha or samples)");
}

void RunConfig::validate() const {
    synth.validate();
    merge.validate();
    QuantConfig q = quant;
    q.samples_per_task = synth.samples_per_task;
    q.validate();
    if (sweep.values.empty()) {
        throw ConfigError("sweep.values must be nonempty");
    }
    if (sweep.methods.empty()) {
        throw ConfigError("sweep.methods must be nonempty");
    }
    if (pipeline.chunk == 0) {
        throw ConfigError("chunk must be positive");
    }
}

std::string run_config_json(const RunConfig& c) {
    json methods = json::array();
    for (auto m : c.sweep.methods) {
        methods.push_back(solver_name(m));
    }
    const json j = {
        {"seed", c.synth.seed},
        {"K", c.synth.num_tasks},
        {"dims", c.synth.dims},
        {"samples_per_task", c.synth.samples_per_task},
        {"heldout_samples", c.synth.heldout_samples},
        {"train_samples", c.synth.train_samples},
        {"train_steps", c.synth.train_steps},
        {"learning_rate", c.synth.learning_rate},
        {"expert_mode", expert_mode_name(c.synth.mode)},
        {"hidden_activation", activation_name(c.synth.hidden_activation)},
        {"task_shift", c.synth.task_shift},
        {"teacher_scale", c.synth.teacher_scale},
        {"merge", {{"method", merge_method_name(c.merge.method)},
                   {"coefficient", c.merge.coefficient},
                   {"density", c.merge.density}}},
        {"quant", {{"bits", c.quant.bits},
                   {"group_size", c.quant.group_size},
                   {"percdamp", c.quant.percdamp},
                   {"alpha", c.quant.alpha},
                   {"solver", solver_name(c.quant.solver)},
                   {"grid_source", grid_source_name(c.quant.grid_source)}}},
        {"recompute_trajectory", c.pipeline.recompute_trajectory},
        {"baseline_trajectory", c.pipeline.baseline_trajectory == Trajectory::Quantized ? "quantized" : "full_precision"},
        {"chunk", c.pipeline.chunk},
        {"sweep", {{"axis", sweep_axis_name(c.sweep.axis)}, {"values", c.sweep.values}, {"methods", methods}}},
        {"out", c.out.string()},
    };
    return j.dump(2) + "\n";
}

namespace {

void reject_unknown(const json& obj, const std::set<std::string>& known, const std::string& where) {
    if (!obj.is_object()) {
        throw ConfigError(where + " must be a JSON object");
    }
    for (const auto& [k, v] : obj.items()) {
        if (!known.contains(k)) {
            throw ConfigError("unknown config key '" + where + k + "'");
        }
    }
}

template <typename T>
void read(const json& obj, const char* key, T& out) {
    if (obj.contains(key)) {
        out = obj.at(key).get<T>();
    }
}

void apply_override(json& root, const std::string& assignment) {
    const auto eq = assignment.find('=');
    if (eq == std::string::npos || eq == 0) {
        throw ConfigError("override '" + assignment + "' is not key=value");
    }
    const std::string key = assignment.substr(0, eq);
    const std::string text = assignment.substr(eq + 1);
    json value;
    try {
        value = json::parse(text);
    } catch (const json::exception&) {
        value = text;
    }
    json* node = &root;
    std::size_t begin = 0;
    while (true) {
        const auto dot = key.find('.', begin);
        const std::string part = key.substr(begin, dot == std::string::npos ? std::string::npos : dot - begin);
        if (dot == std::string::npos) {
            (*node)[part] = value;
            return;
        }
        if (!node->contains(part)) {
            (*node)[part] = json::object();
        }
        node = &(*node)[part];
        begin = dot + 1;
    }
}

}  // namespace

RunConfig parse_run_config(std::string_view json_text, const std::vector<std::string>& overrides,
                           const char* seed_override) {
    json root;
    try {
        root = json::parse(json_text);
    } catch (const json::exception& e) {
        throw ConfigError(std::string("config is not valid JSON: ") + e.what());
    }
    for (const auto& o : overrides) {
        apply_override(root, o);
    }
    if (seed_override && *seed_override) {
        try {
            root["seed"] = std::stoull(seed_override);
        } catch (const std::exception&) {
            throw ConfigError("PMQ_SEED is not an unsigned integer");
        }
    }

    RunConfig c;
    try {
        reject_unknown(root,
                       {"seed", "K", "dims", "samples_per_task", "heldout_samples", "train_samples", "train_steps",
                        "learning_rate", "expert_mode", "hidden_activation", "task_shift", "teacher_scale", "merge",
                        "quant", "recompute_trajectory", "baseline_trajectory", "chunk", "sweep", "out"},
                       "");
        read(root, "seed", c.synth.seed);
        read(root, "K", c.synth.num_tasks);
        read(root, "dims", c.synth.dims);
        read(root, "samples_per_task", c.synth.samples_per_task);
        read(root, "heldout_samples", c.synth.heldout_samples);
        read(root, "train_samples", c.synth.train_samples);
        read(root, "train_steps", c.synth.train_steps);
        read(root, "learning_rate", c.synth.learning_rate);
        read(root, "task_shift", c.synth.task_shift);
        read(root, "teacher_scale", c.synth.teacher_scale);
        if (root.contains("expert_mode")) {
            c.synth.mode = expert_mode_from_name(root["expert_mode"].get<std::string>());
        }
        if (root.contains("hidden_activation")) {
            try {
                c.synth.hidden_activation = activation_from_name(root["hidden_activation"].get<std::string>());
            } catch (const ParseError& e) {
                throw ConfigError(e.what());
            }
        }
        if (root.contains("merge")) {
            const json& m = root["merge"];
            reject_unknown(m, {"method", "coefficient", "density"}, "merge.");
            if (m.contains("method")) {
                c.merge.method = merge_method_from_name(m["method"].get<std::string>());
            }
            read(m, "coefficient", c.merge.coefficient);
            read(m, "density", c.merge.density);
        }
        if (root.contains("quant")) {
            const json& q = root["quant"];
            reject_unknown(q, {"preset", "bits", "group_size", "percdamp", "alpha", "solver", "grid_source"}, "quant.");
            if (q.contains("preset")) {
                c.quant = quant_preset(q["preset"].get<std::string>());
            }
            read(q, "bits", c.quant.bits);
            read(q, "group_size", c.quant.group_size);
            read(q, "percdamp", c.quant.percdamp);
            read(q, "alpha", c.quant.alpha);
            if (q.contains("solver")) {
                c.quant.solver = solver_from_name(q["solver"].get<std::string>());
            }
            if (q.contains("grid_source")) {
                c.quant.grid_source = grid_source_from_name(q["grid_source"].get<std::string>());
            }
        }
        read(root, "recompute_trajectory", c.pipeline.recompute_trajectory);
        read(root, "chunk", c.pipeline.chunk);
        if (root.contains("baseline_trajectory")) {
            const auto t = root["baseline_trajectory"].get<std::string>();
            if (t == "quantized") {
                c.pipeline.baseline_trajectory = Trajectory::Quantized;
            } else if (t == "full_precision") {
                c.pipeline.baseline_trajectory = Trajectory::FullPrecision;
            } else {
                throw ConfigError("baseline_trajectory must be quantized or full_precision");
            }
        }
        if (root.contains("sweep")) {
            const json& s = root["sweep"];
            reject_unknown(s, {"axis", "values", "methods"}, "sweep.");
            if (s.contains("axis")) {
                c.sweep.axis = sweep_axis_from_name(s["axis"].get<std::string>());
            }
            read(s, "values", c.sweep.values);
            if (s.contains("methods")) {
                c.sweep.methods.clear();
                for (const auto& m : s["methods"]) {
                    c.sweep.methods.push_back(solver_from_name(m.get<std::string>()));
                }
            }
        }
        if (root.contains("out")) {
            c.out = root["out"].get<std::string>();
        }
    } catch (const json::exception& e) {
        throw ConfigError(std::string("config has a field of the wrong type: ") + e.what());
    }
    c.quant.samples_per_task = c.synth.samples_per_task;
    c.validate();
    return c;
}

RunConfig load_run_config(const std::filesystem::path& path, const std::vector<std::string>& overrides,
                          const char* seed_override) {
    std::vector<std::uint8_t> bytes;
    try {
        bytes = st::read_bytes(path);
    } catch (const IoError& e) {
        throw ConfigError(e.what());
    }
    return parse_run_config({reinterpret_cast<const char*>(bytes.data()), bytes.size()}, overrides, seed_override);
}

}  // namespace pmq
