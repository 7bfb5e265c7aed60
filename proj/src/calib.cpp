// Copyright (c) 2026, The pmq authors
// SPDX-License-Identifier: Apache-2.0

#include "pmq/calib.hpp"

#include "pmq/errors.hpp"
#include "pmq/linalg.hpp"
#include "pmq/safetensors.hpp"

#include <json.hpp>

#include <algorithm>

namespace pmq {

using nlohmann::json;

void CalibSet::validate() const {
    if (tasks.empty()) {
        throw ShapeError("calibration set has no tasks");
    }
    for (std::size_t i = 0; i < tasks.size(); ++i) {
        const auto& t = tasks[i];
        if (t.task != i) {
            throw ShapeError("calibration task ids must cover 0..K-1 in order");
        }
        if (t.inputs.cols() == 0) {
            throw ShapeError("task " + std::to_string(i) + " has no samples");
        }
        if (t.inputs.rows() != tasks[0].inputs.rows()) {
            throw ShapeError("tasks disagree on input dimension");
        }
        if (t.targets && t.targets->cols() != t.inputs.cols()) {
            throw ShapeError("task " + std::to_string(i) + " targets do not match its inputs");
        }
    }
}

CalibSet CalibSet::truncated(std::size_t n) const {
    CalibSet out;
    out.seed = seed;
    out.samples_per_task = n;
    for (const auto& t : tasks) {
        if (n > t.inputs.cols()) {
            throw ConfigError("requested " + std::to_string(n) + " samples, task " + std::to_string(t.task) +
                              " has " + std::to_string(t.inputs.cols()));
        }
        TaskBatch b{t.task, t.inputs.col_slice(0, n), std::nullopt};
        if (t.targets) {
            b.targets = t.targets->col_slice(0, n);
        }
        out.tasks.push_back(std::move(b));
    }
    return out;
}

Matrix LayerCalibStats::pooled_hessian() const {
    Matrix h(dim, dim);
    for (const auto& hi : hessians) {
        h = h + hi;
    }
    return h;
}

double LayerCalibStats::total_energy() const {
    double s = 0.0;
    for (double e : energies) {
        s += e;
    }
    return s;
}

LayerCalibStats stats_from_activations(const std::vector<Matrix>& activations, std::size_t chunk) {
    if (activations.empty()) {
        throw ShapeError("no activations");
    }
    if (chunk == 0) {
        throw ShapeError("chunk size must be positive");
    }
    LayerCalibStats s;
    s.dim = activations[0].rows();
    for (const auto& x : activations) {
        if (x.rows() != s.dim) {
            throw ShapeError("task activations disagree on dimension");
        }
        Matrix h(s.dim, s.dim);
        for (std::size_t begin = 0; begin < x.cols(); begin += chunk) {
            accumulate_gram(x.col_slice(begin, std::min(begin + chunk, x.cols())), h);
        }
        s.hessians.push_back(std::move(h));
        s.energies.push_back(frobenius_sq(x));
        s.counts.push_back(x.cols());
    }
    return s;
}

LayerCollection collect_layer_stats(const Model& model, const CalibSet& calib, std::size_t index,
                                    const std::vector<Matrix>* cached, std::size_t chunk) {
    if (index >= model.num_layers()) {
        throw ShapeError("collect_layer_stats: layer index out of range");
    }
    const std::size_t d = model.layer(index).d_in();
    LayerCollection out;
    if (cached) {
        if (cached->size() != calib.num_tasks()) {
            throw ShapeError("activation cache has " + std::to_string(cached->size()) + " tasks, calibration set " +
                             std::to_string(calib.num_tasks()));
        }
        for (std::size_t i = 0; i < cached->size(); ++i) {
            const auto& x = (*cached)[i];
            if (x.rows() != d || x.cols() != calib.tasks[i].inputs.cols()) {
                throw ShapeError("activation cache drifted from the model at layer " + std::to_string(index));
            }
        }
        out.activations = *cached;
    } else {
        for (const auto& t : calib.tasks) {
            Matrix x(d, t.inputs.cols());
            for (std::size_t begin = 0; begin < t.inputs.cols(); begin += chunk) {
                const std::size_t end = std::min(begin + chunk, t.inputs.cols());
                const Matrix part = forward_to_layer(model, t.inputs.col_slice(begin, end), index);
                for (std::size_t r = 0; r < d; ++r) {
                    std::copy(part.row(r).begin(), part.row(r).end(), x.row(r).begin() + static_cast<std::ptrdiff_t>(begin));
                }
            }
            out.activations.push_back(std::move(x));
        }
    }
    out.stats = stats_from_activations(out.activations, chunk);
    return out;
}

double anchor_lambda(const LayerCalibStats& stats, double alpha) {
    if (stats.dim == 0) {
        throw ShapeError("anchor_lambda: zero input dimension");
    }
    return alpha / static_cast<double>(stats.dim) * stats.total_energy();
}

void save_calib_set(const CalibSet& set, const std::filesystem::path& dir) {
    set.validate();
    std::filesystem::create_directories(dir);
    for (const auto& t : set.tasks) {
        st::TensorFile f;
        f.tensors.push_back(st::from_matrix("inputs", t.inputs, st::DType::F64));
        if (t.targets) {
            f.tensors.push_back(st::from_matrix("targets", *t.targets, st::DType::F64));
        }
        st::write_file(dir / ("task" + std::to_string(t.task + 1) + ".safetensors"), f);
    }
    const json index = {{"K", set.num_tasks()}, {"samples_per_task", set.samples_per_task}, {"seed", set.seed}};
    const std::string text = index.dump(2) + "\n";
    st::write_bytes(dir / "index.json", {reinterpret_cast<const std::uint8_t*>(text.data()), text.size()});
}

CalibSet load_calib_set(const std::filesystem::path& dir) {
    const auto bytes = st::read_bytes(dir / "index.json");
    CalibSet set;
    std::size_t k = 0;
    try {
        const json index = json::parse(bytes.begin(), bytes.end());
        k = index.at("K").get<std::size_t>();
        set.samples_per_task = index.at("samples_per_task").get<std::size_t>();
        set.seed = index.at("seed").get<std::uint64_t>();
    } catch (const json::exception& e) {
        throw ParseError(ParseErrorKind::MalformedHeader, std::string("malformed calibration index: ") + e.what());
    }
    for (std::size_t i = 0; i < k; ++i) {
        const auto f = st::read_file(dir / ("task" + std::to_string(i + 1) + ".safetensors"));
        TaskBatch b{i, st::to_matrix(f.at("inputs"), st::DType::F64), std::nullopt};
        if (const auto* t = f.find("targets")) {
            b.targets = st::to_matrix(*t, st::DType::F64);
        }
        set.tasks.push_back(std::move(b));
    }
    set.validate();
    return set;
}

}  // namespace pmq
