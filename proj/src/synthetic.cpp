// Copyright (c) 2026, The pmq authors
// SPDX-License-Identifier: Apache-2.0

#include "pmq/synthetic.hpp"

#include "pmq/errors.hpp"
#include "pmq/linalg.hpp"
#include "pmq/model.hpp"

#include <cmath>
#include <random>
#include <string>

namespace pmq {

std::string_view expert_mode_name(ExpertMode m) noexcept {
    return m == ExpertMode::Train ? "train" : "perturb";
}

ExpertMode expert_mode_from_name(std::string_view name) {
    if (name == "train") {
        return ExpertMode::Train;
    }
    if (name == "perturb") {
        return ExpertMode::Perturb;
    }
    throw ConfigError("unknown expert mode '" + std::string(name) + "'");
}

void SyntheticOptions::validate() const {
    if (num_tasks == 0) {
        throw ConfigError("K must be >= 1");
    }
    if (dims.size() < 2) {
        throw ConfigError("dims needs at least an input and an output dimension");
    }
    for (auto d : dims) {
        if (d == 0) {
            throw ConfigError("dims must be positive");
        }
    }
    if (samples_per_task == 0 || heldout_samples == 0 || train_samples == 0) {
        throw ConfigError("sample counts must be positive");
    }
    if (!(learning_rate > 0.0)) {
        throw ConfigError("learning_rate must be > 0");
    }
}

namespace {

using Rng = std::mt19937_64;

Matrix gaussian(Rng& rng, std::size_t rows, std::size_t cols, double stddev) {
    std::normal_distribution<double> n(0.0, stddev);
    Matrix m(rows, cols);
    for (double& v : m.data()) {
        v = n(rng);
    }
    return m;
}

struct InputDistribution {
    std::vector<double> mean;
    std::vector<double> stddev;

    Matrix sample(Rng& rng, std::size_t n) const {
        std::normal_distribution<double> unit(0.0, 1.0);
        Matrix x(mean.size(), n);
        for (std::size_t c = 0; c < n; ++c) {
            for (std::size_t r = 0; r < mean.size(); ++r) {
                x(r, c) = mean[r] + stddev[r] * unit(rng);
            }
        }
        return x;
    }
};

double activation_grad(Activation a, double z) {
    switch (a) {
        case Activation::Identity:
            return 1.0;
        case Activation::Relu:
            return z > 0.0 ? 1.0 : 0.0;
        case Activation::Gelu: {
            constexpr double c = 0.7978845608028654;
            constexpr double k = 0.044715;
            const double t = std::tanh(c * (z + k * z * z * z));
            return 0.5 * (1.0 + t) + 0.5 * z * (1.0 - t * t) * c * (1.0 + 3.0 * k * z * z);
        }
    }
    return 1.0;
}

Matrix apply_activation(Activation a, Matrix z) {
    for (double& v : z.data()) {
        switch (a) {
            case Activation::Identity: break;
            case Activation::Relu: v = v > 0.0 ? v : 0.0; break;
            case Activation::Gelu: v = gelu(v); break;
        }
    }
    return z;
}

Matrix pre_activation(const Layer& l, const Matrix& x) {
    Matrix z = matmul(l.weight, x);
    if (l.bias) {
        for (std::size_t r = 0; r < z.rows(); ++r) {
            for (double& v : z.row(r)) {
                v += (*l.bias)[r];
            }
        }
    }
    return z;
}

}  // namespace

double mean_squared_loss(const Checkpoint& model, const Matrix& x, const Matrix& y) {
    const Matrix out = forward(Model(model), x);
    return frobenius_sq(out - y) / static_cast<double>(x.cols());
}

void gradient_descent(Checkpoint& model, const Matrix& x, const Matrix& y, std::size_t steps, double lr) {
    const std::size_t depth = model.layers.size();
    const double n = static_cast<double>(x.cols());
    for (std::size_t step = 0; step < steps; ++step) {
        std::vector<Matrix> inputs{x};
        std::vector<Matrix> pre;
        for (std::size_t l = 0; l < depth; ++l) {
            pre.push_back(pre_activation(model.layers[l], inputs.back()));
            inputs.push_back(apply_activation(model.manifest.layers[l].activation, pre.back()));
        }
        Matrix grad = (2.0 / n) * (inputs.back() - y);
        for (std::size_t l = depth; l-- > 0;) {
            auto& layer = model.layers[l];
            const Activation act = model.manifest.layers[l].activation;
            auto g = grad.data();
            auto z = pre[l].data();
            for (std::size_t i = 0; i < g.size(); ++i) {
                g[i] *= activation_grad(act, z[i]);
            }
            const Matrix dw = matmul_transposed(grad, inputs[l]);
            Matrix next;
            if (l > 0) {
                next = matmul(layer.weight.transpose(), grad);
            }
            auto w = layer.weight.data();
            auto dwd = dw.data();
            for (std::size_t i = 0; i < w.size(); ++i) {
                w[i] -= lr * dwd[i];
            }
            if (layer.bias) {
                for (std::size_t r = 0; r < grad.rows(); ++r) {
                    double s = 0.0;
                    for (double v : grad.row(r)) {
                        s += v;
                    }
                    (*layer.bias)[r] -= lr * s;
                }
            }
            grad = std::move(next);
        }
    }
}

SyntheticProblem make_synthetic_tasks(const SyntheticOptions& opts) {
    opts.validate();
    Rng rng(opts.seed);
    const std::size_t depth = opts.dims.size() - 1;

    SyntheticProblem p;
    std::vector<Activation> acts;
    for (std::size_t l = 0; l < depth; ++l) {
        const std::size_t d_in = opts.dims[l];
        const std::size_t d_out = opts.dims[l + 1];
        Layer layer{"layer" + std::to_string(l), gaussian(rng, d_out, d_in, std::sqrt(2.0 / static_cast<double>(d_in))),
                    std::vector<double>(d_out)};
        std::normal_distribution<double> bias(0.0, 0.1);
        for (double& b : *layer.bias) {
            b = bias(rng);
        }
        p.base.layers.push_back(std::move(layer));
        acts.push_back(l + 1 == depth ? Activation::Identity : opts.hidden_activation);
    }
    p.base.manifest = manifest_for(p.base.layers, acts);

    p.calib.seed = opts.seed;
    p.calib.samples_per_task = opts.samples_per_task;
    p.heldout.seed = opts.seed;
    p.heldout.samples_per_task = opts.heldout_samples;

    std::uniform_real_distribution<double> spread(0.5, 1.5);
    std::normal_distribution<double> shift(0.0, opts.task_shift);
    for (std::size_t task = 0; task < opts.num_tasks; ++task) {
        InputDistribution dist;
        for (std::size_t r = 0; r < opts.dims[0]; ++r) {
            dist.mean.push_back(shift(rng));
            dist.stddev.push_back(spread(rng));
        }
        Checkpoint teacher = p.base;
        for (auto& layer : teacher.layers) {
            const double init = std::sqrt(2.0 / static_cast<double>(layer.weight.cols()));
            layer.weight = layer.weight + gaussian(rng, layer.weight.rows(), layer.weight.cols(), opts.teacher_scale * init);
        }
        const Matrix train_x = dist.sample(rng, opts.train_samples);
        const Matrix calib_x = dist.sample(rng, opts.samples_per_task);
        const Matrix heldout_x = dist.sample(rng, opts.heldout_samples);
        const Model teacher_model(teacher);

        Checkpoint expert;
        if (opts.mode == ExpertMode::Perturb) {
            expert = teacher;
        } else {
            expert = p.base;
            gradient_descent(expert, train_x, forward(teacher_model, train_x), opts.train_steps, opts.learning_rate);
        }
        p.experts.push_back(std::move(expert));
        p.calib.tasks.push_back({task, calib_x, std::nullopt});
        p.heldout.tasks.push_back({task, heldout_x, forward(teacher_model, heldout_x)});
    }
    return p;
}

}  // namespace pmq
