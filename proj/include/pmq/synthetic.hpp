// Copyright (c) 2026, The pmq authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include "pmq/calib.hpp"
#include "pmq/checkpoint.hpp"

#include <cstddef>
#include <cstdint>
#include <string_view>
#include <vector>

namespace pmq {

enum class ExpertMode {
    Train,    // full-batch gradient descent from the base on the task's data
    Perturb,  // expert is the task teacher itself; fast, for unit tests
};

std::string_view expert_mode_name(ExpertMode m) noexcept;
ExpertMode expert_mode_from_name(std::string_view name);

struct SyntheticOptions {
    std::uint64_t seed = 0;
    std::size_t num_tasks = 2;
    std::vector<std::size_t> dims{16, 32, 32, 8};  // d_in of layer 0, then each layer's d_out
    std::size_t samples_per_task = 256;
    std::size_t heldout_samples = 256;
    std::size_t train_samples = 256;
    std::size_t train_steps = 150;
    double learning_rate = 0.005;
    Activation hidden_activation = Activation::Relu;
    ExpertMode mode = ExpertMode::Train;
    double task_shift = 1.0;     // scale of the per-task input mean
    double teacher_scale = 0.1;  // per-task teacher deviation from the base, relative to init scale

    void validate() const;
};

struct SyntheticProblem {
    Checkpoint base;
    std::vector<Checkpoint> experts;
    CalibSet calib;    // inputs only
    CalibSet heldout;  // inputs and teacher targets
};

/// Deterministic in `opts` (per platform).
SyntheticProblem make_synthetic_tasks(const SyntheticOptions& opts);

/// Squared-error loss (1/n) sum ||f(x) - y||^2 and in-place gradient steps.
/// Exposed for tests of the generator.
double mean_squared_loss(const Checkpoint& model, const Matrix& x, const Matrix& y);
void gradient_descent(Checkpoint& model, const Matrix& x, const Matrix& y, std::size_t steps, double lr);

}  // namespace pmq
