// Copyright (c) 2026, CEQE toolkit developers
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <span>

#include "ceqe/tensor.hpp"

namespace ceqe::ad {

struct AdamOptions {
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
};

/// Scales all gradients by max_norm / norm when the global L2 norm exceeds
/// max_norm. Returns the norm measured before clipping.
double clip_global_norm(std::span<Parameter* const> params, double max_norm = 5.0);

/// Bias-corrected Adam update; gradients are zeroed afterwards.
void adam_step(std::span<Parameter* const> params, double lr, const AdamOptions& options = {});

void zero_grads(std::span<Parameter* const> params);

double global_grad_norm(std::span<Parameter* const> params);

} // namespace ceqe::ad
