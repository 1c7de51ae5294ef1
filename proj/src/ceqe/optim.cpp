// Copyright (c) 2026, CEQE toolkit developers
// SPDX-License-Identifier: Apache-2.0

#include "ceqe/optim.hpp"

#include <cmath>

namespace ceqe::ad {

double global_grad_norm(std::span<Parameter* const> params) {
    double sq = 0.0;
    for (const Parameter* p : params) {
        for (double g : p->tensor.grad()) {
            sq += g * g;
        }
    }
    return std::sqrt(sq);
}

double clip_global_norm(std::span<Parameter* const> params, double max_norm) {
    const double norm = global_grad_norm(params);
    if (norm > max_norm) {
        const double scale = max_norm / norm;
        for (Parameter* p : params) {
            for (double& g : p->tensor.mutable_grad()) {
                g *= scale;
            }
        }
    }
    return norm;
}

void adam_step(std::span<Parameter* const> params, double lr, const AdamOptions& options) {
    for (Parameter* p : params) {
        auto grad = p->tensor.grad();
        p->step_count += 1;
        if (grad.empty()) {
            // no gradient reached this parameter: moments decay as if g == 0
            for (std::size_t i = 0; i < p->adam_m.size(); ++i) {
                p->adam_m[i] *= options.beta1;
                p->adam_v[i] *= options.beta2;
            }
        }
        const double t = static_cast<double>(p->step_count);
        const double c1 = 1.0 - std::pow(options.beta1, t);
        const double c2 = 1.0 - std::pow(options.beta2, t);
        auto values = p->tensor.mutable_values();
        for (std::size_t i = 0; i < values.size(); ++i) {
            if (!grad.empty()) {
                const double g = grad[i];
                p->adam_m[i] = options.beta1 * p->adam_m[i] + (1.0 - options.beta1) * g;
                p->adam_v[i] = options.beta2 * p->adam_v[i] + (1.0 - options.beta2) * g * g;
            }
            const double m_hat = p->adam_m[i] / c1;
            const double v_hat = p->adam_v[i] / c2;
            values[i] -= lr * m_hat / (std::sqrt(v_hat) + options.eps);
        }
        p->tensor.zero_grad();
    }
}

void zero_grads(std::span<Parameter* const> params) {
    for (Parameter* p : params) {
        p->tensor.zero_grad();
    }
}

} // namespace ceqe::ad
