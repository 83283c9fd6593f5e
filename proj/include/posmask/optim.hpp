#pragma once

#include <cmath>
#include <stdexcept>
#include <string>
#include <vector>

#include "posmask/array.hpp"

namespace posmask {

struct AdamWConfig {
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
    double weight_decay = 0.0;
};

// Per-parameter first/second moment estimates, one slot per parameter array.
struct AdamWState {
    std::vector<Array> m;
    std::vector<Array> v;
    long long step = 0;

    static AdamWState for_params(const std::vector<Array>& params) {
        AdamWState s;
        for (const auto& p : params) {
            s.m.push_back(Array::zeros_like(p));
            s.v.push_back(Array::zeros_like(p));
        }
        return s;
    }
};

// AdamW with decoupled weight decay and bias correction. Aborts on
// non-finite gradients; at desk scale a NaN is a bug, not noise.
inline void adamw_step(std::vector<Array>& params, const std::vector<Array>& grads,
                       AdamWState& state, double lr, const AdamWConfig& cfg) {
    if (params.size() != grads.size() || params.size() != state.m.size())
        throw std::invalid_argument("adamw_step: state does not match parameters");
    for (std::size_t i = 0; i < grads.size(); ++i)
        for (double g : grads[i].data)
            if (!std::isfinite(g))
                throw std::runtime_error("adamw_step: non-finite gradient in parameter " +
                                         std::to_string(i));
    state.step += 1;
    double bc1 = 1.0 - std::pow(cfg.beta1, static_cast<double>(state.step));
    double bc2 = 1.0 - std::pow(cfg.beta2, static_cast<double>(state.step));
    for (std::size_t i = 0; i < params.size(); ++i) {
        Array& p = params[i];
        const Array& g = grads[i];
        Array& m = state.m[i];
        Array& v = state.v[i];
        for (std::size_t j = 0; j < p.numel(); ++j) {
            m.data[j] = cfg.beta1 * m.data[j] + (1.0 - cfg.beta1) * g.data[j];
            v.data[j] = cfg.beta2 * v.data[j] + (1.0 - cfg.beta2) * g.data[j] * g.data[j];
            double mhat = m.data[j] / bc1;
            double vhat = v.data[j] / bc2;
            p.data[j] -= lr * (mhat / (std::sqrt(vhat) + cfg.eps) + cfg.weight_decay * p.data[j]);
        }
    }
}

// Linear decay from base_lr at step 0 to zero at total_steps.
inline double linear_schedule(long long step, long long total_steps, double base_lr) {
    if (total_steps <= 0) throw std::invalid_argument("linear_schedule: total_steps must be > 0");
    if (step < 0 || step > total_steps)
        throw std::invalid_argument("linear_schedule: step outside [0, total_steps]");
    return base_lr * (1.0 - static_cast<double>(step) / static_cast<double>(total_steps));
}

inline double global_grad_norm(const std::vector<Array>& grads) {
    double sq = 0.0;
    for (const auto& g : grads)
        for (double x : g.data) sq += x * x;
    return std::sqrt(sq);
}

// Scales all gradients by max_norm / ||g|| when the global norm exceeds
// max_norm. Returns the pre-clip norm.
inline double clip_gradients(std::vector<Array>& grads, double max_norm) {
    if (max_norm <= 0) throw std::invalid_argument("clip_gradients: max_norm must be > 0");
    double norm = global_grad_norm(grads);
    if (norm > max_norm) {
        double s = max_norm / norm;
        for (auto& g : grads)
            for (auto& x : g.data) x *= s;
    }
    return norm;
}

}  // namespace posmask
