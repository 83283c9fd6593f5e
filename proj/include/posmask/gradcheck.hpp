#pragma once

#include <cmath>
#include <functional>
#include <string>

#include "posmask/model.hpp"

namespace posmask {

struct GradCheckResult {
    double max_rel_err = 0.0;
    std::string worst_param;
    std::size_t worst_index = 0;
    std::size_t checked = 0;

    bool passes(double tol = 1e-4) const { return max_rel_err < tol; }
};

// Central finite differences against the analytic gradient, every element
// of every parameter. `loss_builder` must construct the same loss graph on
// each call (deterministic in the model parameters).
inline GradCheckResult check_gradients(Model& model,
                                       const std::function<Var(Forward&)>& loss_builder,
                                       double h = 1e-5) {
    GradCheckResult result;
    Forward fwd(model);
    Var loss = loss_builder(fwd);
    fwd.tape().backward(loss);

    auto eval = [&]() {
        Forward f(model);
        Var l = loss_builder(f);
        return f.tape().value(l).data[0];
    };

    for (const auto& name : model.params.names) {
        Array analytic = fwd.gradient(name);
        Array& p = model.params.at(name);
        for (std::size_t i = 0; i < p.numel(); ++i) {
            double orig = p.data[i];
            p.data[i] = orig + h;
            double up = eval();
            p.data[i] = orig - h;
            double down = eval();
            p.data[i] = orig;
            double numeric = (up - down) / (2.0 * h);
            double a = analytic.data[i];
            double rel = std::fabs(a - numeric) / std::max(std::fabs(a) + std::fabs(numeric), 1e-4);
            ++result.checked;
            if (rel > result.max_rel_err) {
                result.max_rel_err = rel;
                result.worst_param = name;
                result.worst_index = i;
            }
        }
    }
    return result;
}

}  // namespace posmask
