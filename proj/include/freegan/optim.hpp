#ifndef FREEGAN_OPTIM_HPP
#define FREEGAN_OPTIM_HPP

#include <cmath>
#include <vector>

#include "freegan/autodiff.hpp"
#include "freegan/common.hpp"

namespace freegan {

struct AdamWConfig {
    real lr = 2e-4;
    real beta1 = 0.8;
    real beta2 = 0.99;
    real eps = 1e-8;
    real weight_decay = 0.01;
    real lr_decay = 1.0;  // multiplicative per-step decay; 1.0 disables
};

// First/second moments parallel to a parameter list, plus the step count.
struct OptimState {
    long step = 0;
    std::vector<std::vector<real>> m, v;

    void init(const std::vector<ad::Param>& params) {
        step = 0;
        m.clear();
        v.clear();
        for (const auto& p : params) {
            m.emplace_back(p.value.size(), 0.0);
            v.emplace_back(p.value.size(), 0.0);
        }
    }
};

// Decoupled-weight-decay Adam with bias-corrected moments. Aborts (throws,
// mutating nothing) if any gradient is non-finite.
inline void adamw_step(std::vector<ad::Param>& params,
                       const std::vector<const std::vector<real>*>& grads, OptimState& state,
                       const AdamWConfig& cfg) {
    if (!(cfg.lr > 0.0)) throw ConfigError("adamw: lr must be positive");
    if (params.size() != grads.size() || params.size() != state.m.size())
        throw ShapeError("adamw: params/grads/state size mismatch");
    for (size_t p = 0; p < params.size(); ++p) {
        if (grads[p]->size() != params[p].value.size())
            throw ShapeError("adamw: gradient shape mismatch for " + params[p].name);
        for (real g : *grads[p])
            if (!std::isfinite(g))
                throw NumericalError("adamw: non-finite gradient in " + params[p].name);
    }

    state.step += 1;
    const long t = state.step;
    const real lr_t = cfg.lr * std::pow(cfg.lr_decay, static_cast<real>(t - 1));
    const real bc1 = 1.0 - std::pow(cfg.beta1, static_cast<real>(t));
    const real bc2 = 1.0 - std::pow(cfg.beta2, static_cast<real>(t));
    for (size_t p = 0; p < params.size(); ++p) {
        auto& theta = params[p].value;
        auto& m = state.m[p];
        auto& v = state.v[p];
        const auto& g = *grads[p];
        for (size_t i = 0; i < theta.size(); ++i) {
            m[i] = cfg.beta1 * m[i] + (1.0 - cfg.beta1) * g[i];
            v[i] = cfg.beta2 * v[i] + (1.0 - cfg.beta2) * g[i] * g[i];
            const real mhat = m[i] / bc1;
            const real vhat = v[i] / bc2;
            theta[i] -= lr_t * (mhat / (std::sqrt(vhat) + cfg.eps) + cfg.weight_decay * theta[i]);
        }
    }
}

}  // namespace freegan

#endif  // FREEGAN_OPTIM_HPP
