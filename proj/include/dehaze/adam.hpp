#ifndef DEHAZE_ADAM_HPP
#define DEHAZE_ADAM_HPP

#include <cmath>
#include <cstdint>

#include "dehaze/error.hpp"
#include "dehaze/param_store.hpp"

namespace dehaze {

struct AdamConfig {
    double lr = 2e-4;
    double beta1 = 0.5;
    double beta2 = 0.999;
    double eps = 1e-8;
};

/// First/second moment estimates plus the step counter.
template <typename T>
struct AdamState {
    ParamStore<T> m;
    ParamStore<T> v;
    std::int64_t t = 0;

    static AdamState for_params(const ParamStore<T>& params) {
        return {params.zeros_like(), params.zeros_like(), 0};
    }

    friend bool operator==(const AdamState&, const AdamState&) = default;
};

/// One bias-corrected Adam step over every trainable array:
///   m <- b1 m + (1 - b1) g,  v <- b2 v + (1 - b2) g^2
///   p <- p - lr * m_hat / (sqrt(v_hat) + eps),  m_hat = m / (1 - b1^t), v_hat = v / (1 - b2^t)
template <typename T>
void adam_update(ParamStore<T>& params, const ParamStore<T>& grads, AdamState<T>& state, const AdamConfig& cfg) {
    params.require_same_layout(grads, "adam gradients");
    params.require_same_layout(state.m, "adam first moments");
    params.require_same_layout(state.v, "adam second moments");
    state.t += 1;
    const double bc1 = 1.0 - std::pow(cfg.beta1, static_cast<double>(state.t));
    const double bc2 = 1.0 - std::pow(cfg.beta2, static_cast<double>(state.t));
    for (auto& [name, p] : params.entries()) {
        if (!p.trainable)
            continue;
        const auto& g = grads.at(name).values;
        auto& m = state.m.at(name).values;
        auto& v = state.v.at(name).values;
        for (std::size_t i = 0; i < p.values.size(); ++i) {
            const double gi = g[i];
            const double mi = cfg.beta1 * m[i] + (1.0 - cfg.beta1) * gi;
            const double vi = cfg.beta2 * v[i] + (1.0 - cfg.beta2) * gi * gi;
            m[i] = static_cast<T>(mi);
            v[i] = static_cast<T>(vi);
            const double step = cfg.lr * (mi / bc1) / (std::sqrt(vi / bc2) + cfg.eps);
            p.values[i] = static_cast<T>(static_cast<double>(p.values[i]) - step);
        }
    }
}

} // namespace dehaze

#endif // DEHAZE_ADAM_HPP
