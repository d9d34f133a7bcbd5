#pragma once

#include <cmath>
#include <cstddef>
#include <span>

#include "hbnode/errors.hpp"
#include "hbnode/tensor.hpp"

namespace hbnode {

struct AdamConfig {
    double learning_rate = 1e-3;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
};

struct AdamState {
    Vec m;
    Vec v;
    std::size_t step = 0;

    explicit AdamState(std::size_t n = 0) : m(n, 0.0), v(n, 0.0) {}
};

/// Bias-corrected Adam update applied in place.
inline void adam_step(std::span<double> params, std::span<const double> grads, AdamState& st,
                      const AdamConfig& cfg) {
    require_dim(params.size() == grads.size() && st.m.size() == params.size() &&
                    st.v.size() == params.size(),
                "adam_step: extent mismatch");
    ++st.step;
    const double c1 = 1.0 - std::pow(cfg.beta1, static_cast<double>(st.step));
    const double c2 = 1.0 - std::pow(cfg.beta2, static_cast<double>(st.step));
    for (std::size_t i = 0; i < params.size(); ++i) {
        const double g = grads[i];
        st.m[i] = cfg.beta1 * st.m[i] + (1.0 - cfg.beta1) * g;
        st.v[i] = cfg.beta2 * st.v[i] + (1.0 - cfg.beta2) * g * g;
        const double mh = st.m[i] / c1;
        const double vh = st.v[i] / c2;
        params[i] -= cfg.learning_rate * mh / (std::sqrt(vh) + cfg.eps);
    }
}

}  // namespace hbnode
