#include "pabnet/optimizer.hpp"

#include <cmath>

#include "pabnet/errors.hpp"

namespace pabnet {

void adam_step(const std::vector<Vec*>& params, const std::vector<const Vec*>& grads,
               AdamState& state, const AdamConfig& config) {
    if (params.size() != grads.size())
        throw ShapeError("adam_step: parameter/gradient array count mismatch");
    if (state.m.empty()) {
        state.m.resize(params.size());
        state.v.resize(params.size());
        for (std::size_t i = 0; i < params.size(); ++i) {
            state.m[i].assign(params[i]->size(), 0.0);
            state.v[i].assign(params[i]->size(), 0.0);
        }
    }
    if (state.m.size() != params.size())
        throw ShapeError("adam_step: optimizer state does not match parameter count");

    ++state.t;
    const double bc1 = 1.0 - std::pow(config.beta1, static_cast<double>(state.t));
    const double bc2 = 1.0 - std::pow(config.beta2, static_cast<double>(state.t));

    for (std::size_t i = 0; i < params.size(); ++i) {
        Vec& p = *params[i];
        const Vec& g = *grads[i];
        if (p.size() != g.size() || p.size() != state.m[i].size())
            throw ShapeError("adam_step: size mismatch in parameter array " + std::to_string(i));
        Vec& m = state.m[i];
        Vec& v = state.v[i];
        for (std::size_t j = 0; j < p.size(); ++j) {
            m[j] = config.beta1 * m[j] + (1.0 - config.beta1) * g[j];
            v[j] = config.beta2 * v[j] + (1.0 - config.beta2) * g[j] * g[j];
            const double m_hat = m[j] / bc1;
            const double v_hat = v[j] / bc2;
            p[j] -= config.learning_rate * m_hat / (std::sqrt(v_hat) + config.epsilon);
        }
    }
}

}  // namespace pabnet
