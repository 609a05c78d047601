#include "atune/adam.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "atune/errors.hpp"

namespace atune {

void AdamConfig::validate() const {
    if (!(rate > 0.0)) throw ValidationError("Adam rate must be positive, got " + std::to_string(rate));
    if (!(beta1 >= 0.0 && beta1 < 1.0)) throw ValidationError("Adam beta1 must lie in [0, 1)");
    if (!(beta2 >= 0.0 && beta2 < 1.0)) throw ValidationError("Adam beta2 must lie in [0, 1)");
    if (!(epsilon > 0.0)) throw ValidationError("Adam epsilon must be positive");
}

void AdamState::reset() {
    std::fill(m.begin(), m.end(), 0.0);
    std::fill(v.begin(), v.end(), 0.0);
    t = 0;
}

void adam_step(AdamState& state, const AdamConfig& cfg, std::span<double> variable, std::span<const double> grad) {
    if (variable.size() != grad.size() || state.m.size() != variable.size() || state.v.size() != variable.size()) {
        throw ContractViolation("adam_step: variable, gradient and moments must have identical size");
    }
    for (double g : grad) {
        if (!std::isfinite(g)) throw NumericError("adam_step: non-finite gradient");
    }
    state.t += 1;
    const double t = static_cast<double>(state.t);
    const double correction1 = 1.0 - std::pow(cfg.beta1, t);
    const double correction2 = 1.0 - std::pow(cfg.beta2, t);
    for (std::size_t i = 0; i < variable.size(); ++i) {
        const double g = grad[i];
        state.m[i] = cfg.beta1 * state.m[i] + (1.0 - cfg.beta1) * g;
        state.v[i] = cfg.beta2 * state.v[i] + (1.0 - cfg.beta2) * g * g;
        const double m_hat = state.m[i] / correction1;
        const double v_hat = state.v[i] / correction2;
        variable[i] -= cfg.rate * m_hat / (std::sqrt(v_hat) + cfg.epsilon);
    }
}

void adam_step(AdamState& state, const AdamConfig& cfg, Tensor& variable, const Tensor& grad) {
    require_same_shape(variable, grad, "adam_step");
    adam_step(state, cfg, variable.data(), grad.data());
}

}  // namespace atune
