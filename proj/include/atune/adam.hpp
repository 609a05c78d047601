#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

#include "atune/tensor.hpp"

namespace atune {

struct AdamConfig {
    double rate = 0.001;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double epsilon = 1e-8;

    // Throws ValidationError unless 0 < rate, 0 <= beta1, beta2 < 1, epsilon > 0.
    void validate() const;
};

/// Moment accumulators for one optimized variable.
struct AdamState {
    std::vector<double> m;
    std::vector<double> v;
    std::uint64_t t = 0;

    AdamState() = default;
    explicit AdamState(std::size_t size) : m(size, 0.0), v(size, 0.0) {}

    void reset();
};

// Bias-corrected Adam update, in place:
//   m <- b1 m + (1-b1) g,  v <- b2 v + (1-b2) g^2
//   x <- x - rate * m_hat / (sqrt(v_hat) + eps)
void adam_step(AdamState& state, const AdamConfig& cfg, std::span<double> variable, std::span<const double> grad);
void adam_step(AdamState& state, const AdamConfig& cfg, Tensor& variable, const Tensor& grad);

}  // namespace atune
