#pragma once

// Reference computations the library results are checked against. They are
// written from the governing equations directly and share no code with the
// library beyond its data types.

#include <algorithm>
#include <cmath>
#include <functional>
#include <random>
#include <span>
#include <vector>

#include "atune/datagen.hpp"
#include "atune/model.hpp"

namespace oracle {

inline double central_difference(const std::function<double()>& loss, double& x, double step = 1e-5) {
    const double saved = x;
    x = saved + step;
    const double up = loss();
    x = saved - step;
    const double down = loss();
    x = saved;
    return (up - down) / (2 * step);
}

// Relative error with a floor on the magnitude, so components that are zero
// up to rounding compare on an absolute scale.
inline double relative_error(double a, double b, double floor = 1e-6) {
    return std::abs(a - b) / std::max({std::abs(a), std::abs(b), floor});
}

struct GradCheck {
    double worst = 0.0;
    std::size_t compared = 0;

    void add(double analytic, double numeric) {
        worst = std::max(worst, relative_error(analytic, numeric));
        ++compared;
    }
};

// Linear probe loss L = sum_t sum_o w[t, o] * y[t, o].
inline double probe_loss(const atune::ForwardTrace& trace, std::span<const double> weights) {
    double sum = 0.0;
    for (std::size_t i = 0; i < weights.size(); ++i) sum += weights[i] * trace.outputs[i];
    return sum;
}

struct GradInstance {
    atune::Model model;
    atune::LoopMode mode = atune::LoopMode::open;
    std::size_t steps = 1;
    atune::HiddenState seed;
    std::vector<double> inputs;  // steps x D (open) or D (closed)
    std::vector<double> probe;   // steps x O
};

inline atune::ForwardTrace run(const GradInstance& g) {
    return g.mode == atune::LoopMode::open ? g.model.rollout_open(g.seed, g.inputs, g.steps)
                                           : g.model.rollout_closed(g.seed, g.inputs, g.steps);
}

// Compares every parameter, seed and input gradient with central differences.
inline GradCheck check_gradients(GradInstance g, double step = 1e-5) {
    const atune::ForwardTrace trace = run(g);
    const atune::Gradients grads = g.model.backward(trace, g.probe);
    auto loss = [&] { return probe_loss(run(g), g.probe); };

    GradCheck out;
    auto sweep = [&](std::span<double> values, std::span<const double> analytic) {
        for (std::size_t i = 0; i < values.size(); ++i) out.add(analytic[i], central_difference(loss, values[i], step));
    };
    atune::LstmParams& p = g.model.cell();
    sweep(p.input_weights().data(), grads.params.input_weights().data());
    sweep(p.recurrent_weights().data(), grads.params.recurrent_weights().data());
    sweep(p.output_weights().data(), grads.params.output_weights().data());
    sweep(g.seed.h.data(), grads.seed.h.data());
    sweep(g.seed.c.data(), grads.seed.c.data());
    sweep(g.inputs, grads.inputs.data());
    return out;
}

inline GradInstance random_instance(std::mt19937_64& rng, bool grid, atune::LoopMode mode, std::size_t hidden,
                                    std::size_t steps) {
    std::normal_distribution<double> normal(0.0, 0.5);
    GradInstance g;
    g.mode = mode;
    g.steps = steps;
    if (grid) {
        g.model = atune::Model(atune::GridModelParams::random(hidden, 3, 3, rng));
    } else {
        const std::size_t D = 1 + rng() % 3;
        const std::size_t O = mode == atune::LoopMode::closed ? D : 1 + rng() % 3;
        g.model = atune::Model(atune::LstmParams::random(hidden, D, O, rng));
    }
    g.seed = g.model.zero_state();
    for (double& v : g.seed.h.data()) v = normal(rng);
    for (double& v : g.seed.c.data()) v = normal(rng);
    const std::size_t D = g.model.input_size();
    g.inputs.resize((mode == atune::LoopMode::open ? steps : 1) * D);
    for (double& v : g.inputs) v = normal(rng);
    g.probe.resize(steps * g.model.output_size());
    for (double& v : g.probe) v = normal(rng);
    return g;
}

// Double pendulum -----------------------------------------------------------

// Angular accelerations from the Lagrangian, written in the common
// (m1, m2, l1, l2) form rather than the reduced (mu, lambda) one.
inline std::pair<double, double> pendulum_accelerations(const atune::PendulumState& s, const atune::PendulumSpec& p) {
    const double m1 = p.mass1, m2 = p.mass2, l1 = p.length1, l2 = p.length2, g = p.gravity;
    const double d = s.theta1 - s.theta2;
    const double den = 2 * m1 + m2 - m2 * std::cos(2 * d);
    const double a1 = (-g * (2 * m1 + m2) * std::sin(s.theta1) - m2 * g * std::sin(s.theta1 - 2 * s.theta2) -
                       2 * std::sin(d) * m2 * (s.omega2 * s.omega2 * l2 + s.omega1 * s.omega1 * l1 * std::cos(d))) /
                      (l1 * den);
    const double a2 = (2 * std::sin(d) *
                       (s.omega1 * s.omega1 * l1 * (m1 + m2) + g * (m1 + m2) * std::cos(s.theta1) +
                        s.omega2 * s.omega2 * l2 * m2 * std::cos(d))) /
                      (l2 * den);
    return {a1, a2};
}

inline double pendulum_energy(const atune::PendulumState& s, const atune::PendulumSpec& p) {
    const double m1 = p.mass1, m2 = p.mass2, l1 = p.length1, l2 = p.length2, g = p.gravity;
    const double kinetic = 0.5 * (m1 + m2) * l1 * l1 * s.omega1 * s.omega1 +
                           0.5 * m2 * l2 * l2 * s.omega2 * s.omega2 +
                           m2 * l1 * l2 * s.omega1 * s.omega2 * std::cos(s.theta1 - s.theta2);
    const double potential = -(m1 + m2) * g * l1 * std::cos(s.theta1) - m2 * g * l2 * std::cos(s.theta2);
    return kinetic + potential;
}

// Plain RK4 over the oracle's own derivative field.
inline atune::PendulumState rk4(const atune::PendulumState& s, const atune::PendulumSpec& p, double h) {
    using S = atune::PendulumState;
    auto f = [&](const S& x) {
        auto [a1, a2] = oracle::pendulum_accelerations(x, p);
        return S{x.omega1, x.omega2, a1, a2};
    };
    auto axpy = [](const S& x, const S& d, double k) {
        return S{x.theta1 + k * d.theta1, x.theta2 + k * d.theta2, x.omega1 + k * d.omega1, x.omega2 + k * d.omega2};
    };
    const S k1 = f(s), k2 = f(axpy(s, k1, h / 2)), k3 = f(axpy(s, k2, h / 2)), k4 = f(axpy(s, k3, h));
    S out = axpy(s, k1, h / 6);
    out = axpy(out, k2, h / 3);
    out = axpy(out, k3, h / 3);
    return axpy(out, k4, h / 6);
}

// 2-D wave ------------------------------------------------------------------

// Energy conserved by the leapfrog scheme between frames n and n+1:
//   1/2 sum ((u1 - u0) / dt)^2 + 1/2 c^2 u1' A u0,
// with A the negated five-point Laplacian under zero padding.
inline double wave_energy(std::span<const double> u0, std::span<const double> u1, const atune::WaveSpec& w) {
    const long R = static_cast<long>(w.rows), C = static_cast<long>(w.cols);
    auto at = [&](std::span<const double> u, long r, long c) {
        return (r < 0 || c < 0 || r >= R || c >= C) ? 0.0 : u[static_cast<std::size_t>(r * C + c)];
    };
    double kinetic = 0.0, strain = 0.0;
    for (long r = 0; r < R; ++r) {
        for (long c = 0; c < C; ++c) {
            const double v = (at(u1, r, c) - at(u0, r, c)) / w.time_step;
            kinetic += v * v;
            const double lap = (at(u0, r, c + 1) - 2 * at(u0, r, c) + at(u0, r, c - 1)) / (w.dx * w.dx) +
                               (at(u0, r + 1, c) - 2 * at(u0, r, c) + at(u0, r - 1, c)) / (w.dy * w.dy);
            strain += at(u1, r, c) * -lap;
        }
    }
    return 0.5 * kinetic + 0.5 * w.speed * w.speed * strain;
}

}  // namespace oracle
