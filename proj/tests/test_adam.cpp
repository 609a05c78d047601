#include <gtest/gtest.h>

#include <cmath>
#include <limits>
#include <random>

#include "atune/adam.hpp"
#include "atune/errors.hpp"

using namespace atune;

TEST(Adam, ZeroGradientLeavesVariable) {
    std::vector<double> x{1.0, -2.0, 3.0};
    AdamState s(3);
    adam_step(s, AdamConfig{}, x, std::vector<double>(3, 0.0));
    EXPECT_EQ(x, (std::vector<double>{1.0, -2.0, 3.0}));
}

TEST(Adam, FirstStepIsSignTimesRate) {
    const AdamConfig cfg{0.01, 0.9, 0.999, 1e-8};
    for (double scale : {1e-3, 1.0, 250.0}) {
        std::vector<double> x{0.0, 0.0, 0.0};
        const std::vector<double> g{2.0 * scale, -0.5 * scale, 7.0 * scale};
        AdamState s(3);
        adam_step(s, cfg, x, g);
        for (std::size_t i = 0; i < 3; ++i) {
            // |step| = rate * |g| / (|g| + eps)
            EXPECT_NEAR(x[i], -0.01 * std::copysign(1.0, g[i]), 0.01 * 1e-8 / std::abs(g[i]) + 1e-15);
        }
    }
}

TEST(Adam, FirstStepNeverExceedsRate) {
    std::mt19937_64 rng(3);
    std::normal_distribution<double> n(0.0, 10.0);
    const AdamConfig cfg{0.004, 0.5, 0.99, 1e-8};
    std::vector<double> x(50, 0.0), g(50);
    for (double& v : g) v = n(rng);
    AdamState s(50);
    adam_step(s, cfg, x, g);
    for (double v : x) EXPECT_LE(std::abs(v), 0.004 * (1 + 1e-9));
}

TEST(Adam, FirstStepIsScaleInvariant) {
    const AdamConfig cfg{0.001, 0.9, 0.999, 1e-12};
    std::vector<double> a{0.3, 0.3}, b{0.3, 0.3};
    AdamState sa(2), sb(2);
    adam_step(sa, cfg, a, std::vector<double>{0.2, -3.0});
    adam_step(sb, cfg, b, std::vector<double>{20.0, -300.0});
    EXPECT_NEAR(a[0], b[0], 1e-13);
    EXPECT_NEAR(a[1], b[1], 1e-13);
}

TEST(Adam, MinimisesConvexQuadratic) {
    std::mt19937_64 rng(9);
    std::uniform_real_distribution<double> u(-1.0, 1.0);
    std::vector<double> diag(10), x(10);
    for (double& d : diag) d = 0.5 + std::abs(u(rng)) * 2;
    for (double& v : x) v = u(rng);
    auto f = [&] {
        double s = 0.0;
        for (std::size_t i = 0; i < 10; ++i) s += 0.5 * diag[i] * x[i] * x[i];
        return s;
    };
    const double start = f();
    AdamState s(10);
    const AdamConfig cfg{0.01, 0.9, 0.999, 1e-8};
    std::vector<double> g(10);
    for (int k = 0; k < 500; ++k) {
        for (std::size_t i = 0; i < 10; ++i) g[i] = diag[i] * x[i];
        adam_step(s, cfg, x, g);
    }
    EXPECT_LT(f(), 0.01 * start);
}

TEST(Adam, RejectsBadInput) {
    std::vector<double> x(3, 0.0);
    AdamState s(3);
    EXPECT_THROW(adam_step(s, AdamConfig{}, x, std::vector<double>(2, 1.0)), ContractViolation);
    EXPECT_THROW(adam_step(s, AdamConfig{}, x, std::vector<double>{1.0, std::numeric_limits<double>::quiet_NaN(), 0.0}),
                 NumericError);
    EXPECT_THROW((AdamConfig{0.0, 0.9, 0.999, 1e-8}.validate()), ValidationError);
    EXPECT_THROW((AdamConfig{0.1, 1.0, 0.999, 1e-8}.validate()), ValidationError);
    EXPECT_NO_THROW(AdamConfig{}.validate());
}

TEST(Adam, ResetClearsMoments) {
    std::vector<double> x(2, 0.0);
    AdamState s(2);
    adam_step(s, AdamConfig{}, x, std::vector<double>{1.0, 1.0});
    s.reset();
    EXPECT_EQ(s.t, 0u);
    EXPECT_EQ(s.m, (std::vector<double>{0.0, 0.0}));
    EXPECT_EQ(s.v, (std::vector<double>{0.0, 0.0}));
}
