#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "atune/errors.hpp"
#include "atune/io.hpp"
#include "atune/model.hpp"
#include "oracles.hpp"

using namespace atune;

TEST(LstmCell, ZeroWeightsKeepZeroState) {
    const LstmParams p = LstmParams::zeros(3, 2, 1);
    const StepResult r = forward_step(p, HiddenState::zeros(1, 3), Tensor::vector({0.7, -2.0}));
    for (double v : r.state.h.data()) EXPECT_EQ(v, 0.0);
    for (double v : r.state.c.data()) EXPECT_EQ(v, 0.0);
    ASSERT_EQ(r.output.size(), 1u);
    EXPECT_EQ(r.output[0], 0.0);
}

TEST(LstmCell, ZeroWeightsHalveUnitCellState) {
    const LstmParams p = LstmParams::zeros(4, 1, 1);
    HiddenState s = HiddenState::zeros(1, 4);
    s.c.fill(1.0);
    const StepResult r = forward_step(p, s, Tensor::vector({3.0}));
    for (double v : r.state.c.data()) EXPECT_NEAR(v, 0.5, 1e-15);
    for (double v : r.state.h.data()) EXPECT_NEAR(v, 0.2310585786300049, 1e-12);
}

TEST(LstmCell, DefaultShapeIsAccepted) {
    std::mt19937_64 rng(1);
    const LstmParams p = LstmParams::random(32, 1, 1, rng);
    const StepResult r = forward_step(p, HiddenState::zeros(1, 32), Tensor::vector({0.3}));
    EXPECT_EQ(r.output.size(), 1u);
    EXPECT_EQ(p.parameter_count(), 128u * 1 + 128u * 32 + 32u);
}

TEST(LstmCell, InitialisationStaysInRange) {
    std::mt19937_64 rng(5);
    const LstmParams p = LstmParams::random(16, 3, 2, rng);
    const double bound = 1.0 / std::sqrt(16.0);
    for (const Tensor* t : {&p.input_weights(), &p.recurrent_weights(), &p.output_weights()}) {
        for (double v : t->data()) EXPECT_LE(std::abs(v), bound);
    }
}

TEST(LstmCell, ShapeMismatchIsContractViolation) {
    const LstmParams p = LstmParams::zeros(3, 2, 1);
    EXPECT_THROW(forward_step(p, HiddenState::zeros(1, 3), Tensor::vector({1.0})), ContractViolation);
    EXPECT_THROW(forward_step(p, HiddenState::zeros(1, 4), Tensor::vector({1.0, 2.0})), ContractViolation);
}

TEST(LstmCell, OverflowNamesTheStep) {
    LstmParams p = LstmParams::zeros(4, 1, 1);
    p.output_weights().fill(1e308);
    HiddenState s = HiddenState::zeros(1, 4);
    s.c.fill(5.0);
    const std::vector<double> inputs{1.0, 1.0, 1.0};
    try {
        rollout_open(p, s, inputs, 3);
        FAIL() << "expected NumericError";
    } catch (const NumericError& e) {
        EXPECT_NE(std::string(e.what()).find("step 0"), std::string::npos) << e.what();
    }
}

TEST(Rollout, OpenLoopComposesForwardSteps) {
    std::mt19937_64 rng(2);
    const LstmParams p = LstmParams::random(5, 2, 3, rng);
    std::normal_distribution<double> n;
    std::vector<double> xs(8);
    for (double& v : xs) v = n(rng);
    const ForwardTrace tr = rollout_open(p, HiddenState::zeros(1, 5), xs, 4);
    HiddenState s = HiddenState::zeros(1, 5);
    for (std::size_t t = 0; t < 4; ++t) {
        const StepResult r = forward_step(p, s, Tensor::vector(std::span<const double>(xs).subspan(2 * t, 2)));
        EXPECT_EQ(r.output, tr.output_tensor(t));
        s = r.state;
        EXPECT_EQ(s, tr.state_after(t));
    }
}

TEST(Rollout, ClosedLoopFeedsOutputsBack) {
    std::mt19937_64 rng(3);
    const LstmParams p = LstmParams::random(6, 2, 2, rng);
    const std::vector<double> x0{0.4, -0.1};
    const ForwardTrace tr = rollout_closed(p, HiddenState::zeros(1, 6), x0, 5);
    EXPECT_EQ(tr.input(0)[0], 0.4);
    for (std::size_t t = 1; t < 5; ++t) {
        EXPECT_EQ(tr.input(t)[0], tr.output(t - 1)[0]);
        EXPECT_EQ(tr.input(t)[1], tr.output(t - 1)[1]);
    }
}

TEST(Rollout, ClosedLoopZeroModelStaysZero) {
    const LstmParams p = LstmParams::zeros(4, 1, 1);
    const ForwardTrace tr = rollout_closed(p, HiddenState::zeros(1, 4), std::vector<double>{0.0}, 5);
    for (double v : tr.outputs) EXPECT_EQ(v, 0.0);
}

TEST(Rollout, ClosedLoopNeedsMatchingWidths) {
    const Model m(LstmParams::zeros(4, 2, 1));
    EXPECT_THROW(m.rollout_closed(m.zero_state(), std::vector<double>{0.0, 0.0}, 3), ConfigError);
}

TEST(Backward, ZeroOutputGradsGiveZeroGradients) {
    std::mt19937_64 rng(4);
    const Model m(LstmParams::random(4, 2, 2, rng));
    const std::vector<double> x(6, 0.3);
    const ForwardTrace tr = m.rollout_open(m.zero_state(), x, 3);
    const Gradients g = m.backward(tr, std::vector<double>(6, 0.0));
    for (double v : g.params.input_weights().data()) EXPECT_EQ(v, 0.0);
    for (double v : g.params.recurrent_weights().data()) EXPECT_EQ(v, 0.0);
    for (double v : g.seed.h.data()) EXPECT_EQ(v, 0.0);
    for (double v : g.inputs.data()) EXPECT_EQ(v, 0.0);
}

TEST(Backward, LengthMismatchIsContractViolation) {
    std::mt19937_64 rng(4);
    const Model m(LstmParams::random(4, 1, 1, rng));
    const ForwardTrace tr = m.rollout_open(m.zero_state(), std::vector<double>(3, 0.1), 3);
    EXPECT_THROW(m.backward(tr, std::vector<double>(2, 1.0)), ContractViolation);
}

TEST(Backward, SingleStepSeedGradientMatchesDifferences) {
    std::mt19937_64 rng(10);
    oracle::GradInstance g = oracle::random_instance(rng, false, LoopMode::open, 6, 1);
    const Gradients grads = g.model.backward(oracle::run(g), g.probe);
    auto loss = [&] { return oracle::probe_loss(oracle::run(g), g.probe); };
    for (std::size_t i = 0; i < g.seed.h.size(); ++i) {
        EXPECT_LT(oracle::relative_error(grads.seed.h[i], oracle::central_difference(loss, g.seed.h[i])), 1e-4);
        EXPECT_LT(oracle::relative_error(grads.seed.c[i], oracle::central_difference(loss, g.seed.c[i])), 1e-4);
    }
}

TEST(Backward, ClosedLoopEightStepsMatchesDifferences) {
    std::mt19937_64 rng(11);
    const oracle::GradCheck c = oracle::check_gradients(oracle::random_instance(rng, false, LoopMode::closed, 5, 8));
    EXPECT_GT(c.compared, 0u);
    EXPECT_LT(c.worst, 1e-4);
}

TEST(Backward, OpenLoopMatchesDifferences) {
    std::mt19937_64 rng(12);
    for (int i = 0; i < 5; ++i) {
        const oracle::GradCheck c =
            oracle::check_gradients(oracle::random_instance(rng, false, LoopMode::open, 1 + rng() % 8, 1 + rng() % 10));
        EXPECT_LT(c.worst, 1e-4);
    }
}

TEST(Backward, GridThreeByThreeMatchesDifferences) {
    std::mt19937_64 rng(13);
    for (LoopMode mode : {LoopMode::open, LoopMode::closed}) {
        const oracle::GradCheck c = oracle::check_gradients(oracle::random_instance(rng, true, mode, 2, 3));
        EXPECT_LT(c.worst, 1e-4);
    }
}

TEST(Backward, IsDeterministic) {
    std::mt19937_64 rng(14);
    const oracle::GradInstance g = oracle::random_instance(rng, false, LoopMode::closed, 4, 6);
    const Gradients a = g.model.backward(oracle::run(g), g.probe);
    const Gradients b = g.model.backward(oracle::run(g), g.probe);
    EXPECT_EQ(a.params, b.params);
    EXPECT_EQ(a.seed, b.seed);
    EXPECT_EQ(a.inputs, b.inputs);
}

TEST(Grid, ZeroModelGivesZeroField) {
    const GridModelParams p = GridModelParams::zeros(3, 4, 4);
    Tensor field({16});
    field.fill(0.8);
    const StepResult r = grid_forward_step(p, HiddenState::zeros(16, 3), field);
    for (double v : r.output.data()) EXPECT_EQ(v, 0.0);
}

TEST(Grid, ExtentMismatchIsConfigError) {
    const GridModelParams p = GridModelParams::zeros(3, 4, 4);
    EXPECT_THROW(grid_forward_step(p, HiddenState::zeros(16, 3), Tensor({9})), ConfigError);
}

TEST(Grid, LateralInfluenceSpreadsOneCellPerStep) {
    std::mt19937_64 rng(15);
    const GridModelParams p = GridModelParams::random(3, 5, 5, rng);
    const std::size_t centre = 12;
    std::vector<double> base(3 * 25, 0.0), poked = base;
    poked[centre] = 1.0;  // only at step 0
    const ForwardTrace a = grid_rollout_open(p, HiddenState::zeros(25, 3), base, 3);
    const ForwardTrace b = grid_rollout_open(p, HiddenState::zeros(25, 3), poked, 3);
    auto changed = [&](std::size_t t, std::size_t cell) { return a.output(t)[cell] != b.output(t)[cell]; };
    for (std::size_t cell = 0; cell < 25; ++cell) EXPECT_EQ(changed(0, cell), cell == centre) << cell;
    const std::size_t r = 2, c = 2;
    for (std::size_t cell = 0; cell < 25; ++cell) {
        const std::size_t cr = cell / 5, cc = cell % 5;
        const std::size_t dist = (cr > r ? cr - r : r - cr) + (cc > c ? cc - c : c - cc);
        EXPECT_EQ(changed(1, cell), dist <= 1) << cell;
    }
}

TEST(Grid, SharedWeightsActIdenticallyInTheInterior) {
    std::mt19937_64 rng(16);
    GridModelParams p = GridModelParams::random(2, 5, 5, rng);
    std::vector<double> field(25, 0.6);
    const ForwardTrace before = grid_rollout_open(p, HiddenState::zeros(25, 2), field, 1);
    p.cell.input_weights()[0] += 0.1;
    const ForwardTrace after = grid_rollout_open(p, HiddenState::zeros(25, 2), field, 1);
    // Step 0 sees no lateral input yet, so every position is identical.
    const double delta = after.output(0)[0] - before.output(0)[0];
    EXPECT_NE(delta, 0.0);
    for (std::size_t cell = 0; cell < 25; ++cell) EXPECT_EQ(after.output(0)[cell] - before.output(0)[cell], delta);
}

TEST(ModelFile, HoldsExactlyThreeWeightBlocks) {
    std::mt19937_64 rng(17);
    const Model m(GridModelParams::random(4, 3, 3, rng));
    const auto path = std::filesystem::temp_directory_path() / "atune_model_test.atm";
    save_model(path, m);
    const Container c = read_container(path);
    ASSERT_EQ(c.blocks.size(), 3u);
    EXPECT_EQ(c.blocks[0].name, "input_weights");
    EXPECT_EQ(c.blocks[1].name, "recurrent_weights");
    EXPECT_EQ(c.blocks[2].name, "output_weights");
    EXPECT_EQ(load_model(path), m);
    std::filesystem::remove(path);
}
