#include <gtest/gtest.h>

#include <fstream>
#include <sstream>

#include "atune/bench.hpp"
#include "atune/errors.hpp"

using namespace atune;

namespace {

BenchPlan tiny_plan(Experiment e) {
    BenchPlan p = BenchPlan::desk(e);
    p.training_noises = {0.0, 0.5};
    p.tuning_training_noises = {0.0};
    p.signal_noises = {0.0, 0.5};
    p.model_seeds = 2;
    p.train_count = 6;
    p.test_count = 2;
    p.train_steps = 30;
    p.test_steps = 30;
    p.epochs = 2;
    p.hidden = e == Experiment::wave ? 2 : 6;
    p.rows = 4;
    p.cols = 4;
    return p;
}

std::size_t line_count(const std::string& s) {
    std::size_t n = 0;
    for (char c : s) n += c == '\n';
    return n;
}

std::string slurp(const std::filesystem::path& p) {
    std::ifstream in(p, std::ios::binary);
    std::stringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

}  // namespace

TEST(BenchPlan, DeskAndFullSizes) {
    const BenchPlan full = BenchPlan::full(Experiment::mso);
    EXPECT_EQ(full.model_seeds, 10u);
    EXPECT_EQ(full.train_count, 10000u);
    EXPECT_EQ(full.epochs, 100u);
    EXPECT_EQ(expected_cells(full).size(), 25u + 8u);
    const BenchPlan wave = BenchPlan::full(Experiment::wave);
    EXPECT_EQ(wave.train_count, 200u);
    EXPECT_EQ(wave.train_steps, 80u);
    EXPECT_EQ(wave.test_steps, 400u);
    EXPECT_EQ(wave.epochs, 200u);
    EXPECT_EQ(BenchPlan::desk(Experiment::pendulum).model_seeds, 3u);
}

TEST(BenchPlan, EmptyPlanIsRejected) {
    BenchPlan p = tiny_plan(Experiment::mso);
    p.training_noises.clear();
    p.tuning_training_noises.clear();
    EXPECT_THROW(p.validate(), ValidationError);
    p = tiny_plan(Experiment::mso);
    p.signal_noises.clear();
    EXPECT_THROW(p.validate(), ValidationError);
    p = tiny_plan(Experiment::mso);
    p.training_noises = {0.3};
    EXPECT_THROW(p.validate(), ValidationError);
}

TEST(BenchPlan, HashTracksContent) {
    BenchPlan a = tiny_plan(Experiment::mso), b = a;
    EXPECT_EQ(a.config_hash(), b.config_hash());
    b.epochs += 1;
    EXPECT_NE(a.config_hash(), b.config_hash());
    b = a;
    b.workers = 4;
    EXPECT_EQ(a.config_hash(), b.config_hash());
}

TEST(Bench, GridAndCsvShape) {
    const BenchPlan plan = tiny_plan(Experiment::mso);
    const BenchResult r = run_bench(plan);
    EXPECT_EQ(r.models_trained, 2u * 2u);
    EXPECT_EQ(r.grid.cells.size(), 4u + 1u);
    const std::string csv = results_csv(r.grid, plan);
    EXPECT_EQ(csv.rfind("# config_hash: " + plan.config_hash() + "\n", 0), 0u);
    EXPECT_NE(csv.find("experiment,training_noise,signal_noise,mode,rmse_mean,rmse_std,seeds,wall_seconds\n"),
              std::string::npos);
    EXPECT_EQ(line_count(csv), 2u + 5u);
    EXPECT_NE(csv.find("mso,0.00,0.50,tuning,"), std::string::npos);
    for (const auto& [key, stats] : r.grid.cells) {
        EXPECT_EQ(stats.seeds, 2u);
        EXPECT_EQ(stats.per_seed.size(), 2u);
    }
}

TEST(Bench, BaselineCellMatchesEvaluation) {
    const BenchPlan plan = tiny_plan(Experiment::mso);
    DatasetSpec spec;
    spec.count = 3;
    spec.steps = 30;
    const Dataset test = generate_dataset(spec);
    std::mt19937_64 rng(1);
    const Model m(LstmParams::random(4, 1, 1, rng));
    EXPECT_EQ(run_baseline_cell(m, test, 0.5, 9), evaluate_open_loop(m, test, NoiseSpec{NoiseKind::gaussian, 0.5, 9}));
}

TEST(Bench, TuningCellWithZeroCyclesIsClosedLoop) {
    DatasetSpec spec;
    spec.count = 2;
    spec.steps = 30;
    const Dataset test = generate_dataset(spec);
    std::mt19937_64 rng(2);
    const Model m(LstmParams::random(4, 1, 1, rng));
    TuningConfig cfg;
    cfg.cycles = 0;
    const Dataset noisy = noisy_test_set(test, 0.5, 3);
    double expected = 0.0;
    for (std::size_t i = 0; i < 2; ++i) {
        std::mt19937_64 srng(derived_rng(11, i)());
        const TuningWindow w = init_stream(cfg, m, srng);
        const ForwardTrace tr = m.rollout_closed(w.seed, w.seed_input, 30);
        expected += rmse(std::span<const double>(tr.outputs).subspan(1), noisy.clean_sequence(i).subspan(1));
    }
    EXPECT_EQ(run_tuning_cell(m, cfg, test, 0.5, 3, 11), expected / 2);
}

TEST(Bench, IsDeterministic) {
    const BenchPlan plan = tiny_plan(Experiment::pendulum);
    EXPECT_EQ(results_csv(run_bench(plan).grid, plan), results_csv(run_bench(plan).grid, plan));
    BenchPlan threaded = plan;
    threaded.workers = 3;
    EXPECT_EQ(results_csv(run_bench(plan).grid, plan), results_csv(run_bench(threaded).grid, threaded));
}

TEST(Bench, MissingCellsAreListed) {
    const BenchPlan plan = tiny_plan(Experiment::mso);
    BenchResult r = run_bench(plan);
    r.grid.cells.erase(CellKey{0.5, 0.0, InferenceMode::regular});
    try {
        results_csv(r.grid, plan);
        FAIL() << "expected ValidationError";
    } catch (const ValidationError& e) {
        EXPECT_NE(std::string(e.what()).find("regular, training 0.50, signal 0.00"), std::string::npos) << e.what();
    }
}

TEST(Bench, ReportAndCache) {
    const auto dir = std::filesystem::temp_directory_path() / "atune_bench_test";
    std::filesystem::remove_all(dir);
    BenchPlan plan = tiny_plan(Experiment::wave);
    plan.cache_dir = dir / "cache";
    const BenchResult first = run_bench(plan);
    EXPECT_EQ(first.models_trained, 4u);
    emit_report(first, plan, dir / "out");
    const BenchResult second = run_bench(plan);
    EXPECT_EQ(second.models_trained, 0u);
    EXPECT_EQ(second.models_cached, 4u);
    emit_report(second, plan, dir / "out2");
    EXPECT_EQ(slurp(dir / "out" / "results.csv"), slurp(dir / "out2" / "results.csv"));

    std::size_t traces = 0;
    for (const auto& entry : std::filesystem::directory_iterator(dir / "out" / "traces")) {
        ++traces;
        const Container c = read_container(entry.path());
        EXPECT_EQ(c.kind, "trace");
        EXPECT_EQ(c.meta["config_hash"], plan.config_hash());
        for (const char* name : {"ground_truth", "noisy", "baseline", "tuned"}) {
            EXPECT_EQ(c.block(name).shape(), (Shape{29, 16}));
            EXPECT_EQ(c.block(std::string("centre_") + name).shape(), (Shape{29}));
        }
    }
    EXPECT_EQ(traces, 1u);
    std::filesystem::remove_all(dir);
}
