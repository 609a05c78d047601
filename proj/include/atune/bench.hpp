#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "atune/datagen.hpp"
#include "atune/io.hpp"
#include "atune/train.hpp"
#include "atune/tuning.hpp"

namespace atune {

enum class InferenceMode { regular, tuning };

std::string to_string(InferenceMode m);

struct BenchPlan {
    Experiment experiment = Experiment::mso;
    // Experts evaluated with regular (teacher-forced) inference.
    std::vector<double> training_noises{0.0, 0.1, 0.2, 0.5, 1.0};
    // Experts additionally driven with Active Tuning.
    std::vector<double> tuning_training_noises{0.0, 0.05};
    std::vector<double> signal_noises{0.0, 0.1, 0.2, 0.5, 1.0};
    std::size_t model_seeds = 3;
    std::size_t train_count = 500;
    std::size_t test_count = 20;
    std::size_t train_steps = 400;
    std::size_t test_steps = 400;
    std::size_t epochs = 20;
    std::size_t batch_size = 1;
    std::size_t hidden = 32;
    std::size_t rows = 16;  // wave only
    std::size_t cols = 16;
    std::uint64_t seed = 1;
    std::size_t workers = 1;
    // Per-cell wall time in results.csv; off keeps the file byte-reproducible.
    bool record_wall_time = false;
    std::optional<std::filesystem::path> cache_dir;

    // Full-size plan (10 seeds, 10 000/1 000 sequences, 100/200 epochs).
    static BenchPlan full(Experiment e);
    // Reduced counts for a laptop; sequence lengths unchanged.
    static BenchPlan desk(Experiment e);

    void validate() const;
    json to_json() const;
    std::string config_hash() const;
    std::vector<double> trained_noises() const;  // union of both lists, sorted
};

struct CellKey {
    double training_noise = 0.0;
    double signal_noise = 0.0;
    InferenceMode mode = InferenceMode::regular;

    auto operator<=>(const CellKey&) const = default;
};

struct CellStats {
    double rmse_mean = 0.0;
    double rmse_std = 0.0;
    std::size_t seeds = 0;
    double wall_seconds = 0.0;
    std::vector<double> per_seed;
};

struct ResultGrid {
    Experiment experiment = Experiment::mso;
    std::string config_hash;
    std::map<CellKey, CellStats> cells;

    const CellStats& at(double training_noise, double signal_noise, InferenceMode mode) const;
};

// Cells a plan must produce: every (training, signal) pair in regular mode,
// plus every (tuning expert, signal > 0) pair with a preset in tuning mode.
std::vector<CellKey> expected_cells(const BenchPlan& plan);

struct TraceExemplar {
    std::string name;
    json meta;
    std::vector<NamedTensor> channels;
};

struct BenchResult {
    ResultGrid grid;
    std::vector<TraceExemplar> traces;
    std::size_t models_trained = 0;
    std::size_t models_cached = 0;
};

double run_baseline_cell(const Model& model, const Dataset& test, double signal_noise, std::uint64_t noise_seed);
double run_tuning_cell(const Model& model, const TuningConfig& preset, const Dataset& test, double signal_noise,
                       std::uint64_t noise_seed, std::uint64_t stream_seed);

// RMSE of filtered outputs against the clean signal, over the same steps
// (1..T-1) as the teacher-forced baseline.
double tuning_rmse(const Model& model, const TuningConfig& cfg, std::span<const double> noisy,
                   std::span<const double> clean, std::size_t steps, std::uint64_t stream_seed);

// Noisy copy of `test` used for every model at this signal noise level.
Dataset noisy_test_set(const Dataset& test, double signal_noise, std::uint64_t noise_seed);

BenchResult run_bench(const BenchPlan& plan);

// Throws ValidationError naming any missing cell.
void validate_grid(const ResultGrid& grid, const BenchPlan& plan);

std::string results_csv(const ResultGrid& grid, const BenchPlan& plan);
// Writes results.csv and traces/*.atr under `out_dir`.
void emit_report(const BenchResult& result, const BenchPlan& plan, const std::filesystem::path& out_dir);

}  // namespace atune
