#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <random>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "atune/io.hpp"
#include "atune/tensor.hpp"

namespace atune {

enum class Experiment { mso, pendulum, wave };

std::string to_string(Experiment e);
Experiment experiment_from_string(const std::string& name);

// Independent, reproducible stream for item `index` of a run seeded with `base`.
std::mt19937_64 derived_rng(std::uint64_t base, std::uint64_t index);

// Multiple superimposed oscillators ------------------------------------------

struct MsoSpec {
    std::vector<double> frequencies{0.2, 0.311, 0.42, 0.51, 0.63};
    // When unset, drawn per sample: amplitudes ~ U[0, 1], phases ~ U[0, 2pi).
    std::optional<std::vector<double>> amplitudes;
    std::optional<std::vector<double>> phases;
    std::size_t steps = 400;
    std::uint64_t seed = 0;

    void validate() const;
};

double mso_value(std::span<const double> frequencies, std::span<const double> amplitudes,
                 std::span<const double> phases, double t);

struct MsoSequence {
    Tensor values;  // [steps x 1]
    std::vector<double> amplitudes;
    std::vector<double> phases;
};

MsoSequence gen_mso(const MsoSpec& spec);

// Double pendulum ------------------------------------------------------------

enum class PendulumObservable { end_effector, angles };

struct PendulumState {
    double theta1 = 0.0;
    double theta2 = 0.0;
    double omega1 = 0.0;  // angular velocities
    double omega2 = 0.0;
};

struct PendulumSpec {
    double length1 = 1.0;
    double length2 = 1.0;
    double mass1 = 1.0;
    double mass2 = 1.0;
    double gravity = 9.81;
    double step = 0.01;
    std::size_t steps = 400;
    PendulumObservable observable = PendulumObservable::end_effector;
    double zero_momentum_probability = 0.1;
    // Non-zero starts draw both angular velocities from U[-range, range].
    double momentum_range = 1.0;
    std::optional<PendulumState> initial;  // overrides the random draw
    std::uint64_t seed = 0;

    double lambda() const { return length1 / length2; }
    double g1() const { return gravity / length1; }
    double g2() const { return gravity / length2; }
    double mu() const { return mass2 / (mass1 + mass2); }

    void validate() const;
};

std::pair<double, double> pendulum_accelerations(const PendulumState& s, const PendulumSpec& spec);
PendulumState rk4_step(const PendulumState& s, const PendulumSpec& spec, double h);
// Angles drawn from theta1 ~ U[90deg, 270deg], theta2 ~ theta1 + U[-30deg, 30deg].
PendulumState draw_pendulum_start(const PendulumSpec& spec, std::mt19937_64& rng);
std::pair<double, double> end_effector(const PendulumState& s, const PendulumSpec& spec);

struct PendulumSequence {
    Tensor values;  // [steps x 2]
    PendulumState initial;
};

PendulumSequence gen_pendulum(const PendulumSpec& spec);

// 2-D wave -------------------------------------------------------------------

struct WaveBump {
    double row = 0.0;
    double col = 0.0;
    double width = 1.0;
    double amplitude = 1.0;
};

struct WaveSpec {
    std::size_t rows = 16;
    std::size_t cols = 16;
    double speed = 3.0;
    double time_step = 0.1;
    double dx = 1.0;
    double dy = 1.0;
    std::size_t steps = 80;
    std::optional<WaveBump> bump;  // random centre, amplitude U[0.5,1.5], width U[1,3] when unset
    std::uint64_t seed = 0;

    double courant() const;
    void validate() const;
};

// Leapfrog update; cells outside the grid read as zero.
Tensor wave_step(const Tensor& previous, const Tensor& current, const WaveSpec& spec);

struct WaveSequence {
    Tensor values;  // [steps x rows*cols]
    WaveBump bump;
};

WaveSequence gen_wave(const WaveSpec& spec);

// Datasets -------------------------------------------------------------------

enum class NoiseKind { gaussian, salt_and_pepper };

struct NoiseSpec {
    NoiseKind kind = NoiseKind::gaussian;
    double ratio = 0.0;
    std::uint64_t seed = 0;

    void validate() const;
};

const std::vector<double>& training_noise_grid();

struct SequenceSample {
    Tensor clean;  // [steps x channels]
    Tensor noisy;
};

struct Dataset {
    Experiment experiment = Experiment::mso;
    std::size_t count = 0;
    std::size_t steps = 0;
    std::size_t channels = 0;
    std::size_t rows = 0;  // wave only
    std::size_t cols = 0;
    Tensor clean;  // [count x steps x channels]
    Tensor noisy;
    json meta = json::object();

    std::span<const double> clean_sequence(std::size_t i) const;
    std::span<const double> noisy_sequence(std::size_t i) const;
    SequenceSample sample(std::size_t i) const;
    // Keeps the first n sequences.
    Dataset head(std::size_t n) const;
};

struct DatasetSpec {
    Experiment experiment = Experiment::mso;
    std::size_t count = 1;
    std::size_t steps = 400;
    std::uint64_t seed = 0;
    MsoSpec mso;
    PendulumSpec pendulum;
    WaveSpec wave;

    json to_json() const;
};

Dataset generate_dataset(const DatasetSpec& spec);

// Population standard deviation of every clean value.
double clean_std(const Dataset& ds);

// Fills the noisy channel from the clean one.
void add_noise(Dataset& ds, const NoiseSpec& spec);

void save_dataset(const std::filesystem::path& path, const Dataset& ds, Precision precision = Precision::f64);
Dataset load_dataset(const std::filesystem::path& path);

}  // namespace atune
