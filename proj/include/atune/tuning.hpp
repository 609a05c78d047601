#pragma once

#include <cstddef>
#include <cstdint>
#include <deque>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "atune/adam.hpp"
#include "atune/datagen.hpp"
#include "atune/model.hpp"

namespace atune {

enum class TuningTarget { hidden, hidden_and_cell };

// Where the rollout's first input comes from once the window slides.
enum class SeedInputSource {
    prediction,   // the model's own output at the promoted position (pure closed loop)
    observation,  // the observation that just left the window
};

struct TuningConfig {
    std::size_t horizon = 16;  // R
    std::size_t cycles = 10;   // C
    AdamConfig adam{0.004, 0.5, 0.99, 1e-8};
    TuningTarget target = TuningTarget::hidden;
    double init_std = 0.1;
    bool tune_seed_input = false;
    SeedInputSource seed_input_source = SeedInputSource::prediction;
    bool carry_moments = false;  // keep optimizer moments across world steps

    void validate() const;
    json to_json() const;
};

/// Sliding retrospective window for one stream.
///
/// `observations` holds the last min(steps_seen, R) observations, oldest
/// first. `seed` is the hidden state one step before the oldest of them and
/// `seed_input` is what the rollout consumes first. `trace` is always the
/// closed-loop rollout from (seed, seed_input) over the window.
struct TuningWindow {
    std::size_t width = 0;  // values per observation
    std::deque<std::vector<double>> observations;
    HiddenState seed;
    std::vector<double> seed_input;
    ForwardTrace trace;
    AdamState h_moments;
    AdamState c_moments;
    AdamState input_moments;
    std::size_t steps_seen = 0;

    std::size_t size() const noexcept { return observations.size(); }
    // Current predictions, one per buffered observation: [size x width].
    Tensor predictions() const;
};

TuningWindow init_stream(const TuningConfig& cfg, const Model& model, std::mt19937_64& rng);

// Mean squared error between the window's rollout and its observations.
double window_loss(const TuningWindow& window);

struct CycleReport {
    double loss_before = 0.0;
    double loss_after = 0.0;
};

// One rollout / loss / BPTT / Adam / re-rollout iteration on the seed state.
CycleReport tuning_cycle(TuningWindow& window, const Model& model, const TuningConfig& cfg);

struct StreamStep {
    Tensor filtered;    // estimate of the newest observation
    HiddenState state;  // model state after producing it
    std::vector<CycleReport> cycles;
};

StreamStep step_stream(TuningWindow& window, const Model& model, const TuningConfig& cfg,
                       std::span<const double> observation);

// Closed-loop continuation from the newest state and prediction. Does not
// touch the window.
std::vector<Tensor> forecast(const TuningWindow& window, const Model& model, std::size_t steps);

// Streams a whole sequence [steps x width] and returns the filtered outputs,
// same layout.
std::vector<double> filter_sequence(const Model& model, const TuningConfig& cfg, std::span<const double> observations,
                                    std::size_t steps, std::uint64_t seed);

// Preset registry ----------------------------------------------------------------

struct TuningPreset {
    Experiment experiment;
    double training_noise;
    double signal_noise;
    TuningConfig config;
};

const std::vector<TuningPreset>& tuning_presets();
const TuningPreset* find_preset(Experiment e, double training_noise, double signal_noise);
TuningConfig preset_config(Experiment e, double training_noise, double signal_noise);
// Key format "experiment:training_noise:signal_noise", e.g. "mso:0.0:1.0".
TuningConfig preset_config(const std::string& key);
std::string preset_key(Experiment e, double training_noise, double signal_noise);

}  // namespace atune
