#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <optional>
#include <vector>

#include "atune/adam.hpp"
#include "atune/datagen.hpp"
#include "atune/model.hpp"

namespace atune {

struct TrainConfig {
    ModelKind kind = ModelKind::lstm;
    double noise_ratio = 0.0;
    std::size_t epochs = 100;
    // Sequences per Adam update; gradients are averaged over the batch.
    std::size_t batch_size = 1;
    std::size_t hidden = 32;
    AdamConfig adam{};
    std::uint64_t seed = 0;
    std::size_t workers = 1;

    void validate() const;
    json to_json() const;
};

// Epochs used for each experiment: 100 for mso/pendulum, 200 for wave.
std::size_t default_epochs(Experiment e);
std::size_t default_hidden(ModelKind kind);
ModelKind model_kind_for(Experiment e);

Model init_model(ModelKind kind, std::size_t hidden, const Dataset& ds, std::uint64_t seed);

struct TrainResult {
    Model model;
    std::vector<double> loss_history;  // mean training MSE per epoch
};

using EpochCallback = std::function<void(std::size_t epoch, double mse)>;

/// Teacher-forced one-step-ahead training: noisy inputs x[0..T-2] with a
/// fresh noise draw each epoch, clean targets x[1..T-1], MSE loss,
/// full-sequence BPTT from a zero state.
TrainResult train_expert(const TrainConfig& cfg, const Dataset& train, const EpochCallback& on_epoch = {});

// Mean squared error of one teacher-forced pass plus its gradient.
struct SequenceLoss {
    double mse = 0.0;
    Gradients grads;
};
SequenceLoss sequence_loss(const Model& model, std::span<const double> inputs, std::span<const double> clean,
                           std::size_t steps, double scale = 1.0);

// Teacher-forced predictions for targets 1..T-1, laid out [(T-1) x channels].
std::vector<double> teacher_forced_predictions(const Model& model, std::span<const double> inputs,
                                               std::size_t steps);

double rmse(std::span<const double> a, std::span<const double> b);

// Teacher-forced pass over ds.noisy; RMSE against the clean shifted targets,
// averaged over sequences.
double evaluate_open_loop(const Model& model, const Dataset& ds);
double evaluate_open_loop(const Model& model, const Dataset& ds, const NoiseSpec& noise);

}  // namespace atune
