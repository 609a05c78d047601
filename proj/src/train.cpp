#include "atune/train.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <thread>

#include "atune/errors.hpp"

namespace atune {

namespace {

constexpr std::uint64_t kNoiseStream = 0x6e6f697365ULL;
constexpr std::uint64_t kShuffleStream = 0x73687566ULL;

void accumulate(LstmParams& into, const LstmParams& g) {
    auto add = [](Tensor& a, const Tensor& b) {
        auto da = a.data();
        auto db = b.data();
        for (std::size_t i = 0; i < da.size(); ++i) da[i] += db[i];
    };
    add(into.input_weights(), g.input_weights());
    add(into.recurrent_weights(), g.recurrent_weights());
    add(into.output_weights(), g.output_weights());
}

}  // namespace

void TrainConfig::validate() const {
    const auto& grid = training_noise_grid();
    if (std::find(grid.begin(), grid.end(), noise_ratio) == grid.end()) {
        throw ValidationError("training noise ratio " + std::to_string(noise_ratio) +
                              " is not one of 0.0, 0.05, 0.1, 0.2, 0.5, 1.0");
    }
    if (epochs == 0) throw ValidationError("epochs must be >= 1");
    if (batch_size == 0) throw ValidationError("batch size must be >= 1");
    if (hidden == 0) throw ValidationError("hidden size must be >= 1");
    if (workers == 0) throw ValidationError("worker count must be >= 1");
    adam.validate();
}

json TrainConfig::to_json() const {
    return {{"model_kind", to_string(kind)},
            {"noise_ratio", noise_ratio},
            {"epochs", epochs},
            {"batch_size", batch_size},
            {"hidden", hidden},
            {"adam", {{"rate", adam.rate}, {"beta1", adam.beta1}, {"beta2", adam.beta2}, {"epsilon", adam.epsilon}}},
            {"seed", seed}};
}

std::size_t default_epochs(Experiment e) { return e == Experiment::wave ? 200 : 100; }

std::size_t default_hidden(ModelKind kind) { return kind == ModelKind::grid ? 4 : 32; }

ModelKind model_kind_for(Experiment e) { return e == Experiment::wave ? ModelKind::grid : ModelKind::lstm; }

Model init_model(ModelKind kind, std::size_t hidden, const Dataset& ds, std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    if (kind == ModelKind::grid) {
        if (ds.experiment != Experiment::wave || ds.rows * ds.cols != ds.channels) {
            throw ConfigError("grid models need a wave dataset");
        }
        return Model(GridModelParams::random(hidden, ds.rows, ds.cols, rng));
    }
    return Model(LstmParams::random(hidden, ds.channels, ds.channels, rng));
}

SequenceLoss sequence_loss(const Model& model, std::span<const double> inputs, std::span<const double> clean,
                           std::size_t steps, double scale) {
    const std::size_t D = model.input_size();
    if (steps < 2 || inputs.size() != steps * D || clean.size() != steps * D) {
        throw ContractViolation("sequence_loss: inputs/targets do not match the model width");
    }
    const std::size_t n = steps - 1;
    ForwardTrace trace = model.rollout_open(model.zero_state(), inputs.first(n * D), n);
    std::vector<double> grads(n * D);
    double sum = 0.0;
    const double denom = static_cast<double>(n * D);
    for (std::size_t i = 0; i < n * D; ++i) {
        const double diff = trace.outputs[i] - clean[D + i];
        sum += diff * diff;
        grads[i] = scale * 2.0 * diff / denom;
    }
    SequenceLoss out;
    out.mse = sum / denom;
    out.grads = model.backward(trace, grads, GradientRequest{true, false});
    return out;
}

TrainResult train_expert(const TrainConfig& cfg, const Dataset& train, const EpochCallback& on_epoch) {
    cfg.validate();
    if (train.count == 0 || train.steps < 2) throw ValidationError("training set is empty");
    if (cfg.kind != model_kind_for(train.experiment)) {
        throw ConfigError(to_string(cfg.kind) + " model cannot be trained on " + to_string(train.experiment) + " data");
    }

    TrainResult result{init_model(cfg.kind, cfg.hidden, train, cfg.seed), {}};
    Model& model = result.model;
    LstmParams& weights = model.cell();
    AdamState m_in(weights.input_weights().size());
    AdamState m_rec(weights.recurrent_weights().size());
    AdamState m_out(weights.output_weights().size());

    const std::size_t per_seq = train.steps * train.channels;
    const double sigma = cfg.noise_ratio * clean_std(train);
    std::vector<std::size_t> order(train.count);
    std::vector<double> noisy(per_seq);

    for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
        std::iota(order.begin(), order.end(), std::size_t{0});
        auto shuffle_rng = derived_rng(cfg.seed ^ kShuffleStream, epoch);
        std::shuffle(order.begin(), order.end(), shuffle_rng);

        double epoch_loss = 0.0;
        for (std::size_t start = 0; start < train.count; start += cfg.batch_size) {
            const std::size_t stop = std::min(train.count, start + cfg.batch_size);
            const std::size_t batch = stop - start;
            const double scale = 1.0 / static_cast<double>(batch);

            // Inputs for each batch member; noise streams are keyed by
            // (epoch, sequence) so worker count never changes the draw.
            std::vector<std::vector<double>> inputs(batch);
            for (std::size_t b = 0; b < batch; ++b) {
                const std::size_t idx = order[start + b];
                auto clean = train.clean_sequence(idx);
                inputs[b].assign(clean.begin(), clean.end());
                if (sigma > 0.0) {
                    auto rng = derived_rng(cfg.seed ^ kNoiseStream, epoch * train.count + idx);
                    std::normal_distribution<double> noise(0.0, sigma);
                    for (double& v : inputs[b]) v += noise(rng);
                }
            }

            std::vector<SequenceLoss> losses(batch);
            auto work = [&](std::size_t lo, std::size_t hi) {
                for (std::size_t b = lo; b < hi; ++b) {
                    losses[b] = sequence_loss(model, inputs[b], train.clean_sequence(order[start + b]), train.steps,
                                              scale);
                }
            };
            const std::size_t workers = std::min(cfg.workers, batch);
            if (workers <= 1) {
                work(0, batch);
            } else {
                std::vector<std::jthread> pool;
                const std::size_t chunk = (batch + workers - 1) / workers;
                for (std::size_t w = 0; w < workers; ++w) {
                    const std::size_t lo = w * chunk, hi = std::min(batch, lo + chunk);
                    if (lo < hi) pool.emplace_back(work, lo, hi);
                }
            }

            LstmParams total = losses[0].grads.params;
            for (std::size_t b = 1; b < batch; ++b) accumulate(total, losses[b].grads.params);
            double batch_loss = 0.0;
            for (const auto& l : losses) batch_loss += l.mse;
            if (!std::isfinite(batch_loss)) {
                throw NumericError("training diverged at epoch " + std::to_string(epoch) + ", batch starting at " +
                                   std::to_string(start));
            }
            epoch_loss += batch_loss;

            adam_step(m_in, cfg.adam, weights.input_weights().data(), total.input_weights().data());
            adam_step(m_rec, cfg.adam, weights.recurrent_weights().data(), total.recurrent_weights().data());
            adam_step(m_out, cfg.adam, weights.output_weights().data(), total.output_weights().data());
        }
        epoch_loss /= static_cast<double>(train.count);
        result.loss_history.push_back(epoch_loss);
        if (on_epoch) on_epoch(epoch, epoch_loss);
    }
    return result;
}

std::vector<double> teacher_forced_predictions(const Model& model, std::span<const double> inputs,
                                               std::size_t steps) {
    const std::size_t D = model.input_size();
    if (steps < 2 || inputs.size() != steps * D) throw ContractViolation("teacher-forced inputs have wrong size");
    ForwardTrace trace = model.rollout_open(model.zero_state(), inputs.first((steps - 1) * D), steps - 1);
    return std::move(trace.outputs);
}

double rmse(std::span<const double> a, std::span<const double> b) {
    if (a.size() != b.size() || a.empty()) throw ContractViolation("rmse: sequences differ in length or are empty");
    double sum = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) sum += (a[i] - b[i]) * (a[i] - b[i]);
    return std::sqrt(sum / static_cast<double>(a.size()));
}

double evaluate_open_loop(const Model& model, const Dataset& ds) {
    if (ds.count == 0) throw ValidationError("evaluation set is empty");
    if (model.input_size() != ds.channels) throw ConfigError("model width does not match dataset channels");
    double total = 0.0;
    for (std::size_t i = 0; i < ds.count; ++i) {
        auto preds = teacher_forced_predictions(model, ds.noisy_sequence(i), ds.steps);
        total += rmse(preds, ds.clean_sequence(i).subspan(ds.channels));
    }
    return total / static_cast<double>(ds.count);
}

double evaluate_open_loop(const Model& model, const Dataset& ds, const NoiseSpec& noise) {
    Dataset noisy = ds;
    add_noise(noisy, noise);
    return evaluate_open_loop(model, noisy);
}

}  // namespace atune
