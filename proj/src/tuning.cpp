#include "atune/tuning.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <sstream>

#include "atune/errors.hpp"

namespace atune {

namespace {

void rollout_window(TuningWindow& w, const Model& model) {
    w.trace = model.rollout_closed(w.seed, w.seed_input, w.observations.size());
}

double loss_and_grads(const TuningWindow& w, std::vector<double>* grads) {
    const std::size_t L = w.observations.size();
    const std::size_t D = w.width;
    const double denom = static_cast<double>(L * D);
    double sum = 0.0;
    if (grads) grads->assign(L * D, 0.0);
    for (std::size_t t = 0; t < L; ++t) {
        const auto& obs = w.observations[t];
        for (std::size_t d = 0; d < D; ++d) {
            const double diff = w.trace.outputs[t * D + d] - obs[d];
            sum += diff * diff;
            if (grads) (*grads)[t * D + d] = 2.0 * diff / denom;
        }
    }
    return sum / denom;
}

void reset_moments(TuningWindow& w) {
    w.h_moments.reset();
    w.c_moments.reset();
    w.input_moments.reset();
}

}  // namespace

void TuningConfig::validate() const {
    if (horizon == 0) throw ValidationError("tuning horizon must be >= 1");
    if (!(init_std >= 0.0)) throw ValidationError("state init std must be non-negative");
    adam.validate();
}

json TuningConfig::to_json() const {
    return {{"horizon", horizon},
            {"cycles", cycles},
            {"rate", adam.rate},
            {"beta1", adam.beta1},
            {"beta2", adam.beta2},
            {"epsilon", adam.epsilon},
            {"target", target == TuningTarget::hidden ? "h" : "h_and_c"},
            {"init_std", init_std},
            {"tune_seed_input", tune_seed_input},
            {"seed_input_source", seed_input_source == SeedInputSource::prediction ? "prediction" : "observation"},
            {"carry_moments", carry_moments}};
}

Tensor TuningWindow::predictions() const {
    if (observations.empty()) return Tensor::zeros({0, width});
    return trace.outputs_tensor();
}

TuningWindow init_stream(const TuningConfig& cfg, const Model& model, std::mt19937_64& rng) {
    cfg.validate();
    if (model.input_size() != model.output_size()) {
        throw ConfigError("Active Tuning needs a model whose predictions can be fed back as inputs");
    }
    TuningWindow w;
    w.width = model.input_size();
    w.seed = model.zero_state();
    if (cfg.init_std > 0.0) {
        std::normal_distribution<double> dist(0.0, cfg.init_std);
        for (double& v : w.seed.h.data()) v = dist(rng);
        for (double& v : w.seed.c.data()) v = dist(rng);
    }
    w.seed_input.assign(w.width, 0.0);
    w.h_moments = AdamState(w.seed.h.size());
    w.c_moments = AdamState(w.seed.c.size());
    w.input_moments = AdamState(w.width);
    return w;
}

double window_loss(const TuningWindow& window) {
    if (window.observations.empty()) throw ContractViolation("window holds no observations");
    return loss_and_grads(window, nullptr);
}

CycleReport tuning_cycle(TuningWindow& w, const Model& model, const TuningConfig& cfg) {
    if (w.observations.empty()) throw ContractViolation("tuning_cycle needs at least one observation");
    if (w.trace.steps != w.observations.size()) rollout_window(w, model);

    std::vector<double> grads;
    CycleReport report;
    report.loss_before = loss_and_grads(w, &grads);
    if (!std::isfinite(report.loss_before)) throw NumericError("window loss is not finite");

    const Gradients g = model.backward(w.trace, grads, GradientRequest{false, cfg.tune_seed_input});
    adam_step(w.h_moments, cfg.adam, w.seed.h.data(), g.seed.h.data());
    if (cfg.target == TuningTarget::hidden_and_cell) adam_step(w.c_moments, cfg.adam, w.seed.c.data(), g.seed.c.data());
    if (cfg.tune_seed_input) adam_step(w.input_moments, cfg.adam, w.seed_input, g.inputs.row(0));

    rollout_window(w, model);
    report.loss_after = loss_and_grads(w, nullptr);
    if (!std::isfinite(report.loss_after)) throw NumericError("window loss is not finite after the update");
    return report;
}

StreamStep step_stream(TuningWindow& w, const Model& model, const TuningConfig& cfg,
                       std::span<const double> observation) {
    if (observation.size() != w.width) {
        throw ContractViolation("observation has " + std::to_string(observation.size()) + " values, stream expects " +
                                std::to_string(w.width));
    }
    if (w.observations.size() >= cfg.horizon) {
        // Slide: the state after the window's first step becomes the seed.
        if (w.trace.steps != w.observations.size()) rollout_window(w, model);
        w.seed = w.trace.state_after(0);
        if (cfg.seed_input_source == SeedInputSource::prediction) {
            auto y = w.trace.output(0);
            w.seed_input.assign(y.begin(), y.end());
        } else {
            w.seed_input = w.observations.front();
        }
        w.observations.pop_front();
    }
    w.observations.emplace_back(observation.begin(), observation.end());
    ++w.steps_seen;
    if (!cfg.carry_moments) reset_moments(w);

    rollout_window(w, model);
    StreamStep out;
    out.cycles.reserve(cfg.cycles);
    for (std::size_t c = 0; c < cfg.cycles; ++c) out.cycles.push_back(tuning_cycle(w, model, cfg));

    const std::size_t last = w.trace.steps - 1;
    out.filtered = w.trace.output_tensor(last);
    out.state = w.trace.state_after(last);
    return out;
}

std::vector<Tensor> forecast(const TuningWindow& w, const Model& model, std::size_t steps) {
    std::vector<Tensor> out;
    if (steps == 0) return out;
    HiddenState state = w.seed;
    std::vector<double> input = w.seed_input;
    if (!w.observations.empty() && w.trace.steps == w.observations.size()) {
        const std::size_t last = w.trace.steps - 1;
        state = w.trace.state_after(last);
        auto y = w.trace.output(last);
        input.assign(y.begin(), y.end());
    }
    const ForwardTrace tr = model.rollout_closed(state, input, steps);
    out.reserve(steps);
    for (std::size_t t = 0; t < steps; ++t) out.push_back(tr.output_tensor(t));
    return out;
}

std::vector<double> filter_sequence(const Model& model, const TuningConfig& cfg, std::span<const double> observations,
                                    std::size_t steps, std::uint64_t seed) {
    const std::size_t D = model.input_size();
    if (observations.size() != steps * D) throw ContractViolation("observation sequence has wrong size");
    std::mt19937_64 rng(seed);
    TuningWindow w = init_stream(cfg, model, rng);
    std::vector<double> filtered;
    filtered.reserve(steps * D);
    for (std::size_t t = 0; t < steps; ++t) {
        StreamStep s = step_stream(w, model, cfg, observations.subspan(t * D, D));
        filtered.insert(filtered.end(), s.filtered.data().begin(), s.filtered.data().end());
    }
    return filtered;
}

// Presets ------------------------------------------------------------------------

namespace {

TuningPreset preset(Experiment e, double train, double signal, std::size_t r, std::size_t c, double rate, double b1,
                    double b2) {
    TuningConfig cfg;
    cfg.horizon = r;
    cfg.cycles = c;
    cfg.adam = AdamConfig{rate, b1, b2, 1e-8};
    return {e, train, signal, cfg};
}

bool same(double a, double b) { return std::abs(a - b) < 1e-9; }

}  // namespace

const std::vector<TuningPreset>& tuning_presets() {
    using E = Experiment;
    static const std::vector<TuningPreset> table{
        preset(E::mso, 0.0, 0.1, 8, 10, 0.005, 0.9, 0.99),
        preset(E::mso, 0.0, 0.2, 8, 10, 0.005, 0.9, 0.99),
        preset(E::mso, 0.0, 0.5, 14, 10, 0.006, 0.9, 0.99),
        preset(E::mso, 0.0, 1.0, 16, 10, 0.004, 0.5, 0.99),
        preset(E::mso, 0.05, 0.1, 8, 10, 0.008, 0.9, 0.99),
        preset(E::mso, 0.05, 0.2, 8, 12, 0.005, 0.5, 0.999),
        preset(E::mso, 0.05, 0.5, 14, 10, 0.007, 0.9, 0.99),
        preset(E::mso, 0.05, 1.0, 16, 10, 0.006, 0.5, 0.9),

        preset(E::pendulum, 0.0, 0.1, 8, 10, 0.005, 0.9, 0.99),
        preset(E::pendulum, 0.0, 0.2, 8, 10, 0.005, 0.9, 0.99),
        preset(E::pendulum, 0.0, 0.5, 8, 10, 0.004, 0.5, 0.99),
        preset(E::pendulum, 0.0, 1.0, 12, 10, 0.004, 0.5, 0.9),
        preset(E::pendulum, 0.05, 0.1, 8, 10, 0.008, 0.9, 0.99),
        preset(E::pendulum, 0.05, 0.2, 8, 10, 0.005, 0.5, 0.99),
        preset(E::pendulum, 0.05, 0.5, 8, 10, 0.004, 0.5, 0.99),
        preset(E::pendulum, 0.05, 1.0, 12, 10, 0.005, 0.5, 0.9),

        preset(E::wave, 0.0, 0.1, 7, 10, 0.01, 0.9, 0.999),
        preset(E::wave, 0.0, 0.2, 5, 17, 6e-5, 0.0, 0.999),
        preset(E::wave, 0.0, 0.5, 4, 20, 8e-5, 0.0, 0.999),
        preset(E::wave, 0.0, 1.0, 7, 30, 4e-5, 0.0, 0.999),
        preset(E::wave, 0.05, 0.1, 8, 12, 0.012, 0.9, 0.999),
        preset(E::wave, 0.05, 0.2, 5, 17, 1e-4, 0.0, 0.999),
        preset(E::wave, 0.05, 0.5, 4, 20, 1e-4, 0.0, 0.999),
        preset(E::wave, 0.05, 1.0, 7, 30, 5e-5, 0.0, 0.999),
    };
    return table;
}

const TuningPreset* find_preset(Experiment e, double training_noise, double signal_noise) {
    for (const auto& p : tuning_presets()) {
        if (p.experiment == e && same(p.training_noise, training_noise) && same(p.signal_noise, signal_noise)) return &p;
    }
    return nullptr;
}

TuningConfig preset_config(Experiment e, double training_noise, double signal_noise) {
    const TuningPreset* p = find_preset(e, training_noise, signal_noise);
    if (!p) throw ValidationError("no tuning preset for " + preset_key(e, training_noise, signal_noise));
    return p->config;
}

TuningConfig preset_config(const std::string& key) {
    std::stringstream ss(key);
    std::string exp, train, signal;
    if (!std::getline(ss, exp, ':') || !std::getline(ss, train, ':') || !std::getline(ss, signal) ||
        train.empty() || signal.empty()) {
        throw ValidationError("preset key '" + key + "' is not of the form experiment:training:signal");
    }
    try {
        return preset_config(experiment_from_string(exp), std::stod(train), std::stod(signal));
    } catch (const std::invalid_argument&) {
        throw ValidationError("preset key '" + key + "' has non-numeric noise ratios");
    }
}

std::string preset_key(Experiment e, double training_noise, double signal_noise) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%s:%g:%g", to_string(e).c_str(), training_noise, signal_noise);
    return buf;
}

}  // namespace atune
