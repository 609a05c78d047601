#include "atune/datagen.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

#include "atune/errors.hpp"

namespace atune {

namespace {

constexpr double kPi = std::numbers::pi;

const char* to_string(PendulumObservable o) { return o == PendulumObservable::angles ? "angles" : "end_effector"; }

const char* to_string(NoiseKind k) { return k == NoiseKind::gaussian ? "gaussian" : "salt_and_pepper"; }

}  // namespace

std::string to_string(Experiment e) {
    switch (e) {
        case Experiment::mso: return "mso";
        case Experiment::pendulum: return "pendulum";
        case Experiment::wave: return "wave";
    }
    return "?";
}

Experiment experiment_from_string(const std::string& name) {
    if (name == "mso") return Experiment::mso;
    if (name == "pendulum") return Experiment::pendulum;
    if (name == "wave") return Experiment::wave;
    throw ValidationError("unknown experiment '" + name + "' (expected mso, pendulum or wave)");
}

std::mt19937_64 derived_rng(std::uint64_t base, std::uint64_t index) {
    std::seed_seq seq{static_cast<std::uint32_t>(base), static_cast<std::uint32_t>(base >> 32),
                      static_cast<std::uint32_t>(index), static_cast<std::uint32_t>(index >> 32)};
    return std::mt19937_64(seq);
}

// MSO ------------------------------------------------------------------------

void MsoSpec::validate() const {
    if (frequencies.empty()) throw ValidationError("MSO needs at least one frequency");
    if (steps == 0) throw ValidationError("MSO sequence length must be >= 1");
    if (amplitudes && amplitudes->size() != frequencies.size()) {
        throw ValidationError("MSO amplitude count differs from frequency count");
    }
    if (phases && phases->size() != frequencies.size()) {
        throw ValidationError("MSO phase count differs from frequency count");
    }
    if (amplitudes) {
        for (double a : *amplitudes) {
            if (a < 0.0 || a > 1.0) throw ValidationError("MSO amplitudes must lie in [0, 1]");
        }
    }
}

double mso_value(std::span<const double> frequencies, std::span<const double> amplitudes,
                 std::span<const double> phases, double t) {
    double sum = 0.0;
    for (std::size_t i = 0; i < frequencies.size(); ++i) sum += amplitudes[i] * std::sin(frequencies[i] * t + phases[i]);
    return sum;
}

MsoSequence gen_mso(const MsoSpec& spec) {
    spec.validate();
    std::mt19937_64 rng(spec.seed);
    std::uniform_real_distribution<double> amp(0.0, 1.0);
    std::uniform_real_distribution<double> phase(0.0, 2.0 * kPi);
    const std::size_t n = spec.frequencies.size();
    MsoSequence out;
    out.amplitudes.resize(n);
    out.phases.resize(n);
    for (std::size_t i = 0; i < n; ++i) {
        out.amplitudes[i] = spec.amplitudes ? (*spec.amplitudes)[i] : amp(rng);
        out.phases[i] = spec.phases ? (*spec.phases)[i] : phase(rng);
    }
    out.values = Tensor::zeros({spec.steps, 1});
    for (std::size_t t = 0; t < spec.steps; ++t) {
        out.values[t] = mso_value(spec.frequencies, out.amplitudes, out.phases, static_cast<double>(t));
    }
    return out;
}

// Pendulum -------------------------------------------------------------------

void PendulumSpec::validate() const {
    if (!(length1 > 0 && length2 > 0 && mass1 > 0 && mass2 > 0)) {
        throw ValidationError("pendulum lengths and masses must be positive");
    }
    if (!(step > 0)) throw ValidationError("pendulum integration step must be positive");
    if (steps == 0) throw ValidationError("pendulum sequence length must be >= 1");
    if (zero_momentum_probability < 0 || zero_momentum_probability > 1) {
        throw ValidationError("zero-momentum probability must lie in [0, 1]");
    }
}

std::pair<double, double> pendulum_accelerations(const PendulumState& s, const PendulumSpec& spec) {
    if (!std::isfinite(s.theta1) || !std::isfinite(s.theta2) || !std::isfinite(s.omega1) ||
        !std::isfinite(s.omega2)) {
        throw NumericError("pendulum state is not finite");
    }
    const double mu = spec.mu();
    const double lambda = spec.lambda();
    const double g1 = spec.g1();
    const double g2 = spec.g2();
    const double delta = s.theta2 - s.theta1;
    const double sd = std::sin(delta);
    const double cd = std::cos(delta);
    const double denom = 1.0 - mu * cd * cd;
    const double w1sq = s.omega1 * s.omega1;
    const double w2sq = s.omega2 * s.omega2;

    const double acc1 = (mu * g1 * std::sin(s.theta2) * cd + mu * w1sq * sd * cd - g1 * std::sin(s.theta1) +
                         (mu / lambda) * w2sq * sd) /
                        denom;
    const double acc2 =
        (g2 * std::sin(s.theta1) * cd - mu * w2sq * sd * cd - g2 * std::sin(s.theta2) - lambda * w1sq * sd) / denom;
    return {acc1, acc2};
}

PendulumState rk4_step(const PendulumState& s, const PendulumSpec& spec, double h) {
    if (!(h > 0)) throw ValidationError("RK4 step must be positive");
    auto deriv = [&](const PendulumState& x) {
        auto [a1, a2] = pendulum_accelerations(x, spec);
        return PendulumState{x.omega1, x.omega2, a1, a2};
    };
    auto add = [](const PendulumState& x, const PendulumState& d, double k) {
        return PendulumState{x.theta1 + k * d.theta1, x.theta2 + k * d.theta2, x.omega1 + k * d.omega1,
                             x.omega2 + k * d.omega2};
    };
    const PendulumState k1 = deriv(s);
    const PendulumState k2 = deriv(add(s, k1, h / 2));
    const PendulumState k3 = deriv(add(s, k2, h / 2));
    const PendulumState k4 = deriv(add(s, k3, h));
    return {s.theta1 + h / 6 * (k1.theta1 + 2 * k2.theta1 + 2 * k3.theta1 + k4.theta1),
            s.theta2 + h / 6 * (k1.theta2 + 2 * k2.theta2 + 2 * k3.theta2 + k4.theta2),
            s.omega1 + h / 6 * (k1.omega1 + 2 * k2.omega1 + 2 * k3.omega1 + k4.omega1),
            s.omega2 + h / 6 * (k1.omega2 + 2 * k2.omega2 + 2 * k3.omega2 + k4.omega2)};
}

PendulumState draw_pendulum_start(const PendulumSpec& spec, std::mt19937_64& rng) {
    std::uniform_real_distribution<double> first(kPi / 2, 3 * kPi / 2);
    std::uniform_real_distribution<double> offset(-kPi / 6, kPi / 6);
    std::uniform_real_distribution<double> unit(0.0, 1.0);
    std::uniform_real_distribution<double> momentum(-spec.momentum_range, spec.momentum_range);
    PendulumState s;
    s.theta1 = first(rng);
    s.theta2 = s.theta1 + offset(rng);
    if (unit(rng) >= spec.zero_momentum_probability) {
        s.omega1 = momentum(rng);
        s.omega2 = momentum(rng);
    }
    return s;
}

std::pair<double, double> end_effector(const PendulumState& s, const PendulumSpec& spec) {
    const double x = spec.length1 * std::sin(s.theta1) + spec.length2 * std::sin(s.theta2);
    const double y = -spec.length1 * std::cos(s.theta1) - spec.length2 * std::cos(s.theta2);
    return {x, y};
}

PendulumSequence gen_pendulum(const PendulumSpec& spec) {
    spec.validate();
    std::mt19937_64 rng(spec.seed);
    PendulumSequence out;
    out.initial = spec.initial ? *spec.initial : draw_pendulum_start(spec, rng);
    out.values = Tensor::zeros({spec.steps, 2});
    PendulumState s = out.initial;
    for (std::size_t t = 0; t < spec.steps; ++t) {
        if (spec.observable == PendulumObservable::angles) {
            out.values.at(t, 0) = s.theta1;
            out.values.at(t, 1) = s.theta2;
        } else {
            auto [x, y] = end_effector(s, spec);
            out.values.at(t, 0) = x;
            out.values.at(t, 1) = y;
        }
        s = rk4_step(s, spec, spec.step);
    }
    return out;
}

// Wave -----------------------------------------------------------------------

double WaveSpec::courant() const {
    return speed * time_step * std::sqrt(1.0 / (dx * dx) + 1.0 / (dy * dy));
}

void WaveSpec::validate() const {
    if (rows == 0 || cols == 0) throw ValidationError("wave grid extents must be positive");
    if (steps == 0) throw ValidationError("wave sequence length must be >= 1");
    if (!(time_step > 0 && dx > 0 && dy > 0)) throw ValidationError("wave step sizes must be positive");
    if (courant() > 1.0) {
        throw ValidationError("wave discretisation violates the stability bound (courant " +
                              std::to_string(courant()) + " > 1)");
    }
}

Tensor wave_step(const Tensor& previous, const Tensor& current, const WaveSpec& spec) {
    const std::size_t R = spec.rows, C = spec.cols;
    if (previous.size() != R * C || current.size() != R * C) {
        throw ContractViolation("wave fields must hold " + std::to_string(R * C) + " values");
    }
    const double k = spec.speed * spec.speed * spec.time_step * spec.time_step;
    const double ix = 1.0 / (spec.dx * spec.dx);
    const double iy = 1.0 / (spec.dy * spec.dy);
    auto u = [&](long r, long c) {
        if (r < 0 || c < 0 || r >= static_cast<long>(R) || c >= static_cast<long>(C)) return 0.0;
        return current[static_cast<std::size_t>(r) * C + static_cast<std::size_t>(c)];
    };
    Tensor next(current.shape());
    for (long r = 0; r < static_cast<long>(R); ++r) {
        for (long c = 0; c < static_cast<long>(C); ++c) {
            const double centre = u(r, c);
            const double uxx = (u(r, c + 1) - 2 * centre + u(r, c - 1)) * ix;
            const double uyy = (u(r + 1, c) - 2 * centre + u(r - 1, c)) * iy;
            const std::size_t i = static_cast<std::size_t>(r) * C + static_cast<std::size_t>(c);
            next[i] = k * (uxx + uyy) + 2 * centre - previous[i];
        }
    }
    return next;
}

WaveSequence gen_wave(const WaveSpec& spec) {
    spec.validate();
    std::mt19937_64 rng(spec.seed);
    WaveSequence out;
    if (spec.bump) {
        out.bump = *spec.bump;
    } else {
        std::uniform_real_distribution<double> row(0.0, static_cast<double>(spec.rows - 1));
        std::uniform_real_distribution<double> col(0.0, static_cast<double>(spec.cols - 1));
        std::uniform_real_distribution<double> amp(0.5, 1.5);
        std::uniform_real_distribution<double> width(1.0, 3.0);
        out.bump.row = row(rng);
        out.bump.col = col(rng);
        out.bump.amplitude = amp(rng);
        out.bump.width = width(rng);
    }
    const std::size_t N = spec.rows * spec.cols;
    Tensor current({spec.rows, spec.cols});
    for (std::size_t r = 0; r < spec.rows; ++r) {
        for (std::size_t c = 0; c < spec.cols; ++c) {
            const double d2 = std::pow(static_cast<double>(r) - out.bump.row, 2) +
                              std::pow(static_cast<double>(c) - out.bump.col, 2);
            current.at(r, c) = out.bump.amplitude * std::exp(-d2 / (2 * out.bump.width * out.bump.width));
        }
    }
    Tensor previous = current;  // zero initial velocity
    out.values = Tensor::zeros({spec.steps, N});
    for (std::size_t t = 0; t < spec.steps; ++t) {
        std::copy(current.data().begin(), current.data().end(), out.values.row(t).begin());
        Tensor next = wave_step(previous, current, spec);
        previous = std::move(current);
        current = std::move(next);
    }
    return out;
}

// Datasets -------------------------------------------------------------------

void NoiseSpec::validate() const {
    if (!(ratio >= 0.0) || !std::isfinite(ratio)) throw ValidationError("noise ratio must be non-negative");
    if (kind == NoiseKind::salt_and_pepper && ratio > 1.0) {
        throw ValidationError("salt-and-pepper ratio must not exceed 1");
    }
}

const std::vector<double>& training_noise_grid() {
    static const std::vector<double> grid{0.0, 0.05, 0.1, 0.2, 0.5, 1.0};
    return grid;
}

std::span<const double> Dataset::clean_sequence(std::size_t i) const {
    return clean.data().subspan(i * steps * channels, steps * channels);
}

std::span<const double> Dataset::noisy_sequence(std::size_t i) const {
    return noisy.data().subspan(i * steps * channels, steps * channels);
}

SequenceSample Dataset::sample(std::size_t i) const {
    if (i >= count) throw ContractViolation("dataset sample index out of range");
    auto c = clean_sequence(i);
    auto n = noisy_sequence(i);
    return {Tensor({steps, channels}, {c.begin(), c.end()}), Tensor({steps, channels}, {n.begin(), n.end()})};
}

Dataset Dataset::head(std::size_t n) const {
    if (n > count) throw ContractViolation("dataset has fewer than " + std::to_string(n) + " sequences");
    Dataset out = *this;
    out.count = n;
    const std::size_t len = n * steps * channels;
    out.clean = Tensor({n, steps, channels}, {clean.values().begin(), clean.values().begin() + len});
    out.noisy = Tensor({n, steps, channels}, {noisy.values().begin(), noisy.values().begin() + len});
    out.meta["count"] = n;
    return out;
}

json DatasetSpec::to_json() const {
    json j;
    j["experiment"] = to_string(experiment);
    j["count"] = count;
    j["steps"] = steps;
    j["seed"] = seed;
    switch (experiment) {
        case Experiment::mso:
            j["frequencies"] = mso.frequencies;
            break;
        case Experiment::pendulum:
            j["lengths"] = {pendulum.length1, pendulum.length2};
            j["masses"] = {pendulum.mass1, pendulum.mass2};
            j["gravity"] = pendulum.gravity;
            j["integration_step"] = pendulum.step;
            j["observable"] = to_string(pendulum.observable);
            j["zero_momentum_probability"] = pendulum.zero_momentum_probability;
            j["momentum_range"] = pendulum.momentum_range;
            break;
        case Experiment::wave:
            j["rows"] = wave.rows;
            j["cols"] = wave.cols;
            j["speed"] = wave.speed;
            j["time_step"] = wave.time_step;
            j["dx"] = wave.dx;
            j["dy"] = wave.dy;
            break;
    }
    return j;
}

Dataset generate_dataset(const DatasetSpec& spec) {
    if (spec.count == 0) throw ValidationError("dataset must contain at least one sequence");
    if (spec.steps < 2) throw ValidationError("sequences need at least two steps for one-step-ahead targets");
    Dataset ds;
    ds.experiment = spec.experiment;
    ds.count = spec.count;
    ds.steps = spec.steps;
    switch (spec.experiment) {
        case Experiment::mso: ds.channels = 1; break;
        case Experiment::pendulum: ds.channels = 2; break;
        case Experiment::wave:
            ds.rows = spec.wave.rows;
            ds.cols = spec.wave.cols;
            ds.channels = ds.rows * ds.cols;
            break;
    }
    std::vector<double> clean;
    clean.reserve(ds.count * ds.steps * ds.channels);
    json samples = json::array();
    for (std::size_t i = 0; i < spec.count; ++i) {
        const std::uint64_t sample_seed = derived_rng(spec.seed, i)();
        Tensor values;
        switch (spec.experiment) {
            case Experiment::mso: {
                MsoSpec s = spec.mso;
                s.steps = spec.steps;
                s.seed = sample_seed;
                values = gen_mso(s).values;
                break;
            }
            case Experiment::pendulum: {
                PendulumSpec s = spec.pendulum;
                s.steps = spec.steps;
                s.seed = sample_seed;
                values = gen_pendulum(s).values;
                break;
            }
            case Experiment::wave: {
                WaveSpec s = spec.wave;
                s.steps = spec.steps;
                s.seed = sample_seed;
                values = gen_wave(s).values;
                break;
            }
        }
        clean.insert(clean.end(), values.data().begin(), values.data().end());
    }
    ds.clean = Tensor({ds.count, ds.steps, ds.channels}, std::move(clean));
    ds.noisy = ds.clean;
    const auto [lo, hi] = std::minmax_element(ds.clean.data().begin(), ds.clean.data().end());
    ds.meta["spec"] = spec.to_json();
    ds.meta["min"] = *lo;
    ds.meta["max"] = *hi;
    ds.meta["normalized"] = false;
    ds.meta["noise"] = {{"kind", "gaussian"}, {"ratio", 0.0}, {"seed", 0}};
    return ds;
}

double clean_std(const Dataset& ds) {
    const auto values = ds.clean.data();
    if (values.empty()) return 0.0;
    double mean = 0.0;
    for (double v : values) mean += v;
    mean /= static_cast<double>(values.size());
    double var = 0.0;
    for (double v : values) var += (v - mean) * (v - mean);
    return std::sqrt(var / static_cast<double>(values.size()));
}

void add_noise(Dataset& ds, const NoiseSpec& spec) {
    spec.validate();
    if (ds.clean.empty()) throw ValidationError("dataset has no clean channel");
    ds.noisy = ds.clean;
    const std::size_t per_sample = ds.steps * ds.channels;
    if (spec.kind == NoiseKind::gaussian) {
        const double sigma = spec.ratio * clean_std(ds);
        ds.meta["noise"] = {{"kind", to_string(spec.kind)}, {"ratio", spec.ratio}, {"seed", spec.seed},
                            {"std", sigma}};
        if (spec.ratio == 0.0) return;
        for (std::size_t i = 0; i < ds.count; ++i) {
            auto rng = derived_rng(spec.seed, i);
            std::normal_distribution<double> noise(0.0, sigma);
            auto seq = ds.noisy.data().subspan(i * per_sample, per_sample);
            for (double& v : seq) v += noise(rng);
        }
    } else {
        const auto [lo, hi] = std::minmax_element(ds.clean.data().begin(), ds.clean.data().end());
        const double low = *lo, high = *hi;
        ds.meta["noise"] = {{"kind", to_string(spec.kind)}, {"ratio", spec.ratio}, {"seed", spec.seed}};
        if (spec.ratio == 0.0) return;
        std::uniform_real_distribution<double> unit(0.0, 1.0);
        const double half = spec.ratio / 2.0;
        for (std::size_t i = 0; i < ds.count; ++i) {
            auto rng = derived_rng(spec.seed, i);
            auto seq = ds.noisy.data().subspan(i * per_sample, per_sample);
            for (double& v : seq) {
                const double u = unit(rng);
                if (u < half) {
                    v = low;
                } else if (u < 2 * half) {
                    v = high;
                }
            }
        }
    }
}

void save_dataset(const std::filesystem::path& path, const Dataset& ds, Precision precision) {
    Container c;
    c.kind = "dataset";
    c.precision = precision;
    c.meta = ds.meta;
    c.meta["experiment"] = to_string(ds.experiment);
    c.meta["count"] = ds.count;
    c.meta["steps"] = ds.steps;
    c.meta["channels"] = ds.channels;
    if (ds.experiment == Experiment::wave) {
        c.meta["rows"] = ds.rows;
        c.meta["cols"] = ds.cols;
    }
    c.meta["layout"] = "[sample][time][channel]";
    c.blocks = {{"clean", ds.clean}, {"noisy", ds.noisy}};
    write_container(path, c);
}

Dataset load_dataset(const std::filesystem::path& path) {
    Container c = read_container(path);
    if (c.kind != "dataset") throw MissingArtifact(path.string() + " is a '" + c.kind + "' file, not a dataset");
    Dataset ds;
    try {
        ds.experiment = experiment_from_string(c.meta.at("experiment").get<std::string>());
        ds.count = c.meta.at("count").get<std::size_t>();
        ds.steps = c.meta.at("steps").get<std::size_t>();
        ds.channels = c.meta.at("channels").get<std::size_t>();
        ds.rows = c.meta.value("rows", std::size_t{0});
        ds.cols = c.meta.value("cols", std::size_t{0});
    } catch (const json::exception& e) {
        throw MissingArtifact(path.string() + ": malformed dataset header: " + e.what());
    }
    ds.clean = c.block("clean");
    ds.noisy = c.block("noisy");
    const Shape expected{ds.count, ds.steps, ds.channels};
    if (ds.clean.shape() != expected || ds.noisy.shape() != expected) {
        throw MissingArtifact(path.string() + ": payload shape does not match header counts");
    }
    ds.meta = c.meta;
    return ds;
}

}  // namespace atune
