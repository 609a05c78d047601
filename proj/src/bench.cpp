#include "atune/bench.hpp"

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <functional>
#include <sstream>
#include <thread>

#include "atune/errors.hpp"

namespace atune {

namespace {

constexpr std::uint64_t kTestStream = 0x74657374ULL;
constexpr std::uint64_t kModelStream = 0x6d6f64656cULL;
constexpr std::uint64_t kStreamSeeds = 0x74756e65ULL;

// Runs fn(i) for i in [0, n) on `workers` threads. Results must be written to
// per-index slots so the outcome never depends on scheduling.
void parallel_for(std::size_t n, std::size_t workers, const std::function<void(std::size_t)>& fn) {
    if (workers <= 1 || n <= 1) {
        for (std::size_t i = 0; i < n; ++i) fn(i);
        return;
    }
    std::atomic<std::size_t> next{0};
    std::exception_ptr error;
    std::mutex error_mutex;
    {
        std::vector<std::jthread> pool;
        for (std::size_t w = 0; w < std::min(workers, n); ++w) {
            pool.emplace_back([&] {
                for (std::size_t i = next++; i < n; i = next++) {
                    try {
                        fn(i);
                    } catch (...) {
                        std::lock_guard lock(error_mutex);
                        if (!error) error = std::current_exception();
                    }
                }
            });
        }
    }
    if (error) std::rethrow_exception(error);
}

std::string fmt_noise(double v) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.2f", v);
    return buf;
}

std::string fmt_value(double v) {
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.10g", v);
    return buf;
}

std::size_t noise_index(double noise) {
    const auto& grid = training_noise_grid();
    for (std::size_t i = 0; i < grid.size(); ++i) {
        if (std::abs(grid[i] - noise) < 1e-12) return i;
    }
    throw ValidationError("noise ratio " + fmt_noise(noise) + " is not on the training grid");
}

std::uint64_t signal_noise_seed(const BenchPlan& plan, double signal) {
    return derived_rng(plan.seed ^ kTestStream, static_cast<std::uint64_t>(std::llround(signal * 1000)))();
}

DatasetSpec dataset_spec(const BenchPlan& plan, bool train) {
    DatasetSpec spec;
    spec.experiment = plan.experiment;
    spec.count = train ? plan.train_count : plan.test_count;
    spec.steps = train ? plan.train_steps : plan.test_steps;
    spec.seed = derived_rng(plan.seed, train ? 0 : 1)();
    spec.wave.rows = plan.rows;
    spec.wave.cols = plan.cols;
    return spec;
}

Dataset cached_dataset(const BenchPlan& plan, const DatasetSpec& spec, std::string* file_hash) {
    const std::string key = sha256_hex(spec.to_json().dump());
    if (!plan.cache_dir) {
        *file_hash = key;
        return generate_dataset(spec);
    }
    const auto path = *plan.cache_dir / "datasets" / (key + ".atd");
    if (!std::filesystem::exists(path)) save_dataset(path, generate_dataset(spec));
    *file_hash = file_sha256(path);
    return load_dataset(path);
}

std::pair<double, double> mean_std(const std::vector<double>& v) {
    double mean = 0.0;
    for (double x : v) mean += x;
    mean /= static_cast<double>(v.size());
    double var = 0.0;
    for (double x : v) var += (x - mean) * (x - mean);
    return {mean, v.size() > 1 ? std::sqrt(var / static_cast<double>(v.size() - 1)) : 0.0};
}

std::vector<double> slice_from(std::span<const double> seq, std::size_t offset) {
    return {seq.begin() + static_cast<std::ptrdiff_t>(offset), seq.end()};
}

Tensor column(const std::vector<double>& frames, std::size_t width, std::size_t index) {
    const std::size_t steps = frames.size() / width;
    std::vector<double> out(steps);
    for (std::size_t t = 0; t < steps; ++t) out[t] = frames[t * width + index];
    return Tensor({steps}, std::move(out));
}

}  // namespace

std::string to_string(InferenceMode m) { return m == InferenceMode::regular ? "regular" : "tuning"; }

// Plans ----------------------------------------------------------------------

BenchPlan BenchPlan::full(Experiment e) {
    BenchPlan p;
    p.experiment = e;
    p.model_seeds = 10;
    p.epochs = default_epochs(e);
    if (e == Experiment::wave) {
        p.train_count = 200;
        p.test_count = 20;
        p.train_steps = 80;
        p.hidden = 4;
    } else {
        p.train_count = 10000;
        p.test_count = 1000;
    }
    return p;
}

BenchPlan BenchPlan::desk(Experiment e) {
    BenchPlan p;
    p.experiment = e;
    p.model_seeds = 3;
    p.epochs = 20;
    p.train_count = 500;
    p.test_count = 20;
    if (e == Experiment::wave) {
        p.train_count = 50;
        p.test_count = 5;
        p.train_steps = 80;
        p.hidden = 4;
        p.rows = 8;
        p.cols = 8;
        p.epochs = default_epochs(e);
    }
    return p;
}

void BenchPlan::validate() const {
    if (training_noises.empty() && tuning_training_noises.empty()) {
        throw ValidationError("bench plan has no training noise levels");
    }
    if (signal_noises.empty()) throw ValidationError("bench plan has no signal noise levels");
    if (model_seeds == 0) throw ValidationError("bench plan needs at least one model seed");
    if (train_count == 0 || test_count == 0) throw ValidationError("bench plan needs non-empty train and test sets");
    if (train_steps < 2 || test_steps < 2) throw ValidationError("sequences need at least two steps");
    if (epochs == 0 || batch_size == 0 || hidden == 0 || workers == 0) {
        throw ValidationError("epochs, batch size, hidden size and workers must be >= 1");
    }
    for (double n : trained_noises()) noise_index(n);
    for (double s : signal_noises) {
        if (!(s >= 0.0)) throw ValidationError("signal noise must be non-negative");
    }
}

json BenchPlan::to_json() const {
    return {{"experiment", to_string(experiment)},
            {"training_noises", training_noises},
            {"tuning_training_noises", tuning_training_noises},
            {"signal_noises", signal_noises},
            {"model_seeds", model_seeds},
            {"train_count", train_count},
            {"test_count", test_count},
            {"train_steps", train_steps},
            {"test_steps", test_steps},
            {"epochs", epochs},
            {"batch_size", batch_size},
            {"hidden", hidden},
            {"rows", rows},
            {"cols", cols},
            {"seed", seed}};
}

std::string BenchPlan::config_hash() const { return sha256_hex(to_json().dump()); }

std::vector<double> BenchPlan::trained_noises() const {
    std::vector<double> all = training_noises;
    all.insert(all.end(), tuning_training_noises.begin(), tuning_training_noises.end());
    std::sort(all.begin(), all.end());
    all.erase(std::unique(all.begin(), all.end()), all.end());
    return all;
}

const CellStats& ResultGrid::at(double training_noise, double signal_noise, InferenceMode mode) const {
    auto it = cells.find({training_noise, signal_noise, mode});
    if (it == cells.end()) {
        throw ValidationError("result grid has no " + to_string(mode) + " cell for training " +
                              fmt_noise(training_noise) + ", signal " + fmt_noise(signal_noise));
    }
    return it->second;
}

std::vector<CellKey> expected_cells(const BenchPlan& plan) {
    std::vector<CellKey> keys;
    for (double t : plan.training_noises) {
        for (double s : plan.signal_noises) keys.push_back({t, s, InferenceMode::regular});
    }
    for (double t : plan.tuning_training_noises) {
        for (double s : plan.signal_noises) {
            if (s > 0.0 && find_preset(plan.experiment, t, s)) keys.push_back({t, s, InferenceMode::tuning});
        }
    }
    std::sort(keys.begin(), keys.end());
    return keys;
}

// Cells ----------------------------------------------------------------------

Dataset noisy_test_set(const Dataset& test, double signal_noise, std::uint64_t noise_seed) {
    Dataset noisy = test;
    add_noise(noisy, NoiseSpec{NoiseKind::gaussian, signal_noise, noise_seed});
    return noisy;
}

double run_baseline_cell(const Model& model, const Dataset& test, double signal_noise, std::uint64_t noise_seed) {
    return evaluate_open_loop(model, noisy_test_set(test, signal_noise, noise_seed));
}

double tuning_rmse(const Model& model, const TuningConfig& cfg, std::span<const double> noisy,
                   std::span<const double> clean, std::size_t steps, std::uint64_t stream_seed) {
    const std::size_t D = model.input_size();
    const auto filtered = filter_sequence(model, cfg, noisy, steps, stream_seed);
    return rmse(std::span<const double>(filtered).subspan(D), clean.subspan(D));
}

double run_tuning_cell(const Model& model, const TuningConfig& preset, const Dataset& test, double signal_noise,
                       std::uint64_t noise_seed, std::uint64_t stream_seed) {
    const Dataset noisy = noisy_test_set(test, signal_noise, noise_seed);
    double total = 0.0;
    for (std::size_t i = 0; i < noisy.count; ++i) {
        total += tuning_rmse(model, preset, noisy.noisy_sequence(i), noisy.clean_sequence(i), noisy.steps,
                             derived_rng(stream_seed, i)());
    }
    return total / static_cast<double>(noisy.count);
}

// Full run -------------------------------------------------------------------

BenchResult run_bench(const BenchPlan& plan) {
    plan.validate();
    BenchResult result;
    result.grid.experiment = plan.experiment;
    result.grid.config_hash = plan.config_hash();

    std::string train_hash, test_hash;
    const Dataset train = cached_dataset(plan, dataset_spec(plan, true), &train_hash);
    const Dataset test = cached_dataset(plan, dataset_spec(plan, false), &test_hash);

    // Train (or load) one model per (noise, seed).
    const std::vector<double> noises = plan.trained_noises();
    struct ModelJob {
        double noise;
        std::size_t seed_index;
        TrainConfig cfg;
        std::optional<std::filesystem::path> path;
        Model model;
        bool cached = false;
    };
    std::vector<ModelJob> jobs;
    for (double n : noises) {
        for (std::size_t s = 0; s < plan.model_seeds; ++s) {
            ModelJob job{n, s, {}, {}, {}, false};
            job.cfg.kind = model_kind_for(plan.experiment);
            job.cfg.noise_ratio = n;
            job.cfg.epochs = plan.epochs;
            job.cfg.batch_size = plan.batch_size;
            job.cfg.hidden = plan.hidden;
            job.cfg.seed = derived_rng(plan.seed ^ kModelStream, noise_index(n) * 1000 + s)();
            if (plan.cache_dir) {
                json key = job.cfg.to_json();
                key["dataset"] = train_hash;
                job.path = *plan.cache_dir / "models" / (sha256_hex(key.dump()) + ".atm");
            }
            jobs.push_back(std::move(job));
        }
    }
    parallel_for(jobs.size(), plan.workers, [&](std::size_t i) {
        ModelJob& job = jobs[i];
        if (job.path && std::filesystem::exists(*job.path)) {
            job.model = load_model(*job.path);
            job.cached = true;
            return;
        }
        job.model = train_expert(job.cfg, train).model;
        if (job.path) save_model(*job.path, job.model, {{"train_config", job.cfg.to_json()}, {"dataset", train_hash}});
    });
    for (const auto& job : jobs) (job.cached ? result.models_cached : result.models_trained) += 1;

    auto model_for = [&](double noise, std::size_t seed) -> const Model& {
        for (const auto& job : jobs) {
            if (job.noise == noise && job.seed_index == seed) return job.model;
        }
        throw ContractViolation("no trained model for noise " + fmt_noise(noise));
    };

    std::map<double, Dataset> noisy_sets;
    for (double s : plan.signal_noises) noisy_sets.emplace(s, noisy_test_set(test, s, signal_noise_seed(plan, s)));

    // Evaluate every (cell, seed) pair.
    const std::vector<CellKey> keys = expected_cells(plan);
    struct EvalJob {
        CellKey key;
        std::size_t seed;
        double rmse = 0.0;
        double seconds = 0.0;
    };
    std::vector<EvalJob> evals;
    for (const auto& k : keys) {
        for (std::size_t s = 0; s < plan.model_seeds; ++s) evals.push_back({k, s});
    }
    parallel_for(evals.size(), plan.workers, [&](std::size_t i) {
        EvalJob& e = evals[i];
        const auto start = std::chrono::steady_clock::now();
        const Model& model = model_for(e.key.training_noise, e.seed);
        const Dataset& noisy = noisy_sets.at(e.key.signal_noise);
        if (e.key.mode == InferenceMode::regular) {
            e.rmse = evaluate_open_loop(model, noisy);
        } else {
            const TuningConfig cfg = preset_config(plan.experiment, e.key.training_noise, e.key.signal_noise);
            const std::uint64_t stream_seed = derived_rng(plan.seed ^ kStreamSeeds, e.seed)();
            double total = 0.0;
            for (std::size_t q = 0; q < noisy.count; ++q) {
                total += tuning_rmse(model, cfg, noisy.noisy_sequence(q), noisy.clean_sequence(q), noisy.steps,
                                     derived_rng(stream_seed, q)());
            }
            e.rmse = total / static_cast<double>(noisy.count);
        }
        e.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    });

    for (const auto& k : keys) {
        CellStats stats;
        for (const auto& e : evals) {
            if (e.key == k) {
                stats.per_seed.push_back(e.rmse);
                stats.wall_seconds += e.seconds;
            }
        }
        std::tie(stats.rmse_mean, stats.rmse_std) = mean_std(stats.per_seed);
        stats.seeds = stats.per_seed.size();
        if (!std::isfinite(stats.rmse_mean)) throw NumericError("non-finite RMSE in " + to_string(k.mode) + " cell");
        result.grid.cells.emplace(k, std::move(stats));
    }

    // Exemplar traces: first test sequence, first model seed, each tuning cell.
    const std::size_t D = test.channels;
    for (const auto& k : keys) {
        if (k.mode != InferenceMode::tuning) continue;
        const Model& model = model_for(k.training_noise, 0);
        const Dataset& noisy = noisy_sets.at(k.signal_noise);
        const TuningConfig cfg = preset_config(plan.experiment, k.training_noise, k.signal_noise);
        const std::uint64_t stream_seed = derived_rng(derived_rng(plan.seed ^ kStreamSeeds, 0)(), 0)();
        const auto clean = slice_from(noisy.clean_sequence(0), D);
        const auto observed = slice_from(noisy.noisy_sequence(0), D);
        const auto baseline = teacher_forced_predictions(model, noisy.noisy_sequence(0), noisy.steps);
        const auto tuned = slice_from(filter_sequence(model, cfg, noisy.noisy_sequence(0), noisy.steps, stream_seed), D);
        const std::size_t steps = noisy.steps - 1;

        TraceExemplar ex;
        ex.name = to_string(plan.experiment) + "_train" + fmt_noise(k.training_noise) + "_signal" +
                  fmt_noise(k.signal_noise) + "_seq0";
        ex.meta = {{"experiment", to_string(plan.experiment)},
                   {"training_noise", k.training_noise},
                   {"signal_noise", k.signal_noise},
                   {"model_seed_index", 0},
                   {"sequence", 0},
                   {"steps", steps},
                   {"channels", D},
                   {"first_step", 1},
                   {"tuning", cfg.to_json()},
                   {"config_hash", result.grid.config_hash}};
        ex.channels = {{"ground_truth", Tensor({steps, D}, clean)},
                       {"noisy", Tensor({steps, D}, observed)},
                       {"baseline", Tensor({steps, D}, baseline)},
                       {"tuned", Tensor({steps, D}, tuned)}};
        if (plan.experiment == Experiment::wave) {
            const std::size_t centre = (test.rows / 2) * test.cols + test.cols / 2;
            ex.meta["rows"] = test.rows;
            ex.meta["cols"] = test.cols;
            ex.meta["centre_index"] = centre;
            ex.channels.push_back({"centre_ground_truth", column(clean, D, centre)});
            ex.channels.push_back({"centre_noisy", column(observed, D, centre)});
            ex.channels.push_back({"centre_baseline", column(baseline, D, centre)});
            ex.channels.push_back({"centre_tuned", column(tuned, D, centre)});
        }
        result.traces.push_back(std::move(ex));
    }
    return result;
}

// Reporting ------------------------------------------------------------------

void validate_grid(const ResultGrid& grid, const BenchPlan& plan) {
    const auto keys = expected_cells(plan);
    if (keys.empty()) throw ValidationError("bench plan defines no cells");
    std::string missing;
    for (const auto& k : keys) {
        if (!grid.cells.contains(k)) {
            missing += " (" + to_string(k.mode) + ", training " + fmt_noise(k.training_noise) + ", signal " +
                       fmt_noise(k.signal_noise) + ")";
        }
    }
    if (!missing.empty()) throw ValidationError("result grid is missing cells:" + missing);
    for (const auto& [k, stats] : grid.cells) {
        if (!std::isfinite(stats.rmse_mean) || !std::isfinite(stats.rmse_std)) {
            throw ValidationError("result grid holds a non-finite cell");
        }
    }
}

std::string results_csv(const ResultGrid& grid, const BenchPlan& plan) {
    validate_grid(grid, plan);
    std::ostringstream out;
    out << "# config_hash: " << grid.config_hash << "\n";
    out << "experiment,training_noise,signal_noise,mode,rmse_mean,rmse_std,seeds,wall_seconds\n";
    for (const auto& k : expected_cells(plan)) {
        const CellStats& s = grid.cells.at(k);
        out << to_string(grid.experiment) << ',' << fmt_noise(k.training_noise) << ',' << fmt_noise(k.signal_noise)
            << ',' << to_string(k.mode) << ',' << fmt_value(s.rmse_mean) << ',' << fmt_value(s.rmse_std) << ','
            << s.seeds << ',' << (plan.record_wall_time ? fmt_value(s.wall_seconds) : std::string("0")) << "\n";
    }
    return out.str();
}

void emit_report(const BenchResult& result, const BenchPlan& plan, const std::filesystem::path& out_dir) {
    const std::string csv = results_csv(result.grid, plan);
    std::filesystem::create_directories(out_dir);
    {
        std::ofstream out(out_dir / "results.csv", std::ios::binary | std::ios::trunc);
        if (!out) throw ValidationError("cannot write " + (out_dir / "results.csv").string());
        out << csv;
    }
    for (const auto& ex : result.traces) {
        Container c;
        c.kind = "trace";
        c.meta = ex.meta;
        json names = json::array();
        for (const auto& ch : ex.channels) names.push_back(ch.name);
        c.meta["channel_names"] = names;
        c.blocks = ex.channels;
        write_container(out_dir / "traces" / (ex.name + ".atr"), c);
    }
}

}  // namespace atune
