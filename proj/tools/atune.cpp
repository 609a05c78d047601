// atune: dataset generation, expert training, Active Tuning runs and benchmarks.

#include <cmath>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "atune/bench.hpp"
#include "atune/errors.hpp"

using namespace atune;

namespace {

struct Globals {
    std::uint64_t seed = 1;
    std::string out = ".";
    std::string precision = "f64";
    std::size_t workers = 1;
};

std::string noise_label(double v) {
    char buf[16];
    std::snprintf(buf, sizeof buf, "%.2f", v);
    return buf;
}

std::string hash_of(const json& j) { return sha256_hex(j.dump()); }

void write_text(const std::filesystem::path& path, const std::string& text) {
    if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw ValidationError("cannot write " + path.string());
    out << text;
}

void require_file(const std::string& path, const char* what) {
    if (!std::filesystem::exists(path)) throw MissingArtifact(std::string(what) + " not found: " + path);
}

// gen ----------------------------------------------------------------------------

struct GenOptions {
    std::string experiment = "mso";
    std::optional<std::size_t> train_count, test_count, train_steps, test_steps;
    std::size_t rows = 16, cols = 16;
    std::string observable = "end_effector";
    double noise = 0.0;
};

void cmd_gen(const GenOptions& o, const Globals& g) {
    const Experiment e = experiment_from_string(o.experiment);
    const bool wave = e == Experiment::wave;
    const Precision precision = precision_from_string(g.precision);

    DatasetSpec base;
    base.experiment = e;
    base.wave.rows = o.rows;
    base.wave.cols = o.cols;
    if (o.observable == "angles") {
        base.pendulum.observable = PendulumObservable::angles;
    } else if (o.observable != "end_effector") {
        throw ValidationError("unknown pendulum observable '" + o.observable + "'");
    }

    struct Split {
        const char* name;
        std::size_t count, steps;
        std::uint64_t index;
    };
    const Split splits[] = {
        {"train", o.train_count.value_or(wave ? 200 : 10000), o.train_steps.value_or(wave ? 80 : 400), 0},
        {"test", o.test_count.value_or(wave ? 20 : 1000), o.test_steps.value_or(400), 1},
    };
    for (const Split& s : splits) {
        DatasetSpec spec = base;
        spec.count = s.count;
        spec.steps = s.steps;
        spec.seed = derived_rng(g.seed, s.index)();
        const json config = {{"command", "gen"}, {"spec", spec.to_json()}, {"noise", o.noise},
                             {"precision", g.precision}};
        Dataset ds = generate_dataset(spec);
        if (o.noise > 0.0) add_noise(ds, {NoiseKind::gaussian, o.noise, derived_rng(g.seed, 10 + s.index)()});
        ds.meta["config_hash"] = hash_of(config);
        const auto path = std::filesystem::path(g.out) / (o.experiment + "_" + s.name + ".atd");
        save_dataset(path, ds, precision);
        std::cout << path.string() << ": " << s.count << " sequences x " << s.steps << " steps\n";
    }
}

// train --------------------------------------------------------------------------

struct TrainOptions {
    std::string data;
    std::vector<double> noises{0.0};
    std::size_t seeds = 1;
    std::optional<std::size_t> epochs, hidden;
    std::size_t batch_size = 1;
    double rate = 0.001, beta1 = 0.9, beta2 = 0.999;
};

void cmd_train(const TrainOptions& o, const Globals& g) {
    require_file(o.data, "training dataset");
    const Dataset train = load_dataset(o.data);
    const std::string data_hash = file_sha256(o.data);
    const ModelKind kind = model_kind_for(train.experiment);
    const Precision precision = precision_from_string(g.precision);

    for (double noise : o.noises) {
        for (std::size_t k = 0; k < o.seeds; ++k) {
            TrainConfig cfg;
            cfg.kind = kind;
            cfg.noise_ratio = noise;
            cfg.epochs = o.epochs.value_or(default_epochs(train.experiment));
            cfg.hidden = o.hidden.value_or(default_hidden(kind));
            cfg.batch_size = o.batch_size;
            cfg.adam = AdamConfig{o.rate, o.beta1, o.beta2, 1e-8};
            cfg.seed = derived_rng(g.seed, k)();
            cfg.workers = g.workers;
            cfg.validate();
            const json config = {{"command", "train"}, {"train", cfg.to_json()}, {"dataset", data_hash},
                                 {"precision", g.precision}};
            const std::string hash = hash_of(config);

            const std::string stem = to_string(train.experiment) + "_noise" + noise_label(noise) + "_seed" +
                                     std::to_string(k);
            std::cerr << "training " << stem << " (" << cfg.epochs << " epochs)\n";
            const TrainResult r = train_expert(cfg, train, [&](std::size_t epoch, double mse) {
                if ((epoch + 1) % 10 == 0 || epoch + 1 == cfg.epochs) {
                    std::cerr << "  epoch " << epoch + 1 << " mse " << mse << "\n";
                }
            });
            const auto dir = std::filesystem::path(g.out);
            save_model(dir / (stem + ".atm"), r.model,
                       {{"config_hash", hash}, {"train_config", cfg.to_json()}, {"dataset", data_hash}}, precision);
            std::ostringstream csv;
            csv << "# config_hash: " << hash << "\nepoch,mse\n";
            csv.precision(10);
            for (std::size_t e = 0; e < r.loss_history.size(); ++e) csv << e + 1 << ',' << r.loss_history[e] << '\n';
            write_text(dir / (stem + "_loss.csv"), csv.str());
            std::cout << (dir / (stem + ".atm")).string() << "\n";
        }
    }
}

// tune ---------------------------------------------------------------------------

struct TuneOptions {
    std::string model;
    std::string data;
    bool stdin_mode = false;
    std::string preset;
    std::optional<std::size_t> horizon, cycles;
    std::optional<double> rate, beta1, beta2, init_std;
    std::string target;
    double signal_noise = 0.0;
    std::optional<std::size_t> sequences;
    std::string output = "tuned.csv";
};

TuningConfig resolve_tuning(const TuneOptions& o) {
    TuningConfig cfg = o.preset.empty() ? TuningConfig{} : preset_config(o.preset);
    if (o.horizon) cfg.horizon = *o.horizon;
    if (o.cycles) cfg.cycles = *o.cycles;
    if (o.rate) cfg.adam.rate = *o.rate;
    if (o.beta1) cfg.adam.beta1 = *o.beta1;
    if (o.beta2) cfg.adam.beta2 = *o.beta2;
    if (o.init_std) cfg.init_std = *o.init_std;
    if (o.target == "h_and_c") {
        cfg.target = TuningTarget::hidden_and_cell;
    } else if (!o.target.empty() && o.target != "h") {
        throw ValidationError("tuning target must be 'h' or 'h_and_c'");
    }
    cfg.validate();
    return cfg;
}

std::string record_header(std::size_t width) {
    std::string h = "sequence,step";
    for (std::size_t d = 0; d < width; ++d) h += ",observation_" + std::to_string(d);
    for (std::size_t d = 0; d < width; ++d) h += ",filtered_" + std::to_string(d);
    return h + ",state_norm";
}

void write_record(std::ostream& out, std::size_t seq, std::size_t step, std::span<const double> obs,
                  const StreamStep& s) {
    char buf[32];
    out << seq << ',' << step;
    for (double v : obs) {
        std::snprintf(buf, sizeof buf, ",%.10g", v);
        out << buf;
    }
    for (double v : s.filtered.data()) {
        std::snprintf(buf, sizeof buf, ",%.10g", v);
        out << buf;
    }
    std::snprintf(buf, sizeof buf, ",%.10g", l2_norm(s.state.h.data()));
    out << buf << '\n';
}

int cmd_tune(const TuneOptions& o, const Globals& g) {
    require_file(o.model, "model");
    const Model model = load_model(o.model);
    const TuningConfig cfg = resolve_tuning(o);
    const std::size_t width = model.input_size();
    json config = {{"command", "tune"}, {"tuning", cfg.to_json()}, {"model", file_sha256(o.model)}, {"seed", g.seed}};

    if (o.stdin_mode) {
        config["source"] = "stdin";
        std::mt19937_64 rng(g.seed);
        TuningWindow w = init_stream(cfg, model, rng);
        std::cout << "# config_hash: " << hash_of(config) << '\n' << record_header(width) << std::endl;
        std::string line;
        std::vector<double> obs;
        std::size_t step = 0;
        while (std::getline(std::cin, line)) {
            for (char& c : line) {
                if (c == ',' || c == ';' || c == '\t') c = ' ';
            }
            std::istringstream in(line);
            obs.clear();
            for (double v; in >> v;) obs.push_back(v);
            if (obs.empty() && line.find_first_not_of(' ') == std::string::npos) continue;
            if (!in.eof()) throw ValidationError("row " + std::to_string(step) + " holds a non-numeric value");
            if (obs.size() != width) {
                throw ValidationError("row " + std::to_string(step) + " holds " + std::to_string(obs.size()) +
                                      " values, model expects " + std::to_string(width));
            }
            const StreamStep s = step_stream(w, model, cfg, obs);
            write_record(std::cout, 0, step++, obs, s);
            std::cout.flush();
        }
        return 0;
    }

    if (o.data.empty()) throw ValidationError("tune needs --data or --stdin");
    require_file(o.data, "dataset");
    Dataset ds = load_dataset(o.data);
    if (ds.channels != width) throw ConfigError("dataset channels do not match the model width");
    if (o.sequences) ds = ds.head(std::min(*o.sequences, ds.count));
    if (o.signal_noise > 0.0) add_noise(ds, {NoiseKind::gaussian, o.signal_noise, derived_rng(g.seed, 1)()});
    config["dataset"] = file_sha256(o.data);
    config["signal_noise"] = o.signal_noise;
    config["sequences"] = ds.count;

    std::ostringstream out;
    out << "# config_hash: " << hash_of(config) << '\n' << record_header(width) << '\n';
    double tuned_total = 0.0;
    for (std::size_t i = 0; i < ds.count; ++i) {
        std::mt19937_64 rng(derived_rng(g.seed, 100 + i)());
        TuningWindow w = init_stream(cfg, model, rng);
        const auto noisy = ds.noisy_sequence(i);
        std::vector<double> filtered;
        for (std::size_t t = 0; t < ds.steps; ++t) {
            const StreamStep s = step_stream(w, model, cfg, noisy.subspan(t * width, width));
            write_record(out, i, t, noisy.subspan(t * width, width), s);
            filtered.insert(filtered.end(), s.filtered.data().begin(), s.filtered.data().end());
        }
        tuned_total += rmse(std::span<const double>(filtered).subspan(width), ds.clean_sequence(i).subspan(width));
    }
    const auto path = std::filesystem::path(g.out) / o.output;
    write_text(path, out.str());
    const double baseline = evaluate_open_loop(model, ds);
    std::cout << path.string() << ": " << ds.count << " sequences, tuned RMSE " << tuned_total / ds.count
              << ", teacher-forced RMSE " << baseline << "\n";
    return 0;
}

// bench --------------------------------------------------------------------------

struct BenchOptions {
    std::string experiment = "mso";
    std::string scale = "desk";
    std::vector<double> training_noises, tuning_noises, signal_noises;
    std::optional<std::size_t> model_seeds, train_count, test_count, train_steps, test_steps, epochs, batch_size,
        hidden, rows, cols;
    std::string cache;
    bool no_cache = false;
    bool wall_time = false;
};

void cmd_bench(const BenchOptions& o, const Globals& g) {
    const Experiment e = experiment_from_string(o.experiment);
    BenchPlan plan;
    if (o.scale == "desk") {
        plan = BenchPlan::desk(e);
    } else if (o.scale == "full") {
        plan = BenchPlan::full(e);
    } else {
        throw ValidationError("scale must be 'desk' or 'full'");
    }
    if (!o.training_noises.empty()) plan.training_noises = o.training_noises;
    if (!o.tuning_noises.empty()) plan.tuning_training_noises = o.tuning_noises;
    if (!o.signal_noises.empty()) plan.signal_noises = o.signal_noises;
    auto set = [](std::size_t& field, const std::optional<std::size_t>& v) {
        if (v) field = *v;
    };
    set(plan.model_seeds, o.model_seeds);
    set(plan.train_count, o.train_count);
    set(plan.test_count, o.test_count);
    set(plan.train_steps, o.train_steps);
    set(plan.test_steps, o.test_steps);
    set(plan.epochs, o.epochs);
    set(plan.batch_size, o.batch_size);
    set(plan.hidden, o.hidden);
    set(plan.rows, o.rows);
    set(plan.cols, o.cols);
    plan.seed = g.seed;
    plan.workers = g.workers;
    plan.record_wall_time = o.wall_time;
    const auto out = std::filesystem::path(g.out);
    if (!o.no_cache) plan.cache_dir = o.cache.empty() ? out / "cache" : std::filesystem::path(o.cache);
    plan.validate();

    std::cerr << "bench " << o.experiment << " (" << o.scale << "), config " << plan.config_hash() << ", "
              << expected_cells(plan).size() << " cells\n";
    const BenchResult r = run_bench(plan);
    emit_report(r, plan, out);
    std::cerr << "models trained " << r.models_trained << ", reused from cache " << r.models_cached << "\n";
    std::cout << (out / "results.csv").string() << "\n";
}

// inspect ------------------------------------------------------------------------

void cmd_inspect(const std::vector<std::string>& files) {
    for (const auto& f : files) {
        require_file(f, "file");
        std::cout << f << ":\n" << read_container_header(f).dump(2) << "\n";
    }
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Active Tuning toolkit: generate data, train experts, tune, benchmark"};
    app.require_subcommand(1);
    app.allow_config_extras(CLI::config_extras_mode::error);
    app.set_config("--config", "", "TOML/INI run configuration (command-line flags take precedence)");

    Globals g;
    app.add_option("--seed", g.seed, "global RNG seed")->capture_default_str();
    app.add_option("--out", g.out, "output directory")->envname("ATUNE_OUT_DIR")->capture_default_str();
    app.add_option("--precision", g.precision, "payload precision of written files")
        ->check(CLI::IsMember({"f32", "f64"}))
        ->capture_default_str();
    app.add_option("--workers", g.workers, "worker threads")
        ->envname("ATUNE_WORKERS")
        ->check(CLI::PositiveNumber)
        ->capture_default_str();

    GenOptions gen;
    auto* gen_cmd = app.add_subcommand("gen", "generate train and test datasets");
    gen_cmd->add_option("--experiment", gen.experiment)->check(CLI::IsMember({"mso", "pendulum", "wave"}));
    gen_cmd->add_option("--train", gen.train_count, "training sequences");
    gen_cmd->add_option("--test", gen.test_count, "test sequences");
    gen_cmd->add_option("--train-steps", gen.train_steps);
    gen_cmd->add_option("--test-steps", gen.test_steps);
    gen_cmd->add_option("--rows", gen.rows)->capture_default_str();
    gen_cmd->add_option("--cols", gen.cols)->capture_default_str();
    gen_cmd->add_option("--observable", gen.observable, "pendulum channels: end_effector or angles");
    gen_cmd->add_option("--noise", gen.noise, "gaussian noise ratio for the noisy channel");

    TrainOptions train;
    auto* train_cmd = app.add_subcommand("train", "train denoising experts");
    train_cmd->add_option("--data", train.data, "training dataset")->required();
    train_cmd->add_option("--noise", train.noises, "training noise ratios")->delimiter(',');
    train_cmd->add_option("--seeds", train.seeds, "models per noise ratio")->check(CLI::PositiveNumber);
    train_cmd->add_option("--epochs", train.epochs);
    train_cmd->add_option("--hidden", train.hidden);
    train_cmd->add_option("--batch-size", train.batch_size)->capture_default_str();
    train_cmd->add_option("--lr", train.rate)->capture_default_str();
    train_cmd->add_option("--optimizer-beta1", train.beta1)->capture_default_str();
    train_cmd->add_option("--optimizer-beta2", train.beta2)->capture_default_str();

    TuneOptions tune;
    auto* tune_cmd = app.add_subcommand("tune", "filter a dataset or a stdin stream with Active Tuning");
    tune_cmd->add_option("--model", tune.model)->required();
    auto* data_opt = tune_cmd->add_option("--data", tune.data, "dataset to stream");
    tune_cmd->add_flag("--stdin", tune.stdin_mode, "read one observation row per line")->excludes(data_opt);
    tune_cmd->add_option("--preset", tune.preset, "experiment:training_noise:signal_noise, e.g. mso:0.0:1.0");
    tune_cmd->add_option("--horizon", tune.horizon);
    tune_cmd->add_option("--cycles", tune.cycles);
    tune_cmd->add_option("--lr", tune.rate);
    tune_cmd->add_option("--beta1", tune.beta1);
    tune_cmd->add_option("--beta2", tune.beta2);
    tune_cmd->add_option("--init-std", tune.init_std);
    tune_cmd->add_option("--target", tune.target, "h or h_and_c");
    tune_cmd->add_option("--signal-noise", tune.signal_noise, "gaussian noise ratio added before streaming");
    tune_cmd->add_option("--sequences", tune.sequences, "stream only the first N sequences");
    tune_cmd->add_option("--output", tune.output, "record file name under --out")->capture_default_str();

    BenchOptions bench;
    auto* bench_cmd = app.add_subcommand("bench", "run a benchmark grid");
    bench_cmd->add_option("--experiment", bench.experiment)->check(CLI::IsMember({"mso", "pendulum", "wave"}));
    bench_cmd->add_option("--scale", bench.scale, "desk or full")->capture_default_str();
    bench_cmd->add_option("--training-noises", bench.training_noises)->delimiter(',');
    bench_cmd->add_option("--tuning-noises", bench.tuning_noises)->delimiter(',');
    bench_cmd->add_option("--signal-noises", bench.signal_noises)->delimiter(',');
    bench_cmd->add_option("--model-seeds", bench.model_seeds);
    bench_cmd->add_option("--train-count", bench.train_count);
    bench_cmd->add_option("--test-count", bench.test_count);
    bench_cmd->add_option("--train-steps", bench.train_steps);
    bench_cmd->add_option("--test-steps", bench.test_steps);
    bench_cmd->add_option("--epochs", bench.epochs);
    bench_cmd->add_option("--batch-size", bench.batch_size);
    bench_cmd->add_option("--hidden", bench.hidden);
    bench_cmd->add_option("--rows", bench.rows);
    bench_cmd->add_option("--cols", bench.cols);
    bench_cmd->add_option("--cache", bench.cache, "model/dataset cache (default <out>/cache)");
    bench_cmd->add_flag("--no-cache", bench.no_cache);
    bench_cmd->add_flag("--wall-time", bench.wall_time, "record per-cell wall time in results.csv");

    std::vector<std::string> files;
    auto* inspect_cmd = app.add_subcommand("inspect", "print file headers");
    inspect_cmd->add_option("files", files)->required();

    for (auto* sub : app.get_subcommands({})) sub->fallthrough();

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : static_cast<int>(ExitCode::Validation);
    }

    try {
        if (*gen_cmd) cmd_gen(gen, g);
        if (*train_cmd) cmd_train(train, g);
        if (*tune_cmd) return cmd_tune(tune, g);
        if (*bench_cmd) cmd_bench(bench, g);
        if (*inspect_cmd) cmd_inspect(files);
    } catch (const atune::Error& e) {
        std::cerr << "error: " << e.what() << "\n";
        return static_cast<int>(e.exit_code());
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return static_cast<int>(ExitCode::Validation);
    }
    return 0;
}
