#include "atune/model.hpp"

#include <algorithm>
#include <cmath>

#include "atune/errors.hpp"

namespace atune {

namespace {

inline double sigmoid(double x) { return 1.0 / (1.0 + std::exp(-x)); }

// Wiring between external inputs and the bank of cells. A plain sequence
// model is a 1x1 mesh whose cell input is the whole external input.
struct Topology {
    std::size_t rows = 1;
    std::size_t cols = 1;
    bool lateral = false;

    std::size_t cells() const { return rows * cols; }

    static Topology single() { return {}; }
    static Topology mesh(std::size_t r, std::size_t c) { return {r, c, true}; }
};

// Index of neighbour k (up, down, left, right) of cell n, or -1 off the mesh.
inline long neighbour(const Topology& topo, std::size_t n, std::size_t k) {
    const long r = static_cast<long>(n / topo.cols);
    const long c = static_cast<long>(n % topo.cols);
    long nr = r, nc = c;
    switch (k) {
        case 0: nr = r - 1; break;
        case 1: nr = r + 1; break;
        case 2: nc = c - 1; break;
        default: nc = c + 1; break;
    }
    if (nr < 0 || nc < 0 || nr >= static_cast<long>(topo.rows) || nc >= static_cast<long>(topo.cols)) return -1;
    return nr * static_cast<long>(topo.cols) + nc;
}

std::size_t model_input_width(const LstmParams& p, const Topology& topo) {
    return topo.lateral ? topo.cells() : p.input_size();
}

std::size_t model_output_width(const LstmParams& p, const Topology& topo) {
    return topo.lateral ? topo.cells() : p.output_size();
}

void check_state(const LstmParams& p, const Topology& topo, const HiddenState& s) {
    const Shape expected{topo.cells(), p.hidden_size()};
    if (s.h.shape() != expected || s.c.shape() != expected) {
        throw ContractViolation("hidden state shape " + shape_string(s.h.shape()) + "/" + shape_string(s.c.shape()) +
                                " does not match model " + shape_string(expected));
    }
}

ForwardTrace make_trace(const LstmParams& p, const Topology& topo, const HiddenState& seed, LoopMode mode,
                        std::size_t steps) {
    ForwardTrace tr;
    tr.mode = mode;
    tr.steps = steps;
    tr.cells = topo.cells();
    tr.hidden = p.hidden_size();
    tr.cell_input = p.input_size();
    tr.model_input = model_input_width(p, topo);
    tr.model_output = model_output_width(p, topo);
    tr.seed = seed;
    const std::size_t nh = tr.cells * tr.hidden;
    tr.inputs.resize(steps * tr.model_input);
    tr.cell_inputs.resize(steps * tr.cells * tr.cell_input);
    tr.preacts.resize(steps * nh * 4);
    tr.gates.resize(steps * nh * 4);
    tr.cell_states.resize(steps * nh);
    tr.cell_tanh.resize(steps * nh);
    tr.hidden_out.resize(steps * nh);
    tr.outputs.resize(steps * tr.model_output);
    return tr;
}

// Advances the trace by one step. `x` must already be stored in tr.inputs.
void step_into(const LstmParams& p, const Topology& topo, ForwardTrace& tr, std::size_t t) {
    const std::size_t H = tr.hidden;
    const std::size_t K = tr.cell_input;
    const std::size_t N = tr.cells;
    const std::size_t G = 4 * H;
    const double* x = tr.inputs.data() + t * tr.model_input;
    const double* h_prev = t == 0 ? tr.seed.h.data().data() : tr.hidden_out.data() + (t - 1) * N * H;
    const double* c_prev = t == 0 ? tr.seed.c.data().data() : tr.cell_states.data() + (t - 1) * N * H;
    const double* w_in = p.input_weights().data().data();
    const double* w_rec = p.recurrent_weights().data().data();
    const double* w_out = p.output_weights().data().data();

    for (std::size_t n = 0; n < N; ++n) {
        double* z = tr.cell_inputs.data() + (t * N + n) * K;
        if (topo.lateral) {
            z[0] = x[n];
            for (std::size_t k = 0; k < GridModelParams::lateral_neighbors; ++k) {
                const long m = neighbour(topo, n, k);
                double* dst = z + 1 + k * H;
                if (m < 0) {
                    std::fill(dst, dst + H, 0.0);
                } else {
                    std::copy(h_prev + m * H, h_prev + (m + 1) * H, dst);
                }
            }
        } else {
            std::copy(x, x + K, z);
        }

        const double* hp = h_prev + n * H;
        const double* cp = c_prev + n * H;
        double* a = tr.preacts.data() + (t * N + n) * G;
        double* g = tr.gates.data() + (t * N + n) * G;
        for (std::size_t r = 0; r < G; ++r) {
            const double* wi = w_in + r * K;
            const double* wr = w_rec + r * H;
            double acc = 0.0;
            for (std::size_t k = 0; k < K; ++k) acc += wi[k] * z[k];
            for (std::size_t k = 0; k < H; ++k) acc += wr[k] * hp[k];
            a[r] = acc;
        }
        for (std::size_t j = 0; j < H; ++j) {
            g[j] = sigmoid(a[j]);
            g[H + j] = sigmoid(a[H + j]);
            g[2 * H + j] = std::tanh(a[2 * H + j]);
            g[3 * H + j] = sigmoid(a[3 * H + j]);
        }
        double* c = tr.cell_states.data() + (t * N + n) * H;
        double* tc = tr.cell_tanh.data() + (t * N + n) * H;
        double* h = tr.hidden_out.data() + (t * N + n) * H;
        for (std::size_t j = 0; j < H; ++j) {
            c[j] = g[H + j] * cp[j] + g[j] * g[2 * H + j];
            tc[j] = std::tanh(c[j]);
            h[j] = g[3 * H + j] * tc[j];
        }
    }

    double* y = tr.outputs.data() + t * tr.model_output;
    const double* h_now = tr.hidden_out.data() + t * N * H;
    if (topo.lateral) {
        for (std::size_t n = 0; n < N; ++n) {
            double acc = 0.0;
            for (std::size_t j = 0; j < H; ++j) acc += w_out[j] * h_now[n * H + j];
            y[n] = acc;
        }
    } else {
        for (std::size_t o = 0; o < tr.model_output; ++o) {
            double acc = 0.0;
            for (std::size_t j = 0; j < H; ++j) acc += w_out[o * H + j] * h_now[j];
            y[o] = acc;
        }
    }

    for (std::size_t o = 0; o < tr.model_output; ++o) {
        if (!std::isfinite(y[o])) throw NumericError("non-finite activation at step " + std::to_string(t));
    }
}

ForwardTrace run_open(const LstmParams& p, const Topology& topo, const HiddenState& seed,
                      std::span<const double> inputs, std::size_t steps) {
    check_state(p, topo, seed);
    ForwardTrace tr = make_trace(p, topo, seed, LoopMode::open, steps);
    if (inputs.size() != steps * tr.model_input) {
        throw ContractViolation("open-loop inputs hold " + std::to_string(inputs.size()) + " values, expected " +
                                std::to_string(steps * tr.model_input));
    }
    std::copy(inputs.begin(), inputs.end(), tr.inputs.begin());
    for (std::size_t t = 0; t < steps; ++t) step_into(p, topo, tr, t);
    return tr;
}

ForwardTrace run_closed(const LstmParams& p, const Topology& topo, const HiddenState& seed,
                        std::span<const double> first, std::size_t steps) {
    check_state(p, topo, seed);
    if (model_input_width(p, topo) != model_output_width(p, topo)) {
        throw ConfigError("closed-loop rollout needs input size == output size (" +
                          std::to_string(model_input_width(p, topo)) + " vs " +
                          std::to_string(model_output_width(p, topo)) + ")");
    }
    ForwardTrace tr = make_trace(p, topo, seed, LoopMode::closed, steps);
    if (first.size() != tr.model_input) throw ContractViolation("closed-loop first input has wrong width");
    for (std::size_t t = 0; t < steps; ++t) {
        double* x = tr.inputs.data() + t * tr.model_input;
        if (t == 0) {
            std::copy(first.begin(), first.end(), x);
        } else {
            const double* prev = tr.outputs.data() + (t - 1) * tr.model_output;
            std::copy(prev, prev + tr.model_output, x);
        }
        step_into(p, topo, tr, t);
    }
    return tr;
}

Gradients run_backward(const LstmParams& p, const Topology& topo, const ForwardTrace& tr,
                       std::span<const double> output_grads, GradientRequest request) {
    if (output_grads.size() != tr.steps * tr.model_output) {
        throw ContractViolation("output gradients hold " + std::to_string(output_grads.size()) +
                                " values, trace needs " + std::to_string(tr.steps * tr.model_output));
    }
    if (tr.hidden != p.hidden_size() || tr.cell_input != p.input_size() || tr.cells != topo.cells()) {
        throw ContractViolation("trace was not produced by this model");
    }
    const std::size_t H = tr.hidden;
    const std::size_t K = tr.cell_input;
    const std::size_t N = tr.cells;
    const std::size_t G = 4 * H;
    const std::size_t DI = tr.model_input;
    const std::size_t DO = tr.model_output;
    const bool closed = tr.mode == LoopMode::closed;

    Gradients out;
    out.params = LstmParams::zeros(H, K, p.output_size());
    out.seed = HiddenState::zeros(N, H);
    out.inputs = Tensor::zeros({closed ? std::size_t{1} : tr.steps, DI});

    const double* w_in = p.input_weights().data().data();
    const double* w_rec = p.recurrent_weights().data().data();
    const double* w_out = p.output_weights().data().data();
    double* gw_in = out.params.input_weights().data().data();
    double* gw_rec = out.params.recurrent_weights().data().data();
    double* gw_out = out.params.output_weights().data().data();

    // Cell-input gradients are needed whenever they feed something: the
    // feedback edge, lateral wiring, or an explicit request.
    const bool need_dz = closed || topo.lateral || request.inputs;

    std::vector<double> dh_next(N * H, 0.0), dc_next(N * H, 0.0);
    std::vector<double> dh_prev(N * H), dc_prev(N * H);
    std::vector<double> dy(DO), dx(DI), dx_next(DI, 0.0);
    std::vector<double> dh(H), da(G), dz(K);

    for (std::size_t step = tr.steps; step-- > 0;) {
        const double* h_prev = step == 0 ? tr.seed.h.data().data() : tr.hidden_out.data() + (step - 1) * N * H;
        const double* c_prev = step == 0 ? tr.seed.c.data().data() : tr.cell_states.data() + (step - 1) * N * H;
        const double* h_now = tr.hidden_out.data() + step * N * H;

        for (std::size_t o = 0; o < DO; ++o) {
            dy[o] = output_grads[step * DO + o] + ((closed && step + 1 < tr.steps) ? dx_next[o] : 0.0);
        }
        std::fill(dh_prev.begin(), dh_prev.end(), 0.0);
        std::fill(dx.begin(), dx.end(), 0.0);

        for (std::size_t n = 0; n < N; ++n) {
            const double* hn = h_now + n * H;
            // Readout.
            for (std::size_t j = 0; j < H; ++j) dh[j] = dh_next[n * H + j];
            if (topo.lateral) {
                const double g = dy[n];
                for (std::size_t j = 0; j < H; ++j) {
                    dh[j] += w_out[j] * g;
                    if (request.params) gw_out[j] += g * hn[j];
                }
            } else {
                for (std::size_t o = 0; o < DO; ++o) {
                    const double g = dy[o];
                    if (g == 0.0) continue;
                    for (std::size_t j = 0; j < H; ++j) {
                        dh[j] += w_out[o * H + j] * g;
                        if (request.params) gw_out[o * H + j] += g * hn[j];
                    }
                }
            }

            const double* gate = tr.gates.data() + (step * N + n) * G;
            const double* tc = tr.cell_tanh.data() + (step * N + n) * H;
            const double* cp = c_prev + n * H;
            for (std::size_t j = 0; j < H; ++j) {
                const double ig = gate[j], fg = gate[H + j], cg = gate[2 * H + j], og = gate[3 * H + j];
                const double dc = dc_next[n * H + j] + dh[j] * og * (1.0 - tc[j] * tc[j]);
                da[j] = dc * cg * ig * (1.0 - ig);
                da[H + j] = dc * cp[j] * fg * (1.0 - fg);
                da[2 * H + j] = dc * ig * (1.0 - cg * cg);
                da[3 * H + j] = dh[j] * tc[j] * og * (1.0 - og);
                dc_prev[n * H + j] = dc * fg;
            }

            const double* z = tr.cell_inputs.data() + (step * N + n) * K;
            const double* hp = h_prev + n * H;
            double* dhp = dh_prev.data() + n * H;
            if (need_dz) std::fill(dz.begin(), dz.end(), 0.0);
            for (std::size_t r = 0; r < G; ++r) {
                const double d = da[r];
                if (request.params) {
                    double* gi = gw_in + r * K;
                    double* gr = gw_rec + r * H;
                    for (std::size_t k = 0; k < K; ++k) gi[k] += d * z[k];
                    for (std::size_t k = 0; k < H; ++k) gr[k] += d * hp[k];
                }
                const double* wi = w_in + r * K;
                const double* wr = w_rec + r * H;
                if (need_dz) {
                    for (std::size_t k = 0; k < K; ++k) dz[k] += wi[k] * d;
                }
                for (std::size_t k = 0; k < H; ++k) dhp[k] += wr[k] * d;
            }

            if (need_dz) {
                if (topo.lateral) {
                    dx[n] += dz[0];
                    for (std::size_t k = 0; k < GridModelParams::lateral_neighbors; ++k) {
                        const long m = neighbour(topo, n, k);
                        if (m < 0) continue;
                        const double* src = dz.data() + 1 + k * H;
                        double* dst = dh_prev.data() + m * H;
                        for (std::size_t j = 0; j < H; ++j) dst[j] += src[j];
                    }
                } else {
                    for (std::size_t k = 0; k < K; ++k) dx[k] += dz[k];
                }
            }
        }

        if (!closed) {
            if (request.inputs) std::copy(dx.begin(), dx.end(), out.inputs.row(step).begin());
        } else if (step == 0) {
            std::copy(dx.begin(), dx.end(), out.inputs.row(0).begin());
        } else {
            dx_next = dx;
        }
        dh_next.swap(dh_prev);
        dc_next.swap(dc_prev);
    }

    std::copy(dh_next.begin(), dh_next.end(), out.seed.h.data().begin());
    std::copy(dc_next.begin(), dc_next.end(), out.seed.c.data().begin());
    if (!out.seed.h.all_finite() || !out.seed.c.all_finite()) throw NumericError("non-finite gradient in backward pass");
    return out;
}

std::vector<double> flatten(std::span<const Tensor> seq, std::size_t width, const char* what) {
    std::vector<double> flat;
    flat.reserve(seq.size() * width);
    for (const Tensor& t : seq) {
        if (t.size() != width) throw ContractViolation(std::string(what) + " element has wrong width");
        flat.insert(flat.end(), t.data().begin(), t.data().end());
    }
    return flat;
}

}  // namespace

// LstmParams ---------------------------------------------------------------------

LstmParams::LstmParams(Tensor input_weights, Tensor recurrent_weights, Tensor output_weights)
    : w_in_(std::move(input_weights)), w_rec_(std::move(recurrent_weights)), w_out_(std::move(output_weights)) {
    if (w_rec_.rank() != 2 || w_in_.rank() != 2 || w_out_.rank() != 2) {
        throw ContractViolation("LSTM weights must be matrices");
    }
    hidden_ = w_rec_.extent(1);
    inputs_ = w_in_.extent(1);
    outputs_ = w_out_.extent(0);
    if (hidden_ == 0 || w_rec_.extent(0) != 4 * hidden_ || w_in_.extent(0) != 4 * hidden_ ||
        w_out_.extent(1) != hidden_) {
        throw ContractViolation("inconsistent LSTM weight shapes " + shape_string(w_in_.shape()) + ", " +
                                shape_string(w_rec_.shape()) + ", " + shape_string(w_out_.shape()));
    }
}

LstmParams LstmParams::zeros(std::size_t hidden, std::size_t inputs, std::size_t outputs) {
    return LstmParams(Tensor::zeros({4 * hidden, inputs}), Tensor::zeros({4 * hidden, hidden}),
                      Tensor::zeros({outputs, hidden}));
}

LstmParams LstmParams::random(std::size_t hidden, std::size_t inputs, std::size_t outputs, std::mt19937_64& rng) {
    LstmParams p = zeros(hidden, inputs, outputs);
    const double bound = 1.0 / std::sqrt(static_cast<double>(hidden));
    std::uniform_real_distribution<double> dist(-bound, bound);
    for (Tensor* w : {&p.w_in_, &p.w_rec_, &p.w_out_}) {
        for (double& v : w->data()) v = dist(rng);
    }
    return p;
}

std::size_t LstmParams::parameter_count() const noexcept { return w_in_.size() + w_rec_.size() + w_out_.size(); }

HiddenState HiddenState::zeros(std::size_t cells, std::size_t hidden) {
    return {Tensor::zeros({cells, hidden}), Tensor::zeros({cells, hidden})};
}

GridModelParams::GridModelParams(LstmParams c, std::size_t r, std::size_t co) : cell(std::move(c)), rows(r), cols(co) {
    if (rows == 0 || cols == 0) throw ConfigError("grid extents must be positive");
    if (cell.input_size() != cell_input_size(cell.hidden_size()) || cell.output_size() != 1) {
        throw ConfigError("grid cell must take 1 + 4H inputs and produce 1 output");
    }
}

GridModelParams GridModelParams::random(std::size_t hidden, std::size_t rows, std::size_t cols,
                                        std::mt19937_64& rng) {
    return GridModelParams(LstmParams::random(hidden, cell_input_size(hidden), 1, rng), rows, cols);
}

GridModelParams GridModelParams::zeros(std::size_t hidden, std::size_t rows, std::size_t cols) {
    return GridModelParams(LstmParams::zeros(hidden, cell_input_size(hidden), 1), rows, cols);
}

// ForwardTrace ---------------------------------------------------------------

std::span<const double> ForwardTrace::input(std::size_t t) const {
    return std::span<const double>(inputs).subspan(t * model_input, model_input);
}

std::span<const double> ForwardTrace::output(std::size_t t) const {
    return std::span<const double>(outputs).subspan(t * model_output, model_output);
}

std::span<const double> ForwardTrace::h_at(std::size_t t) const {
    return std::span<const double>(hidden_out).subspan(t * cells * hidden, cells * hidden);
}

std::span<const double> ForwardTrace::c_at(std::size_t t) const {
    return std::span<const double>(cell_states).subspan(t * cells * hidden, cells * hidden);
}

HiddenState ForwardTrace::state_after(std::size_t t) const {
    auto h = h_at(t);
    auto c = c_at(t);
    return {Tensor({cells, hidden}, {h.begin(), h.end()}), Tensor({cells, hidden}, {c.begin(), c.end()})};
}

Tensor ForwardTrace::output_tensor(std::size_t t) const {
    auto y = output(t);
    return Tensor({model_output}, {y.begin(), y.end()});
}

Tensor ForwardTrace::outputs_tensor() const { return Tensor({steps, model_output}, outputs); }

// Plain sequence model ---------------------------------------------------------

StepResult forward_step(const LstmParams& params, const HiddenState& state, const Tensor& input) {
    if (input.size() != params.input_size()) {
        throw ContractViolation("input width " + std::to_string(input.size()) + " does not match model input " +
                                std::to_string(params.input_size()));
    }
    if (!state.h.all_finite() || !state.c.all_finite()) throw ContractViolation("hidden state is not finite");
    ForwardTrace tr = run_open(params, Topology::single(), state, input.data(), 1);
    StepResult out{tr.state_after(0), tr.output_tensor(0), {}};
    out.trace = std::move(tr);
    return out;
}

ForwardTrace rollout_open(const LstmParams& params, const HiddenState& seed, std::span<const double> inputs,
                          std::size_t steps) {
    return run_open(params, Topology::single(), seed, inputs, steps);
}

ForwardTrace rollout_open(const LstmParams& params, const HiddenState& seed, std::span<const Tensor> inputs) {
    const auto flat = flatten(inputs, params.input_size(), "input sequence");
    return run_open(params, Topology::single(), seed, flat, inputs.size());
}

ForwardTrace rollout_closed(const LstmParams& params, const HiddenState& seed, std::span<const double> first_input,
                            std::size_t steps) {
    return run_closed(params, Topology::single(), seed, first_input, steps);
}

Gradients backward(const LstmParams& params, const ForwardTrace& trace, std::span<const double> output_grads,
                   GradientRequest request) {
    return run_backward(params, Topology::single(), trace, output_grads, request);
}

Gradients backward(const LstmParams& params, const ForwardTrace& trace, std::span<const Tensor> output_grads,
                   GradientRequest request) {
    if (output_grads.size() != trace.steps) throw ContractViolation("output gradient count differs from trace length");
    const auto flat = flatten(output_grads, trace.model_output, "output gradient");
    return run_backward(params, Topology::single(), trace, flat, request);
}

// Grid model -------------------------------------------------------------------

StepResult grid_forward_step(const GridModelParams& params, const HiddenState& state, const Tensor& field) {
    if (field.size() != params.cells()) {
        throw ConfigError("field of " + std::to_string(field.size()) + " values does not match " +
                          std::to_string(params.rows) + "x" + std::to_string(params.cols) + " grid");
    }
    ForwardTrace tr =
        run_open(params.cell, Topology::mesh(params.rows, params.cols), state, field.data(), 1);
    Tensor out = tr.output_tensor(0).reshaped({params.rows, params.cols});
    StepResult res{tr.state_after(0), std::move(out), {}};
    res.trace = std::move(tr);
    return res;
}

ForwardTrace grid_rollout_open(const GridModelParams& params, const HiddenState& seed,
                               std::span<const double> fields, std::size_t steps) {
    return run_open(params.cell, Topology::mesh(params.rows, params.cols), seed, fields, steps);
}

ForwardTrace grid_rollout_closed(const GridModelParams& params, const HiddenState& seed,
                                 std::span<const double> first_field, std::size_t steps) {
    return run_closed(params.cell, Topology::mesh(params.rows, params.cols), seed, first_field, steps);
}

Gradients grid_backward(const GridModelParams& params, const ForwardTrace& trace,
                        std::span<const double> output_grads, GradientRequest request) {
    return run_backward(params.cell, Topology::mesh(params.rows, params.cols), trace, output_grads, request);
}

// Model ------------------------------------------------------------------------

std::string to_string(ModelKind kind) { return kind == ModelKind::lstm ? "lstm" : "grid"; }

ModelKind model_kind_from_string(const std::string& name) {
    if (name == "lstm") return ModelKind::lstm;
    if (name == "grid") return ModelKind::grid;
    throw ValidationError("unknown model kind '" + name + "'");
}

ModelKind Model::kind() const noexcept {
    return std::holds_alternative<LstmParams>(impl_) ? ModelKind::lstm : ModelKind::grid;
}

const LstmParams& Model::cell() const {
    if (auto* p = std::get_if<LstmParams>(&impl_)) return *p;
    return std::get<GridModelParams>(impl_).cell;
}

LstmParams& Model::cell() {
    if (auto* p = std::get_if<LstmParams>(&impl_)) return *p;
    return std::get<GridModelParams>(impl_).cell;
}

const LstmParams& Model::lstm() const { return std::get<LstmParams>(impl_); }
const GridModelParams& Model::grid() const { return std::get<GridModelParams>(impl_); }

std::size_t Model::input_size() const {
    return kind() == ModelKind::lstm ? lstm().input_size() : grid().cells();
}

std::size_t Model::output_size() const {
    return kind() == ModelKind::lstm ? lstm().output_size() : grid().cells();
}

std::size_t Model::state_cells() const { return kind() == ModelKind::lstm ? 1 : grid().cells(); }
std::size_t Model::hidden_size() const { return cell().hidden_size(); }
HiddenState Model::zero_state() const { return HiddenState::zeros(state_cells(), hidden_size()); }

ForwardTrace Model::rollout_open(const HiddenState& seed, std::span<const double> inputs, std::size_t steps) const {
    if (kind() == ModelKind::lstm) return atune::rollout_open(lstm(), seed, inputs, steps);
    return grid_rollout_open(grid(), seed, inputs, steps);
}

ForwardTrace Model::rollout_closed(const HiddenState& seed, std::span<const double> first_input,
                                   std::size_t steps) const {
    if (kind() == ModelKind::lstm) return atune::rollout_closed(lstm(), seed, first_input, steps);
    return grid_rollout_closed(grid(), seed, first_input, steps);
}

Gradients Model::backward(const ForwardTrace& trace, std::span<const double> output_grads,
                          GradientRequest request) const {
    if (kind() == ModelKind::lstm) return atune::backward(lstm(), trace, output_grads, request);
    return grid_backward(grid(), trace, output_grads, request);
}

}  // namespace atune
