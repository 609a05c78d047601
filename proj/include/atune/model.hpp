#pragma once

#include <cstddef>
#include <cstdint>
#include <random>
#include <span>
#include <string>
#include <variant>
#include <vector>

#include "atune/tensor.hpp"

namespace atune {

/// Weights of a bias-free LSTM cell with a linear readout.
///
/// Gate rows are stacked as [input; forget; candidate; output], each block H
/// rows tall. The model has no bias vectors.
class LstmParams {
public:
    LstmParams() = default;
    LstmParams(Tensor input_weights, Tensor recurrent_weights, Tensor output_weights);

    static LstmParams zeros(std::size_t hidden, std::size_t inputs, std::size_t outputs);
    // Uniform in [-1/sqrt(H), 1/sqrt(H)].
    static LstmParams random(std::size_t hidden, std::size_t inputs, std::size_t outputs, std::mt19937_64& rng);

    std::size_t hidden_size() const noexcept { return hidden_; }
    std::size_t input_size() const noexcept { return inputs_; }
    std::size_t output_size() const noexcept { return outputs_; }
    std::size_t parameter_count() const noexcept;

    const Tensor& input_weights() const noexcept { return w_in_; }
    const Tensor& recurrent_weights() const noexcept { return w_rec_; }
    const Tensor& output_weights() const noexcept { return w_out_; }
    Tensor& input_weights() noexcept { return w_in_; }
    Tensor& recurrent_weights() noexcept { return w_rec_; }
    Tensor& output_weights() noexcept { return w_out_; }

    friend bool operator==(const LstmParams&, const LstmParams&) = default;

private:
    std::size_t hidden_ = 0;
    std::size_t inputs_ = 0;
    std::size_t outputs_ = 0;
    Tensor w_in_;
    Tensor w_rec_;
    Tensor w_out_;
};

/// Recurrent state: hidden outputs `h` and cell states `c`, both shaped
/// [cells x H] (cells == 1 for the plain sequence model).
struct HiddenState {
    Tensor h;
    Tensor c;

    static HiddenState zeros(std::size_t cells, std::size_t hidden);
    std::size_t cells() const { return h.extent(0); }
    std::size_t hidden() const { return h.extent(1); }

    friend bool operator==(const HiddenState&, const HiddenState&) = default;
};

/// One shared LSTM cell replicated over a rows x cols mesh. Each position sees
/// its own scalar input plus the previous hidden outputs of its four
/// neighbours (up, down, left, right), zero outside the mesh.
struct GridModelParams {
    static constexpr std::size_t lateral_neighbors = 4;

    LstmParams cell;
    std::size_t rows = 0;
    std::size_t cols = 0;

    GridModelParams() = default;
    GridModelParams(LstmParams cell, std::size_t rows, std::size_t cols);

    static std::size_t cell_input_size(std::size_t hidden) { return 1 + lateral_neighbors * hidden; }
    static GridModelParams random(std::size_t hidden, std::size_t rows, std::size_t cols, std::mt19937_64& rng);
    static GridModelParams zeros(std::size_t hidden, std::size_t rows, std::size_t cols);

    std::size_t cells() const noexcept { return rows * cols; }

    friend bool operator==(const GridModelParams&, const GridModelParams&) = default;
};

enum class LoopMode { open, closed };

/// Everything recorded during a forward rollout. Backward passes read from it
/// and never recompute activations.
struct ForwardTrace {
    LoopMode mode = LoopMode::open;
    std::size_t steps = 0;
    std::size_t cells = 1;
    std::size_t hidden = 0;
    std::size_t cell_input = 0;    // width of each cell's input vector
    std::size_t model_input = 0;   // width of one external input
    std::size_t model_output = 0;  // width of one prediction
    HiddenState seed;

    std::vector<double> inputs;       // steps x model_input (fed inputs, including fed-back outputs)
    std::vector<double> cell_inputs;  // steps x cells x cell_input
    std::vector<double> preacts;      // steps x cells x 4H
    std::vector<double> gates;        // steps x cells x 4H, after squashing
    std::vector<double> cell_states;  // steps x cells x H
    std::vector<double> cell_tanh;    // steps x cells x H
    std::vector<double> hidden_out;   // steps x cells x H
    std::vector<double> outputs;      // steps x model_output

    std::span<const double> input(std::size_t t) const;
    std::span<const double> output(std::size_t t) const;
    std::span<const double> h_at(std::size_t t) const;
    std::span<const double> c_at(std::size_t t) const;
    // State after step t (t in [0, steps)).
    HiddenState state_after(std::size_t t) const;
    Tensor output_tensor(std::size_t t) const;
    Tensor outputs_tensor() const;  // [steps x model_output]
};

struct GradientRequest {
    bool params = true;
    bool inputs = true;
};

struct Gradients {
    LstmParams params;  // same shapes as the model weights (zero when not requested)
    HiddenState seed;
    // Open loop: [steps x model_input]. Closed loop: [1 x model_input] for the
    // first input, the only external one.
    Tensor inputs;
};

struct StepResult {
    HiddenState state;
    Tensor output;
    ForwardTrace trace;
};

// Plain sequence model ---------------------------------------------------------

StepResult forward_step(const LstmParams& params, const HiddenState& state, const Tensor& input);

ForwardTrace rollout_open(const LstmParams& params, const HiddenState& seed, std::span<const double> inputs,
                          std::size_t steps);
ForwardTrace rollout_open(const LstmParams& params, const HiddenState& seed, std::span<const Tensor> inputs);
ForwardTrace rollout_closed(const LstmParams& params, const HiddenState& seed, std::span<const double> first_input,
                            std::size_t steps);

Gradients backward(const LstmParams& params, const ForwardTrace& trace, std::span<const double> output_grads,
                   GradientRequest request = {});
Gradients backward(const LstmParams& params, const ForwardTrace& trace, std::span<const Tensor> output_grads,
                   GradientRequest request = {});

// Grid model -------------------------------------------------------------------

StepResult grid_forward_step(const GridModelParams& params, const HiddenState& state, const Tensor& field);

ForwardTrace grid_rollout_open(const GridModelParams& params, const HiddenState& seed,
                               std::span<const double> fields, std::size_t steps);
ForwardTrace grid_rollout_closed(const GridModelParams& params, const HiddenState& seed,
                                 std::span<const double> first_field, std::size_t steps);

Gradients grid_backward(const GridModelParams& params, const ForwardTrace& trace,
                        std::span<const double> output_grads, GradientRequest request = {});

// Either model behind one interface --------------------------------------------

enum class ModelKind { lstm, grid };

std::string to_string(ModelKind kind);
ModelKind model_kind_from_string(const std::string& name);

class Model {
public:
    Model() = default;
    Model(LstmParams params) : impl_(std::move(params)) {}
    Model(GridModelParams params) : impl_(std::move(params)) {}

    ModelKind kind() const noexcept;
    const LstmParams& cell() const;
    LstmParams& cell();
    const LstmParams& lstm() const;
    const GridModelParams& grid() const;

    std::size_t input_size() const;   // width of one external input
    std::size_t output_size() const;  // width of one prediction
    std::size_t state_cells() const;
    std::size_t hidden_size() const;
    HiddenState zero_state() const;

    ForwardTrace rollout_open(const HiddenState& seed, std::span<const double> inputs, std::size_t steps) const;
    ForwardTrace rollout_closed(const HiddenState& seed, std::span<const double> first_input,
                                std::size_t steps) const;
    Gradients backward(const ForwardTrace& trace, std::span<const double> output_grads,
                       GradientRequest request = {}) const;

    friend bool operator==(const Model&, const Model&) = default;

private:
    std::variant<LstmParams, GridModelParams> impl_;
};

}  // namespace atune
