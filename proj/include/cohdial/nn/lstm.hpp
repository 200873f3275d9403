#pragma once

#include <string>
#include <vector>

#include "cohdial/nn/ops.hpp"

namespace cohdial::nn {

// Hidden and cell vectors for every layer, bottom layer first.
struct LSTMState {
    std::vector<Var> h;
    std::vector<Var> c;
};

// Stacked LSTM. Layer l has weight (4*hidden, in_l + hidden) applied to
// [x; h_prev] and bias (4*hidden); gate order is input, forget, cell, output.
class LSTMStack {
  public:
    LSTMStack() = default;
    LSTMStack(ParameterStore &store, const std::string &prefix, std::size_t input_dim,
              std::size_t hidden_dim, std::size_t num_layers);

    std::size_t input_dim() const { return input_dim_; }
    std::size_t hidden_dim() const { return hidden_dim_; }
    std::size_t num_layers() const { return weights_.size(); }

    LSTMState zero_state(Tape &tape) const;

    // One timestep through all layers. Dropout (rate p, training only) is
    // applied to the inputs of layers above the first.
    LSTMState step(Tape &tape, Var input, const LSTMState &prev, double dropout_p = 0.0,
                   bool training = false, Rng *rng = nullptr) const;

    struct Output {
        std::vector<Var> top;  // top-layer hidden state per timestep
        LSTMState final;
    };
    Output forward(Tape &tape, std::span<const Var> inputs, LSTMState initial,
                   double dropout_p = 0.0, bool training = false, Rng *rng = nullptr) const;

  private:
    std::size_t input_dim_ = 0;
    std::size_t hidden_dim_ = 0;
    std::vector<Parameter *> weights_;
    std::vector<Parameter *> biases_;
};

} // namespace cohdial::nn
