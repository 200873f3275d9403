#include "cohdial/nn/lstm.hpp"

#include "cohdial/errors.hpp"

namespace cohdial::nn {

LSTMStack::LSTMStack(ParameterStore &store, const std::string &prefix, std::size_t input_dim,
                     std::size_t hidden_dim, std::size_t num_layers)
    : input_dim_(input_dim), hidden_dim_(hidden_dim) {
    if (input_dim == 0 || hidden_dim == 0 || num_layers == 0)
        throw ShapeError("LSTM dimensions must be >= 1");
    for (std::size_t l = 0; l < num_layers; ++l) {
        std::size_t in = l == 0 ? input_dim : hidden_dim;
        auto tag = prefix + ".l" + std::to_string(l);
        weights_.push_back(&store.create(tag + ".weight", {4 * hidden_dim, in + hidden_dim}));
        biases_.push_back(&store.create(tag + ".bias", {4 * hidden_dim}));
    }
}

LSTMState LSTMStack::zero_state(Tape &tape) const {
    LSTMState s;
    for (std::size_t l = 0; l < num_layers(); ++l) {
        s.h.push_back(tape.constant(Tensor({hidden_dim_})));
        s.c.push_back(tape.constant(Tensor({hidden_dim_})));
    }
    return s;
}

LSTMState LSTMStack::step(Tape &tape, Var input, const LSTMState &prev, double dropout_p,
                          bool training, Rng *rng) const {
    if (input.value().rank() != 1 || input.size() != input_dim_)
        throw ShapeError("LSTM input has shape " + to_string(input.shape()) + ", expected (" +
                         std::to_string(input_dim_) + ")");
    if (prev.h.size() != num_layers() || prev.c.size() != num_layers())
        throw ShapeError("LSTM state has the wrong number of layers");
    const std::size_t H = hidden_dim_;
    LSTMState next;
    Var x = input;
    for (std::size_t l = 0; l < num_layers(); ++l) {
        if (l > 0 && training && dropout_p > 0.0) {
            if (!rng)
                throw InputError("LSTM dropout needs a random generator");
            x = dropout(x, dropout_p, training, *rng);
        }
        Var xh[] = {x, prev.h[l]};
        Var gates = add(matmul(tape.param(*weights_[l]), concat(xh)), tape.param(*biases_[l]));
        Var i = sigmoid(slice(gates, 0, H));
        Var f = sigmoid(slice(gates, H, H));
        Var g = tanh(slice(gates, 2 * H, H));
        Var o = sigmoid(slice(gates, 3 * H, H));
        Var c = add(mul(f, prev.c[l]), mul(i, g));
        Var h = mul(o, tanh(c));
        next.h.push_back(h);
        next.c.push_back(c);
        x = h;
    }
    return next;
}

LSTMStack::Output LSTMStack::forward(Tape &tape, std::span<const Var> inputs, LSTMState initial,
                                     double dropout_p, bool training, Rng *rng) const {
    Output out;
    out.final = std::move(initial);
    for (const Var &x : inputs) {
        out.final = step(tape, x, out.final, dropout_p, training, rng);
        out.top.push_back(out.final.h.back());
    }
    return out;
}

} // namespace cohdial::nn
