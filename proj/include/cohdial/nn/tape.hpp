#pragma once

#include <deque>
#include <functional>
#include <unordered_map>

#include "cohdial/nn/tensor.hpp"

namespace cohdial::nn {

class Tape;

// Handle to a value recorded on a Tape. Cheap to copy; valid as long as the
// tape lives.
class Var {
  public:
    Var() = default;

    const Tensor &value() const;
    const Shape &shape() const { return value().shape(); }
    std::size_t size() const { return value().size(); }
    double item() const { return value().item(); }
    // Gradient after Tape::backward (zeros if the node took no part).
    const Tensor &grad() const;
    bool requires_grad() const;

    Tape *tape() const { return tape_; }
    std::size_t id() const { return id_; }
    bool valid() const { return tape_ != nullptr; }

  private:
    friend class Tape;
    Var(Tape *tape, std::size_t id) : tape_(tape), id_(id) {}

    Tape *tape_ = nullptr;
    std::size_t id_ = 0;
};

// Records operations in execution order; backward() replays them in reverse,
// so every node is visited exactly once. A tape with gradients disabled
// keeps only forward values.
class Tape {
  public:
    // Receives the tape and the gradient of the node's output.
    using Backward = std::function<void(Tape &, const Tensor &)>;

    explicit Tape(bool grad_enabled = true) : grad_enabled_(grad_enabled) {}
    Tape(const Tape &) = delete;
    Tape &operator=(const Tape &) = delete;

    bool grad_enabled() const { return grad_enabled_; }

    Var constant(Tensor value);
    // Leaf whose gradient is kept but not written anywhere.
    Var variable(Tensor value);
    // Leaf bound to a parameter; repeated calls return the same node and
    // backward() adds the node gradient into Parameter::grad.
    Var param(Parameter &p);

    // Records an op result. `requires_grad` should be true iff any input
    // requires a gradient; `fn` may be empty otherwise. Throws NumericalError
    // on non-finite values.
    Var record(Tensor value, bool requires_grad, Backward fn);

    // Seeds d(loss)/d(loss) = 1 and propagates. Loss must be scalar.
    void backward(Var loss);

    const Tensor &value(std::size_t id) const { return nodes_[id].value; }
    bool requires_grad(std::size_t id) const { return nodes_[id].requires_grad; }
    // Gradient slot of a node, allocated (zeroed) on first access.
    Tensor &grad(std::size_t id);

    std::size_t size() const { return nodes_.size(); }

  private:
    struct Node {
        Tensor value;
        Tensor grad;
        bool requires_grad = false;
        bool has_grad = false;
        Backward fn;
        Parameter *param = nullptr;
    };

    bool grad_enabled_;
    std::deque<Node> nodes_;
    std::unordered_map<const Parameter *, std::size_t> param_nodes_;
    Tensor empty_grad_;
};

} // namespace cohdial::nn
