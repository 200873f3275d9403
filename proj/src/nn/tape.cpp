#include "cohdial/nn/tape.hpp"

#include "cohdial/errors.hpp"

namespace cohdial::nn {

const Tensor &Var::value() const { return tape_->value(id_); }

bool Var::requires_grad() const { return tape_->requires_grad(id_); }

const Tensor &Var::grad() const { return tape_->grad(id_); }

Var Tape::constant(Tensor value) { return record(std::move(value), false, {}); }

Var Tape::variable(Tensor value) { return record(std::move(value), grad_enabled_, {}); }

Var Tape::param(Parameter &p) {
    auto it = param_nodes_.find(&p);
    if (it != param_nodes_.end())
        return Var(this, it->second);
    Var v = record(p.value, grad_enabled_, {});
    nodes_[v.id()].param = &p;
    param_nodes_.emplace(&p, v.id());
    return v;
}

Var Tape::record(Tensor value, bool requires_grad, Backward fn) {
    if (!value.all_finite())
        throw NumericalError("non-finite value produced at tape node " +
                             std::to_string(nodes_.size()));
    Node node;
    node.value = std::move(value);
    node.requires_grad = grad_enabled_ && requires_grad;
    if (node.requires_grad)
        node.fn = std::move(fn);
    nodes_.push_back(std::move(node));
    return Var(this, nodes_.size() - 1);
}

Tensor &Tape::grad(std::size_t id) {
    Node &n = nodes_[id];
    if (!n.has_grad) {
        n.grad = Tensor(n.value.shape());
        n.has_grad = true;
    }
    return n.grad;
}

void Tape::backward(Var loss) {
    if (loss.tape() != this)
        throw InputError("loss was not recorded on this tape");
    if (loss.size() != 1)
        throw ShapeError("backward() needs a scalar loss, got shape " + to_string(loss.shape()));
    for (auto &n : nodes_) {
        if (n.has_grad)
            n.grad.fill(0.0);
    }
    grad(loss.id())[0] = 1.0;
    for (std::size_t id = loss.id() + 1; id-- > 0;) {
        Node &n = nodes_[id];
        if (!n.has_grad || !n.requires_grad)
            continue;
        if (n.fn)
            n.fn(*this, n.grad);
        if (n.param) {
            auto dst = n.param->grad.data();
            auto src = n.grad.data();
            for (std::size_t i = 0; i < dst.size(); ++i)
                dst[i] += src[i];
        }
    }
}

} // namespace cohdial::nn
