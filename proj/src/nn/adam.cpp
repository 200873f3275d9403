#include "cohdial/nn/adam.hpp"

#include <cmath>

#include "cohdial/errors.hpp"

namespace cohdial::nn {

AdamState::AdamState(std::span<Parameter *const> params, AdamConfig config) : config_(config) {
    for (const auto *p : params) {
        m_.emplace_back(p->value.shape());
        v_.emplace_back(p->value.shape());
    }
}

void AdamState::step(std::span<Parameter *const> params) {
    if (params.size() != m_.size())
        throw ShapeError("Adam state tracks " + std::to_string(m_.size()) + " parameters, got " +
                         std::to_string(params.size()));
    ++t_;
    const double b1 = config_.beta1, b2 = config_.beta2;
    const double c1 = 1.0 - std::pow(b1, double(t_));
    const double c2 = 1.0 - std::pow(b2, double(t_));
    for (std::size_t k = 0; k < params.size(); ++k) {
        Parameter &p = *params[k];
        if (p.value.shape() != m_[k].shape() || p.grad.shape() != m_[k].shape())
            throw ShapeError("Adam: parameter '" + p.name + "' changed shape");
        auto w = p.value.data();
        auto g = p.grad.data();
        auto m = m_[k].data();
        auto v = v_[k].data();
        for (std::size_t i = 0; i < w.size(); ++i) {
            m[i] = b1 * m[i] + (1.0 - b1) * g[i];
            v[i] = b2 * v[i] + (1.0 - b2) * g[i] * g[i];
            double mhat = m[i] / c1;
            double vhat = v[i] / c2;
            w[i] -= config_.lr * mhat / (std::sqrt(vhat) + config_.epsilon);
        }
    }
}

double clip_grad_norm(std::span<Parameter *const> params, double max_norm) {
    double ss = 0.0;
    for (const auto *p : params)
        for (double g : p->grad.data())
            ss += g * g;
    double norm = std::sqrt(ss);
    if (max_norm > 0.0 && norm > max_norm) {
        double k = max_norm / norm;
        for (auto *p : params)
            for (auto &g : p->grad.data())
                g *= k;
    }
    return norm;
}

} // namespace cohdial::nn
