#include "cohdial/nn/tensor.hpp"

#include <cmath>

#include "cohdial/errors.hpp"

namespace cohdial::nn {

std::size_t numel(const Shape &shape) {
    std::size_t n = 1;
    for (auto d : shape)
        n *= d;
    return n;
}

std::string to_string(const Shape &shape) {
    std::string out = "(";
    for (std::size_t i = 0; i < shape.size(); ++i) {
        if (i)
            out += "x";
        out += std::to_string(shape[i]);
    }
    return out + ")";
}

Tensor::Tensor(Shape shape, double fill) : shape_(std::move(shape)), data_(numel(shape_), fill) {}

Tensor::Tensor(Shape shape, std::vector<double> data)
    : shape_(std::move(shape)), data_(std::move(data)) {
    if (numel(shape_) != data_.size())
        throw ShapeError("tensor data length " + std::to_string(data_.size()) +
                         " does not match shape " + to_string(shape_));
}

double Tensor::item() const {
    if (data_.size() != 1)
        throw ShapeError("item() on tensor of shape " + to_string(shape_));
    return data_[0];
}

void Tensor::fill(double v) {
    for (auto &x : data_)
        x = v;
}

bool Tensor::all_finite() const {
    for (double x : data_)
        if (!std::isfinite(x))
            return false;
    return true;
}

Parameter &ParameterStore::create(const std::string &name, Shape shape) {
    if (find(name))
        throw InputError("duplicate parameter '" + name + "'");
    auto p = std::make_unique<Parameter>();
    p->name = name;
    p->value = Tensor(shape);
    p->grad = Tensor(std::move(shape));
    params_.push_back(std::move(p));
    return *params_.back();
}

Parameter *ParameterStore::find(const std::string &name) {
    for (auto &p : params_)
        if (p->name == name)
            return p.get();
    return nullptr;
}

const Parameter *ParameterStore::find(const std::string &name) const {
    for (const auto &p : params_)
        if (p->name == name)
            return p.get();
    return nullptr;
}

Parameter &ParameterStore::get(const std::string &name) {
    auto *p = find(name);
    if (!p)
        throw InputError("unknown parameter '" + name + "'");
    return *p;
}

std::vector<Parameter *> ParameterStore::all() {
    std::vector<Parameter *> out;
    for (auto &p : params_)
        out.push_back(p.get());
    return out;
}

std::vector<const Parameter *> ParameterStore::all() const {
    std::vector<const Parameter *> out;
    for (const auto &p : params_)
        out.push_back(p.get());
    return out;
}

std::size_t ParameterStore::element_count() const {
    std::size_t n = 0;
    for (const auto &p : params_)
        n += p->value.size();
    return n;
}

void ParameterStore::zero_grad() {
    for (auto &p : params_)
        p->grad.fill(0.0);
}

void ParameterStore::init_uniform(Rng &rng, double scale) {
    std::uniform_real_distribution<double> dist(-scale, scale);
    for (auto &p : params_) {
        if (p->value.rank() < 2) {
            p->value.fill(0.0);
            continue;
        }
        for (auto &v : p->value.data())
            v = dist(rng);
    }
}

} // namespace cohdial::nn
