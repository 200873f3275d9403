#pragma once

#include <cstddef>
#include <memory>
#include <random>
#include <span>
#include <string>
#include <vector>

namespace cohdial::nn {

using Shape = std::vector<std::size_t>;
using Rng = std::mt19937_64;

std::size_t numel(const Shape &shape);
std::string to_string(const Shape &shape);

// Dense row-major array of doubles.
class Tensor {
  public:
    Tensor() = default;
    explicit Tensor(Shape shape, double fill = 0.0);
    Tensor(Shape shape, std::vector<double> data);

    static Tensor scalar(double v) { return Tensor({1}, {v}); }
    static Tensor vector(std::vector<double> v) {
        Shape s{v.size()};
        return Tensor(std::move(s), std::move(v));
    }

    const Shape &shape() const { return shape_; }
    std::size_t size() const { return data_.size(); }
    std::size_t rank() const { return shape_.size(); }
    std::size_t rows() const { return shape_.empty() ? 0 : shape_[0]; }
    std::size_t cols() const { return shape_.size() < 2 ? 1 : shape_[1]; }

    std::span<double> data() { return data_; }
    std::span<const double> data() const { return data_; }
    std::vector<double> &storage() { return data_; }

    double &operator[](std::size_t i) { return data_[i]; }
    double operator[](std::size_t i) const { return data_[i]; }
    double &at(std::size_t r, std::size_t c) { return data_[r * cols() + c]; }
    double at(std::size_t r, std::size_t c) const { return data_[r * cols() + c]; }

    // Value of a one-element tensor.
    double item() const;
    void fill(double v);
    bool all_finite() const;

    bool operator==(const Tensor &other) const = default;

  private:
    Shape shape_;
    std::vector<double> data_;
};

// A named, trainable tensor and its accumulated gradient.
struct Parameter {
    std::string name;
    Tensor value;
    Tensor grad;
};

// Owns parameters in creation order; addresses are stable.
class ParameterStore {
  public:
    Parameter &create(const std::string &name, Shape shape);
    Parameter *find(const std::string &name);
    const Parameter *find(const std::string &name) const;
    Parameter &get(const std::string &name);

    std::size_t size() const { return params_.size(); }
    std::vector<Parameter *> all();
    std::vector<const Parameter *> all() const;
    std::size_t element_count() const;

    void zero_grad();
    // Uniform in [-scale, scale] for matrices, zeros for vectors (biases).
    void init_uniform(Rng &rng, double scale);

  private:
    std::vector<std::unique_ptr<Parameter>> params_;
};

} // namespace cohdial::nn
