#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "cohdial/nn/tensor.hpp"

namespace cohdial::nn {

struct AdamConfig {
    double lr = 1e-3;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double epsilon = 1e-8;
};

// First/second moment estimates per parameter, bias-corrected updates.
class AdamState {
  public:
    AdamState() = default;
    AdamState(std::span<Parameter *const> params, AdamConfig config);

    // Applies one update from each parameter's grad. Parameters must be the
    // ones (same order and shapes) the state was created for.
    void step(std::span<Parameter *const> params);

    std::int64_t step_count() const { return t_; }
    const AdamConfig &config() const { return config_; }
    const std::vector<Tensor> &first_moments() const { return m_; }
    const std::vector<Tensor> &second_moments() const { return v_; }

  private:
    AdamConfig config_;
    std::vector<Tensor> m_;
    std::vector<Tensor> v_;
    std::int64_t t_ = 0;
};

// Rescales all gradients so their global L2 norm is at most max_norm.
// Returns the norm before clipping.
double clip_grad_norm(std::span<Parameter *const> params, double max_norm);

} // namespace cohdial::nn
