#pragma once

#include <functional>
#include <span>
#include <string>
#include <vector>

#include "cohdial/nn/tape.hpp"

namespace cohdial::nn {

struct GradCheckOptions {
    double step = 1e-4;
    // Relative error is |analytic - numeric| / max(|analytic|, |numeric|, floor);
    // the floor keeps vanishing gradients from dividing by ~0.
    double floor = 1e-6;
    // Check at most this many elements per parameter (0 = all), spread evenly.
    std::size_t max_elements = 0;
};

struct ParamGradReport {
    std::string name;
    std::size_t checked = 0;
    double max_rel_error = 0.0;
    std::size_t worst_index = 0;
    double analytic = 0.0;
    double numeric = 0.0;
};

struct GradCheckReport {
    // False when two evaluations at identical parameters disagreed; no
    // comparison is made in that case.
    bool deterministic = true;
    double tolerance = 0.0;
    double max_rel_error = 0.0;
    std::vector<ParamGradReport> params;

    bool passed() const { return deterministic && max_rel_error < tolerance; }
};

using LossClosure = std::function<Var(Tape &)>;

// Compares tape gradients with central differences. The closure must build
// the same loss on every call (pin its randomness to a fixed seed).
GradCheckReport grad_check(const LossClosure &loss, std::span<Parameter *const> params,
                           double tolerance, const GradCheckOptions &options = {});

} // namespace cohdial::nn
