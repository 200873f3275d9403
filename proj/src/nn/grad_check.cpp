#include "cohdial/nn/grad_check.hpp"

#include <algorithm>
#include <cmath>

namespace cohdial::nn {

namespace {

double evaluate(const LossClosure &loss) {
    Tape tape(false);
    return loss(tape).item();
}

} // namespace

GradCheckReport grad_check(const LossClosure &loss, std::span<Parameter *const> params,
                           double tolerance, const GradCheckOptions &options) {
    GradCheckReport report;
    report.tolerance = tolerance;

    std::vector<Tensor> saved_grads;
    for (auto *p : params) {
        saved_grads.push_back(p->grad);
        p->grad.fill(0.0);
    }

    double reference = 0.0;
    {
        Tape tape;
        Var l = loss(tape);
        reference = l.item();
        tape.backward(l);
    }
    if (evaluate(loss) != reference) {
        report.deterministic = false;
        for (std::size_t k = 0; k < params.size(); ++k)
            params[k]->grad = saved_grads[k];
        return report;
    }

    for (auto *p : params) {
        ParamGradReport pr;
        pr.name = p->name;
        const std::size_t n = p->value.size();
        std::size_t count = options.max_elements ? std::min(n, options.max_elements) : n;
        for (std::size_t k = 0; k < count; ++k) {
            std::size_t i = count == n ? k : k * n / count;
            double original = p->value[i];
            p->value[i] = original + options.step;
            double up = evaluate(loss);
            p->value[i] = original - options.step;
            double down = evaluate(loss);
            p->value[i] = original;

            double numeric = (up - down) / (2.0 * options.step);
            double analytic = p->grad[i];
            double denom = std::max({std::abs(analytic), std::abs(numeric), options.floor});
            double err = std::abs(analytic - numeric) / denom;
            if (pr.checked == 0 || err > pr.max_rel_error) {
                pr.max_rel_error = err;
                pr.worst_index = i;
                pr.analytic = analytic;
                pr.numeric = numeric;
            }
            ++pr.checked;
        }
        report.max_rel_error = std::max(report.max_rel_error, pr.max_rel_error);
        report.params.push_back(pr);
    }

    for (std::size_t k = 0; k < params.size(); ++k)
        params[k]->grad = saved_grads[k];
    return report;
}

} // namespace cohdial::nn
