#include "dhen/grad_check.hpp"

#include <cmath>
#include <stdexcept>

namespace dhen {

namespace {

double eval_value(const ScalarFn& fn, std::vector<Tensor>& inputs) {
    Tape tape;
    Tensor loss = fn(tape, inputs);
    if (loss.size() != 1) throw std::invalid_argument("grad_check function must return a scalar");
    return loss.item();
}

}  // namespace

double grad_check(const ScalarFn& fn, std::vector<Tensor> inputs, double step) {
    if (step <= 0.0) throw std::invalid_argument("grad_check step must be positive");
    for (auto& t : inputs) t.set_requires_grad(true);

    double v0 = eval_value(fn, inputs);
    double v1 = eval_value(fn, inputs);
    if (v0 != v1) {
        throw std::runtime_error(
            "grad_check: function is non-deterministic (two evaluations differ); fix all seeds first");
    }

    // Analytic pass.
    for (auto& t : inputs) t.zero_grad();
    Tape tape;
    Tensor loss = fn(tape, inputs);
    if (loss.size() != 1) throw std::invalid_argument("grad_check function must return a scalar");
    tape.backward(loss);

    double max_err = 0.0;
    for (auto& t : inputs) {
        auto& grad = t.grad();
        auto& data = t.data();
        for (size_t i = 0; i < data.size(); ++i) {
            double saved = data[i];
            data[i] = saved + step;
            double fp = eval_value(fn, inputs);
            data[i] = saved - step;
            double fm = eval_value(fn, inputs);
            data[i] = saved;
            double numeric = (fp - fm) / (2.0 * step);
            double analytic = grad[i];
            double denom = std::max({std::abs(analytic), std::abs(numeric), 1e-8});
            max_err = std::max(max_err, std::abs(analytic - numeric) / denom);
        }
    }
    return max_err;
}

}  // namespace dhen
