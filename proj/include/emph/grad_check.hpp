#pragma once

#include <cmath>
#include <cstddef>
#include <functional>
#include <map>
#include <stdexcept>
#include <string>

#include "emph/tape.hpp"
#include "emph/tensor.hpp"

namespace emph {

using ParamsD = std::map<std::string, Tensor<double>>;
using BoundD = std::map<std::string, Tape<double>::Var>;

// Builds a scalar loss on the given tape from bound parameter vars.
using ScalarFn = std::function<Tape<double>::Var(Tape<double>&, const BoundD&)>;

struct GradCheckResult {
    double max_rel_err = 0.0;
    std::size_t checked = 0;
    std::size_t skipped_kinks = 0;
};

namespace detail {

inline double eval_scalar(const ScalarFn& f, const ParamsD& params) {
    Tape<double> tape;
    BoundD bound;
    for (const auto& [name, t] : params) bound[name] = tape.leaf(t);
    auto loss = f(tape, bound);
    if (tape.cols(loss) != 1 || tape.rows(loss) != 1)
        throw std::invalid_argument("grad_check: function is not scalar-valued");
    return tape.value(loss)[0];
}

}  // namespace detail

// Central differences at 64-bit, h=1e-5, rel err |a-n| / max(1,|a|,|n|).
// Coordinates sitting on a kink (one-sided slopes disagree) are skipped and
// counted. A non-deterministic f invalidates the whole check.
inline GradCheckResult grad_check(const ScalarFn& f, ParamsD params, double h = 1e-5) {
    double v1 = detail::eval_scalar(f, params);
    double v2 = detail::eval_scalar(f, params);
    if (v1 != v2)
        throw std::runtime_error("grad_check: function is not deterministic under fixed inputs");

    // analytic gradients
    std::map<std::string, std::vector<double>> analytic;
    {
        Tape<double> tape;
        BoundD bound;
        for (const auto& [name, t] : params) bound[name] = tape.leaf(t);
        auto loss = f(tape, bound);
        tape.backward(loss);
        for (const auto& [name, var] : bound) analytic[name] = tape.grad(var);
    }

    GradCheckResult res;
    for (auto& [name, t] : params) {
        for (std::size_t i = 0; i < t.values.size(); ++i) {
            double orig = t.values[i];
            t.values[i] = orig + h;
            double fp = detail::eval_scalar(f, params);
            t.values[i] = orig - h;
            double fm = detail::eval_scalar(f, params);
            t.values[i] = orig;

            double num = (fp - fm) / (2.0 * h);
            double right = (fp - v1) / h;
            double left = (v1 - fm) / h;
            // kink: the two one-sided slopes disagree badly relative to scale
            double scale = std::max({1.0, std::fabs(left), std::fabs(right)});
            if (std::fabs(right - left) > 1e-2 * scale) {
                ++res.skipped_kinks;
                continue;
            }
            double a = analytic[name][i];
            double rel = std::fabs(a - num) / std::max({1.0, std::fabs(a), std::fabs(num)});
            res.max_rel_err = std::max(res.max_rel_err, rel);
            ++res.checked;
        }
    }
    return res;
}

}  // namespace emph
