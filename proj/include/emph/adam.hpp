#pragma once

#include <cmath>
#include <cstddef>
#include <map>
#include <stdexcept>
#include <string>
#include <vector>

#include "emph/tensor.hpp"

namespace emph {

// Bias-corrected Adam, one moment pair per named parameter.
template <typename T>
class AdamState {
public:
    explicit AdamState(double lr, double beta1 = 0.9, double beta2 = 0.999,
                       double eps = 1e-8)
        : lr_(lr), beta1_(beta1), beta2_(beta2), eps_(eps) {}

    long step_count() const { return t_; }
    double lr() const { return lr_; }

    void begin_step() { ++t_; }

    void update(const std::string& name, Tensor<T>& param, const std::vector<T>& grad) {
        if (grad.size() != param.size())
            throw std::invalid_argument("adam: grad size mismatch for '" + name + "': " +
                                        std::to_string(grad.size()) + " vs " +
                                        std::to_string(param.size()));
        auto& m = m_[name];
        auto& v = v_[name];
        if (m.empty()) {
            m.assign(param.size(), T(0));
            v.assign(param.size(), T(0));
        }
        double bc1 = 1.0 - std::pow(beta1_, static_cast<double>(t_));
        double bc2 = 1.0 - std::pow(beta2_, static_cast<double>(t_));
        for (std::size_t i = 0; i < param.size(); ++i) {
            double g = static_cast<double>(grad[i]);
            m[i] = static_cast<T>(beta1_ * m[i] + (1.0 - beta1_) * g);
            v[i] = static_cast<T>(beta2_ * v[i] + (1.0 - beta2_) * g * g);
            double mhat = static_cast<double>(m[i]) / bc1;
            double vhat = static_cast<double>(v[i]) / bc2;
            param.values[i] -= static_cast<T>(lr_ * mhat / (std::sqrt(vhat) + eps_));
        }
    }

private:
    double lr_, beta1_, beta2_, eps_;
    long t_ = 0;
    std::map<std::string, std::vector<T>> m_, v_;
};

}  // namespace emph
