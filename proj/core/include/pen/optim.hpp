#pragma once

#include <cmath>
#include <vector>

#include "pen/checkpoint.hpp"

namespace pen {

struct AdamConfig {
    double learning_rate = 1e-3;
    double beta_m = 0.9;
    double beta_v = 0.999;
    double epsilon = 1e-8;
};

/// Adaptive-moment updates with bias correction over every parameter of a set.
template <typename T>
class Adam {
public:
    Adam(ParameterSet<T>& params, AdamConfig cfg) : params_(params), cfg_(cfg)
    {
        for (const auto& p : params_.items()) {
            m_.emplace_back(p.value.size(), T{0});
            v_.emplace_back(p.value.size(), T{0});
        }
    }

    void step()
    {
        ++t_;
        const double bc_m = 1.0 - std::pow(cfg_.beta_m, static_cast<double>(t_));
        const double bc_v = 1.0 - std::pow(cfg_.beta_v, static_cast<double>(t_));
        const auto b1 = static_cast<T>(cfg_.beta_m);
        const auto b2 = static_cast<T>(cfg_.beta_v);
        const auto lr = static_cast<T>(cfg_.learning_rate);
        const auto eps = static_cast<T>(cfg_.epsilon);
        const auto inv_bc_m = static_cast<T>(1.0 / bc_m);
        const auto inv_bc_v = static_cast<T>(1.0 / bc_v);
        std::size_t k = 0;
        for (auto& p : params_.items()) {
            auto& m = m_[k];
            auto& v = v_[k];
            for (std::size_t i = 0; i < p.value.size(); ++i) {
                const T g = p.grad[i];
                m[i] = b1 * m[i] + (T{1} - b1) * g;
                v[i] = b2 * v[i] + (T{1} - b2) * g * g;
                const T mhat = m[i] * inv_bc_m;
                const T vhat = v[i] * inv_bc_v;
                p.value[i] -= lr * mhat / (std::sqrt(vhat) + eps);
            }
            ++k;
        }
    }

    std::size_t steps() const { return t_; }

private:
    ParameterSet<T>& params_;
    AdamConfig cfg_;
    std::vector<std::vector<T>> m_;
    std::vector<std::vector<T>> v_;
    std::size_t t_ = 0;
};

}  // namespace pen
