#pragma once

#include <cmath>
#include <vector>

#include "sqlpar/nn/params.hpp"

namespace sqlpar::nn {

struct AdamConfig {
    double lr = 1e-3;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
    double clip = 5.0;  // global gradient norm; <= 0 disables
};

class Adam {
public:
    Adam(ParameterStore& ps, AdamConfig cfg = {}) : ps_(&ps), cfg_(cfg) {
        for (std::size_t i = 0; i < ps.size(); ++i) {
            m_.emplace_back(ps[i].value.size(), 0.0);
            v_.emplace_back(ps[i].value.size(), 0.0);
        }
    }

    /// Clips, applies one update from the accumulated grads, then zeroes them.
    /// Returns the pre-clip gradient norm.
    double step() {
        for (std::size_t i = 0; i < ps_->size(); ++i)
            if (!(*ps_)[i].grad.all_finite())
                throw std::runtime_error("non-finite gradient in '" + (*ps_)[i].name + "'");
        const double norm = cfg_.clip > 0 ? ps_->clip_grad_norm(cfg_.clip) : ps_->grad_norm();
        ++t_;
        const double bc1 = 1.0 - std::pow(cfg_.beta1, static_cast<double>(t_));
        const double bc2 = 1.0 - std::pow(cfg_.beta2, static_cast<double>(t_));
        for (std::size_t i = 0; i < ps_->size(); ++i) {
            auto& p = (*ps_)[i];
            auto& m = m_[i];
            auto& v = v_[i];
            for (std::size_t j = 0; j < p.value.size(); ++j) {
                const double g = p.grad.data[j];
                m[j] = cfg_.beta1 * m[j] + (1 - cfg_.beta1) * g;
                v[j] = cfg_.beta2 * v[j] + (1 - cfg_.beta2) * g * g;
                p.value.data[j] -= cfg_.lr * (m[j] / bc1) / (std::sqrt(v[j] / bc2) + cfg_.eps);
            }
        }
        ps_->zero_grad();
        return norm;
    }

    long steps() const { return t_; }
    const AdamConfig& config() const { return cfg_; }

private:
    ParameterStore* ps_;
    AdamConfig cfg_;
    std::vector<std::vector<double>> m_, v_;
    long t_ = 0;
};

}  // namespace sqlpar::nn
