#pragma once

#include <cmath>
#include <functional>
#include <random>
#include <string>

#include "sqlpar/nn/tape.hpp"

namespace sqlpar::nn {

struct GradCheckOptions {
    double eps = 1e-4;
    // Entries checked per parameter tensor; 0 checks every entry. Sampled
    // entries are drawn with a fixed seed so a run is reproducible.
    std::size_t max_entries = 0;
    std::uint64_t seed = 7;
    // Denominator floor for the relative error. Central differences on an O(1)
    // loss resolve derivatives only to about 1e-11 at eps = 1e-4, so entries
    // smaller than this (structural zeros included) are held to an absolute
    // gap of floor * tolerance instead.
    double floor = 1e-6;
};

struct GradCheckReport {
    double max_rel_error = 0;
    double max_abs_error = 0;
    std::string worst_param;
    std::size_t worst_index = 0;
    double worst_analytic = 0;
    double worst_numeric = 0;
    std::size_t checked = 0;
};

/// Compares tape gradients of the scalar f against central differences for
/// every parameter in ps. f must be a pure function of the parameter values.
inline GradCheckReport grad_check(ParameterStore& ps, const std::function<Var(Tape&)>& f,
                                  const GradCheckOptions& opt = {}) {
    if (!(opt.eps >= 1e-6 && opt.eps <= 1e-3))
        throw std::invalid_argument("grad_check eps must lie in [1e-6, 1e-3], got " + std::to_string(opt.eps));

    auto eval = [&]() {
        Tape t;
        double v = t.scalar(f(t));
        if (!std::isfinite(v)) throw std::runtime_error("grad_check: non-finite function value");
        return v;
    };

    ps.zero_grad();
    {
        Tape t;
        Var out = f(t);
        t.backward(out);
    }
    std::vector<Tensor> analytic;
    for (std::size_t i = 0; i < ps.size(); ++i) {
        if (!ps[i].grad.all_finite()) throw std::runtime_error("grad_check: non-finite gradient in " + ps[i].name);
        analytic.push_back(ps[i].grad);
    }
    ps.zero_grad();

    GradCheckReport rep;
    std::mt19937_64 rng(opt.seed);
    for (std::size_t i = 0; i < ps.size(); ++i) {
        auto& p = ps[i];
        std::vector<std::size_t> idx;
        if (opt.max_entries == 0 || opt.max_entries >= p.value.size()) {
            for (std::size_t j = 0; j < p.value.size(); ++j) idx.push_back(j);
        } else {
            std::uniform_int_distribution<std::size_t> pick(0, p.value.size() - 1);
            for (std::size_t k = 0; k < opt.max_entries; ++k) idx.push_back(pick(rng));
        }
        for (std::size_t j : idx) {
            const double orig = p.value.data[j];
            p.value.data[j] = orig + opt.eps;
            const double fp = eval();
            p.value.data[j] = orig - opt.eps;
            const double fm = eval();
            p.value.data[j] = orig;
            const double cd = (fp - fm) / (2 * opt.eps);
            const double a = analytic[i].data[j];
            const double rel = std::abs(a - cd) / std::max(std::abs(a) + std::abs(cd), opt.floor);
            ++rep.checked;
            rep.max_abs_error = std::max(rep.max_abs_error, std::abs(a - cd));
            if (rel > rep.max_rel_error || rep.worst_param.empty()) {
                rep.max_rel_error = std::max(rep.max_rel_error, rel);
                if (rel >= rep.max_rel_error) {
                    rep.worst_param = p.name;
                    rep.worst_index = j;
                    rep.worst_analytic = a;
                    rep.worst_numeric = cd;
                }
            }
        }
    }
    return rep;
}

}  // namespace sqlpar::nn
