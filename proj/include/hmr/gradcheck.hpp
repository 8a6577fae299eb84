#pragma once

// Central-difference verification of analytic gradients. The forward builder
// is re-invoked for every probe, so it must read the current contents of the
// supplied input tensors each time. Single-threaded by contract.

#include <cmath>
#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "hmr/autodiff.hpp"
#include "hmr/tensor.hpp"

namespace hmr {

struct GradCheckReport {
    std::string op_name;
    double max_rel_error = 0.0;
    std::int64_t worst_index = -1;  // flat index within the concatenation of all inputs
    bool passed = false;
    double tolerance = 0.0;
};

// forward: builds the graph from fresh param vars wrapping the current input
// values and returns a scalar output var.
template <class T>
GradCheckReport gradcheck(const std::string& op_name,
                          const std::function<ad::Var<T>(const std::vector<ad::Var<T>>&)>& forward,
                          std::vector<TensorT<T>>& inputs, double eps, double tol) {
    if (eps <= 0) throw std::invalid_argument("gradcheck: eps must be positive");
    GradCheckReport rep;
    rep.op_name = op_name;
    rep.tolerance = tol;

    auto run = [&]() {
        std::vector<ad::Var<T>> params;
        params.reserve(inputs.size());
        for (auto& t : inputs) params.push_back(ad::param(t));
        ad::Var<T> out = forward(params);
        if (out->value.numel() != 1) throw std::invalid_argument("gradcheck: forward must return a scalar");
        if (!std::isfinite(static_cast<double>(out->value[0])))
            throw std::runtime_error("gradcheck: non-finite forward value for " + op_name);
        return std::make_pair(out, params);
    };

    auto [out, params] = run();
    ad::backward(out);
    std::vector<TensorT<T>> analytic;
    for (auto& p : params) {
        p->ensure_grad();
        analytic.push_back(p->grad);
    }

    auto eval = [&]() {
        std::vector<ad::Var<T>> params2;
        for (auto& t : inputs) params2.push_back(ad::param(t));
        ad::Var<T> o = forward(params2);
        return static_cast<double>(o->value[0]);
    };

    std::int64_t base = 0;
    for (std::size_t pi = 0; pi < inputs.size(); ++pi) {
        for (std::int64_t i = 0; i < inputs[pi].numel(); ++i) {
            const T saved = inputs[pi][i];
            inputs[pi][i] = saved + static_cast<T>(eps);
            const double fp = eval();
            inputs[pi][i] = saved - static_cast<T>(eps);
            const double fm = eval();
            inputs[pi][i] = saved;
            const double numeric = (fp - fm) / (2.0 * eps);
            const double a = static_cast<double>(analytic[pi][i]);
            const double rel = std::abs(a - numeric) / std::max(1e-8, std::abs(a) + std::abs(numeric));
            if (rel > rep.max_rel_error) {
                rep.max_rel_error = rel;
                rep.worst_index = base + i;
            }
        }
        base += inputs[pi].numel();
    }
    rep.passed = rep.max_rel_error <= tol;
    return rep;
}

// Checks an f32 analytic gradient against an f64 central-difference
// reference evaluated at the same (f32-representable) points. A pure-f32
// difference quotient carries rounding noise of order 1e-7/eps, which
// swamps tolerances near 1e-3; the op itself still runs entirely in f32.
inline GradCheckReport gradcheck_mixed(
    const std::string& op_name,
    const std::function<ad::Var<float>(const std::vector<ad::Var<float>>&)>& forward32,
    const std::function<ad::Var<double>(const std::vector<ad::Var<double>>&)>& forward64,
    std::vector<TensorT<float>>& inputs32, double eps, double tol) {
    if (eps <= 0) throw std::invalid_argument("gradcheck: eps must be positive");
    GradCheckReport rep;
    rep.op_name = op_name;
    rep.tolerance = tol;

    std::vector<ad::Var<float>> params;
    params.reserve(inputs32.size());
    for (auto& t : inputs32) params.push_back(ad::param(t));
    ad::Var<float> out = forward32(params);
    if (out->value.numel() != 1)
        throw std::invalid_argument("gradcheck: forward must return a scalar");
    if (!std::isfinite(static_cast<double>(out->value[0])))
        throw std::runtime_error("gradcheck: non-finite forward value for " + op_name);
    ad::backward(out);
    std::vector<TensorT<float>> analytic;
    for (auto& p : params) {
        p->ensure_grad();
        analytic.push_back(p->grad);
    }

    std::vector<TensorT<double>> inputs64;
    inputs64.reserve(inputs32.size());
    for (const auto& t : inputs32) {
        TensorT<double> d(t.shape);
        for (std::int64_t i = 0; i < t.numel(); ++i) d[i] = static_cast<double>(t[i]);
        inputs64.push_back(std::move(d));
    }
    auto eval = [&]() {
        std::vector<ad::Var<double>> params2;
        for (auto& t : inputs64) params2.push_back(ad::param(t));
        return forward64(params2)->value[0];
    };

    std::int64_t base = 0;
    for (std::size_t pi = 0; pi < inputs64.size(); ++pi) {
        for (std::int64_t i = 0; i < inputs64[pi].numel(); ++i) {
            const double saved = inputs64[pi][i];
            inputs64[pi][i] = saved + eps;
            const double fp = eval();
            inputs64[pi][i] = saved - eps;
            const double fm = eval();
            inputs64[pi][i] = saved;
            const double numeric = (fp - fm) / (2.0 * eps);
            const double a = static_cast<double>(analytic[pi][i]);
            const double rel = std::abs(a - numeric) / std::max(1e-8, std::abs(a) + std::abs(numeric));
            if (rel > rep.max_rel_error) {
                rep.max_rel_error = rel;
                rep.worst_index = base + i;
            }
        }
        base += inputs64[pi].numel();
    }
    rep.passed = rep.max_rel_error <= tol;
    return rep;
}

}  // namespace hmr
