#pragma once

// Adam with the conventional defaults (beta1 0.9, beta2 0.999, eps 1e-8).
// The optimizer owns no parameters; it updates the registered tensors in
// place from their accumulated gradients.

#include <cmath>
#include <stdexcept>
#include <vector>

#include "hmr/tensor.hpp"

namespace hmr {

template <class T>
struct AdamT {
    std::vector<TensorT<T>*> params;
    std::vector<TensorT<T>> m, v;
    double lr = 1e-3;
    double beta1 = 0.9, beta2 = 0.999, eps = 1e-8;
    long long t = 0;

    explicit AdamT(std::vector<TensorT<T>*> ps, double learning_rate = 1e-3)
        : params(std::move(ps)), lr(learning_rate) {
        for (auto* p : params) {
            m.emplace_back(p->shape);
            v.emplace_back(p->shape);
        }
    }

    // grads[i] must match params[i] in shape.
    void step(const std::vector<const TensorT<T>*>& grads) {
        if (grads.size() != params.size()) throw std::invalid_argument("adam: gradient count mismatch");
        ++t;
        const double bc1 = 1.0 - std::pow(beta1, static_cast<double>(t));
        const double bc2 = 1.0 - std::pow(beta2, static_cast<double>(t));
        for (std::size_t i = 0; i < params.size(); ++i) {
            auto& p = *params[i];
            const auto& g = *grads[i];
            if (g.shape != p.shape) throw std::invalid_argument("adam: gradient shape mismatch");
            for (std::int64_t k = 0; k < p.numel(); ++k) {
                const double gk = static_cast<double>(g[k]);
                const double mk = beta1 * static_cast<double>(m[i][k]) + (1.0 - beta1) * gk;
                const double vk = beta2 * static_cast<double>(v[i][k]) + (1.0 - beta2) * gk * gk;
                m[i][k] = static_cast<T>(mk);
                v[i][k] = static_cast<T>(vk);
                p[k] -= static_cast<T>(lr * (mk / bc1) / (std::sqrt(vk / bc2) + eps));
            }
        }
    }
};

using Adam = AdamT<float>;

}  // namespace hmr
