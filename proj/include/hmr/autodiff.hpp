#pragma once

// Small dynamic reverse-mode tape over TensorT. Each op builds a node whose
// closure accumulates into the parents' grad buffers. Only the ops the
// pipeline needs exist; no broadcasting DSL.

#include <cmath>
#include <functional>
#include <memory>
#include <stdexcept>
#include <unordered_set>
#include <vector>

#include "hmr/kernels.hpp"
#include "hmr/sparse.hpp"
#include "hmr/tensor.hpp"

namespace hmr::ad {

template <class T>
struct Node {
    TensorT<T> value;
    TensorT<T> grad;  // allocated lazily, same shape as value
    bool requires_grad = false;
    const TensorT<T>* source = nullptr;  // set by bound_param for grad harvesting
    std::vector<std::shared_ptr<Node>> parents;
    std::function<void()> backward_fn;  // reads this->grad, accumulates into parents

    void ensure_grad() {
        if (grad.data.empty()) grad = TensorT<T>(value.shape);
    }
};

template <class T>
using Var = std::shared_ptr<Node<T>>;

using VarF = Var<float>;
using VarD = Var<double>;

template <class T>
Var<T> constant(TensorT<T> v) {
    auto n = std::make_shared<Node<T>>();
    n->value = std::move(v);
    return n;
}

template <class T>
Var<T> param(TensorT<T> v) {
    auto n = std::make_shared<Node<T>>();
    n->value = std::move(v);
    n->requires_grad = true;
    return n;
}

// Like param, but remembers which storage it mirrors so optimizers can
// harvest the gradient after backward(). The referenced tensor must outlive
// the graph.
template <class T>
Var<T> bound_param(const TensorT<T>& v) {
    auto n = std::make_shared<Node<T>>();
    n->value = v;
    n->requires_grad = true;
    n->source = &v;
    return n;
}

template <class T>
Var<T> make_op(TensorT<T> value, std::vector<Var<T>> parents) {
    auto n = std::make_shared<Node<T>>();
    n->value = std::move(value);
    n->parents = std::move(parents);
    for (auto& p : n->parents) n->requires_grad = n->requires_grad || p->requires_grad;
    return n;
}

// Topological order then reverse sweep. Seed: ones (scalar outputs in practice).
template <class T>
void backward(const Var<T>& root) {
    std::vector<Node<T>*> order;
    std::unordered_set<Node<T>*> seen;
    // iterative postorder
    std::vector<std::pair<Node<T>*, std::size_t>> dfs{{root.get(), 0}};
    seen.insert(root.get());
    while (!dfs.empty()) {
        auto& [n, i] = dfs.back();
        if (i < n->parents.size()) {
            Node<T>* p = n->parents[i++].get();
            if (seen.insert(p).second) dfs.emplace_back(p, 0);
        } else {
            order.push_back(n);
            dfs.pop_back();
        }
    }
    root->ensure_grad();
    root->grad.fill(T(1));
    for (auto it = order.rbegin(); it != order.rend(); ++it) {
        Node<T>* n = *it;
        if (n->backward_fn && n->requires_grad) n->backward_fn();
    }
}

// Sum the gradients of every bound_param leaf into `acc`, keyed by the
// bound storage. Missing keys are created zero-initialized.
template <class T>
void accumulate_param_grads(const Var<T>& root,
                            std::unordered_map<const TensorT<T>*, TensorT<T>>& acc) {
    std::vector<Node<T>*> stack{root.get()};
    std::unordered_set<Node<T>*> seen{root.get()};
    while (!stack.empty()) {
        Node<T>* n = stack.back();
        stack.pop_back();
        if (n->source) {
            auto [it, fresh] = acc.try_emplace(n->source, TensorT<T>(n->value.shape));
            if (!n->grad.data.empty())
                for (std::int64_t i = 0; i < it->second.numel(); ++i) it->second[i] += n->grad[i];
        }
        for (auto& p : n->parents)
            if (seen.insert(p.get()).second) stack.push_back(p.get());
    }
}

template <class T>
void require_same_shape(const Var<T>& a, const Var<T>& b, const char* op) {
    if (a->value.shape != b->value.shape)
        throw std::invalid_argument(std::string(op) + ": shape mismatch " + a->value.shape_str() +
                                    " vs " + b->value.shape_str());
}

template <class T>
Var<T> add(Var<T> a, Var<T> b) {
    require_same_shape(a, b, "add");
    TensorT<T> v = a->value;
    for (std::int64_t i = 0; i < v.numel(); ++i) v[i] += b->value[i];
    auto n = make_op<T>(std::move(v), {a, b});
    Node<T>* self = n.get();
    n->backward_fn = [self, a, b] {
        if (a->requires_grad) {
            a->ensure_grad();
            for (std::int64_t i = 0; i < self->grad.numel(); ++i) a->grad[i] += self->grad[i];
        }
        if (b->requires_grad) {
            b->ensure_grad();
            for (std::int64_t i = 0; i < self->grad.numel(); ++i) b->grad[i] += self->grad[i];
        }
    };
    return n;
}

template <class T>
Var<T> sub(Var<T> a, Var<T> b) {
    require_same_shape(a, b, "sub");
    TensorT<T> v = a->value;
    for (std::int64_t i = 0; i < v.numel(); ++i) v[i] -= b->value[i];
    auto n = make_op<T>(std::move(v), {a, b});
    Node<T>* self = n.get();
    n->backward_fn = [self, a, b] {
        if (a->requires_grad) {
            a->ensure_grad();
            for (std::int64_t i = 0; i < self->grad.numel(); ++i) a->grad[i] += self->grad[i];
        }
        if (b->requires_grad) {
            b->ensure_grad();
            for (std::int64_t i = 0; i < self->grad.numel(); ++i) b->grad[i] -= self->grad[i];
        }
    };
    return n;
}

template <class T>
Var<T> mul(Var<T> a, Var<T> b) {
    require_same_shape(a, b, "mul");
    TensorT<T> v = a->value;
    for (std::int64_t i = 0; i < v.numel(); ++i) v[i] *= b->value[i];
    auto n = make_op<T>(std::move(v), {a, b});
    Node<T>* self = n.get();
    n->backward_fn = [self, a, b] {
        if (a->requires_grad) {
            a->ensure_grad();
            for (std::int64_t i = 0; i < self->grad.numel(); ++i) a->grad[i] += self->grad[i] * b->value[i];
        }
        if (b->requires_grad) {
            b->ensure_grad();
            for (std::int64_t i = 0; i < self->grad.numel(); ++i) b->grad[i] += self->grad[i] * a->value[i];
        }
    };
    return n;
}

template <class T>
Var<T> scale(Var<T> a, T s) {
    TensorT<T> v = a->value;
    for (auto& x : v.data) x *= s;
    auto n = make_op<T>(std::move(v), {a});
    Node<T>* self = n.get();
    n->backward_fn = [self, a, s] {
        if (!a->requires_grad) return;
        a->ensure_grad();
        for (std::int64_t i = 0; i < self->grad.numel(); ++i) a->grad[i] += self->grad[i] * s;
    };
    return n;
}

template <class T>
Var<T> reshape(Var<T> a, std::vector<int> shape) {
    auto n = make_op<T>(a->value.reshaped(shape), {a});
    Node<T>* self = n.get();
    n->backward_fn = [self, a] {
        if (!a->requires_grad) return;
        a->ensure_grad();
        for (std::int64_t i = 0; i < self->grad.numel(); ++i) a->grad[i] += self->grad[i];
    };
    return n;
}

template <class T>
Var<T> relu(Var<T> a) {
    TensorT<T> v = a->value;
    for (auto& x : v.data)
        if (x < T(0)) x = T(0);
    auto n = make_op<T>(std::move(v), {a});
    Node<T>* self = n.get();
    n->backward_fn = [self, a] {
        if (!a->requires_grad) return;
        a->ensure_grad();
        for (std::int64_t i = 0; i < self->grad.numel(); ++i)
            if (a->value[i] > T(0)) a->grad[i] += self->grad[i];
    };
    return n;
}

template <class T>
Var<T> sigmoid(Var<T> a) {
    TensorT<T> v = a->value;
    for (auto& x : v.data) x = T(1) / (T(1) + std::exp(-x));
    auto n = make_op<T>(std::move(v), {a});
    Node<T>* self = n.get();
    n->backward_fn = [self, a] {
        if (!a->requires_grad) return;
        a->ensure_grad();
        for (std::int64_t i = 0; i < self->grad.numel(); ++i) {
            const T y = self->value[i];
            a->grad[i] += self->grad[i] * y * (T(1) - y);
        }
    };
    return n;
}

template <class T>
Var<T> transpose2d(Var<T> a) {
    if (a->value.ndim() != 2) throw std::invalid_argument("transpose2d: expects a matrix");
    const int m = a->value.dim(0), nn = a->value.dim(1);
    TensorT<T> v({nn, m});
    for (int i = 0; i < m; ++i)
        for (int j = 0; j < nn; ++j) v[static_cast<std::int64_t>(j) * m + i] = a->value[static_cast<std::int64_t>(i) * nn + j];
    auto n = make_op<T>(std::move(v), {a});
    Node<T>* self = n.get();
    n->backward_fn = [self, a, m, nn] {
        if (!a->requires_grad) return;
        a->ensure_grad();
        for (int i = 0; i < m; ++i)
            for (int j = 0; j < nn; ++j)
                a->grad[static_cast<std::int64_t>(i) * nn + j] += self->grad[static_cast<std::int64_t>(j) * m + i];
    };
    return n;
}

// A[m,k] * B[k,n]
template <class T>
Var<T> matmul(Var<T> a, Var<T> b) {
    if (a->value.ndim() != 2 || b->value.ndim() != 2 || a->value.dim(1) != b->value.dim(0))
        throw std::invalid_argument("matmul: incompatible shapes " + a->value.shape_str() + " x " +
                                    b->value.shape_str());
    const int m = a->value.dim(0), k = a->value.dim(1), nn = b->value.dim(1);
    TensorT<T> v({m, nn});
    kernels::matmul_omp(a->value.data.data(), b->value.data.data(), v.data.data(), m, k, nn);
    auto n = make_op<T>(std::move(v), {a, b});
    Node<T>* self = n.get();
    n->backward_fn = [self, a, b, m, k, nn] {
        if (a->requires_grad) {
            a->ensure_grad();  // dA += dC * B^T
            kernels::matmul_a_bt(self->grad.data.data(), b->value.data.data(), a->grad.data.data(), m, nn, k);
        }
        if (b->requires_grad) {
            b->ensure_grad();  // dB += A^T * dC
            kernels::matmul_at_b(a->value.data.data(), self->grad.data.data(), b->grad.data.data(), m, k, nn);
        }
    };
    return n;
}

// X[m,n] + row vector b[n] broadcast over rows.
template <class T>
Var<T> add_rowvec(Var<T> x, Var<T> b) {
    if (x->value.ndim() != 2 || b->value.ndim() != 1 || x->value.dim(1) != b->value.dim(0))
        throw std::invalid_argument("add_rowvec: shapes " + x->value.shape_str() + " + " + b->value.shape_str());
    const int m = x->value.dim(0), nn = x->value.dim(1);
    TensorT<T> v = x->value;
    for (int i = 0; i < m; ++i)
        for (int j = 0; j < nn; ++j) v[static_cast<std::int64_t>(i) * nn + j] += b->value[j];
    auto n = make_op<T>(std::move(v), {x, b});
    Node<T>* self = n.get();
    n->backward_fn = [self, x, b, m, nn] {
        if (x->requires_grad) {
            x->ensure_grad();
            for (std::int64_t i = 0; i < self->grad.numel(); ++i) x->grad[i] += self->grad[i];
        }
        if (b->requires_grad) {
            b->ensure_grad();
            for (int i = 0; i < m; ++i)
                for (int j = 0; j < nn; ++j) b->grad[j] += self->grad[static_cast<std::int64_t>(i) * nn + j];
        }
    };
    return n;
}

template <class T>
Var<T> sum(Var<T> a) {
    T acc = 0;
    for (auto x : a->value.data) acc += x;
    auto n = make_op<T>(TensorT<T>({1}, {acc}), {a});
    Node<T>* self = n.get();
    n->backward_fn = [self, a] {
        if (!a->requires_grad) return;
        a->ensure_grad();
        const T g = self->grad[0];
        for (auto& x : a->grad.data) x += g;
    };
    return n;
}

template <class T>
Var<T> mean(Var<T> a) {
    return scale(sum(a), T(1) / static_cast<T>(a->value.numel()));
}

// mean |a - b| over all elements.
template <class T>
Var<T> l1_mean(Var<T> a, Var<T> b) {
    require_same_shape(a, b, "l1_mean");
    const std::int64_t cnt = a->value.numel();
    T acc = 0;
    for (std::int64_t i = 0; i < cnt; ++i) acc += std::abs(a->value[i] - b->value[i]);
    acc /= static_cast<T>(cnt);
    auto n = make_op<T>(TensorT<T>({1}, {acc}), {a, b});
    Node<T>* self = n.get();
    n->backward_fn = [self, a, b, cnt] {
        const T g = self->grad[0] / static_cast<T>(cnt);
        for (std::int64_t i = 0; i < cnt; ++i) {
            const T d = a->value[i] - b->value[i];
            const T s = d > T(0) ? g : (d < T(0) ? -g : T(0));
            if (a->requires_grad) {
                a->ensure_grad();
                a->grad[i] += s;
            }
            if (b->requires_grad) {
                b->ensure_grad();
                b->grad[i] -= s;
            }
        }
    };
    return n;
}

// x[Cin,H,W] (*) w[Cout,Cin,kh,kw] -> [Cout,H',W'], cross-correlation.
template <class T>
Var<T> conv2d(Var<T> x, Var<T> w, Var<T> bias, int stride, int pad) {
    if (x->value.ndim() != 3 || w->value.ndim() != 4 || x->value.dim(0) != w->value.dim(1))
        throw std::invalid_argument("conv2d: shapes " + x->value.shape_str() + " (*) " + w->value.shape_str());
    const int cin = x->value.dim(0), h = x->value.dim(1), wd = x->value.dim(2);
    const int cout = w->value.dim(0), kh = w->value.dim(2), kw = w->value.dim(3);
    if (kh % 2 == 0 || kw % 2 == 0) throw std::invalid_argument("conv2d: kernel extents must be odd");
    if ((h + 2 * pad - kh) % stride != 0 || (wd + 2 * pad - kw) % stride != 0)
        throw std::invalid_argument("conv2d: non-integral output extent for input " + x->value.shape_str());
    const int ho = (h + 2 * pad - kh) / stride + 1;
    const int wo = (wd + 2 * pad - kw) / stride + 1;
    TensorT<T> v({cout, ho, wo});
    kernels::conv2d_forward_omp(x->value.data.data(), w->value.data.data(),
                                bias ? bias->value.data.data() : nullptr, v.data.data(), cin, h, wd,
                                cout, kh, kw, stride, pad, ho, wo);
    std::vector<Var<T>> parents{x, w};
    if (bias) parents.push_back(bias);
    auto n = make_op<T>(std::move(v), std::move(parents));
    Node<T>* self = n.get();
    n->backward_fn = [self, x, w, bias, cin, h, wd, cout, kh, kw, stride, pad, ho, wo] {
        T* dx = nullptr;
        T* dw = nullptr;
        T* db = nullptr;
        if (x->requires_grad) {
            x->ensure_grad();
            dx = x->grad.data.data();
        }
        if (w->requires_grad) {
            w->ensure_grad();
            dw = w->grad.data.data();
        }
        if (bias && bias->requires_grad) {
            bias->ensure_grad();
            db = bias->grad.data.data();
        }
        kernels::conv2d_backward(x->value.data.data(), w->value.data.data(), self->grad.data.data(),
                                 dx, dw, db, cin, h, wd, cout, kh, kw, stride, pad, ho, wo);
    };
    return n;
}

// Depth-wise 3x3 conv, stride 1, pad 1: x[C,H,W], w[C,kh,kw] -> [C,H,W].
template <class T>
Var<T> depthwise_conv2d(Var<T> x, Var<T> w) {
    if (x->value.ndim() != 3 || w->value.ndim() != 3 || x->value.dim(0) != w->value.dim(0))
        throw std::invalid_argument("depthwise_conv2d: shapes " + x->value.shape_str() + " (*) " +
                                    w->value.shape_str());
    const int c = x->value.dim(0), h = x->value.dim(1), wd = x->value.dim(2);
    const int kh = w->value.dim(1), kw = w->value.dim(2);
    const int ph = kh / 2, pw = kw / 2;
    TensorT<T> v({c, h, wd});
#pragma omp parallel for schedule(static)
    for (int ic = 0; ic < c; ++ic) {
        const T* xc = x->value.data.data() + static_cast<std::int64_t>(ic) * h * wd;
        const T* wc = w->value.data.data() + static_cast<std::int64_t>(ic) * kh * kw;
        T* yc = v.data.data() + static_cast<std::int64_t>(ic) * h * wd;
        for (int oy = 0; oy < h; ++oy)
            for (int ox = 0; ox < wd; ++ox) {
                T acc = 0;
                for (int ky = 0; ky < kh; ++ky) {
                    const int iy = oy + ky - ph;
                    if (iy < 0 || iy >= h) continue;
                    for (int kx = 0; kx < kw; ++kx) {
                        const int ix = ox + kx - pw;
                        if (ix < 0 || ix >= wd) continue;
                        acc += xc[iy * wd + ix] * wc[ky * kw + kx];
                    }
                }
                yc[oy * wd + ox] = acc;
            }
    }
    auto n = make_op<T>(std::move(v), {x, w});
    Node<T>* self = n.get();
    n->backward_fn = [self, x, w, c, h, wd, kh, kw, ph, pw] {
#pragma omp parallel for schedule(static)
        for (int ic = 0; ic < c; ++ic) {
            const T* dyc = self->grad.data.data() + static_cast<std::int64_t>(ic) * h * wd;
            const T* xc = x->value.data.data() + static_cast<std::int64_t>(ic) * h * wd;
            const T* wc = w->value.data.data() + static_cast<std::int64_t>(ic) * kh * kw;
            for (int oy = 0; oy < h; ++oy)
                for (int ox = 0; ox < wd; ++ox) {
                    const T g = dyc[oy * wd + ox];
                    for (int ky = 0; ky < kh; ++ky) {
                        const int iy = oy + ky - ph;
                        if (iy < 0 || iy >= h) continue;
                        for (int kx = 0; kx < kw; ++kx) {
                            const int ix = ox + kx - pw;
                            if (ix < 0 || ix >= wd) continue;
                            if (w->requires_grad)
                                w->grad.data.data()[static_cast<std::int64_t>(ic) * kh * kw + ky * kw + kx] +=
                                    g * xc[iy * wd + ix];
                            if (x->requires_grad)
                                x->grad.data.data()[static_cast<std::int64_t>(ic) * h * wd + iy * wd + ix] +=
                                    g * wc[ky * kw + kx];
                        }
                    }
                }
        }
    };
    if (x->requires_grad) x->ensure_grad();
    if (w->requires_grad) w->ensure_grad();
    return n;
}

// Concatenate along dim 0 (channels for [C,H,W], rows for [M,N]).
template <class T>
Var<T> concat0(Var<T> a, Var<T> b) {
    auto sa = a->value.shape, sb = b->value.shape;
    if (sa.size() != sb.size()) throw std::invalid_argument("concat0: rank mismatch");
    for (std::size_t i = 1; i < sa.size(); ++i)
        if (sa[i] != sb[i]) throw std::invalid_argument("concat0: trailing extent mismatch");
    auto shape = sa;
    shape[0] += sb[0];
    TensorT<T> v(shape);
    std::copy(a->value.data.begin(), a->value.data.end(), v.data.begin());
    std::copy(b->value.data.begin(), b->value.data.end(), v.data.begin() + a->value.numel());
    auto n = make_op<T>(std::move(v), {a, b});
    Node<T>* self = n.get();
    n->backward_fn = [self, a, b] {
        const std::int64_t na = a->value.numel();
        if (a->requires_grad) {
            a->ensure_grad();
            for (std::int64_t i = 0; i < na; ++i) a->grad[i] += self->grad[i];
        }
        if (b->requires_grad) {
            b->ensure_grad();
            for (std::int64_t i = 0; i < b->value.numel(); ++i) b->grad[i] += self->grad[na + i];
        }
    };
    return n;
}

// x[i:i+1, ...] along dim 0.
template <class T>
Var<T> slice0(Var<T> a, int i) {
    if (i < 0 || i >= a->value.dim(0)) throw std::invalid_argument("slice0: index out of range");
    auto shape = a->value.shape;
    shape[0] = 1;
    const std::int64_t block = a->value.numel() / a->value.dim(0);
    TensorT<T> v(shape);
    std::copy(a->value.data.begin() + i * block, a->value.data.begin() + (i + 1) * block, v.data.begin());
    auto n = make_op<T>(std::move(v), {a});
    Node<T>* self = n.get();
    n->backward_fn = [self, a, i, block] {
        if (!a->requires_grad) return;
        a->ensure_grad();
        for (std::int64_t j = 0; j < block; ++j) a->grad[i * block + j] += self->grad[j];
    };
    return n;
}

// x[C,H,W] * m[1,H,W], the mask broadcast over channels.
template <class T>
Var<T> broadcast_mul0(Var<T> x, Var<T> m) {
    if (x->value.ndim() != 3 || m->value.ndim() != 3 || m->value.dim(0) != 1 ||
        x->value.dim(1) != m->value.dim(1) || x->value.dim(2) != m->value.dim(2))
        throw std::invalid_argument("broadcast_mul0: shapes " + x->value.shape_str() + ", " + m->value.shape_str());
    const int c = x->value.dim(0);
    const std::int64_t hw = static_cast<std::int64_t>(x->value.dim(1)) * x->value.dim(2);
    TensorT<T> v = x->value;
    for (int i = 0; i < c; ++i)
        for (std::int64_t j = 0; j < hw; ++j) v[i * hw + j] *= m->value[j];
    auto n = make_op<T>(std::move(v), {x, m});
    Node<T>* self = n.get();
    n->backward_fn = [self, x, m, c, hw] {
        if (x->requires_grad) {
            x->ensure_grad();
            for (int i = 0; i < c; ++i)
                for (std::int64_t j = 0; j < hw; ++j) x->grad[i * hw + j] += self->grad[i * hw + j] * m->value[j];
        }
        if (m->requires_grad) {
            m->ensure_grad();
            for (int i = 0; i < c; ++i)
                for (std::int64_t j = 0; j < hw; ++j) m->grad[j] += self->grad[i * hw + j] * x->value[i * hw + j];
        }
    };
    return n;
}

// Per-channel spatial reduction of [C,H,W] -> [C].
enum class Reduce { kMax, kSum };

template <class T>
Var<T> reduce_spatial(Var<T> a, Reduce mode) {
    if (a->value.ndim() != 3) throw std::invalid_argument("reduce_spatial: expects [C,H,W]");
    const int c = a->value.dim(0);
    const std::int64_t hw = static_cast<std::int64_t>(a->value.dim(1)) * a->value.dim(2);
    TensorT<T> v({c});
    std::vector<std::int64_t> arg(static_cast<std::size_t>(c), 0);
    for (int i = 0; i < c; ++i) {
        const T* p = a->value.data.data() + i * hw;
        if (mode == Reduce::kSum) {
            T acc = 0;
            for (std::int64_t j = 0; j < hw; ++j) acc += p[j];
            v[i] = acc;
        } else {
            T best = p[0];
            std::int64_t bj = 0;
            for (std::int64_t j = 1; j < hw; ++j)
                if (p[j] > best) {  // strict: first max in row-major order wins
                    best = p[j];
                    bj = j;
                }
            v[i] = best;
            arg[static_cast<std::size_t>(i)] = bj;
        }
    }
    auto n = make_op<T>(std::move(v), {a});
    Node<T>* self = n.get();
    n->backward_fn = [self, a, mode, c, hw, arg] {
        if (!a->requires_grad) return;
        a->ensure_grad();
        for (int i = 0; i < c; ++i) {
            if (mode == Reduce::kSum) {
                for (std::int64_t j = 0; j < hw; ++j) a->grad[i * hw + j] += self->grad[i];
            } else {
                a->grad[i * hw + arg[static_cast<std::size_t>(i)]] += self->grad[i];
            }
        }
    };
    return n;
}

// 2x2 average pooling, stride 2; exact halving so even extents are required.
template <class T>
Var<T> avg_pool2(Var<T> x) {
    if (x->value.ndim() != 3 || x->value.dim(1) % 2 != 0 || x->value.dim(2) % 2 != 0)
        throw std::invalid_argument("avg_pool2: expects [C,2h,2w], got " + x->value.shape_str());
    const int c = x->value.dim(0), ho = x->value.dim(1) / 2, wo = x->value.dim(2) / 2;
    const int wi = x->value.dim(2);
    TensorT<T> v({c, ho, wo});
#pragma omp parallel for schedule(static)
    for (int ic = 0; ic < c; ++ic) {
        const T* xc = x->value.data.data() + static_cast<std::int64_t>(ic) * 4 * ho * wo;
        T* yc = v.data.data() + static_cast<std::int64_t>(ic) * ho * wo;
        for (int oy = 0; oy < ho; ++oy)
            for (int ox = 0; ox < wo; ++ox) {
                const T* p = xc + static_cast<std::int64_t>(2 * oy) * wi + 2 * ox;
                yc[static_cast<std::int64_t>(oy) * wo + ox] =
                    (p[0] + p[1] + p[wi] + p[wi + 1]) * T(0.25);
            }
    }
    auto n = make_op<T>(std::move(v), {x});
    Node<T>* self = n.get();
    n->backward_fn = [self, x, c, ho, wo, wi] {
        if (!x->requires_grad) return;
        x->ensure_grad();
        for (int ic = 0; ic < c; ++ic) {
            T* xg = x->grad.data.data() + static_cast<std::int64_t>(ic) * 4 * ho * wo;
            const T* g = self->grad.data.data() + static_cast<std::int64_t>(ic) * ho * wo;
            for (int oy = 0; oy < ho; ++oy)
                for (int ox = 0; ox < wo; ++ox) {
                    const T q = g[static_cast<std::int64_t>(oy) * wo + ox] * T(0.25);
                    T* p = xg + static_cast<std::int64_t>(2 * oy) * wi + 2 * ox;
                    p[0] += q;
                    p[1] += q;
                    p[wi] += q;
                    p[wi + 1] += q;
                }
        }
    };
    return n;
}

template <class T>
Var<T> global_avg_pool(Var<T> a) {
    const T inv = T(1) / static_cast<T>(a->value.dim(1) * a->value.dim(2));
    return scale(reduce_spatial(a, Reduce::kSum), inv);
}

// x[C,H,W] scaled per-channel by s[C].
template <class T>
Var<T> channel_scale(Var<T> x, Var<T> s) {
    if (x->value.ndim() != 3 || s->value.ndim() != 1 || x->value.dim(0) != s->value.dim(0))
        throw std::invalid_argument("channel_scale: shapes " + x->value.shape_str() + ", " + s->value.shape_str());
    const int c = x->value.dim(0);
    const std::int64_t hw = static_cast<std::int64_t>(x->value.dim(1)) * x->value.dim(2);
    TensorT<T> v = x->value;
    for (int i = 0; i < c; ++i)
        for (std::int64_t j = 0; j < hw; ++j) v[i * hw + j] *= s->value[i];
    auto n = make_op<T>(std::move(v), {x, s});
    Node<T>* self = n.get();
    n->backward_fn = [self, x, s, c, hw] {
        for (int i = 0; i < c; ++i) {
            if (x->requires_grad) {
                x->ensure_grad();
                for (std::int64_t j = 0; j < hw; ++j) x->grad[i * hw + j] += self->grad[i * hw + j] * s->value[i];
            }
            if (s->requires_grad) {
                s->ensure_grad();
                T acc = 0;
                for (std::int64_t j = 0; j < hw; ++j) acc += self->grad[i * hw + j] * x->value[i * hw + j];
                s->grad[i] += acc;
            }
        }
    };
    return n;
}

// Bilinear resize of [C,H,W] to [C,ho,wo], align-corners.
template <class T>
Var<T> bilinear_resize(Var<T> x, int ho, int wo) {
    if (x->value.ndim() != 3) throw std::invalid_argument("bilinear_resize: expects [C,H,W]");
    const int c = x->value.dim(0), h = x->value.dim(1), wd = x->value.dim(2);
    const double sy = ho > 1 ? static_cast<double>(h - 1) / (ho - 1) : 0.0;
    const double sx = wo > 1 ? static_cast<double>(wd - 1) / (wo - 1) : 0.0;
    // Precompute the 4-tap stencil per output pixel.
    struct Tap {
        int y0, y1, x0, x1;
        T wy, wx;
    };
    std::vector<Tap> taps(static_cast<std::size_t>(ho) * wo);
    for (int oy = 0; oy < ho; ++oy)
        for (int ox = 0; ox < wo; ++ox) {
            const double gy = oy * sy, gx = ox * sx;
            Tap t;
            t.y0 = static_cast<int>(gy);
            t.x0 = static_cast<int>(gx);
            t.y1 = std::min(t.y0 + 1, h - 1);
            t.x1 = std::min(t.x0 + 1, wd - 1);
            t.wy = static_cast<T>(gy - t.y0);
            t.wx = static_cast<T>(gx - t.x0);
            taps[static_cast<std::size_t>(oy) * wo + ox] = t;
        }
    TensorT<T> v({c, ho, wo});
    for (int i = 0; i < c; ++i) {
        const T* p = x->value.data.data() + static_cast<std::int64_t>(i) * h * wd;
        T* q = v.data.data() + static_cast<std::int64_t>(i) * ho * wo;
        for (std::size_t j = 0; j < taps.size(); ++j) {
            const Tap& t = taps[j];
            q[j] = (T(1) - t.wy) * ((T(1) - t.wx) * p[t.y0 * wd + t.x0] + t.wx * p[t.y0 * wd + t.x1]) +
                   t.wy * ((T(1) - t.wx) * p[t.y1 * wd + t.x0] + t.wx * p[t.y1 * wd + t.x1]);
        }
    }
    auto n = make_op<T>(std::move(v), {x});
    Node<T>* self = n.get();
    n->backward_fn = [self, x, c, h, wd, ho, wo, taps] {
        if (!x->requires_grad) return;
        x->ensure_grad();
        for (int i = 0; i < c; ++i) {
            T* dp = x->grad.data.data() + static_cast<std::int64_t>(i) * h * wd;
            const T* dq = self->grad.data.data() + static_cast<std::int64_t>(i) * ho * wo;
            for (std::size_t j = 0; j < taps.size(); ++j) {
                const Tap& t = taps[j];
                const T g = dq[j];
                dp[t.y0 * wd + t.x0] += g * (T(1) - t.wy) * (T(1) - t.wx);
                dp[t.y0 * wd + t.x1] += g * (T(1) - t.wy) * t.wx;
                dp[t.y1 * wd + t.x0] += g * t.wy * (T(1) - t.wx);
                dp[t.y1 * wd + t.x1] += g * t.wy * t.wx;
            }
        }
    };
    return n;
}

// Bilinear sampling of F[C,H,W] at L[N,2] normalized (x,y) in [0,1]^2,
// align-corners: (0,0) -> pixel center (0,0), (1,1) -> (H-1,W-1).
// Out-of-range coordinates clamp; clamped flags are reported if requested.
// Differentiable in F and L (clamped coordinates get zero positional grad).
template <class T>
Var<T> grid_sample(Var<T> f, Var<T> l, std::vector<bool>* clamped_out = nullptr) {
    if (f->value.ndim() != 3 || l->value.ndim() != 2 || l->value.dim(1) != 2)
        throw std::invalid_argument("grid_sample: shapes " + f->value.shape_str() + ", " + l->value.shape_str());
    const int c = f->value.dim(0), h = f->value.dim(1), wd = f->value.dim(2);
    const int np = l->value.dim(0);
    struct Tap {
        int y0, y1, x0, x1;
        T fy, fx;
        bool cx, cy;
    };
    std::vector<Tap> taps(static_cast<std::size_t>(np));
    if (clamped_out) clamped_out->assign(static_cast<std::size_t>(np), false);
    for (int i = 0; i < np; ++i) {
        T px = l->value[2 * i], py = l->value[2 * i + 1];
        if (!std::isfinite(static_cast<double>(px)) || !std::isfinite(static_cast<double>(py)))
            throw std::invalid_argument("grid_sample: non-finite coordinate");
        Tap t;
        t.cx = px < T(0) || px > T(1);
        t.cy = py < T(0) || py > T(1);
        px = std::clamp(px, T(0), T(1));
        py = std::clamp(py, T(0), T(1));
        const T gx = px * static_cast<T>(wd - 1);
        const T gy = py * static_cast<T>(h - 1);
        t.x0 = std::min(static_cast<int>(gx), wd - 1);
        t.y0 = std::min(static_cast<int>(gy), h - 1);
        t.x1 = std::min(t.x0 + 1, wd - 1);
        t.y1 = std::min(t.y0 + 1, h - 1);
        t.fx = gx - static_cast<T>(t.x0);
        t.fy = gy - static_cast<T>(t.y0);
        taps[static_cast<std::size_t>(i)] = t;
        if (clamped_out && (t.cx || t.cy)) (*clamped_out)[static_cast<std::size_t>(i)] = true;
    }
    TensorT<T> v({np, c});
    for (int i = 0; i < np; ++i) {
        const Tap& t = taps[static_cast<std::size_t>(i)];
        for (int ch = 0; ch < c; ++ch) {
            const T* p = f->value.data.data() + static_cast<std::int64_t>(ch) * h * wd;
            v[static_cast<std::int64_t>(i) * c + ch] =
                (T(1) - t.fy) * ((T(1) - t.fx) * p[t.y0 * wd + t.x0] + t.fx * p[t.y0 * wd + t.x1]) +
                t.fy * ((T(1) - t.fx) * p[t.y1 * wd + t.x0] + t.fx * p[t.y1 * wd + t.x1]);
        }
    }
    auto n = make_op<T>(std::move(v), {f, l});
    Node<T>* self = n.get();
    n->backward_fn = [self, f, l, c, h, wd, np, taps] {
        for (int i = 0; i < np; ++i) {
            const Tap& t = taps[static_cast<std::size_t>(i)];
            T dgx = 0, dgy = 0;
            for (int ch = 0; ch < c; ++ch) {
                const T g = self->grad[static_cast<std::int64_t>(i) * c + ch];
                const T* p = f->value.data.data() + static_cast<std::int64_t>(ch) * h * wd;
                if (f->requires_grad) {
                    f->ensure_grad();
                    T* dp = f->grad.data.data() + static_cast<std::int64_t>(ch) * h * wd;
                    dp[t.y0 * wd + t.x0] += g * (T(1) - t.fy) * (T(1) - t.fx);
                    dp[t.y0 * wd + t.x1] += g * (T(1) - t.fy) * t.fx;
                    dp[t.y1 * wd + t.x0] += g * t.fy * (T(1) - t.fx);
                    dp[t.y1 * wd + t.x1] += g * t.fy * t.fx;
                }
                if (l->requires_grad) {
                    const T top = p[t.y0 * wd + t.x1] - p[t.y0 * wd + t.x0];
                    const T bot = p[t.y1 * wd + t.x1] - p[t.y1 * wd + t.x0];
                    dgx += g * ((T(1) - t.fy) * top + t.fy * bot);
                    const T left = p[t.y1 * wd + t.x0] - p[t.y0 * wd + t.x0];
                    const T right = p[t.y1 * wd + t.x1] - p[t.y0 * wd + t.x1];
                    dgy += g * ((T(1) - t.fx) * left + t.fx * right);
                }
            }
            if (l->requires_grad) {
                l->ensure_grad();
                if (!t.cx) l->grad[2 * i] += dgx * static_cast<T>(wd - 1);
                if (!t.cy) l->grad[2 * i + 1] += dgy * static_cast<T>(h - 1);
            }
        }
    };
    return n;
}

// Spiral gather: F[V,D], table[V,S] -> [V, S*D].
template <class T>
Var<T> spiral_gather(Var<T> f, const TensorT<int>& table) {
    if (f->value.ndim() != 2 || table.ndim() != 2)
        throw std::invalid_argument("spiral_gather: expects F[V,D], table[V,S]");
    if (f->value.dim(0) != table.dim(0))
        throw std::invalid_argument("spiral_gather: vertex count mismatch " + f->value.shape_str() +
                                    " vs table " + table.shape_str());
    const int nv = table.dim(0), s = table.dim(1), d = f->value.dim(1);
    TensorT<T> v({nv, s * d});
    kernels::spiral_gather_omp(f->value.data.data(), table.data.data(), v.data.data(), nv, s, d);
    auto n = make_op<T>(std::move(v), {f});
    Node<T>* self = n.get();
    n->backward_fn = [self, f, table, nv, s, d] {
        if (!f->requires_grad) return;
        f->ensure_grad();
        for (int vtx = 0; vtx < nv; ++vtx) {
            const int* row = table.data.data() + static_cast<std::int64_t>(vtx) * s;
            const T* g = self->grad.data.data() + static_cast<std::int64_t>(vtx) * s * d;
            for (int j = 0; j < s; ++j) {
                T* dst = f->grad.data.data() + static_cast<std::int64_t>(row[j]) * d;
                for (int ch = 0; ch < d; ++ch) dst[ch] += g[j * d + ch];
            }
        }
    };
    return n;
}

// Depth-wise spiral mix: F[V,D], table[V,S], Wd[D,S] -> [V,D].
template <class T>
Var<T> spiral_depthwise(Var<T> f, const TensorT<int>& table, Var<T> wd) {
    if (f->value.ndim() != 2 || wd->value.ndim() != 2 || wd->value.dim(0) != f->value.dim(1) ||
        wd->value.dim(1) != table.dim(1))
        throw std::invalid_argument("spiral_depthwise: shapes F" + f->value.shape_str() + " Wd" +
                                    wd->value.shape_str() + " table " + table.shape_str());
    if (f->value.dim(0) != table.dim(0))
        throw std::invalid_argument("spiral_depthwise: vertex count mismatch " + f->value.shape_str() +
                                    " vs table " + table.shape_str());
    const int nv = table.dim(0), s = table.dim(1), d = f->value.dim(1);
    TensorT<T> v({nv, d});
    kernels::spiral_depthwise_omp(f->value.data.data(), table.data.data(), wd->value.data.data(),
                                  v.data.data(), nv, s, d);
    auto n = make_op<T>(std::move(v), {f, wd});
    Node<T>* self = n.get();
    n->backward_fn = [self, f, wd, table, nv, s, d] {
        for (int vtx = 0; vtx < nv; ++vtx) {
            const int* row = table.data.data() + static_cast<std::int64_t>(vtx) * s;
            const T* g = self->grad.data.data() + static_cast<std::int64_t>(vtx) * d;
            for (int j = 0; j < s; ++j) {
                const T* src = f->value.data.data() + static_cast<std::int64_t>(row[j]) * d;
                if (f->requires_grad) {
                    f->ensure_grad();
                    T* dst = f->grad.data.data() + static_cast<std::int64_t>(row[j]) * d;
                    for (int ch = 0; ch < d; ++ch) dst[ch] += g[ch] * wd->value[static_cast<std::int64_t>(ch) * s + j];
                }
                if (wd->requires_grad) {
                    wd->ensure_grad();
                    for (int ch = 0; ch < d; ++ch) wd->grad[static_cast<std::int64_t>(ch) * s + j] += g[ch] * src[ch];
                }
            }
        }
    };
    return n;
}

// Multiply by a constant sparse matrix in COO form: out[r,:] += w * F[c,:].
template <class T>
Var<T> sparse_apply(const CooMatrix& m, Var<T> f) {
    if (f->value.ndim() != 2 || f->value.dim(0) != m.cols)
        throw std::invalid_argument("sparse_apply: matrix cols " + std::to_string(m.cols) +
                                    " vs features " + f->value.shape_str());
    const int d = f->value.dim(1);
    TensorT<T> v({m.rows, d});
    for (std::size_t i = 0; i < m.w.size(); ++i) {
        const T wv = static_cast<T>(m.w[i]);
        const T* src = f->value.data.data() + static_cast<std::int64_t>(m.c[i]) * d;
        T* dst = v.data.data() + static_cast<std::int64_t>(m.r[i]) * d;
        for (int ch = 0; ch < d; ++ch) dst[ch] += wv * src[ch];
    }
    auto n = make_op<T>(std::move(v), {f});
    Node<T>* self = n.get();
    n->backward_fn = [self, f, m, d] {
        if (!f->requires_grad) return;
        f->ensure_grad();
        for (std::size_t i = 0; i < m.w.size(); ++i) {
            const T wv = static_cast<T>(m.w[i]);
            const T* g = self->grad.data.data() + static_cast<std::int64_t>(m.r[i]) * d;
            T* dst = f->grad.data.data() + static_cast<std::int64_t>(m.c[i]) * d;
            for (int ch = 0; ch < d; ++ch) dst[ch] += wv * g[ch];
        }
    };
    return n;
}

// Rows of X[n,k] times constant M[k,k2]^T? No: plain X * M with M constant.
template <class T>
Var<T> matmul_const_right(Var<T> x, const TensorT<T>& m) {
    return matmul(x, constant(m));
}

}  // namespace hmr::ad
