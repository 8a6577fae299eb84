#pragma once

// Hot inner loops. Each kernel has an OpenMP variant (default) and a serial
// reference variant; tests compare the two and the benchmark tool times both.
// Parallel loops assign each output element to exactly one thread with a fixed
// inner summation order, so results are bit-identical across thread counts.

#include <cstdint>
#include <stdexcept>

#include "hmr/tensor.hpp"

#ifdef _OPENMP
#include <omp.h>
#endif

namespace hmr::kernels {

// C[m,n] += A[m,k] * B[k,n]
template <class T>
void matmul_serial(const T* a, const T* b, T* c, int m, int k, int n) {
    for (int i = 0; i < m; ++i) {
        T* crow = c + static_cast<std::int64_t>(i) * n;
        const T* arow = a + static_cast<std::int64_t>(i) * k;
        for (int t = 0; t < k; ++t) {
            const T av = arow[t];
            const T* brow = b + static_cast<std::int64_t>(t) * n;
            for (int j = 0; j < n; ++j) crow[j] += av * brow[j];
        }
    }
}

template <class T>
void matmul_omp(const T* a, const T* b, T* c, int m, int k, int n) {
#pragma omp parallel for schedule(static)
    for (int i = 0; i < m; ++i) {
        T* crow = c + static_cast<std::int64_t>(i) * n;
        const T* arow = a + static_cast<std::int64_t>(i) * k;
        for (int t = 0; t < k; ++t) {
            const T av = arow[t];
            const T* brow = b + static_cast<std::int64_t>(t) * n;
#pragma omp simd
            for (int j = 0; j < n; ++j) crow[j] += av * brow[j];
        }
    }
}

// C[m,n] += A[k,m]^T * B[k,n]
template <class T>
void matmul_at_b(const T* a, const T* b, T* c, int k, int m, int n) {
#pragma omp parallel for schedule(static)
    for (int i = 0; i < m; ++i) {
        T* crow = c + static_cast<std::int64_t>(i) * n;
        for (int t = 0; t < k; ++t) {
            const T av = a[static_cast<std::int64_t>(t) * m + i];
            const T* brow = b + static_cast<std::int64_t>(t) * n;
#pragma omp simd
            for (int j = 0; j < n; ++j) crow[j] += av * brow[j];
        }
    }
}

// C[m,k] += A[m,n] * B[k,n]^T
template <class T>
void matmul_a_bt(const T* a, const T* b, T* c, int m, int n, int k) {
#pragma omp parallel for schedule(static)
    for (int i = 0; i < m; ++i) {
        const T* arow = a + static_cast<std::int64_t>(i) * n;
        T* crow = c + static_cast<std::int64_t>(i) * k;
        for (int t = 0; t < k; ++t) {
            const T* brow = b + static_cast<std::int64_t>(t) * n;
            T acc = 0;
#pragma omp simd reduction(+ : acc)
            for (int j = 0; j < n; ++j) acc += arow[j] * brow[j];
            crow[t] += acc;
        }
    }
}

// 2D cross-correlation, NCHW single sample: x[Cin,H,W], w[Cout,Cin,kh,kw].
template <class T>
void conv2d_forward_serial(const T* x, const T* w, const T* bias, T* y, int cin, int h, int wd,
                           int cout, int kh, int kw, int stride, int pad, int ho, int wo) {
    for (int oc = 0; oc < cout; ++oc) {
        for (int oy = 0; oy < ho; ++oy) {
            for (int ox = 0; ox < wo; ++ox) {
                T acc = bias ? bias[oc] : T(0);
                for (int ic = 0; ic < cin; ++ic) {
                    const T* xc = x + (static_cast<std::int64_t>(ic) * h) * wd;
                    const T* wc = w + ((static_cast<std::int64_t>(oc) * cin + ic) * kh) * kw;
                    for (int ky = 0; ky < kh; ++ky) {
                        const int iy = oy * stride + ky - pad;
                        if (iy < 0 || iy >= h) continue;
                        for (int kx = 0; kx < kw; ++kx) {
                            const int ix = ox * stride + kx - pad;
                            if (ix < 0 || ix >= wd) continue;
                            acc += xc[iy * wd + ix] * wc[ky * kw + kx];
                        }
                    }
                }
                y[(static_cast<std::int64_t>(oc) * ho + oy) * wo + ox] = acc;
            }
        }
    }
}

template <class T>
void conv2d_forward_omp(const T* x, const T* w, const T* bias, T* y, int cin, int h, int wd,
                        int cout, int kh, int kw, int stride, int pad, int ho, int wo) {
#pragma omp parallel for schedule(static)
    for (int oc = 0; oc < cout; ++oc)
        conv2d_forward_serial(x, w + (static_cast<std::int64_t>(oc) * cin * kh) * kw,
                              bias ? bias + oc : nullptr, y + (static_cast<std::int64_t>(oc) * ho) * wo,
                              cin, h, wd, 1, kh, kw, stride, pad, ho, wo);
}

// dx += conv backward wrt input; dw += backward wrt weights; db += per-channel sum.
template <class T>
void conv2d_backward(const T* x, const T* w, const T* dy, T* dx, T* dw, T* db, int cin, int h,
                     int wd, int cout, int kh, int kw, int stride, int pad, int ho, int wo) {
    if (db) {
#pragma omp parallel for schedule(static)
        for (int oc = 0; oc < cout; ++oc) {
            const T* dyc = dy + (static_cast<std::int64_t>(oc) * ho) * wo;
            T acc = 0;
            for (int i = 0; i < ho * wo; ++i) acc += dyc[i];
            db[oc] += acc;
        }
    }
    if (dw) {
        // parallel over output channel: each thread owns dw[oc,...]
#pragma omp parallel for schedule(static)
        for (int oc = 0; oc < cout; ++oc) {
            const T* dyc = dy + (static_cast<std::int64_t>(oc) * ho) * wo;
            for (int ic = 0; ic < cin; ++ic) {
                const T* xc = x + (static_cast<std::int64_t>(ic) * h) * wd;
                T* dwc = dw + ((static_cast<std::int64_t>(oc) * cin + ic) * kh) * kw;
                for (int ky = 0; ky < kh; ++ky)
                    for (int kx = 0; kx < kw; ++kx) {
                        T acc = 0;
                        for (int oy = 0; oy < ho; ++oy) {
                            const int iy = oy * stride + ky - pad;
                            if (iy < 0 || iy >= h) continue;
                            for (int ox = 0; ox < wo; ++ox) {
                                const int ix = ox * stride + kx - pad;
                                if (ix < 0 || ix >= wd) continue;
                                acc += dyc[oy * wo + ox] * xc[iy * wd + ix];
                            }
                        }
                        dwc[ky * kw + kx] += acc;
                    }
            }
        }
    }
    if (dx) {
        // parallel over input channel: each thread owns dx[ic,...]
#pragma omp parallel for schedule(static)
        for (int ic = 0; ic < cin; ++ic) {
            T* dxc = dx + (static_cast<std::int64_t>(ic) * h) * wd;
            for (int oc = 0; oc < cout; ++oc) {
                const T* dyc = dy + (static_cast<std::int64_t>(oc) * ho) * wo;
                const T* wc = w + ((static_cast<std::int64_t>(oc) * cin + ic) * kh) * kw;
                for (int oy = 0; oy < ho; ++oy)
                    for (int ky = 0; ky < kh; ++ky) {
                        const int iy = oy * stride + ky - pad;
                        if (iy < 0 || iy >= h) continue;
                        for (int ox = 0; ox < wo; ++ox)
                            for (int kx = 0; kx < kw; ++kx) {
                                const int ix = ox * stride + kx - pad;
                                if (ix < 0 || ix >= wd) continue;
                                dxc[iy * wd + ix] += dyc[oy * wo + ox] * wc[ky * kw + kx];
                            }
                    }
            }
        }
    }
}

// Spiral gather: out[v, s*d..] = f[table[v][s], ...] concatenated over s.
template <class T>
void spiral_gather_serial(const T* f, const int* table, T* out, int nv, int s, int d) {
    for (int v = 0; v < nv; ++v) {
        const int* row = table + static_cast<std::int64_t>(v) * s;
        T* orow = out + static_cast<std::int64_t>(v) * s * d;
        for (int j = 0; j < s; ++j) {
            const T* src = f + static_cast<std::int64_t>(row[j]) * d;
            for (int c = 0; c < d; ++c) orow[j * d + c] = src[c];
        }
    }
}

template <class T>
void spiral_gather_omp(const T* f, const int* table, T* out, int nv, int s, int d) {
#pragma omp parallel for schedule(static)
    for (int v = 0; v < nv; ++v)
        spiral_gather_serial(f, table + static_cast<std::int64_t>(v) * s,
                             out + static_cast<std::int64_t>(v) * s * d, 1, s, d);
}

// Depth-wise spiral mix: out[v,i] = sum_s wd[i,s] * f[table[v][s], i].
template <class T>
void spiral_depthwise_serial(const T* f, const int* table, const T* wd, T* out, int nv, int s, int d) {
    for (int v = 0; v < nv; ++v) {
        const int* row = table + static_cast<std::int64_t>(v) * s;
        T* orow = out + static_cast<std::int64_t>(v) * d;
        for (int c = 0; c < d; ++c) orow[c] = 0;
        for (int j = 0; j < s; ++j) {
            const T* src = f + static_cast<std::int64_t>(row[j]) * d;
            for (int c = 0; c < d; ++c) orow[c] += wd[static_cast<std::int64_t>(c) * s + j] * src[c];
        }
    }
}

template <class T>
void spiral_depthwise_omp(const T* f, const int* table, const T* wd, T* out, int nv, int s, int d) {
#pragma omp parallel for schedule(static)
    for (int v = 0; v < nv; ++v)
        spiral_depthwise_serial(f, table + static_cast<std::int64_t>(v) * s, wd,
                                out + static_cast<std::int64_t>(v) * d, 1, s, d);
}

inline int thread_count() {
#ifdef _OPENMP
    return omp_get_max_threads();
#else
    return 1;
#endif
}

}  // namespace hmr::kernels
