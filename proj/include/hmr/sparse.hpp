#pragma once

#include <cstdint>
#include <stdexcept>
#include <vector>

#include "hmr/tensor.hpp"

namespace hmr {

// Sparse matrix in COO triplet form, double weights.
struct CooMatrix {
    int rows = 0, cols = 0;
    std::vector<int> r, c;
    std::vector<double> w;

    void push(int ri, int ci, double wi) {
        r.push_back(ri);
        c.push_back(ci);
        w.push_back(wi);
    }
    std::size_t nnz() const { return w.size(); }

    // y[rows,d] = M * x[cols,d]
    template <class T>
    TensorT<T> apply(const TensorT<T>& x) const {
        if (x.ndim() != 2 || x.dim(0) != cols)
            throw std::invalid_argument("CooMatrix::apply: expected [" + std::to_string(cols) + ",d], got " +
                                        x.shape_str());
        const int d = x.dim(1);
        TensorT<T> y({rows, d});
        for (std::size_t i = 0; i < w.size(); ++i) {
            const T wv = static_cast<T>(w[i]);
            const T* src = x.data.data() + static_cast<std::int64_t>(c[i]) * d;
            T* dst = y.data.data() + static_cast<std::int64_t>(r[i]) * d;
            for (int ch = 0; ch < d; ++ch) dst[ch] += wv * src[ch];
        }
        return y;
    }

    // Serialization as a [nnz,3] f64 tensor (row, col, weight) plus dims.
    TensorD to_triplets() const {
        TensorD t({std::max<int>(1, static_cast<int>(nnz())), 3});
        for (std::size_t i = 0; i < nnz(); ++i) {
            t[static_cast<std::int64_t>(i) * 3 + 0] = r[i];
            t[static_cast<std::int64_t>(i) * 3 + 1] = c[i];
            t[static_cast<std::int64_t>(i) * 3 + 2] = w[i];
        }
        return t;
    }
    static CooMatrix from_triplets(const TensorD& t, int rows, int cols, std::size_t nnz) {
        CooMatrix m;
        m.rows = rows;
        m.cols = cols;
        for (std::size_t i = 0; i < nnz; ++i)
            m.push(static_cast<int>(t[static_cast<std::int64_t>(i) * 3 + 0]),
                   static_cast<int>(t[static_cast<std::int64_t>(i) * 3 + 1]),
                   t[static_cast<std::int64_t>(i) * 3 + 2]);
        return m;
    }
};

}  // namespace hmr
