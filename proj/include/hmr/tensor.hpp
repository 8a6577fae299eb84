#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <random>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

namespace hmr {

// Dense row-major N-d array (1..4 dims here). Value type, cheap to move.
template <class T>
struct TensorT {
    std::vector<int> shape;
    std::vector<T> data;

    TensorT() = default;
    explicit TensorT(std::vector<int> s, T fill = T(0)) : shape(std::move(s)) {
        check_shape();
        data.assign(numel_of(shape), fill);
    }
    TensorT(std::vector<int> s, std::vector<T> d) : shape(std::move(s)), data(std::move(d)) {
        check_shape();
        if (static_cast<std::size_t>(numel_of(shape)) != data.size())
            throw std::invalid_argument("tensor: data length does not match shape");
    }

    static std::int64_t numel_of(const std::vector<int>& s) {
        std::int64_t n = 1;
        for (int e : s) n *= e;
        return n;
    }

    std::int64_t numel() const { return static_cast<std::int64_t>(data.size()); }
    int ndim() const { return static_cast<int>(shape.size()); }
    int dim(int i) const { return shape[static_cast<std::size_t>(i)]; }

    T& operator[](std::int64_t i) { return data[static_cast<std::size_t>(i)]; }
    const T& operator[](std::int64_t i) const { return data[static_cast<std::size_t>(i)]; }

    // Row-major flat index.
    std::int64_t index(std::initializer_list<int> idx) const {
        std::int64_t flat = 0;
        auto it = idx.begin();
        for (std::size_t d = 0; d < shape.size(); ++d, ++it)
            flat = flat * shape[d] + *it;
        return flat;
    }
    T& at(std::initializer_list<int> idx) { return data[static_cast<std::size_t>(index(idx))]; }
    const T& at(std::initializer_list<int> idx) const { return data[static_cast<std::size_t>(index(idx))]; }

    TensorT reshaped(std::vector<int> s) const {
        if (numel_of(s) != numel())
            throw std::invalid_argument("reshape: element count mismatch " + shape_str(shape) + " -> " + shape_str(s));
        TensorT out;
        out.shape = std::move(s);
        out.data = data;
        return out;
    }

    void fill(T v) { std::fill(data.begin(), data.end(), v); }

    static std::string shape_str(const std::vector<int>& s) {
        std::ostringstream os;
        os << '[';
        for (std::size_t i = 0; i < s.size(); ++i) os << (i ? "," : "") << s[i];
        os << ']';
        return os.str();
    }
    std::string shape_str() const { return shape_str(shape); }

private:
    void check_shape() const {
        if (shape.empty() || shape.size() > 4)
            throw std::invalid_argument("tensor: rank must be 1..4, got " + shape_str(shape));
        for (int e : shape)
            if (e <= 0) throw std::invalid_argument("tensor: nonpositive extent in " + shape_str(shape));
    }
};

using Tensor = TensorT<float>;
using TensorD = TensorT<double>;

template <class T>
TensorT<T> uniform_tensor(std::vector<int> shape, std::mt19937& rng, T lo = T(-1), T hi = T(1)) {
    TensorT<T> t(std::move(shape));
    std::uniform_real_distribution<double> dist(static_cast<double>(lo), static_cast<double>(hi));
    for (auto& v : t.data) v = static_cast<T>(dist(rng));
    return t;
}

// Glorot-style uniform init: bound sqrt(6/(fan_in+fan_out)).
template <class T>
TensorT<T> glorot_tensor(std::vector<int> shape, int fan_in, int fan_out, std::mt19937& rng) {
    const T bound = static_cast<T>(std::sqrt(6.0 / (fan_in + fan_out)));
    return uniform_tensor<T>(std::move(shape), rng, -bound, bound);
}

// He-style uniform init for ReLU-followed layers: bound sqrt(6/fan_in).
// Preserves activation variance through the rectifier so deep stacks do not
// attenuate their input signal at initialization.
template <class T>
TensorT<T> he_tensor(std::vector<int> shape, int fan_in, std::mt19937& rng) {
    const T bound = static_cast<T>(std::sqrt(6.0 / fan_in));
    return uniform_tensor<T>(std::move(shape), rng, -bound, bound);
}

template <class T>
double max_abs_diff(const TensorT<T>& a, const TensorT<T>& b) {
    if (a.shape != b.shape)
        throw std::invalid_argument("max_abs_diff: shape mismatch " + a.shape_str() + " vs " + b.shape_str());
    double m = 0.0;
    for (std::int64_t i = 0; i < a.numel(); ++i)
        m = std::max(m, std::abs(static_cast<double>(a[i]) - static_cast<double>(b[i])));
    return m;
}

template <class T, class U>
TensorT<U> cast_tensor(const TensorT<T>& a) {
    TensorT<U> out(a.shape);
    for (std::int64_t i = 0; i < a.numel(); ++i) out[i] = static_cast<U>(a[i]);
    return out;
}

}  // namespace hmr
