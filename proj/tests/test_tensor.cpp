#include <doctest.h>

#include <random>
#include <sstream>

#include "hmr/kernels.hpp"
#include "hmr/tensor.hpp"
#include "hmr/tensor_io.hpp"

using namespace hmr;

TEST_CASE("row-major flat index matches multidimensional iteration") {
    std::mt19937 rng(7);
    for (int trial = 0; trial < 20; ++trial) {
        const int a = 1 + static_cast<int>(rng() % 4);
        const int b = 1 + static_cast<int>(rng() % 4);
        const int c = 1 + static_cast<int>(rng() % 4);
        Tensor t({a, b, c});
        std::int64_t flat = 0;
        for (int i = 0; i < a; ++i)
            for (int j = 0; j < b; ++j)
                for (int k = 0; k < c; ++k) {
                    CHECK(t.index({i, j, k}) == flat);
                    CHECK(t.index({i, j, k}) == i * b * c + j * c + k);
                    ++flat;
                }
    }
}

TEST_CASE("shape validation") {
    CHECK_THROWS(Tensor({0, 3}));
    CHECK_THROWS(Tensor({2, 2, 2, 2, 2}));
    CHECK_THROWS(Tensor({2, 2}, std::vector<float>{1.f, 2.f, 3.f}));
}

namespace {
// triple-loop reference, same precision as the kernel under test
template <class T>
TensorT<T> matmul_oracle(const TensorT<T>& a, const TensorT<T>& b) {
    const int m = a.dim(0), k = a.dim(1), n = b.dim(1);
    TensorT<T> c({m, n});
    for (int i = 0; i < m; ++i)
        for (int j = 0; j < n; ++j) {
            T acc = 0;
            for (int t = 0; t < k; ++t) acc += a.at({i, t}) * b.at({t, j});
            c.at({i, j}) = acc;
        }
    return c;
}
}  // namespace

TEST_CASE("matmul kernels: identity, scalar, oracle, omp==serial") {
    std::mt19937 rng(11);
    Tensor eye({3, 3});
    for (int i = 0; i < 3; ++i) eye.at({i, i}) = 1.f;
    Tensor b = uniform_tensor<float>({3, 2}, rng);
    Tensor out({3, 2});
    kernels::matmul_omp(eye.data.data(), b.data.data(), out.data.data(), 3, 3, 2);
    CHECK(max_abs_diff(out, b) == 0.0);

    Tensor a1({1, 1}, {2.f}), b1({1, 1}, {3.f}), c1({1, 1});
    kernels::matmul_serial(a1.data.data(), b1.data.data(), c1.data.data(), 1, 1, 1);
    CHECK(c1[0] == 6.f);

    Tensor a = uniform_tensor<float>({5, 4}, rng);
    Tensor bb = uniform_tensor<float>({4, 3}, rng);
    Tensor c({5, 3}), cs({5, 3});
    kernels::matmul_omp(a.data.data(), bb.data.data(), c.data.data(), 5, 4, 3);
    kernels::matmul_serial(a.data.data(), bb.data.data(), cs.data.data(), 5, 4, 3);
    CHECK(max_abs_diff(c, matmul_oracle(a, bb)) == 0.0);
    CHECK(max_abs_diff(c, cs) == 0.0);
}

TEST_CASE("matmul associativity within tolerance (f64, unit scale)") {
    std::mt19937 rng(3);
    for (int trial = 0; trial < 5; ++trial) {
        TensorD a = uniform_tensor<double>({4, 5}, rng);
        TensorD b = uniform_tensor<double>({5, 6}, rng);
        TensorD c = uniform_tensor<double>({6, 3}, rng);
        auto left = matmul_oracle(matmul_oracle(a, b), c);
        auto right = matmul_oracle(a, matmul_oracle(b, c));
        CHECK(max_abs_diff(left, right) <= 1e-5);
    }
}

TEST_CASE("binary tensor format round trip") {
    std::mt19937 rng(5);
    Tensor t = uniform_tensor<float>({2, 3, 4}, rng);
    std::stringstream ss;
    io::save_tensor(t, ss);
    Tensor u = io::load_tensor<float>(ss);
    CHECK(u.shape == t.shape);
    CHECK(max_abs_diff(t, u) == 0.0);

    TensorD d = uniform_tensor<double>({7}, rng);
    std::stringstream s2;
    io::save_tensor(d, s2);
    CHECK_THROWS(io::load_tensor<float>(s2));  // dtype mismatch
}
