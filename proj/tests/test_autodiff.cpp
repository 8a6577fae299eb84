#include <doctest.h>

#include <random>

#include "hmr/autodiff.hpp"
#include "hmr/gradcheck.hpp"
#include "hmr/tensor.hpp"

using namespace hmr;
using namespace hmr::ad;

namespace {
// direct 6-loop conv reference
Tensor conv_oracle(const Tensor& x, const Tensor& w, int stride, int pad) {
    const int cin = x.dim(0), h = x.dim(1), wd = x.dim(2);
    const int cout = w.dim(0), kh = w.dim(2), kw = w.dim(3);
    const int ho = (h + 2 * pad - kh) / stride + 1, wo = (wd + 2 * pad - kw) / stride + 1;
    Tensor y({cout, ho, wo});
    for (int oc = 0; oc < cout; ++oc)
        for (int oy = 0; oy < ho; ++oy)
            for (int ox = 0; ox < wo; ++ox) {
                float acc = 0;
                for (int ic = 0; ic < cin; ++ic)
                    for (int ky = 0; ky < kh; ++ky)
                        for (int kx = 0; kx < kw; ++kx) {
                            const int iy = oy * stride + ky - pad, ix = ox * stride + kx - pad;
                            if (iy < 0 || iy >= h || ix < 0 || ix >= wd) continue;
                            acc += x.at({ic, iy, ix}) * w.at({oc, ic, ky, kx});
                        }
                y.at({oc, oy, ox}) = acc;
            }
    return y;
}
}  // namespace

TEST_CASE("conv2d: 1x1 identity kernel") {
    std::mt19937 rng(1);
    auto x = param(uniform_tensor<float>({1, 4, 4}, rng));
    Tensor w({1, 1, 1, 1}, {1.f});
    auto y = conv2d(x, constant(w), VarF{}, 1, 0);
    CHECK(max_abs_diff(y->value, x->value.reshaped({1, 4, 4})) == 0.0);
}

TEST_CASE("conv2d: all-ones 3x3 on all-ones 5x5 gives all-9 3x3") {
    auto x = constant(Tensor({1, 5, 5}, 1.f));
    auto w = constant(Tensor({1, 1, 3, 3}, 1.f));
    auto y = conv2d(x, w, VarF{}, 1, 0);
    CHECK(y->value.shape == std::vector<int>{1, 3, 3});
    for (auto v : y->value.data) CHECK(v == doctest::Approx(9.f));
}

TEST_CASE("conv2d: random case equals 6-loop oracle, stride/pad") {
    std::mt19937 rng(2);
    Tensor x = uniform_tensor<float>({3, 7, 9}, rng);
    Tensor w = uniform_tensor<float>({4, 3, 3, 3}, rng);
    auto y = conv2d(constant(x), constant(w), VarF{}, 2, 1);
    CHECK(max_abs_diff(y->value, conv_oracle(x, w, 2, 1)) <= 1e-6);
}

TEST_CASE("conv2d: non-integral output extent is a shape error") {
    auto x = constant(Tensor({1, 6, 6}));
    auto w = constant(Tensor({1, 1, 3, 3}));
    CHECK_THROWS(conv2d(x, w, VarF{}, 4, 0));
}

TEST_CASE("reduce_spatial: trivial and loop-oracle cases") {
    auto zeros = constant(Tensor({2, 3, 3}));
    CHECK(reduce_spatial(zeros, Reduce::kMax)->value.data == std::vector<float>{0.f, 0.f});
    CHECK(reduce_spatial(zeros, Reduce::kSum)->value.data == std::vector<float>{0.f, 0.f});

    auto one = constant(Tensor({1, 1, 1}, {2.5f}));
    CHECK(reduce_spatial(one, Reduce::kMax)->value[0] == 2.5f);
    CHECK(reduce_spatial(one, Reduce::kSum)->value[0] == 2.5f);

    std::mt19937 rng(3);
    Tensor x = uniform_tensor<float>({2, 3, 3}, rng);
    auto mx = reduce_spatial(constant(x), Reduce::kMax);
    auto sm = reduce_spatial(constant(x), Reduce::kSum);
    for (int c = 0; c < 2; ++c) {
        float m = -1e30f, s = 0;
        for (int i = 0; i < 9; ++i) {
            m = std::max(m, x[c * 9 + i]);
            s += x[c * 9 + i];
        }
        CHECK(mx->value[c] == doctest::Approx(m));
        CHECK(sm->value[c] == doctest::Approx(s).epsilon(1e-5));
    }
}

TEST_CASE("grid_sample: pixel centers, constants, midpoint") {
    // 1x1x2 map [a,b], x midway -> (a+b)/2
    Tensor f({1, 1, 2}, {3.f, 5.f});
    Tensor l({1, 2}, {0.5f, 0.f});
    auto out = grid_sample(constant(f), constant(l));
    CHECK(out->value[0] == doctest::Approx(4.f));

    // exact pixel centers pick the pixel's channel vector
    std::mt19937 rng(4);
    Tensor g = uniform_tensor<float>({3, 4, 5}, rng);
    Tensor centers({2, 2}, {2.f / 4.f, 1.f / 3.f, 0.f, 1.f});
    auto o2 = grid_sample(constant(g), constant(centers));
    for (int c = 0; c < 3; ++c) {
        CHECK(o2->value.at({0, c}) == doctest::Approx(g.at({c, 1, 2})));
        CHECK(o2->value.at({1, c}) == doctest::Approx(g.at({c, 3, 0})));
    }

    // constant map gives the constant for any p, including clamped p
    Tensor cm({2, 3, 3}, 7.f);
    Tensor pts({2, 2}, {0.31f, 0.77f, -0.5f, 1.5f});
    std::vector<bool> clamped;
    auto o3 = grid_sample(constant(cm), constant(pts), &clamped);
    for (auto v : o3->value.data) CHECK(v == doctest::Approx(7.f));
    CHECK(clamped == std::vector<bool>{false, true});
}

TEST_CASE("gradcheck: matmul passes at 1e-3 f32 and 1e-6 f64") {
    for (unsigned seed : {0u, 1u, 2u}) {
        std::mt19937 rng(seed);
        std::vector<Tensor> inputs{uniform_tensor<float>({3, 3}, rng), uniform_tensor<float>({3, 3}, rng)};
        auto rep = gradcheck<float>(
            "matmul",
            [](const std::vector<VarF>& p) { return sum(matmul(p[0], p[1])); }, inputs, 1e-2, 1e-3);
        CHECK(rep.passed);
        CHECK(rep.max_rel_error < 1e-3);

        std::mt19937 rng2(seed);
        std::vector<TensorD> dinputs{uniform_tensor<double>({3, 3}, rng2), uniform_tensor<double>({3, 3}, rng2)};
        auto repd = gradcheck<double>(
            "matmul",
            [](const std::vector<VarD>& p) { return sum(matmul(p[0], p[1])); }, dinputs, 1e-5, 1e-6);
        CHECK(repd.passed);
        CHECK(repd.max_rel_error < 1e-6);
    }
}

TEST_CASE("gradcheck: identity op has zero error; corrupted backward fails") {
    std::mt19937 rng(9);
    std::vector<TensorD> inputs{uniform_tensor<double>({4}, rng)};
    auto rep = gradcheck<double>(
        "identity", [](const std::vector<VarD>& p) { return sum(p[0]); }, inputs, 1e-6, 1e-9);
    CHECK(rep.passed);
    CHECK(rep.max_rel_error <= 1e-9);

    // negative control: backward off by 2x must be detected
    auto corrupted = [](const std::vector<VarD>& p) {
        auto n = ad::make_op<double>(p[0]->value, {p[0]});
        auto* self = n.get();
        auto a = p[0];
        n->backward_fn = [self, a] {
            a->ensure_grad();
            for (std::int64_t i = 0; i < self->grad.numel(); ++i) a->grad[i] += 2.0 * self->grad[i];
        };
        return sum(n);
    };
    auto bad = gradcheck<double>("corrupted", corrupted, inputs, 1e-6, 1e-3);
    CHECK_FALSE(bad.passed);
}

TEST_CASE("gradcheck: conv2d, grid_sample (map and coords), reductions") {
    std::mt19937 rng(12);
    std::vector<TensorD> ci{uniform_tensor<double>({2, 5, 5}, rng), uniform_tensor<double>({3, 2, 3, 3}, rng),
                            uniform_tensor<double>({3}, rng)};
    auto rep = gradcheck<double>(
        "conv2d",
        [](const std::vector<VarD>& p) { return sum(conv2d(p[0], p[1], p[2], 2, 1)); }, ci, 1e-5, 1e-6);
    CHECK(rep.passed);

    std::vector<TensorD> gi{uniform_tensor<double>({2, 4, 4}, rng),
                            uniform_tensor<double>({3, 2}, rng, 0.15, 0.85)};
    auto rep2 = gradcheck<double>(
        "grid_sample",
        [](const std::vector<VarD>& p) { return sum(grid_sample(p[0], p[1])); }, gi, 1e-5, 1e-6);
    CHECK(rep2.passed);

    std::vector<TensorD> ri{uniform_tensor<double>({2, 3, 3}, rng)};
    auto rep3 = gradcheck<double>(
        "reduce_max",
        [](const std::vector<VarD>& p) { return sum(reduce_spatial(p[0], Reduce::kMax)); }, ri, 1e-6, 1e-6);
    CHECK(rep3.passed);
    auto rep4 = gradcheck<double>(
        "reduce_sum",
        [](const std::vector<VarD>& p) { return sum(reduce_spatial(p[0], Reduce::kSum)); }, ri, 1e-6, 1e-6);
    CHECK(rep4.passed);
}

TEST_CASE("gradcheck: bilinear_resize, depthwise, channel_scale, sigmoid mlp chain") {
    std::mt19937 rng(13);
    std::vector<TensorD> ui{uniform_tensor<double>({2, 3, 3}, rng)};
    auto r1 = gradcheck<double>(
        "bilinear_resize",
        [](const std::vector<VarD>& p) { return sum(bilinear_resize(p[0], 6, 6)); }, ui, 1e-6, 1e-6);
    CHECK(r1.passed);

    std::vector<TensorD> di{uniform_tensor<double>({2, 4, 4}, rng), uniform_tensor<double>({2, 3, 3}, rng)};
    auto r2 = gradcheck<double>(
        "depthwise_conv2d",
        [](const std::vector<VarD>& p) { return sum(depthwise_conv2d(p[0], p[1])); }, di, 1e-5, 1e-6);
    CHECK(r2.passed);

    std::vector<TensorD> si{uniform_tensor<double>({3, 2, 2}, rng), uniform_tensor<double>({3}, rng)};
    auto r3 = gradcheck<double>(
        "channel_scale",
        [](const std::vector<VarD>& p) {
            return sum(channel_scale(p[0], sigmoid(p[1])));
        },
        si, 1e-5, 1e-6);
    CHECK(r3.passed);
}
