#include <doctest.h>

#include <random>

#include "hmr/gradcheck.hpp"
#include "hmr/lifting.hpp"

using namespace hmr;
using namespace hmr::ad;

TEST_CASE("soft_argmax: one-hot peak decodes to that pixel center") {
    Tensor h({1, 8, 8}, -1e9f);
    h.at({0, 2, 5}) = 50.f;
    auto out = soft_argmax(constant(h), 1.f);
    CHECK(out->value.at({0, 0}) == doctest::Approx(5.0 / 7.0).epsilon(0.07));  // within half a pixel
    CHECK(out->value.at({0, 1}) == doctest::Approx(2.0 / 7.0).epsilon(0.07));
}

TEST_CASE("soft_argmax: uniform map decodes to the image center") {
    Tensor h({2, 6, 6}, 0.3f);
    auto out = soft_argmax(constant(h), 1.f);
    for (int j = 0; j < 2; ++j) {
        CHECK(out->value.at({j, 0}) == doctest::Approx(0.5));
        CHECK(out->value.at({j, 1}) == doctest::Approx(0.5));
    }
}

TEST_CASE("soft_argmax: two equal opposite-corner peaks decode to the midpoint") {
    Tensor h({1, 9, 9}, -1e9f);
    h.at({0, 0, 0}) = 10.f;
    h.at({0, 8, 8}) = 10.f;
    auto out = soft_argmax(constant(h), 1.f);
    CHECK(out->value.at({0, 0}) == doctest::Approx(0.5).epsilon(1e-5));
    CHECK(out->value.at({0, 1}) == doctest::Approx(0.5).epsilon(1e-5));
}

TEST_CASE("soft_argmax: translation equivariance away from borders") {
    auto onehot = [](int y, int x) {
        Tensor h({1, 16, 16}, -1e9f);
        h.at({0, y, x}) = 40.f;
        return h;
    };
    auto a = soft_argmax(constant(onehot(7, 6)), 0.5f);
    auto b = soft_argmax(constant(onehot(7, 7)), 0.5f);
    CHECK(b->value.at({0, 0}) - a->value.at({0, 0}) == doctest::Approx(1.0 / 15.0).epsilon(1e-3));
    CHECK(b->value.at({0, 1}) - a->value.at({0, 1}) == doctest::Approx(0.0).epsilon(1e-6));
}

TEST_CASE("soft_argmax: invalid temperature and non-finite maps are errors") {
    Tensor h({1, 4, 4});
    CHECK_THROWS(soft_argmax(constant(h), 0.f));
    h.fill(-std::numeric_limits<float>::infinity());
    CHECK_THROWS(soft_argmax(constant(h), 1.f));
}

TEST_CASE("soft_argmax gradcheck") {
    std::mt19937 rng(0);
    std::vector<TensorD> in{uniform_tensor<double>({2, 5, 5}, rng)};
    auto rep = gradcheck<double>(
        "soft_argmax",
        [](const std::vector<VarD>& p) { return sum(soft_argmax(p[0], 0.7)); }, in, 1e-6, 1e-6);
    CHECK(rep.passed);
}

TEST_CASE("mapreg: zero map + zero weights + center bias puts all joints at (0.5,0.5)") {
    std::mt19937 rng(1);
    auto m = MapReg::init(16, 16, 64, rng);
    m.w1.fill(0.f);
    m.w2.fill(0.f);
    m.b1.fill(0.f);
    auto out = mapreg_forward(constant(Tensor({kNumJoints, 16, 16})), m);
    CHECK(out->value.shape == std::vector<int>{21, 2});
    for (auto v : out->value.data) CHECK(v == 0.5f);
}

TEST_CASE("mapreg: identical channels give identical positions (shared weights)") {
    std::mt19937 rng(2);
    auto m = MapReg::init(8, 8, 16, rng);
    Tensor channel = uniform_tensor<float>({1, 8, 8}, rng);
    Tensor fmap({5, 8, 8});
    for (int j = 0; j < 5; ++j)
        std::copy(channel.data.begin(), channel.data.end(), fmap.data.begin() + j * 64);
    auto out = mapreg_forward(constant(fmap), m);
    for (int j = 1; j < 5; ++j) {
        CHECK(out->value.at({j, 0}) == out->value.at({0, 0}));
        CHECK(out->value.at({j, 1}) == out->value.at({0, 1}));
    }
}

TEST_CASE("mapreg: wrong channel geometry is a shape error") {
    std::mt19937 rng(3);
    auto m = MapReg::init(16, 16, 32, rng);
    CHECK_THROWS(mapreg_forward(constant(Tensor({21, 8, 8})), m));
}

TEST_CASE("mapreg gradcheck") {
    std::mt19937 rng(4);
    auto m = MapRegT<double>::init(4, 4, 6, rng);
    std::vector<TensorD> in{uniform_tensor<double>({3, 4, 4}, rng), m.w1, m.b1, m.w2, m.b2};
    auto rep = gradcheck<double>(
        "mapreg",
        [](const std::vector<VarD>& p) { return sum(mapreg_forward(p[0], p[1], p[2], p[3], p[4])); },
        in, 1e-6, 1e-6);
    CHECK(rep.passed);
}

TEST_CASE("joint_wise_pooling: one-hot mask with max picks that pixel's features") {
    std::mt19937 rng(5);
    Tensor fe = uniform_tensor<float>({4, 6, 6}, rng, 0.f, 1.f);  // nonnegative
    Tensor h({2, 6, 6});
    h.at({0, 1, 2}) = 1.f;
    h.at({1, 4, 4}) = 1.f;
    auto out = joint_wise_pooling(constant(fe), constant(h), Reduce::kMax);
    // max over fe * mask == fe at the hot pixel when fe is nonnegative
    for (int c = 0; c < 4; ++c) {
        CHECK(out->value.at({0, c}) == doctest::Approx(fe.at({c, 1, 2})));
        CHECK(out->value.at({1, c}) == doctest::Approx(fe.at({c, 4, 4})));
    }
}

TEST_CASE("joint_wise_pooling: uniform mask with sum gives the global spatial sum") {
    std::mt19937 rng(6);
    Tensor fe = uniform_tensor<float>({3, 5, 5}, rng);
    Tensor h({2, 5, 5}, 1.f);
    auto out = joint_wise_pooling(constant(fe), constant(h), Reduce::kSum);
    for (int j = 0; j < 2; ++j)
        for (int c = 0; c < 3; ++c) {
            float s = 0;
            for (int i = 0; i < 25; ++i) s += fe[c * 25 + i];
            CHECK(out->value.at({j, c}) == doctest::Approx(s).epsilon(1e-4));
        }
}

TEST_CASE("joint_wise_pooling: zero heatmap zeroes both modes (nonnegative features)") {
    std::mt19937 rng(7);
    Tensor fe = uniform_tensor<float>({3, 4, 4}, rng, 0.f, 1.f);
    Tensor h({2, 4, 4});
    for (auto mode : {Reduce::kMax, Reduce::kSum}) {
        auto out = joint_wise_pooling(constant(fe), constant(h), mode);
        for (auto v : out->value.data) CHECK(v == 0.f);
    }
}

TEST_CASE("joint_wise_pooling: sum mode is linear in features; max is positively homogeneous") {
    std::mt19937 rng(8);
    Tensor fe = uniform_tensor<float>({3, 4, 4}, rng);
    Tensor ge = uniform_tensor<float>({3, 4, 4}, rng);
    Tensor h = uniform_tensor<float>({2, 4, 4}, rng, 0.f, 1.f);
    const float a = 0.7f, b = -1.3f;
    Tensor mix({3, 4, 4});
    for (std::int64_t i = 0; i < mix.numel(); ++i) mix[i] = a * fe[i] + b * ge[i];
    auto om = joint_wise_pooling(constant(mix), constant(h), Reduce::kSum);
    auto of = joint_wise_pooling(constant(fe), constant(h), Reduce::kSum);
    auto og = joint_wise_pooling(constant(ge), constant(h), Reduce::kSum);
    for (std::int64_t i = 0; i < om->value.numel(); ++i)
        CHECK(om->value[i] == doctest::Approx(a * of->value[i] + b * og->value[i]).epsilon(1e-3));

    Tensor scaled({3, 4, 4});
    for (std::int64_t i = 0; i < scaled.numel(); ++i) scaled[i] = 2.5f * fe[i];
    auto sm = joint_wise_pooling(constant(scaled), constant(h), Reduce::kMax);
    auto fm = joint_wise_pooling(constant(fe), constant(h), Reduce::kMax);
    for (std::int64_t i = 0; i < sm->value.numel(); ++i)
        CHECK(sm->value[i] == doctest::Approx(2.5f * fm->value[i]).epsilon(1e-4));
}

TEST_CASE("grid_sample_pooling: integer-center landmarks equal direct gather; constants") {
    std::mt19937 rng(9);
    Tensor fe = uniform_tensor<float>({4, 5, 5}, rng);
    Tensor l({2, 2}, {0.25f, 0.5f, 1.f, 0.f});  // pixel (2,1) wait x=1 col 4 row 0
    auto out = grid_sample_pooling(constant(fe), constant(l));
    for (int c = 0; c < 4; ++c) {
        CHECK(out->value.at({0, c}) == doctest::Approx(fe.at({c, 2, 1})));
        CHECK(out->value.at({1, c}) == doctest::Approx(fe.at({c, 0, 4})));
    }
    Tensor cm({3, 4, 4}, 2.f);
    auto oc = grid_sample_pooling(constant(cm), constant(uniform_tensor<float>({5, 2}, rng, 0.f, 1.f)));
    for (auto v : oc->value.data) CHECK(v == doctest::Approx(2.f));
}

TEST_CASE("pvl: one-hot rows copy landmark features; linearity; parameter count") {
    std::mt19937 rng(10);
    Tensor fp = uniform_tensor<float>({21, 8}, rng);
    Tensor m({5, 21});
    const int picks[5] = {3, 0, 20, 7, 7};
    for (int r = 0; r < 5; ++r) m.at({r, picks[r]}) = 1.f;
    auto out = pvl(constant(fp), constant(m));
    for (int r = 0; r < 5; ++r)
        for (int c = 0; c < 8; ++c) CHECK(out->value.at({r, c}) == fp.at({picks[r], c}));

    Tensor gp = uniform_tensor<float>({21, 8}, rng);
    Tensor mix({21, 8});
    for (std::int64_t i = 0; i < mix.numel(); ++i) mix[i] = 2.f * fp[i] - 3.f * gp[i];
    Tensor mm = uniform_tensor<float>({5, 21}, rng);
    auto om = pvl(constant(mix), constant(mm));
    auto of = pvl(constant(fp), constant(mm));
    auto og = pvl(constant(gp), constant(mm));
    for (std::int64_t i = 0; i < om->value.numel(); ++i)
        CHECK(om->value[i] == doctest::Approx(2.f * of->value[i] - 3.f * og->value[i]).epsilon(1e-3));

    CHECK(pvl_params(49, 21) == 1029);
}

TEST_CASE("pvl gradcheck in both arguments") {
    std::mt19937 rng(11);
    std::vector<TensorD> in{uniform_tensor<double>({4, 3}, rng), uniform_tensor<double>({6, 4}, rng)};
    auto rep = gradcheck<double>(
        "pvl", [](const std::vector<VarD>& p) { return sum(pvl(p[0], p[1])); }, in, 1e-6, 1e-6);
    CHECK(rep.passed);
}

TEST_CASE("lifting matrix export: abs values, zero and one-hot grids") {
    Tensor zero({3, 4});
    auto csv = lifting_matrix_abs_csv(zero);
    CHECK(csv.find("0.000000,0.000000,0.000000,0.000000") == 0);

    Tensor m({2, 2}, {-1.5f, 0.f, 0.f, 2.f});
    auto c2 = lifting_matrix_abs_csv(m);
    CHECK(c2.find("1.500000") != std::string::npos);
    CHECK(c2.find("2.000000") != std::string::npos);
    CHECK(c2.find("-") == std::string::npos);
}

TEST_CASE("joint_wise_pooling gradcheck (sum mode)") {
    std::mt19937 rng(12);
    std::vector<TensorD> in{uniform_tensor<double>({2, 4, 4}, rng), uniform_tensor<double>({2, 3, 3}, rng)};
    auto rep = gradcheck<double>(
        "joint_wise_pooling",
        [](const std::vector<VarD>& p) { return sum(joint_wise_pooling(p[0], p[1], Reduce::kSum)); },
        in, 1e-6, 1e-6);
    CHECK(rep.passed);
}
