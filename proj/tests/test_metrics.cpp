#include <doctest.h>

#include <cmath>
#include <random>

#include "hmr/metrics.hpp"

using namespace hmr;

namespace {
TensorD rotate_z_rows(const TensorD& p, double theta) {
    TensorD out(p.shape);
    const double c = std::cos(theta), s = std::sin(theta);
    for (int i = 0; i < p.dim(0); ++i) {
        out.at({i, 0}) = c * p.at({i, 0}) - s * p.at({i, 1});
        out.at({i, 1}) = s * p.at({i, 0}) + c * p.at({i, 1});
        out.at({i, 2}) = p.at({i, 2});
    }
    return out;
}

// brute-force similarity alignment restricted to z-rotations, for planar sets
double planar_procrustes_oracle(const TensorD& p, const TensorD& g, int angle_steps) {
    const int n = p.dim(0);
    double best = std::numeric_limits<double>::infinity();
    for (int a = 0; a < angle_steps; ++a) {
        const double theta = 2.0 * M_PI * a / angle_steps;
        TensorD r = rotate_z_rows(p, theta);
        // closed-form least-squares scale and translation for this rotation
        double mx[3] = {0, 0, 0}, my[3] = {0, 0, 0};
        for (int i = 0; i < n; ++i)
            for (int k = 0; k < 3; ++k) {
                mx[k] += r.at({i, k}) / n;
                my[k] += g.at({i, k}) / n;
            }
        double num = 0, den = 0;
        for (int i = 0; i < n; ++i)
            for (int k = 0; k < 3; ++k) {
                num += (r.at({i, k}) - mx[k]) * (g.at({i, k}) - my[k]);
                den += (r.at({i, k}) - mx[k]) * (r.at({i, k}) - mx[k]);
            }
        const double s = num / den;
        double acc = 0;
        for (int i = 0; i < n; ++i) {
            double e = 0;
            for (int k = 0; k < 3; ++k) {
                const double d = s * (r.at({i, k}) - mx[k]) + my[k] - g.at({i, k});
                e += d * d;
            }
            acc += std::sqrt(e);
        }
        best = std::min(best, acc / n);
    }
    return best;
}

TensorD random_points(int n, unsigned seed) {
    std::mt19937 rng(seed);
    return uniform_tensor<double>({n, 3}, rng);
}
}  // namespace

TEST_CASE("mpjpe: zero, uniform offset, loop oracle, shape errors") {
    auto p = random_points(21, 0);
    CHECK(mpjpe(p, p) == 0.0);

    TensorD off = p;
    for (int i = 0; i < 21; ++i) off.at({i, 0}) += 3.0;
    CHECK(mpjpe(off, p) == doctest::Approx(3.0).epsilon(1e-12));

    auto q = random_points(21, 1);
    double oracle = 0;
    for (int i = 0; i < 21; ++i) {
        double s = 0;
        for (int k = 0; k < 3; ++k) s += (p.at({i, k}) - q.at({i, k})) * (p.at({i, k}) - q.at({i, k}));
        oracle += std::sqrt(s) / 21.0;
    }
    CHECK(mpjpe(p, q) == doctest::Approx(oracle).epsilon(1e-12));

    CHECK_THROWS(mpjpe(p, random_points(20, 2)));
    CHECK_THROWS(mpjpe(TensorD({3, 4}), TensorD({3, 4})));
}

TEST_CASE("pa_mpjpe: invariant under any similarity applied to the prediction") {
    auto g = random_points(21, 3);
    CHECK(pa_mpjpe(g, g) == doctest::Approx(0.0).epsilon(1e-9));
    for (unsigned seed = 0; seed < 3; ++seed) {
        std::mt19937 rng(10 + seed);
        std::uniform_real_distribution<double> u(-1, 1);
        const double theta = 2.0 * u(rng), s = 0.5 + 0.4 * u(rng) + 0.5;
        TensorD p = rotate_z_rows(g, theta);
        for (int i = 0; i < 21; ++i)
            for (int k = 0; k < 3; ++k) p.at({i, k}) = s * p.at({i, k}) + (k + 1) * 0.3;
        CHECK(pa_mpjpe(p, g) <= 1e-5);
        CHECK(mpjpe(p, g) > 1e-3);  // raw metric is not invariant
    }
}

TEST_CASE("pa_mpjpe: never worse than mpjpe") {
    for (unsigned seed = 0; seed < 5; ++seed) {
        auto p = random_points(21, 20 + seed);
        auto g = random_points(21, 40 + seed);
        CHECK(pa_mpjpe(p, g) <= mpjpe(p, g) + 1e-6);
    }
}

TEST_CASE("pa_mpjpe: planar 4-point case matches a rotation grid-search oracle") {
    std::mt19937 rng(5);
    std::uniform_real_distribution<double> u(-1, 1);
    TensorD g({4, 3}, {0, 0, 0, 1, 0, 0, 0.3, 1.1, 0, -0.6, 0.4, 0});
    for (unsigned seed = 0; seed < 3; ++seed) {
        TensorD p = rotate_z_rows(g, 0.9 + 0.3 * seed);
        for (int i = 0; i < 4; ++i)
            for (int k = 0; k < 2; ++k) p.at({i, k}) = 1.2 * p.at({i, k}) + 0.05 * u(rng);
        const double ours = pa_mpjpe(p, g);
        const double oracle = planar_procrustes_oracle(p, g, 3600);
        CHECK(ours == doctest::Approx(oracle).epsilon(1e-2));
        CHECK(ours <= oracle + 1e-2);
    }
}

TEST_CASE("pa_mpjpe: degenerate and undersized inputs are errors; scale switch") {
    TensorD line({5, 3});
    for (int i = 0; i < 5; ++i) line.at({i, 0}) = i;
    CHECK_THROWS(pa_mpjpe(line, random_points(5, 6)));
    CHECK_THROWS(pa_mpjpe(TensorD({2, 3}), TensorD({2, 3})));

    // without scale, a scaled copy cannot be aligned to zero
    auto g = random_points(10, 7);
    TensorD p = g;
    for (auto& x : p.data) x *= 2.0;
    CHECK(pa_mpjpe(p, g, true) <= 1e-6);
    CHECK(pa_mpjpe(p, g, false) > 1e-3);
}

TEST_CASE("acc: constant and constant-velocity tracks are zero; quadratic recovers a") {
    SequenceTrack t;
    t.dt = 0.1;
    TensorD base = random_points(5, 8);
    for (int f = 0; f < 6; ++f) t.frames.push_back(base);
    CHECK(acc(t) == 0.0);

    SequenceTrack v;
    v.dt = 0.1;
    for (int f = 0; f < 6; ++f) {
        TensorD x = base;
        for (int i = 0; i < 5; ++i) x.at({i, 0}) += 0.7 * f * v.dt;
        v.frames.push_back(x);
    }
    CHECK(acc(v) == doctest::Approx(0.0).epsilon(1e-9));

    const double a = 4.2;
    SequenceTrack q;
    q.dt = 0.05;
    for (int f = 0; f < 8; ++f) {
        TensorD x = base;
        const double tt = f * q.dt;
        for (int i = 0; i < 5; ++i) x.at({i, 2}) += 0.5 * a * tt * tt;
        q.frames.push_back(x);
    }
    CHECK(acc(q) == doctest::Approx(a).epsilon(1e-9));

    SequenceTrack two;
    two.frames = {base, base};
    CHECK_THROWS(acc(two));
}

TEST_CASE("auc_pck: step-function cases") {
    CHECK(auc_pck({0, 0, 0}, 0.0, 50.0, 100) == doctest::Approx(1.0));
    CHECK(auc_pck({60, 70, 90}, 0.0, 50.0, 100) == doctest::Approx(0.0));
    std::vector<double> half{0, 0, 100, 100};
    CHECK(auc_pck(half, 0.0, 50.0, 100) == doctest::Approx(0.5));
    CHECK(auc_pck(half, 20.0, 50.0, 100) == doctest::Approx(0.5));
    CHECK(pck(half, 50.0) == doctest::Approx(0.5));
    CHECK_THROWS(auc_pck({}, 0.0, 50.0, 100));
    CHECK_THROWS(auc_pck({1.0}, 0.0, 50.0, 1));
    CHECK_THROWS(auc_pck({1.0}, 50.0, 50.0, 100));
}

TEST_CASE("f_score: identity, disjoint, and the half-matching 2/3 construction") {
    auto g = random_points(30, 9);
    CHECK(f_score(g, g, 1e-9) == doctest::Approx(1.0));

    TensorD far = g;
    for (auto& x : far.data) x += 1000.0;
    CHECK(f_score(far, g, 15.0) == doctest::Approx(0.0));

    // prediction: both gt vertices plus two far-away extras
    TensorD gt2({2, 3}, {0, 0, 0, 1, 0, 0});
    TensorD pred({4, 3}, {0, 0, 0, 1, 0, 0, 500, 0, 0, 600, 0, 0});
    CHECK(f_score(pred, gt2, 5.0) == doctest::Approx(2.0 / 3.0));
    CHECK(f_score(gt2, pred, 5.0) == doctest::Approx(2.0 / 3.0));  // symmetric rule

    CHECK_THROWS(f_score(TensorD({0, 3}), gt2, 5.0));
    CHECK_THROWS(f_score(pred, gt2, 0.0));
}

TEST_CASE("report and curve exports") {
    MetricReport r;
    r.mpjpe = 7.1;
    r.f5 = 0.5;
    CHECK(r.to_csv().rfind("mpjpe,pa_mpjpe,acc,auc,f5,f15\n", 0) == 0);
    CHECK(r.to_json().find("\"mpjpe\": 7.1") != std::string::npos);

    auto curve = pck_curve_csv({0.0, 10.0}, 0.0, 50.0, 11);
    int lines = 0;
    for (char c : curve)
        if (c == '\n') ++lines;
    CHECK(lines == 12);  // header + 11 thresholds
    CHECK(curve.rfind("threshold,fraction\n0.000000,0.500000\n", 0) == 0);
}
