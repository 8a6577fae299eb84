#pragma once

// Shared catalog of learnable operations for gradient verification: every op
// in graphconv/lifting/encoder/losses is exercised through a scalar head so
// both the CLI entry point and the acceptance suite check the same census.

#include <array>
#include <functional>
#include <random>
#include <string>
#include <vector>

#include "hmr/gradcheck.hpp"
#include "hmr/graphconv.hpp"
#include "hmr/lifting.hpp"
#include "hmr/losses.hpp"
#include "hmr/mesh.hpp"

namespace hmr {
namespace gradsuite {

template <class T>
using Builder = std::function<ad::Var<T>(const std::vector<ad::Var<T>>&)>;

template <class T>
struct OpCase {
    std::string name;
    std::vector<TensorT<T>> inputs;
    Builder<T> forward;
};

// shared fixture state referenced by the capture-light lambdas below
const TriMesh& grid_mesh() {
    static const TriMesh g = make_grid(4, 3);  // 12 vertices
    return g;
}
const std::vector<std::array<int, 3>>& grid_faces() { return grid_mesh().faces; }
const SpiralIndexTable& grid_table() {
    static const SpiralIndexTable t = build_spiral_table(grid_mesh(), 5);
    return t;
}
TensorD vertices_tensor_of(const TriMesh& m) {
    TensorD t({m.vertex_count(), 3});
    for (int i = 0; i < m.vertex_count(); ++i)
        for (int c = 0; c < 3; ++c)
            t.at({i, c}) = m.vertices[static_cast<std::size_t>(i)][static_cast<std::size_t>(c)];
    return t;
}
template <class T>
TensorT<T> normals_tensor_of(const TriMesh& m) {
    auto ns = face_normals(m);
    TensorT<T> t({static_cast<int>(ns.size()), 3});
    for (std::size_t i = 0; i < ns.size(); ++i)
        for (int c = 0; c < 3; ++c)
            t.at({static_cast<int>(i), c}) = static_cast<T>(ns[i][static_cast<std::size_t>(c)]);
    return t;
}

template <class T>
std::vector<OpCase<T>> gradcheck_cases(unsigned seed, bool inject_fault) {
    std::mt19937 rng(seed);
    auto u = [&](std::vector<int> shape) { return uniform_tensor<T>(std::move(shape), rng); };
    std::vector<OpCase<T>> cases;

    const auto& table = grid_table();
    (void)table;
    const int v = grid_mesh().vertex_count();

    // graphconv
    cases.push_back({"graphconv.spiralpp",
                     {u({v, 3}), u({4, 5 * 3}), u({4})},
                     [](const auto& p) {
                         return ad::mean(spiralpp_forward(p[0], grid_table(), p[1], p[2]));
                     }});
    cases.push_back({"graphconv.dsconv",
                     {u({v, 3}), u({3, 5}), u({4, 3}), u({4})},
                     [](const auto& p) {
                         return ad::mean(dsconv_forward(p[0], grid_table(), p[1], p[2], p[3]));
                     }});
    {
        // decoder upsample step: sparse up-transform + spiral conv
        static CooMatrix up;
        up = CooMatrix{};
        up.rows = v;
        up.cols = v;
        for (int i = 0; i < v; ++i) {
            up.push(i, i, 0.5);
            up.push(i, (i + 1) % v, 0.5);
        }
        cases.push_back({"graphconv.upsample_dsconv",
                         {u({v, 3}), u({3, 5}), u({3, 3})},
                         [](const auto& p) {
                             auto x = ad::sparse_apply(up, p[0]);
                             return ad::mean(dsconv_forward(x, grid_table(), p[1], p[2], ad::Var<T>{}));
                         }});
    }

    // lifting
    cases.push_back({"lifting.soft_argmax",
                     {u({4, 6, 6})},
                     [](const auto& p) { return ad::mean(soft_argmax(p[0], T(0.5))); }});
    cases.push_back({"lifting.mapreg_mlp",
                     {u({4, 3, 3}), u({9, 6}), u({6}), u({6, 2}), u({2})},
                     [](const auto& p) { return ad::mean(mapreg_forward(p[0], p[1], p[2], p[3], p[4])); }});
    {
        // fixed positions kept away from the bilinear cell boundaries so the
        // finite-difference probes stay within one smooth piece
        TensorT<T> lm({5, 2}, {T(0.23), T(0.37), T(0.51), T(0.66), T(0.74), T(0.29), T(0.43),
                               T(0.57), T(0.69), T(0.31)});
        cases.push_back({"lifting.grid_sample_pooling",
                         {u({3, 6, 6}), lm},
                         [](const auto& p) { return ad::mean(grid_sample_pooling(p[0], p[1])); }});
    }
    cases.push_back({"lifting.joint_wise_pooling",
                     {u({3, 4, 4}), u({5, 4, 4})},
                     [](const auto& p) {
                         return ad::mean(joint_wise_pooling(p[0], p[1], ad::Reduce::kSum));
                     }});
    cases.push_back({"lifting.pvl",
                     {u({7, 5}), u({5, 3})},
                     [](const auto& p) { return ad::mean(pvl(p[1], p[0])); }});

    // encoder
    cases.push_back({"encoder.conv2d",
                     {u({2, 5, 5}), u({3, 2, 3, 3}), u({3})},
                     [](const auto& p) { return ad::mean(ad::conv2d(p[0], p[1], p[2], 1, 1)); }});
    cases.push_back({"encoder.ghost_block",
                     {u({2, 4, 4}), u({2, 2, 3, 3}), u({2}), u({2, 3, 3})},
                     [](const auto& p) {
                         auto prim = ad::relu(ad::conv2d(p[0], p[1], p[2], 1, 1));
                         return ad::mean(ad::concat0(prim, ad::depthwise_conv2d(prim, p[3])));
                     }});
    cases.push_back({"encoder.se_gate",
                     {u({3, 4, 4}), u({3, 2}), u({2}), u({2, 3}), u({3})},
                     [](const auto& p) {
                         auto sq = ad::reshape(ad::global_avg_pool(p[0]), {1, 3});
                         auto h = ad::relu(ad::add_rowvec(ad::matmul(sq, p[1]), p[2]));
                         auto g = ad::sigmoid(ad::add_rowvec(ad::matmul(h, p[3]), p[4]));
                         return ad::mean(ad::channel_scale(p[0], ad::reshape(g, {3})));
                     }});
    cases.push_back({"encoder.avg_pool2",
                     {u({2, 4, 4}), u({2, 2, 3, 3}), u({2})},
                     [](const auto& p) {
                         return ad::mean(ad::avg_pool2(ad::conv2d(p[0], p[1], p[2], 1, 1)));
                     }});
    cases.push_back({"encoder.bilinear_fuse",
                     {u({3, 2, 2}), u({3, 4, 4})},
                     [](const auto& p) {
                         return ad::mean(ad::add(ad::bilinear_resize(p[0], 4, 4), p[1]));
                     }});

    // losses (geometry perturbed away from the degenerate guard)
    auto vgrid = vertices_tensor_of(grid_mesh());
    {
        std::mt19937 prng(seed + 7);
        std::uniform_real_distribution<double> d(-0.08, 0.08);
        TensorT<T> vp(vgrid.shape);
        for (std::int64_t i = 0; i < vp.numel(); ++i) vp[i] = static_cast<T>(vgrid[i] + d(prng));
        TensorT<T> gt(vgrid.shape);
        for (std::int64_t i = 0; i < gt.numel(); ++i) gt[i] = static_cast<T>(vgrid[i]);
        auto normals = normals_tensor_of<T>(grid_mesh());

        cases.push_back({"losses.l_mesh",
                         {vp, gt},
                         [](const auto& p) { return l_mesh(p[0], p[1]); }});
        cases.push_back({"losses.l_norm", {vp}, [normals](const auto& p) {
                             return l_norm(p[0], grid_faces(), normals);
                         }});
        cases.push_back({"losses.l_edge", {vp}, [gt](const auto& p) {
                             return l_edge(p[0], gt, grid_faces());
                         }});
        static ViewTransformT<T> vt;
        vt = ViewTransformT<T>::from_rotation_z(T(0.4), T(1.1), T(0.03), T(-0.02));
        std::mt19937 crng(seed + 13);
        cases.push_back({"losses.l_consistency",
                         {vp, uniform_tensor<T>(vp.shape, crng), uniform_tensor<T>({5, 2}, crng),
                          uniform_tensor<T>({5, 2}, crng)},
                         [](const auto& p) {
                             auto [c3, c2] = l_consistency(wrist_rooted(p[0]), wrist_rooted(p[1]),
                                                           p[2], p[3], vt);
                             return ad::add(c3, c2);
                         }});
    }

    if (inject_fault) {
        // deliberately wrong backward: forward x^2, backward reports 3x
        cases.push_back({"fixture.corrupted_backward", {u({4})}, [](const auto& p) {
                             auto& x = p[0];
                             TensorT<T> out({1});
                             for (std::int64_t i = 0; i < x->value.numel(); ++i)
                                 out[0] += x->value[i] * x->value[i];
                             auto n = ad::make_op<T>(std::move(out), {x});
                             auto* self = n.get();
                             n->backward_fn = [self, x] {
                                 x->ensure_grad();
                                 for (std::int64_t i = 0; i < x->value.numel(); ++i)
                                     x->grad[i] += T(3) * x->value[i] * self->grad[0];
                             };
                             return n;
                         }});
    }
    return cases;
}

struct SuiteCheck {
    std::string op;
    unsigned seed = 0;
    double max_rel_error = 0.0;
    bool passed = false;
};

struct SuiteResult {
    int op_count = 0;
    bool all_passed = true;
    std::vector<SuiteCheck> checks;
};

// f32 mode checks the f32 analytic gradients against an f64 central-difference
// reference at the same points (pure-f32 difference quotients are dominated by
// rounding noise at any usable eps); f64 mode is self-contained.
inline SuiteResult run_suite(bool f64, unsigned seed, bool inject_fault, double eps, double tol) {
    SuiteResult res;
    for (int s = 0; s < 3; ++s) {
        auto cases64 = gradcheck_cases<double>(seed + static_cast<unsigned>(s), inject_fault);
        auto cases32 = gradcheck_cases<float>(seed + static_cast<unsigned>(s), inject_fault);
        if (s == 0) res.op_count = static_cast<int>(cases64.size());
        for (std::size_t ci = 0; ci < cases64.size(); ++ci) {
            auto& c = cases64[ci];
            GradCheckReport rep;
            if (f64) {
                rep = gradcheck<double>(c.name, c.forward, c.inputs, eps, tol);
            } else {
                rep = gradcheck_mixed(c.name, cases32[ci].forward, c.forward, cases32[ci].inputs,
                                      eps, tol);
            }
            res.checks.push_back({c.name, seed + static_cast<unsigned>(s), rep.max_rel_error, rep.passed});
            if (!rep.passed) res.all_passed = false;
        }
    }
    return res;
}

}  // namespace gradsuite
}  // namespace hmr
