#pragma once

// Training objectives: accuracy terms on the mesh, 2D landmarks, face
// normals and edge lengths, plus the two cross-view consistency terms. All
// terms are means over their element counts so magnitudes stay comparable
// across mesh resolutions.

#include <cmath>
#include <utility>

#include "hmr/autodiff.hpp"
#include "hmr/mesh.hpp"
#include "hmr/tensor.hpp"

namespace hmr {

inline constexpr double kEdgeEps = 1e-8;

template <class T>
ad::Var<T> l_mesh(ad::Var<T> v, ad::Var<T> v_gt) {
    return ad::l1_mean(v, v_gt);
}

template <class T>
ad::Var<T> l_pose2d(ad::Var<T> l, ad::Var<T> l_gt) {
    return ad::l1_mean(l, l_gt);
}

// Mean over faces of the summed |normalized edge . gt unit normal| for the
// three edges of each face. Zero-length predicted edges are epsilon-guarded
// and reported through *degenerate.
template <class T>
ad::Var<T> l_norm(ad::Var<T> v, const std::vector<std::array<int, 3>>& faces,
                  const TensorT<T>& gt_normals, bool* degenerate = nullptr) {
    if (v->value.ndim() != 2 || v->value.dim(1) != 3)
        throw std::invalid_argument("l_norm: vertices must be [V,3], got " + v->value.shape_str());
    if (gt_normals.ndim() != 2 || gt_normals.dim(0) != static_cast<int>(faces.size()) || gt_normals.dim(1) != 3)
        throw std::invalid_argument("l_norm: expected one unit normal per face");
    const int nf = static_cast<int>(faces.size());
    if (nf == 0) throw std::invalid_argument("l_norm: empty face list");
    if (degenerate) *degenerate = false;

    T acc = 0;
    for (int c = 0; c < nf; ++c) {
        const auto& f = faces[static_cast<std::size_t>(c)];
        for (int e = 0; e < 3; ++e) {
            const int i = f[static_cast<std::size_t>(e)], j = f[static_cast<std::size_t>((e + 1) % 3)];
            T ex = v->value.at({i, 0}) - v->value.at({j, 0});
            T ey = v->value.at({i, 1}) - v->value.at({j, 1});
            T ez = v->value.at({i, 2}) - v->value.at({j, 2});
            T len = std::sqrt(ex * ex + ey * ey + ez * ez);
            if (len < static_cast<T>(kEdgeEps)) {
                if (degenerate) *degenerate = true;
                len = static_cast<T>(kEdgeEps);
            }
            const T dot = (ex * gt_normals.at({c, 0}) + ey * gt_normals.at({c, 1}) +
                           ez * gt_normals.at({c, 2})) / len;
            acc += std::abs(dot);
        }
    }
    TensorT<T> out({1});
    out[0] = acc / static_cast<T>(nf);
    auto n = ad::make_op<T>(std::move(out), {v});
    auto* self = n.get();
    n->backward_fn = [self, v, faces, gt_normals, nf] {
        if (!v->requires_grad) return;
        v->ensure_grad();
        const T g = self->grad[0] / static_cast<T>(nf);
        for (int c = 0; c < nf; ++c) {
            const auto& f = faces[static_cast<std::size_t>(c)];
            const T nx = gt_normals.at({c, 0}), ny = gt_normals.at({c, 1}), nz = gt_normals.at({c, 2});
            for (int e = 0; e < 3; ++e) {
                const int i = f[static_cast<std::size_t>(e)], j = f[static_cast<std::size_t>((e + 1) % 3)];
                const T ex = v->value.at({i, 0}) - v->value.at({j, 0});
                const T ey = v->value.at({i, 1}) - v->value.at({j, 1});
                const T ez = v->value.at({i, 2}) - v->value.at({j, 2});
                const T len = std::sqrt(ex * ex + ey * ey + ez * ez);
                if (len < static_cast<T>(kEdgeEps)) continue;  // no gradient through the guard
                const T ux = ex / len, uy = ey / len, uz = ez / len;
                const T s = ux * nx + uy * ny + uz * nz;
                const T sg = s > 0 ? T(1) : (s < 0 ? T(-1) : T(0));
                // d|u.n|/de = sign(s) * (n - s u) / |e|
                const T gx = g * sg * (nx - s * ux) / len;
                const T gy = g * sg * (ny - s * uy) / len;
                const T gz = g * sg * (nz - s * uz) / len;
                v->grad.at({i, 0}) += gx;
                v->grad.at({i, 1}) += gy;
                v->grad.at({i, 2}) += gz;
                v->grad.at({j, 0}) -= gx;
                v->grad.at({j, 1}) -= gy;
                v->grad.at({j, 2}) -= gz;
            }
        }
    };
    return n;
}

// Mean over face edges of | ||e|| - ||e*|| |.
template <class T>
ad::Var<T> l_edge(ad::Var<T> v, const TensorT<T>& v_gt, const std::vector<std::array<int, 3>>& faces,
                  bool* degenerate = nullptr) {
    if (v->value.ndim() != 2 || v->value.dim(1) != 3 || v->value.shape != v_gt.shape)
        throw std::invalid_argument("l_edge: vertex sets must both be [V,3]");
    const int nf = static_cast<int>(faces.size());
    if (nf == 0) throw std::invalid_argument("l_edge: empty face list");
    if (degenerate) *degenerate = false;

    auto edge_len = [](const TensorT<T>& t, int i, int j) {
        const T ex = t.at({i, 0}) - t.at({j, 0});
        const T ey = t.at({i, 1}) - t.at({j, 1});
        const T ez = t.at({i, 2}) - t.at({j, 2});
        return std::sqrt(ex * ex + ey * ey + ez * ez);
    };
    T acc = 0;
    for (const auto& f : faces)
        for (int e = 0; e < 3; ++e) {
            const int i = f[static_cast<std::size_t>(e)], j = f[static_cast<std::size_t>((e + 1) % 3)];
            acc += std::abs(edge_len(v->value, i, j) - edge_len(v_gt, i, j));
        }
    TensorT<T> out({1});
    out[0] = acc / static_cast<T>(3 * nf);
    auto n = ad::make_op<T>(std::move(out), {v});
    auto* self = n.get();
    n->backward_fn = [self, v, v_gt, faces, nf, edge_len, degenerate] {
        if (!v->requires_grad) return;
        v->ensure_grad();
        const T g = self->grad[0] / static_cast<T>(3 * nf);
        for (const auto& f : faces)
            for (int e = 0; e < 3; ++e) {
                const int i = f[static_cast<std::size_t>(e)], j = f[static_cast<std::size_t>((e + 1) % 3)];
                const T ex = v->value.at({i, 0}) - v->value.at({j, 0});
                const T ey = v->value.at({i, 1}) - v->value.at({j, 1});
                const T ez = v->value.at({i, 2}) - v->value.at({j, 2});
                const T len = std::sqrt(ex * ex + ey * ey + ez * ez);
                if (len < static_cast<T>(kEdgeEps)) {
                    if (degenerate) *degenerate = true;
                    continue;
                }
                const T d = len - edge_len(v_gt, i, j);
                const T sg = d > 0 ? T(1) : (d < 0 ? T(-1) : T(0));
                const T gx = g * sg * ex / len, gy = g * sg * ey / len, gz = g * sg * ez / len;
                v->grad.at({i, 0}) += gx;
                v->grad.at({i, 1}) += gy;
                v->grad.at({i, 2}) += gz;
                v->grad.at({j, 0}) -= gx;
                v->grad.at({j, 1}) -= gy;
                v->grad.at({j, 2}) -= gz;
            }
    };
    return n;
}

// Relative transform between two augmented views: a 2x3 image-space affine
// (rotation, scale, shift) and the 3x3 rotation it implies for root-relative
// 3D vertices.
template <class T>
struct ViewTransformT {
    TensorT<T> t;  // [2,3] affine, applied as [x,y,1]
    TensorT<T> r;  // [3,3] rotation

    void validate() const {
        if (t.shape != std::vector<int>{2, 3} || r.shape != std::vector<int>{3, 3})
            throw std::invalid_argument("view transform: expected T [2,3] and R [3,3]");
        // R^T R = I and det(R) = +1
        double det = 0;
        for (int i = 0; i < 3; ++i) {
            const int j = (i + 1) % 3, k = (i + 2) % 3;
            det += r.at({0, i}) * (r.at({1, j}) * r.at({2, k}) - r.at({1, k}) * r.at({2, j}));
        }
        for (int i = 0; i < 3; ++i)
            for (int j = 0; j < 3; ++j) {
                double dot = 0;
                for (int k = 0; k < 3; ++k) dot += r.at({k, i}) * r.at({k, j});
                if (std::abs(dot - (i == j ? 1.0 : 0.0)) > 1e-5)
                    throw std::invalid_argument("view transform: R is not orthonormal");
            }
        if (std::abs(det - 1.0) > 1e-5)
            throw std::invalid_argument("view transform: R must be a proper rotation (det +1)");
    }

    static ViewTransformT from_rotation_z(T theta, T s = T(1), T tx = T(0), T ty = T(0)) {
        ViewTransformT vt;
        const T c = std::cos(theta), sn = std::sin(theta);
        vt.t = TensorT<T>({2, 3}, {s * c, -s * sn, tx, s * sn, s * c, ty});
        vt.r = TensorT<T>({3, 3}, {c, -sn, T(0), sn, c, T(0), T(0), T(0), T(1)});
        return vt;
    }
};

using ViewTransform = ViewTransformT<float>;

// Root the vertex set at the wrist (row `root`).
template <class T>
ad::Var<T> wrist_rooted(ad::Var<T> v, int root = 0) {
    auto r = ad::slice0(v, root);  // [1,3]
    TensorT<T> ones({v->value.dim(0), 1}, T(1));
    return ad::sub(v, ad::matmul(ad::constant(ones), r));
}

// Apply the affine to landmarks [N,2]: L A^T + shift.
template <class T>
ad::Var<T> apply_affine2d(ad::Var<T> l, const TensorT<T>& t23) {
    TensorT<T> a({2, 2}, {t23.at({0, 0}), t23.at({1, 0}), t23.at({0, 1}), t23.at({1, 1})});  // A^T
    TensorT<T> shift({2}, {t23.at({0, 2}), t23.at({1, 2})});
    return ad::add_rowvec(ad::matmul_const_right(l, a), ad::constant(shift));
}

template <class T>
ad::Var<T> apply_rotation(ad::Var<T> v, const TensorT<T>& r) {
    // rows are vertices, so right-multiply by R^T
    TensorT<T> rt({3, 3});
    for (int i = 0; i < 3; ++i)
        for (int j = 0; j < 3; ++j) rt.at({i, j}) = r.at({j, i});
    return ad::matmul_const_right(v, rt);
}

// (con3d, con2d): L1 residuals after mapping view 1 into view 2. V1/V2 must
// already be root-relative.
template <class T>
std::pair<ad::Var<T>, ad::Var<T>> l_consistency(ad::Var<T> v1, ad::Var<T> v2, ad::Var<T> l1,
                                                ad::Var<T> l2, const ViewTransformT<T>& vt) {
    vt.validate();
    auto con3d = ad::l1_mean(apply_rotation(v1, vt.r), v2);
    auto con2d = ad::l1_mean(apply_affine2d(l1, vt.t), l2);
    return {con3d, con2d};
}

// L2 flavor of the 3D consistency residual: mean per-vertex Euclidean norm.
// Unlike the L1 version this is exactly invariant to a shared extra rotation
// of both views.
template <class T>
ad::Var<T> l_con3d_l2(ad::Var<T> v1, ad::Var<T> v2, const TensorT<T>& r) {
    auto d = ad::sub(apply_rotation(v1, r), v2);
    const int nv = d->value.dim(0);
    TensorT<T> out({1});
    T acc = 0;
    for (int i = 0; i < nv; ++i) {
        const T x = d->value.at({i, 0}), y = d->value.at({i, 1}), z = d->value.at({i, 2});
        acc += std::sqrt(x * x + y * y + z * z);
    }
    out[0] = acc / static_cast<T>(nv);
    auto n = ad::make_op<T>(std::move(out), {d});
    auto* self = n.get();
    n->backward_fn = [self, d, nv] {
        if (!d->requires_grad) return;
        d->ensure_grad();
        for (int i = 0; i < nv; ++i) {
            const T x = d->value.at({i, 0}), y = d->value.at({i, 1}), z = d->value.at({i, 2});
            const T len = std::sqrt(x * x + y * y + z * z);
            if (len < static_cast<T>(kEdgeEps)) continue;
            const T g = self->grad[0] / (static_cast<T>(nv) * len);
            d->grad.at({i, 0}) += g * x;
            d->grad.at({i, 1}) += g * y;
            d->grad.at({i, 2}) += g * z;
        }
    };
    return n;
}

struct LossWeights {
    double mesh = 1.0, pose2d = 1.0, norm = 1.0, edge = 1.0, con3d = 1.0, con2d = 1.0;
};

template <class T>
struct LossBundleT {
    ad::Var<T> mesh, pose2d, norm, edge, con3d, con2d, total;

    static std::string csv_header() { return "step,mesh,pose2d,norm,edge,con3d,con2d,total"; }
    std::string csv_row(long long step) const {
        auto f = [](const ad::Var<T>& v) { return std::to_string(static_cast<double>(v->value[0])); };
        return std::to_string(step) + "," + f(mesh) + "," + f(pose2d) + "," + f(norm) + "," + f(edge) +
               "," + f(con3d) + "," + f(con2d) + "," + f(total);
    }
};

using LossBundle = LossBundleT<float>;

// Plain (optionally weighted) sum of the six terms.
template <class T>
LossBundleT<T> total_loss(ad::Var<T> mesh, ad::Var<T> pose2d, ad::Var<T> norm, ad::Var<T> edge,
                          ad::Var<T> con3d, ad::Var<T> con2d, const LossWeights& w = {}) {
    LossBundleT<T> b{mesh, pose2d, norm, edge, con3d, con2d, {}};
    auto acc = ad::scale(mesh, static_cast<T>(w.mesh));
    acc = ad::add(acc, ad::scale(pose2d, static_cast<T>(w.pose2d)));
    acc = ad::add(acc, ad::scale(norm, static_cast<T>(w.norm)));
    acc = ad::add(acc, ad::scale(edge, static_cast<T>(w.edge)));
    acc = ad::add(acc, ad::scale(con3d, static_cast<T>(w.con3d)));
    acc = ad::add(acc, ad::scale(con2d, static_cast<T>(w.con2d)));
    b.total = acc;
    return b;
}

}  // namespace hmr
