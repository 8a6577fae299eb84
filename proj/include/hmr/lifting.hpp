#pragma once

// 2D-to-3D bridge: soft-argmax heatmap decoding, map-based position
// regression (MapReg), both pose-pooling variants, and the learnable linear
// pose-to-vertex lift.

#include <cmath>
#include <random>
#include <string>

#include "hmr/autodiff.hpp"
#include "hmr/tensor.hpp"

namespace hmr {

inline constexpr int kNumJoints = 21;

// Softmax-expectation decoding of heatmaps [N,h,w] to normalized positions
// [N,2] (x,y), align-corners pixel-center grid. Lower temperature sharpens
// the distribution.
template <class T>
ad::Var<T> soft_argmax(ad::Var<T> heatmaps, T temperature) {
    if (temperature <= T(0)) throw std::invalid_argument("soft_argmax: temperature must be positive");
    if (heatmaps->value.ndim() != 3) throw std::invalid_argument("soft_argmax: expects [N,h,w]");
    const int nj = heatmaps->value.dim(0), h = heatmaps->value.dim(1), w = heatmaps->value.dim(2);
    const std::int64_t hw = static_cast<std::int64_t>(h) * w;
    TensorT<T> out({nj, 2});
    TensorT<T> weights({nj, h, w});
    for (int j = 0; j < nj; ++j) {
        const T* m = heatmaps->value.data.data() + j * hw;
        T mx = m[0];
        for (std::int64_t i = 1; i < hw; ++i) mx = std::max(mx, m[i]);
        if (!std::isfinite(static_cast<double>(mx)))
            throw std::runtime_error("soft_argmax: non-finite heatmap for joint " + std::to_string(j));
        T z = 0;
        T* wj = weights.data.data() + j * hw;
        for (std::int64_t i = 0; i < hw; ++i) {
            wj[i] = std::exp((m[i] - mx) / temperature);
            z += wj[i];
        }
        T ex = 0, ey = 0;
        for (int y = 0; y < h; ++y)
            for (int x = 0; x < w; ++x) {
                const T wt = wj[static_cast<std::int64_t>(y) * w + x] / z;
                wj[static_cast<std::int64_t>(y) * w + x] = wt;
                ex += wt * (w > 1 ? static_cast<T>(x) / (w - 1) : T(0));
                ey += wt * (h > 1 ? static_cast<T>(y) / (h - 1) : T(0));
            }
        out.at({j, 0}) = ex;
        out.at({j, 1}) = ey;
    }
    auto n = ad::make_op<T>(std::move(out), {heatmaps});
    auto* self = n.get();
    n->backward_fn = [self, heatmaps, weights, nj, h, w, hw, temperature] {
        if (!heatmaps->requires_grad) return;
        heatmaps->ensure_grad();
        for (int j = 0; j < nj; ++j) {
            const T gx = self->grad.at({j, 0}), gy = self->grad.at({j, 1});
            const T ox = self->value.at({j, 0}), oy = self->value.at({j, 1});
            const T* wj = weights.data.data() + j * hw;
            T* dm = heatmaps->grad.data.data() + j * hw;
            for (int y = 0; y < h; ++y)
                for (int x = 0; x < w; ++x) {
                    const T px = w > 1 ? static_cast<T>(x) / (w - 1) : T(0);
                    const T py = h > 1 ? static_cast<T>(y) / (h - 1) : T(0);
                    dm[static_cast<std::int64_t>(y) * w + x] +=
                        wj[static_cast<std::int64_t>(y) * w + x] / temperature *
                        (gx * (px - ox) + gy * (py - oy));
                }
        }
    };
    return n;
}

// MapReg: each of the N joint channels of a small feature map is flattened
// and pushed through one shared two-layer MLP to a 2D position.
template <class T>
struct MapRegT {
    TensorT<T> w1;  // [h*w, hidden]
    TensorT<T> b1;  // [hidden]
    TensorT<T> w2;  // [hidden, 2]
    TensorT<T> b2;  // [2]
    int map_h = 0, map_w = 0;

    static MapRegT init(int h, int w, int hidden, std::mt19937& rng) {
        MapRegT m;
        m.map_h = h;
        m.map_w = w;
        m.w1 = glorot_tensor<T>({h * w, hidden}, h * w, hidden, rng);
        m.b1 = TensorT<T>({hidden});
        m.w2 = glorot_tensor<T>({hidden, 2}, hidden, 2, rng);
        // start predictions at the image center
        m.b2 = TensorT<T>({2}, T(0.5));
        return m;
    }
    std::vector<TensorT<T>*> parameters() { return {&w1, &b1, &w2, &b2}; }
};

using MapReg = MapRegT<float>;

template <class T>
ad::Var<T> mapreg_forward(ad::Var<T> fmap, ad::Var<T> w1, ad::Var<T> b1, ad::Var<T> w2, ad::Var<T> b2) {
    if (fmap->value.ndim() != 3)
        throw std::invalid_argument("mapreg: expects [N,h,w], got " + fmap->value.shape_str());
    const int nj = fmap->value.dim(0);
    const int hw = fmap->value.dim(1) * fmap->value.dim(2);
    if (hw != w1->value.dim(0))
        throw std::invalid_argument("mapreg: map size " + fmap->value.shape_str() + " does not bind MLP input " +
                                    w1->value.shape_str());
    auto flat = ad::reshape(fmap, {nj, hw});
    auto hidden = ad::relu(ad::add_rowvec(ad::matmul(flat, w1), b1));
    return ad::add_rowvec(ad::matmul(hidden, w2), b2);  // [N,2]
}

template <class T>
ad::Var<T> mapreg_forward(ad::Var<T> fmap, const MapRegT<T>& m) {
    return mapreg_forward(fmap, ad::bound_param(m.w1), ad::bound_param(m.b1), ad::bound_param(m.w2), ad::bound_param(m.b2));
}

// Eq-1-style pooling: per joint, resize the heatmap to the feature
// resolution, mask the feature map channel-wise, reduce spatially.
template <class T>
ad::Var<T> joint_wise_pooling(ad::Var<T> features, ad::Var<T> heatmaps, ad::Reduce mode) {
    if (features->value.ndim() != 3 || heatmaps->value.ndim() != 3)
        throw std::invalid_argument("joint_wise_pooling: expects [Ce,He,We] and [N,h,w]");
    const int he = features->value.dim(1), we = features->value.dim(2);
    const int nj = heatmaps->value.dim(0);
    auto resized = ad::bilinear_resize(heatmaps, he, we);  // [N,He,We]
    ad::Var<T> rows;
    for (int j = 0; j < nj; ++j) {
        auto mask = ad::slice0(resized, j);               // [1,He,We]
        auto masked = ad::broadcast_mul0(features, mask);  // [Ce,He,We]
        auto pooled = ad::reshape(ad::reduce_spatial(masked, mode), {1, features->value.dim(0)});
        rows = rows ? ad::concat0(rows, pooled) : pooled;
    }
    return rows;  // [N,Ce]
}

// Eq-2-style pooling: bilinear grid sampling at the landmark positions.
template <class T>
ad::Var<T> grid_sample_pooling(ad::Var<T> features, ad::Var<T> landmarks,
                               std::vector<bool>* clamped = nullptr) {
    return ad::grid_sample(features, landmarks, clamped);  // [N,Ce]
}

// Pose-to-vertex lifting: F_mini[V_mini,Ce] = M[V_mini,N] * F_p[N,Ce].
template <class T>
ad::Var<T> pvl(ad::Var<T> pose_features, ad::Var<T> lifting_matrix) {
    return ad::matmul(lifting_matrix, pose_features);
}

inline long long pvl_params(int v_mini, int n_joints) {
    return static_cast<long long>(v_mini) * n_joints;
}

// abs(M) grid for offline plotting.
template <class T>
std::string lifting_matrix_abs_csv(const TensorT<T>& m) {
    std::string out;
    for (int i = 0; i < m.dim(0); ++i) {
        for (int j = 0; j < m.dim(1); ++j) {
            if (j) out += ',';
            out += std::to_string(std::abs(static_cast<double>(m.at({i, j}))));
        }
        out += '\n';
    }
    return out;
}

// LandmarkSet JSON: {"joints": [[x,y],...]}
template <class T>
std::string landmarks_to_json(const TensorT<T>& l) {
    std::string out = "{\"joints\": [";
    for (int i = 0; i < l.dim(0); ++i) {
        if (i) out += ", ";
        out += "[" + std::to_string(static_cast<double>(l.at({i, 0}))) + ", " +
               std::to_string(static_cast<double>(l.at({i, 1}))) + "]";
    }
    return out + "]}";
}

}  // namespace hmr
