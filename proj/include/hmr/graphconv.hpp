#pragma once

// Spiral graph operators: SpiralConv++ (concat-then-affine over the spiral)
// and its depth-separable variant DSConv (per-channel spiral mix followed by
// a point-wise channel mix), plus the analytical mult-add/parameter counters
// and the 4-block upsampling decoder.

#include <optional>
#include <string>
#include <vector>

#include "hmr/autodiff.hpp"
#include "hmr/decimate.hpp"
#include "hmr/mesh.hpp"
#include "hmr/tensor.hpp"

namespace hmr {

template <class T>
struct SpiralPPLayerT {
    TensorT<T> weight;  // [D_out, S*D_in]
    TensorT<T> bias;    // [D_out]
    int spiral_length = 0;
    int d_in = 0, d_out = 0;

    static SpiralPPLayerT init(int s, int d_in, int d_out, std::mt19937& rng) {
        SpiralPPLayerT l;
        l.spiral_length = s;
        l.d_in = d_in;
        l.d_out = d_out;
        l.weight = glorot_tensor<T>({d_out, s * d_in}, s * d_in, d_out, rng);
        l.bias = TensorT<T>({d_out});
        return l;
    }
};

template <class T>
struct DSConvLayerT {
    TensorT<T> depthwise;  // [D_in, S]
    TensorT<T> pointwise;  // [D_out, D_in]
    std::optional<TensorT<T>> bias;  // [D_out]
    int spiral_length = 0;
    int d_in = 0, d_out = 0;

    static DSConvLayerT init(int s, int d_in, int d_out, bool biased, std::mt19937& rng) {
        DSConvLayerT l;
        l.spiral_length = s;
        l.d_in = d_in;
        l.d_out = d_out;
        l.depthwise = glorot_tensor<T>({d_in, s}, s, 1, rng);
        l.pointwise = he_tensor<T>({d_out, d_in}, d_in, rng);
        if (biased) l.bias = TensorT<T>({d_out});
        return l;
    }
};

using SpiralPPLayer = SpiralPPLayerT<float>;
using DSConvLayer = DSConvLayerT<float>;

// F[V,D_in] -> [V,D_out]: gather the S spiral features per vertex,
// concatenate, apply one affine map.
template <class T>
ad::Var<T> spiralpp_forward(ad::Var<T> features, const SpiralIndexTable& table,
                            ad::Var<T> weight, ad::Var<T> bias) {
    if (weight->value.dim(1) != table.spiral_length * features->value.dim(1))
        throw std::invalid_argument("spiralpp_forward: weight columns " + weight->value.shape_str() +
                                    " do not bind S=" + std::to_string(table.spiral_length) +
                                    " x D_in=" + std::to_string(features->value.dim(1)));
    auto gathered = ad::spiral_gather(features, table.entries);       // [V, S*D_in]
    auto wt = ad::transpose2d(weight);                                // [S*D_in, D_out]
    auto out = ad::matmul(gathered, wt);                              // [V, D_out]
    if (bias) out = ad::add_rowvec(out, bias);
    return out;
}

template <class T>
ad::Var<T> spiralpp_forward(ad::Var<T> features, const SpiralIndexTable& table,
                            const SpiralPPLayerT<T>& layer) {
    return spiralpp_forward(features, table, ad::bound_param(layer.weight), ad::bound_param(layer.bias));
}

// Depth-wise over spiral positions, then point-wise over channels.
template <class T>
ad::Var<T> dsconv_forward(ad::Var<T> features, const SpiralIndexTable& table, ad::Var<T> depthwise,
                          ad::Var<T> pointwise, ad::Var<T> bias /* may be null */) {
    auto mixed = ad::spiral_depthwise(features, table.entries, depthwise);  // [V, D_in]
    auto out = ad::matmul(mixed, ad::transpose2d(pointwise));               // [V, D_out]
    if (bias) out = ad::add_rowvec(out, bias);
    return out;
}

template <class T>
ad::Var<T> dsconv_forward(ad::Var<T> features, const SpiralIndexTable& table,
                          const DSConvLayerT<T>& layer) {
    return dsconv_forward(features, table, ad::bound_param(layer.depthwise), ad::bound_param(layer.pointwise),
                          layer.bias ? ad::bound_param(*layer.bias) : ad::Var<T>{});
}

// The factored SpiralConv++ equivalent of a DSConv layer:
// W[o, s*D_in + i] = Wp[o,i] * Wd[i,s]. Central correctness oracle.
template <class T>
SpiralPPLayerT<T> factored_equivalent(const DSConvLayerT<T>& ds) {
    SpiralPPLayerT<T> pp;
    pp.spiral_length = ds.spiral_length;
    pp.d_in = ds.d_in;
    pp.d_out = ds.d_out;
    pp.weight = TensorT<T>({ds.d_out, ds.spiral_length * ds.d_in});
    for (int o = 0; o < ds.d_out; ++o)
        for (int s = 0; s < ds.spiral_length; ++s)
            for (int i = 0; i < ds.d_in; ++i)
                pp.weight.at({o, s * ds.d_in + i}) = ds.pointwise.at({o, i}) * ds.depthwise.at({i, s});
    pp.bias = ds.bias ? *ds.bias : TensorT<T>({ds.d_out});
    return pp;
}

// Analytical cost model.
struct CostEntry {
    std::string layer;
    std::string kind;
    int vertices = 0, spiral_length = 0, d_in = 0, d_out = 0;
    long long mult_adds = 0;
    long long params = 0;
};

struct CostReport {
    std::vector<CostEntry> breakdown;
    long long mult_adds = 0;
    long long params = 0;

    void add(CostEntry e) {
        mult_adds += e.mult_adds;
        params += e.params;
        breakdown.push_back(std::move(e));
    }

    std::string to_csv() const {
        std::string out = "layer,kind,V,S,D_in,D_out,mult_adds,params\n";
        for (const auto& e : breakdown)
            out += e.layer + "," + e.kind + "," + std::to_string(e.vertices) + "," +
                   std::to_string(e.spiral_length) + "," + std::to_string(e.d_in) + "," +
                   std::to_string(e.d_out) + "," + std::to_string(e.mult_adds) + "," +
                   std::to_string(e.params) + "\n";
        out += "total,,,,,," + std::to_string(mult_adds) + "," + std::to_string(params) + "\n";
        return out;
    }
};

inline CostEntry count_spiralpp(const std::string& name, int v, int s, int d_in, int d_out) {
    CostEntry e{name, "spiralpp", v, s, d_in, d_out, 0, 0};
    e.mult_adds = static_cast<long long>(v) * s * d_in * d_out;
    e.params = static_cast<long long>(s) * d_in * d_out + d_out;
    return e;
}

inline CostEntry count_dsconv(const std::string& name, int v, int s, int d_in, int d_out, bool biased) {
    CostEntry e{name, "dsconv", v, s, d_in, d_out, 0, 0};
    e.mult_adds = static_cast<long long>(v) * (static_cast<long long>(s) * d_in + static_cast<long long>(d_in) * d_out);
    e.params = static_cast<long long>(d_in) * s + static_cast<long long>(d_in) * d_out + (biased ? d_out : 0);
    return e;
}

template <class T>
CostEntry count_cost(const SpiralPPLayerT<T>& l, int v, const std::string& name = "spiralpp") {
    return count_spiralpp(name, v, l.spiral_length, l.d_in, l.d_out);
}
template <class T>
CostEntry count_cost(const DSConvLayerT<T>& l, int v, const std::string& name = "dsconv") {
    return count_dsconv(name, v, l.spiral_length, l.d_in, l.d_out, l.bias.has_value());
}

// Dense FC lifting baseline (latent of width c_e mapped to v_mini*c_e): the
// comparison point for the PVL parameter count.
inline long long fc_lifting_params(int c_e, int v_mini) {
    return static_cast<long long>(c_e) * v_mini * c_e;
}

// Decoder: 4 x (upsample, DSConv, ReLU) walking the mesh chain from coarse
// to fine, then a biased DSConv to 3 coordinates at the finest level.
template <class T>
struct MeshDecoderT {
    std::vector<DSConvLayerT<T>> blocks;  // widths[i] -> widths[i+1]
    DSConvLayerT<T> head;                 // widths.back() -> 3, biased
    std::vector<int> widths;              // D sequence, widths[0] = input width

    static MeshDecoderT init(const std::vector<int>& widths, int s, std::mt19937& rng) {
        if (widths.size() != 4) throw std::invalid_argument("decoder: expects 4 channel widths");
        MeshDecoderT d;
        d.widths = widths;
        for (std::size_t i = 0; i < widths.size(); ++i) {
            const int din = widths[i];
            const int dout = i + 1 < widths.size() ? widths[i + 1] : widths.back();
            d.blocks.push_back(DSConvLayerT<T>::init(s, din, dout, /*biased=*/false, rng));
        }
        d.head = DSConvLayerT<T>::init(s, d.blocks.back().d_out, 3, /*biased=*/true, rng);
        return d;
    }

    std::vector<TensorT<T>*> parameters() {
        std::vector<TensorT<T>*> ps;
        for (auto& b : blocks) {
            ps.push_back(&b.depthwise);
            ps.push_back(&b.pointwise);
            if (b.bias) ps.push_back(&*b.bias);
        }
        ps.push_back(&head.depthwise);
        ps.push_back(&head.pointwise);
        if (head.bias) ps.push_back(&*head.bias);
        return ps;
    }

    CostReport cost(const std::vector<int>& vertex_counts) const {
        // vertex_counts: per-block output V, fine level last (5 entries incl. head level)
        CostReport rep;
        for (std::size_t i = 0; i < blocks.size(); ++i)
            rep.add(count_cost(blocks[i], vertex_counts[i], "decoder_block" + std::to_string(i)));
        rep.add(count_cost(head, vertex_counts.back(), "decoder_head"));
        return rep;
    }
};

using MeshDecoder = MeshDecoderT<float>;

// chain transforms/tables run coarse->fine: transforms[i] lifts level i to
// i+1; tables[i+1] is bound to the level-(i+1) mesh.
template <class T>
ad::Var<T> decoder_forward(ad::Var<T> coarse_features, const MeshDecoderT<T>& dec,
                           const std::vector<const CooMatrix*>& up_transforms,
                           const std::vector<const SpiralIndexTable*>& tables) {
    if (up_transforms.size() != dec.blocks.size() || tables.size() != dec.blocks.size() + 1)
        throw std::invalid_argument("decoder_forward: expects " + std::to_string(dec.blocks.size()) +
                                    " transforms and " + std::to_string(dec.blocks.size() + 1) + " tables");
    auto x = coarse_features;
    for (std::size_t i = 0; i < dec.blocks.size(); ++i) {
        if (up_transforms[i]->cols != x->value.dim(0))
            throw std::invalid_argument("decoder_forward: stage " + std::to_string(i) +
                                        " transform expects " + std::to_string(up_transforms[i]->cols) +
                                        " vertices, got " + x->value.shape_str());
        x = ad::sparse_apply(*up_transforms[i], x);
        x = ad::relu(dsconv_forward(x, *tables[i + 1], dec.blocks[i]));
    }
    return dsconv_forward(x, *tables.back(), dec.head);  // no ReLU on coordinates
}

}  // namespace hmr
