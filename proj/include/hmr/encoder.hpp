#pragma once

// Toy-scale stacked 2D encoder: two cascaded encoding groups. Group 1 walks
// the image down to 1/16 resolution; its coarsest features are upsampled
// (two 2x bilinear steps) and fused by addition with the 1/4-resolution
// features. The fusion feeds both group 2 (which produces F^e) and a 1x1
// projection to the per-joint map consumed by MapReg.

#include <random>
#include <string>
#include <vector>

#include <json.hpp>

#include "hmr/autodiff.hpp"
#include "hmr/graphconv.hpp"
#include "hmr/lifting.hpp"
#include "hmr/tensor.hpp"

namespace hmr {

enum class EncoderVariant { kDense, kGhost };

struct EncoderConfig {
    EncoderVariant variant = EncoderVariant::kDense;
    int input_size = 64;          // desk-scale default; paper-scale config uses 128
    int stem_width = 8;
    std::vector<int> stage_widths = {16, 24, 32};  // group-1 transitions (1/4, 1/8, 1/16)
    int block_layers = 2;          // dense: convs per block; each grows cin/block_layers channels
    int group2_width = 48;
    int ce = 64;                   // F^e channels
    int num_joints = kNumJoints;
    int se_reduction = 4;

    int fused_resolution() const { return input_size / 4; }
    int fe_resolution() const { return input_size / 16; }

    static EncoderConfig paper_scale() {
        EncoderConfig c;
        c.input_size = 128;
        c.stem_width = 32;
        c.stage_widths = {64, 128, 256};
        
        c.group2_width = 192;
        c.ce = 256;
        return c;
    }
};

inline void to_json(nlohmann::json& j, const EncoderConfig& c) {
    j = {{"variant", c.variant == EncoderVariant::kDense ? "dense" : "ghost"},
         {"input_size", c.input_size},
         {"stem_width", c.stem_width},
         {"stage_widths", c.stage_widths},
         {"block_layers", c.block_layers},
         {"group2_width", c.group2_width},
         {"ce", c.ce},
         {"num_joints", c.num_joints},
         {"se_reduction", c.se_reduction}};
}

inline void from_json(const nlohmann::json& j, EncoderConfig& c) {
    const auto v = j.value("variant", std::string("dense"));
    if (v != "dense" && v != "ghost") throw std::invalid_argument("encoder config: unknown variant " + v);
    c.variant = v == "dense" ? EncoderVariant::kDense : EncoderVariant::kGhost;
    c.input_size = j.value("input_size", c.input_size);
    c.stem_width = j.value("stem_width", c.stem_width);
    c.stage_widths = j.value("stage_widths", c.stage_widths);
    c.block_layers = j.value("block_layers", c.block_layers);
    c.group2_width = j.value("group2_width", c.group2_width);
    c.ce = j.value("ce", c.ce);
    c.num_joints = j.value("num_joints", c.num_joints);
    c.se_reduction = j.value("se_reduction", c.se_reduction);
}

template <class T>
struct Conv2dT {
    TensorT<T> weight;  // [Cout,Cin,k,k]
    TensorT<T> bias;    // [Cout]
    int stride = 1, pad = 1;

    static Conv2dT init(int cin, int cout, int k, int stride, std::mt19937& rng) {
        Conv2dT c;
        c.weight = he_tensor<T>({cout, cin, k, k}, cin * k * k, rng);
        c.bias = TensorT<T>({cout});
        c.stride = stride;
        c.pad = k / 2;
        return c;
    }
    ad::Var<T> operator()(ad::Var<T> x) const {
        return ad::conv2d(x, ad::bound_param(weight), ad::bound_param(bias), stride, pad);
    }
    long long params() const { return weight.numel() + bias.numel(); }
};

// Ghost block: half the output channels from a standard conv, the other half
// from a cheap depth-wise conv over the primary half.
template <class T>
struct GhostBlockT {
    Conv2dT<T> primary;     // Cin -> Cout/2
    TensorT<T> ghost_dw;    // [Cout/2,3,3]

    static GhostBlockT init(int cin, int cout, std::mt19937& rng) {
        if (cout % 2 != 0) throw std::invalid_argument("ghost block: output channels must be even");
        GhostBlockT b;
        b.primary = Conv2dT<T>::init(cin, cout / 2, 3, 1, rng);
        b.ghost_dw = glorot_tensor<T>({cout / 2, 3, 3}, 9, 9, rng);
        return b;
    }
    ad::Var<T> operator()(ad::Var<T> x) const {
        auto p = ad::relu(primary(x));
        auto g = ad::depthwise_conv2d(p, ad::bound_param(ghost_dw));
        return ad::concat0(p, g);
    }
    long long params() const { return primary.params() + ghost_dw.numel(); }
    std::vector<TensorT<T>*> parameters() {
        return {&primary.weight, &primary.bias, &ghost_dw};
    }
};

// Dense block: growth-rate convs over the concatenation of all prior
// outputs, then a squeeze-excitation channel gate.
template <class T>
struct DenseBlockT {
    std::vector<Conv2dT<T>> layers;  // each adds growth/num_layers channels
    TensorT<T> se_w1, se_b1, se_w2, se_b2;
    int cout = 0;

    static DenseBlockT init(int cin, int cout, int se_reduction, std::mt19937& rng, int num_layers = 2) {
        if ((cout - cin) % num_layers != 0)
            throw std::invalid_argument("dense block: growth must divide evenly across layers");
        const int g = (cout - cin) / num_layers;
        DenseBlockT b;
        b.cout = cout;
        int width = cin;
        for (int i = 0; i < num_layers; ++i) {
            b.layers.push_back(Conv2dT<T>::init(width, g, 3, 1, rng));
            width += g;
        }
        const int hidden = std::max(1, cout / se_reduction);
        b.se_w1 = glorot_tensor<T>({cout, hidden}, cout, hidden, rng);
        b.se_b1 = TensorT<T>({hidden});
        b.se_w2 = glorot_tensor<T>({hidden, cout}, hidden, cout, rng);
        // gates start nearly open (sigmoid(2) ~ 0.88) so the block does not
        // attenuate its input before the gate has learned anything
        b.se_b2 = TensorT<T>({cout}, T(2));
        return b;
    }
    ad::Var<T> operator()(ad::Var<T> x) const {
        auto cat = x;
        for (const auto& l : layers) cat = ad::concat0(cat, ad::relu(l(cat)));
        // SE gate: global average -> 2-layer MLP -> sigmoid scaling
        auto pooled = ad::reshape(ad::global_avg_pool(cat), {1, cout});
        auto gate = ad::sigmoid(ad::add_rowvec(
            ad::matmul(ad::relu(ad::add_rowvec(ad::matmul(pooled, ad::bound_param(se_w1)), ad::bound_param(se_b1))),
                       ad::bound_param(se_w2)),
            ad::bound_param(se_b2)));
        return ad::channel_scale(cat, ad::reshape(gate, {cout}));
    }
    long long params() const {
        long long p = se_w1.numel() + se_b1.numel() + se_w2.numel() + se_b2.numel();
        for (const auto& l : layers) p += l.params();
        return p;
    }
    std::vector<TensorT<T>*> parameters() {
        std::vector<TensorT<T>*> ps;
        for (auto& l : layers) {
            ps.push_back(&l.weight);
            ps.push_back(&l.bias);
        }
        ps.push_back(&se_w1);
        ps.push_back(&se_b1);
        ps.push_back(&se_w2);
        ps.push_back(&se_b2);
        return ps;
    }
};

// One encoding stage: variant block at constant resolution, then a strided
// transition conv.
template <class T>
struct StageT {
    EncoderVariant variant;
    GhostBlockT<T> ghost;
    DenseBlockT<T> dense;
    Conv2dT<T> transition;

    // the variant block doubles the channel count, the transition conv then
    // maps 2*cin -> cout before pooling
    static StageT init(EncoderVariant variant, int cin, int cout, int se_reduction, int block_layers,
                       std::mt19937& rng) {
        StageT s;
        s.variant = variant;
        if (variant == EncoderVariant::kGhost)
            s.ghost = GhostBlockT<T>::init(cin, 2 * cin, rng);
        else
            s.dense = DenseBlockT<T>::init(cin, 2 * cin, se_reduction, rng, block_layers);
        s.transition = Conv2dT<T>::init(2 * cin, cout, 3, 1, rng);
        return s;
    }
    ad::Var<T> operator()(ad::Var<T> x) const {
        auto b = variant == EncoderVariant::kGhost ? ghost(x) : dense(x);
        return ad::avg_pool2(ad::relu(transition(b)));
    }
    long long params() const {
        return (variant == EncoderVariant::kGhost ? ghost.params() : dense.params()) + transition.params();
    }
    std::vector<TensorT<T>*> parameters() {
        auto ps = variant == EncoderVariant::kGhost ? ghost.parameters() : dense.parameters();
        ps.push_back(&transition.weight);
        ps.push_back(&transition.bias);
        return ps;
    }
};

template <class T>
struct StackedEncoderT {
    EncoderConfig cfg;
    Conv2dT<T> stem;             // 3 -> stem_width, stride 2
    StageT<T> g1a, g1b, g1c;     // to widths[0] @1/4, widths[1] @1/8, widths[2] @1/16
    Conv2dT<T> lateral;          // 1x1, widths[2] -> widths[0], applied before upsampling
    Conv2dT<T> joint_proj;       // 1x1, widths[0] -> N joint channels
    StageT<T> g2a, g2b;          // fused -> group2_width @1/8 -> ce @1/16

    static StackedEncoderT init(const EncoderConfig& cfg, std::mt19937& rng) {
        if (cfg.input_size % 16 != 0)
            throw std::invalid_argument("encoder: input size must be divisible by 16");
        StackedEncoderT e;
        e.cfg = cfg;
        const auto& w = cfg.stage_widths;
        if (w.size() != 3) throw std::invalid_argument("encoder: expected three stage widths");
        e.stem = Conv2dT<T>::init(3, cfg.stem_width, 3, 1, rng);
        e.g1a = StageT<T>::init(cfg.variant, cfg.stem_width, w[0], cfg.se_reduction, cfg.block_layers, rng);
        e.g1b = StageT<T>::init(cfg.variant, w[0], w[1], cfg.se_reduction, cfg.block_layers, rng);
        e.g1c = StageT<T>::init(cfg.variant, w[1], w[2], cfg.se_reduction, cfg.block_layers, rng);
        e.lateral = Conv2dT<T>::init(w[2], w[0], 1, 1, rng);
        e.joint_proj = Conv2dT<T>::init(w[0], cfg.num_joints, 1, 1, rng);
        e.g2a = StageT<T>::init(cfg.variant, w[0], cfg.group2_width, cfg.se_reduction, cfg.block_layers, rng);
        e.g2b = StageT<T>::init(cfg.variant, cfg.group2_width, cfg.ce, cfg.se_reduction,
                                cfg.block_layers, rng);
        return e;
    }

    struct Output {
        ad::Var<T> fe;         // [Ce, input/16, input/16]
        ad::Var<T> fused_map;  // [N, input/4, input/4]
    };

    Output forward(ad::Var<T> image) const {
        if (image->value.ndim() != 3 || image->value.dim(0) != 3 ||
            image->value.dim(1) != cfg.input_size || image->value.dim(2) != cfg.input_size)
            throw std::invalid_argument("encoder: expected [3," + std::to_string(cfg.input_size) + "," +
                                        std::to_string(cfg.input_size) + "], got " + image->value.shape_str());
        auto x2 = ad::avg_pool2(ad::relu(stem(image)));  // 1/2
        auto q = g1a(x2);                  // 1/4, widths[0]
        auto e8 = g1b(q);                  // 1/8
        auto e16 = g1c(e8);                // 1/16
        // two 2x upsampling steps back to 1/4, fuse by addition
        auto lat = lateral(e16);
        const int r8 = cfg.input_size / 8, r4 = cfg.input_size / 4;
        auto up = ad::bilinear_resize(ad::bilinear_resize(lat, r8, r8), r4, r4);
        auto fused = ad::add(q, up);
        auto joints = joint_proj(fused);   // [N, 1/4, 1/4]
        auto fe = g2b(g2a(fused));
        return {fe, joints};
    }

    std::vector<TensorT<T>*> parameters() {
        std::vector<TensorT<T>*> ps{&stem.weight, &stem.bias};
        for (auto* s : {&g1a, &g1b, &g1c, &g2a, &g2b})
            for (auto* p : s->parameters()) ps.push_back(p);
        for (auto* c : {&lateral, &joint_proj}) {
            ps.push_back(&c->weight);
            ps.push_back(&c->bias);
        }
        return ps;
    }

    long long param_count() const {
        long long p = stem.params() + lateral.params() + joint_proj.params();
        for (auto* s : {&g1a, &g1b, &g1c, &g2a, &g2b}) p += s->params();
        return p;
    }
};

using StackedEncoder = StackedEncoderT<float>;

// Conv mult-add/parameter accounting for the CLI cost report.
inline CostEntry count_conv(const std::string& name, int cin, int cout, int k, int out_res) {
    CostEntry e{name, "conv", 0, 0, cin, cout, 0, 0};
    e.mult_adds = static_cast<long long>(cout) * cin * k * k * out_res * out_res;
    e.params = static_cast<long long>(cout) * cin * k * k + cout;
    return e;
}

template <class T>
CostReport encoder_cost(const StackedEncoderT<T>& enc) {
    const auto& cfg = enc.cfg;
    CostReport rep;
    auto stage_cost = [&](const char* name, const StageT<T>& s, int cin, int cmid, int cout, int res_in) {
        if (s.variant == EncoderVariant::kGhost) {
            rep.add(count_conv(std::string(name) + ".primary", cin, cmid / 2, 3, res_in));
            CostEntry g{std::string(name) + ".ghost_dw", "dwconv", 0, 0, cmid / 2, cmid / 2, 0, 0};
            g.mult_adds = static_cast<long long>(cmid / 2) * 9 * res_in * res_in;
            g.params = static_cast<long long>(cmid / 2) * 9;
            rep.add(g);
        } else {
            const int layers = static_cast<int>(s.dense.layers.size());
            const int g = (cmid - cin) / layers;
            int width = cin;
            for (int i = 0; i < layers; ++i) {
                rep.add(count_conv(std::string(name) + ".dense" + std::to_string(i), width, g, 3, res_in));
                width += g;
            }
            CostEntry se{std::string(name) + ".se", "fc", 0, 0, cmid, cmid, 0, 0};
            const int hidden = std::max(1, cmid / cfg.se_reduction);
            se.mult_adds = static_cast<long long>(cmid) * hidden * 2;
            se.params = static_cast<long long>(cmid) * hidden * 2 + hidden + cmid;
            rep.add(se);
        }
        rep.add(count_conv(std::string(name) + ".transition", cmid, cout, 3, res_in));
    };
    const auto& w = cfg.stage_widths;
    const int r = cfg.input_size;
    rep.add(count_conv("stem", 3, cfg.stem_width, 3, r));
    stage_cost("g1a", enc.g1a, cfg.stem_width, 2 * cfg.stem_width, w[0], r / 2);
    stage_cost("g1b", enc.g1b, w[0], 2 * w[0], w[1], r / 4);
    stage_cost("g1c", enc.g1c, w[1], 2 * w[1], w[2], r / 8);
    rep.add(count_conv("lateral", w[2], w[0], 1, r / 16));
    rep.add(count_conv("joint_proj", w[0], cfg.num_joints, 1, r / 4));
    stage_cost("g2a", enc.g2a, w[0], 2 * w[0], cfg.group2_width, r / 4);
    stage_cost("g2b", enc.g2b, cfg.group2_width, 2 * cfg.group2_width, cfg.ce, r / 8);
    return rep;
}

}  // namespace hmr
