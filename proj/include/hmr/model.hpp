#pragma once

// Full prediction stack: stacked encoder -> MapReg landmarks -> grid-sample
// pose pooling -> pose-to-vertex lifting -> spiral mesh decoder on the
// decimation chain of the dense toy-hand template.

#include <filesystem>
#include <fstream>
#include <random>
#include <string>
#include <vector>

#include <json.hpp>

#include "hmr/decimate.hpp"
#include "hmr/encoder.hpp"
#include "hmr/graphconv.hpp"
#include "hmr/lifting.hpp"
#include "hmr/synthdata.hpp"
#include "hmr/tensor_io.hpp"

namespace hmr {

struct ModelConfig {
    EncoderConfig encoder;
    int mapreg_hidden = 48;
    std::vector<int> decoder_widths = {66, 32, 16, 8};  // decoder_widths[0] must equal encoder.ce + 2
    int spiral_length = 9;
    int decimation_levels = 4;

    // Slim stack sized so the toy trainer fits a single-core time budget.
    static ModelConfig toy_default() {
        ModelConfig c;
        c.encoder.stem_width = 6;
        c.encoder.stage_widths = {8, 12, 16};
        c.encoder.group2_width = 16;
        c.encoder.ce = 16;
        c.decoder_widths = {18, 12, 8, 6};
        return c;
    }
};

inline void to_json(nlohmann::json& j, const ModelConfig& c) {
    j = {{"encoder", c.encoder},
         {"mapreg_hidden", c.mapreg_hidden},
         {"decoder_widths", c.decoder_widths},
         {"spiral_length", c.spiral_length},
         {"decimation_levels", c.decimation_levels}};
}

inline void from_json(const nlohmann::json& j, ModelConfig& c) {
    if (j.contains("encoder")) c.encoder = j.at("encoder").get<EncoderConfig>();
    c.mapreg_hidden = j.value("mapreg_hidden", c.mapreg_hidden);
    c.decoder_widths = j.value("decoder_widths", c.decoder_widths);
    c.spiral_length = j.value("spiral_length", c.spiral_length);
    c.decimation_levels = j.value("decimation_levels", c.decimation_levels);
}

struct HmrModel {
    ModelConfig cfg;
    StackedEncoder enc;
    MapReg mapreg;
    Tensor lifting;  // [V_mini, N]
    MeshDecoder dec;

    // frozen template assets
    TriMesh template_mesh;
    MeshChain chain;
    std::vector<SpiralIndexTable> tables;
    Tensor template_verts;  // [V_fine,3] wrist-rooted canonical geometry

    static HmrModel init(const ModelConfig& cfg, unsigned seed) {
        if (cfg.decoder_widths.size() != 4 || cfg.decoder_widths[0] != cfg.encoder.ce + 2)
            throw std::invalid_argument("model: decoder_widths[0] must equal the encoder's ce + 2");
        HmrModel m;
        m.cfg = cfg;
        std::mt19937 rng(seed);
        m.enc = StackedEncoder::init(cfg.encoder, rng);
        const int fr = cfg.encoder.fused_resolution();
        m.mapreg = MapReg::init(fr, fr, cfg.mapreg_hidden, rng);
        auto canonical = toy_hand_dense(HandPose{});
        m.template_mesh = std::move(canonical.mesh);
        m.template_verts = Tensor({m.template_mesh.vertex_count(), 3});
        for (int v = 0; v < m.template_mesh.vertex_count(); ++v)
            for (int c = 0; c < 3; ++c)
                m.template_verts.at({v, c}) = static_cast<float>(
                    m.template_mesh.vertices[static_cast<std::size_t>(v)][static_cast<std::size_t>(c)] -
                    canonical.joints.at({0, c}));
        m.chain = decimate_chain(m.template_mesh, cfg.decimation_levels);
        for (const auto& mesh : m.chain.meshes)
            m.tables.push_back(build_spiral_table(mesh, cfg.spiral_length));
        const int v_mini = m.chain.meshes.back().vertex_count();
        m.lifting = glorot_tensor<float>({v_mini, cfg.encoder.num_joints}, cfg.encoder.num_joints,
                                         v_mini, rng);
        m.dec = MeshDecoder::init(cfg.decoder_widths, cfg.spiral_length, rng);
        return m;
    }

    struct Output {
        ad::VarF landmarks;  // [N,2]
        ad::VarF verts;      // [V_fine,3]
    };

    Output forward(const Tensor& image) const {
        auto out = enc.forward(ad::constant(image));
        auto lm = mapreg_forward(out.fused_map, mapreg);
        auto pooled = grid_sample_pooling(out.fe, lm);
        // The pose feature is the sampled encoder feature with the landmark
        // coordinates appended. The coordinate channels keep the decoder input
        // input-dependent even if the feature branch saturates: the landmark
        // branch is anchored by its own 2D supervision, so the mesh branch
        // cannot collapse into a constant function of the image.
        auto fp = ad::transpose2d(ad::concat0(ad::transpose2d(pooled), ad::transpose2d(lm)));
        auto coarse = pvl(fp, ad::bound_param(lifting));

        const int levels = cfg.decimation_levels;
        std::vector<const CooMatrix*> ups;
        std::vector<const SpiralIndexTable*> tbls{&tables[static_cast<std::size_t>(levels)]};
        for (int i = levels - 1; i >= 0; --i) {
            ups.push_back(&chain.transforms[static_cast<std::size_t>(i)].up);
            tbls.push_back(&tables[static_cast<std::size_t>(i)]);
        }
        // The decoder regresses displacements from the canonical template so
        // the predicted mesh starts at a plausible geometry (the orientation
        // losses are ill-conditioned around a collapsed mesh).
        auto disp = decoder_forward(coarse, dec, ups, tbls);
        return {lm, ad::add(disp, ad::constant(template_verts))};
    }

    std::vector<Tensor*> parameters() {
        auto ps = enc.parameters();
        for (auto* p : mapreg.parameters()) ps.push_back(p);
        ps.push_back(&lifting);
        for (auto* p : dec.parameters()) ps.push_back(p);
        return ps;
    }
};

// Checkpoint layout: <dir>/manifest.json + <dir>/params.bin (+ optimizer
// moment files written by the trainer). Tensors are concatenated in
// parameters() order.
inline void save_tensor_stack(const std::filesystem::path& file, const std::vector<Tensor*>& ts) {
    std::ofstream out(file, std::ios::binary);
    if (!out) throw std::runtime_error("cannot write " + file.string());
    for (const auto* t : ts) io::save_tensor(*t, out);
}

inline void load_tensor_stack(const std::filesystem::path& file, const std::vector<Tensor*>& ts) {
    std::ifstream in(file, std::ios::binary);
    if (!in) throw std::runtime_error("cannot read " + file.string());
    for (auto* t : ts) {
        Tensor loaded = io::load_tensor<float>(in);
        if (loaded.shape != t->shape)
            throw std::runtime_error("checkpoint shape mismatch in " + file.string());
        *t = std::move(loaded);
    }
}

inline void save_model(const std::filesystem::path& dir, HmrModel& model) {
    std::filesystem::create_directories(dir);
    nlohmann::json manifest;
    manifest["config"] = model.cfg;
    manifest["param_count"] = model.parameters().size();
    std::ofstream mf(dir / "manifest.json");
    mf << manifest.dump(2) << "\n";
    save_tensor_stack(dir / "params.bin", model.parameters());
}

inline HmrModel load_model(const std::filesystem::path& dir) {
    std::ifstream mf(dir / "manifest.json");
    if (!mf) throw std::runtime_error("cannot read " + (dir / "manifest.json").string());
    nlohmann::json manifest = nlohmann::json::parse(mf);
    auto model = HmrModel::init(manifest.at("config").get<ModelConfig>(), /*seed=*/0);
    load_tensor_stack(dir / "params.bin", model.parameters());
    return model;
}

}  // namespace hmr
