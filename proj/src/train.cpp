#include "hmr/train.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <numeric>
#include <random>
#include <stdexcept>

#include "hmr/adam.hpp"
#include "hmr/metrics.hpp"
#include "hmr/synthdata.hpp"

namespace fs = std::filesystem;

namespace hmr {

void to_json(nlohmann::json& j, const TrainConfig& c) {
    j = {{"model", c.model},
         {"seed", c.seed},
         {"train_samples", c.train_samples},
         {"heldout_samples", c.heldout_samples},
         {"epochs", c.epochs},
         {"batch_size", c.batch_size},
         {"lr", c.lr},
         {"lr_decay_epoch", c.lr_decay_epoch},
         {"cameras", c.cameras},
         {"camera_radius", c.camera_radius},
         {"weights",
          {{"mesh", c.weights.mesh},
           {"pose2d", c.weights.pose2d},
           {"norm", c.weights.norm},
           {"edge", c.weights.edge},
           {"con3d", c.weights.con3d},
           {"con2d", c.weights.con2d}}},
         {"out_dir", c.out_dir},
         {"max_steps", c.max_steps},
         {"resume_from", c.resume_from}};
}

void from_json(const nlohmann::json& j, TrainConfig& c) {
    if (j.contains("model")) c.model = j.at("model").get<ModelConfig>();
    c.seed = j.value("seed", c.seed);
    c.train_samples = j.value("train_samples", c.train_samples);
    c.heldout_samples = j.value("heldout_samples", c.heldout_samples);
    c.epochs = j.value("epochs", c.epochs);
    c.batch_size = j.value("batch_size", c.batch_size);
    c.lr = j.value("lr", c.lr);
    c.lr_decay_epoch = j.value("lr_decay_epoch", c.lr_decay_epoch);
    c.cameras = j.value("cameras", c.cameras);
    c.camera_radius = j.value("camera_radius", c.camera_radius);
    if (j.contains("weights")) {
        const auto& w = j.at("weights");
        c.weights.mesh = w.value("mesh", c.weights.mesh);
        c.weights.pose2d = w.value("pose2d", c.weights.pose2d);
        c.weights.norm = w.value("norm", c.weights.norm);
        c.weights.edge = w.value("edge", c.weights.edge);
        c.weights.con3d = w.value("con3d", c.weights.con3d);
        c.weights.con2d = w.value("con2d", c.weights.con2d);
    }
    c.out_dir = j.value("out_dir", c.out_dir);
    c.max_steps = j.value("max_steps", c.max_steps);
    c.resume_from = j.value("resume_from", c.resume_from);
}

namespace {

Tensor to_f32(const TensorD& t) {
    Tensor o(t.shape);
    for (std::int64_t i = 0; i < t.numel(); ++i) o[i] = static_cast<float>(t[i]);
    return o;
}

TensorD to_f64(const Tensor& t) {
    TensorD o(t.shape);
    for (std::int64_t i = 0; i < t.numel(); ++i) o[i] = static_cast<double>(t[i]);
    return o;
}

Tensor vertices_f32(const TriMesh& m) {
    Tensor o({m.vertex_count(), 3});
    for (int i = 0; i < m.vertex_count(); ++i)
        for (int c = 0; c < 3; ++c) o.at({i, c}) = static_cast<float>(m.vertices[static_cast<std::size_t>(i)][static_cast<std::size_t>(c)]);
    return o;
}

TensorD vertices_f64(const TriMesh& m) {
    TensorD o({m.vertex_count(), 3});
    for (int i = 0; i < m.vertex_count(); ++i)
        for (int c = 0; c < 3; ++c) o.at({i, c}) = m.vertices[static_cast<std::size_t>(i)][static_cast<std::size_t>(c)];
    return o;
}

Tensor normals_f32(const TriMesh& m) {
    const auto ns = face_normals(m);
    Tensor o({static_cast<int>(ns.size()), 3});
    for (std::size_t i = 0; i < ns.size(); ++i)
        for (int c = 0; c < 3; ++c) o.at({static_cast<int>(i), c}) = static_cast<float>(ns[i][static_cast<std::size_t>(c)]);
    return o;
}

ViewTransform cast_transform(const ViewTransformT<double>& vt) {
    ViewTransform o;
    o.t = to_f32(vt.t);
    o.r = to_f32(vt.r);
    return o;
}

// Steep-ring viewpoints keep the finger blobs separated in the image, which
// keeps the toy problem learnable at this scale.
std::vector<CameraPose> pick_cameras(const TrainConfig& cfg) {
    auto grid = camera_grid(cfg.camera_radius);
    std::vector<CameraPose> steep;
    for (const auto& c : grid)
        if (c.position[2] / cfg.camera_radius > 0.7) steep.push_back(c);
    if (cfg.cameras < 1 || cfg.cameras > static_cast<int>(steep.size()))
        throw std::invalid_argument("train: cameras must be in [1, " + std::to_string(steep.size()) + "]");
    std::vector<CameraPose> out;
    for (int k = 0; k < cfg.cameras; ++k)
        out.push_back(steep[static_cast<std::size_t>(k) * steep.size() / static_cast<std::size_t>(cfg.cameras)]);
    return out;
}

struct Dataset {
    std::vector<HandPose> poses;
    std::vector<CameraPose> cams;
};

// Dataset index -> deterministic sample. The stride constants are coprime to
// the pose-list length so consecutive indices decorrelate.
SyntheticSample raw_sample(const Dataset& ds, int index) {
    const auto& pose = ds.poses[(static_cast<std::size_t>(index) * 977u) % ds.poses.size()];
    const std::size_t ci = (static_cast<std::size_t>(index) * 613u) % ds.cams.size();
    SyntheticSample s;
    s.pose = pose;
    s.camera_id = static_cast<int>(ci);
    auto hand = toy_hand_dense(pose);
    s.landmarks = project(hand.joints, ds.cams[ci]);
    // 3D targets live in the camera frame so in-plane image rotations match
    // z-rotations of the root-relative vertices exactly
    s.joints3d = camera_space(hand.joints, ds.cams[ci]);
    TensorD verts({hand.mesh.vertex_count(), 3});
    for (int v = 0; v < verts.dim(0); ++v)
        for (int c = 0; c < 3; ++c) verts.at({v, c}) = hand.mesh.vertices[static_cast<std::size_t>(v)][static_cast<std::size_t>(c)];
    verts = camera_space(verts, ds.cams[ci]);
    s.mesh = std::move(hand.mesh);
    for (int v = 0; v < verts.dim(0); ++v)
        for (int c = 0; c < 3; ++c) s.mesh.vertices[static_cast<std::size_t>(v)][static_cast<std::size_t>(c)] = verts.at({v, c});
    return s;
}

TwoViewSample train_sample(const TrainConfig& cfg, const Dataset& ds, int index) {
    auto s = raw_sample(ds, index);
    std::mt19937 arng(cfg.seed * 0x9E3779B9u + static_cast<unsigned>(index) + 1u);
    return two_view_augment(s, arng);
}

struct PairLoss {
    LossBundle bundle;
};

PairLoss pair_loss(const HmrModel& model, const TrainConfig& cfg, const TwoViewSample& tv) {
    const int sz = cfg.model.encoder.input_size;
    const auto img1 = to_f32(render_blob_image(tv.view1.landmarks, sz));
    const auto img2 = to_f32(render_blob_image(tv.view2.landmarks, sz));
    auto out1 = model.forward(img1);
    auto out2 = model.forward(img2);

    const auto& faces = model.template_mesh.faces;
    auto gt_v1 = ad::constant(vertices_f32(tv.view1.mesh));
    auto gt_v2 = ad::constant(vertices_f32(tv.view2.mesh));
    auto gt_l1 = ad::constant(to_f32(tv.view1.landmarks));
    auto gt_l2 = ad::constant(to_f32(tv.view2.landmarks));
    const auto n1 = normals_f32(tv.view1.mesh);
    const auto n2 = normals_f32(tv.view2.mesh);

    auto half = [](ad::VarF a, ad::VarF b) { return ad::scale(ad::add(a, b), 0.5f); };
    auto mesh = half(l_mesh(out1.verts, gt_v1), l_mesh(out2.verts, gt_v2));
    auto pose2d = half(l_pose2d(out1.landmarks, gt_l1), l_pose2d(out2.landmarks, gt_l2));
    auto norm = half(l_norm(out1.verts, faces, n1), l_norm(out2.verts, faces, n2));
    auto edge = half(l_edge(out1.verts, gt_v1->value, faces), l_edge(out2.verts, gt_v2->value, faces));
    auto [con3d, con2d] = l_consistency(wrist_rooted(out1.verts), wrist_rooted(out2.verts),
                                        out1.landmarks, out2.landmarks, cast_transform(tv.transform));
    return {total_loss(mesh, pose2d, norm, edge, con3d, con2d, cfg.weights)};
}

struct CheckpointExtra {
    long long global_step = 0;
    double initial_loss = 0;
    double untrained_pa = 0;
    double best_pa = std::numeric_limits<double>::infinity();
};

void save_checkpoint(const fs::path& dir, HmrModel& model, Adam& opt, const CheckpointExtra& x) {
    fs::create_directories(dir);
    nlohmann::json manifest;
    manifest["config"] = model.cfg;
    manifest["global_step"] = x.global_step;
    manifest["adam"] = {{"t", opt.t}, {"lr", opt.lr}};
    manifest["stats"] = {{"initial_loss", x.initial_loss},
                         {"untrained_pa", x.untrained_pa},
                         {"best_pa", x.best_pa}};
    std::ofstream mf(dir / "manifest.json");
    mf << manifest.dump(2) << "\n";
    save_tensor_stack(dir / "params.bin", model.parameters());
    std::vector<Tensor*> ms, vs;
    for (auto& t : opt.m) ms.push_back(&t);
    for (auto& t : opt.v) vs.push_back(&t);
    save_tensor_stack(dir / "adam_m.bin", ms);
    save_tensor_stack(dir / "adam_v.bin", vs);
}

CheckpointExtra load_checkpoint(const fs::path& dir, HmrModel& model, Adam& opt) {
    std::ifstream mf(dir / "manifest.json");
    if (!mf) throw std::runtime_error("cannot read " + (dir / "manifest.json").string());
    nlohmann::json manifest = nlohmann::json::parse(mf);
    load_tensor_stack(dir / "params.bin", model.parameters());
    std::vector<Tensor*> ms, vs;
    for (auto& t : opt.m) ms.push_back(&t);
    for (auto& t : opt.v) vs.push_back(&t);
    load_tensor_stack(dir / "adam_m.bin", ms);
    load_tensor_stack(dir / "adam_v.bin", vs);
    opt.t = manifest.at("adam").at("t").get<long long>();
    CheckpointExtra x;
    x.global_step = manifest.at("global_step").get<long long>();
    x.initial_loss = manifest.at("stats").at("initial_loss").get<double>();
    x.untrained_pa = manifest.at("stats").at("untrained_pa").get<double>();
    x.best_pa = manifest.at("stats").at("best_pa").get<double>();
    return x;
}

std::vector<int> epoch_order(const TrainConfig& cfg, long long epoch) {
    std::vector<int> idx(static_cast<std::size_t>(cfg.train_samples));
    std::iota(idx.begin(), idx.end(), 0);
    std::mt19937 rng(cfg.seed ^ static_cast<unsigned>(0x85EBCA6Bu * (epoch + 1)));
    std::shuffle(idx.begin(), idx.end(), rng);
    return idx;
}

}  // namespace

double evaluate_heldout(const HmrModel& model, const TrainConfig& cfg) {
    Dataset ds{full_pose_set(), pick_cameras(cfg)};
    double acc = 0;
    for (int i = 0; i < cfg.heldout_samples; ++i) {
        auto s = raw_sample(ds, cfg.train_samples + i);
        const auto img = to_f32(render_blob_image(s.landmarks, cfg.model.encoder.input_size));
        auto out = model.forward(img);
        // root-relative ground-truth vertices, matching the training target
        TensorD gt = vertices_f64(s.mesh);
        for (int v = 0; v < gt.dim(0); ++v)
            for (int c = 0; c < 3; ++c) gt.at({v, c}) -= s.joints3d.at({0, c});
        acc += pa_mpjpe(to_f64(out.verts->value), gt);
    }
    return acc / cfg.heldout_samples;
}

TrainReport train_toy(const TrainConfig& cfg) {
    if (cfg.batch_size < 1 || cfg.train_samples < cfg.batch_size)
        throw std::invalid_argument("train: need at least one full batch");
    if (cfg.heldout_samples < 1) throw std::invalid_argument("train: need held-out samples");

    auto model = HmrModel::init(cfg.model, cfg.seed);
    Adam opt(model.parameters(), cfg.lr);
    CheckpointExtra extra;

    const fs::path out(cfg.out_dir);
    fs::create_directories(out);

    if (!cfg.resume_from.empty()) extra = load_checkpoint(cfg.resume_from, model, opt);

    TrainReport report;
    report.loss_csv = (out / "loss.csv").string();
    std::ofstream csv(report.loss_csv, extra.global_step > 0 ? std::ios::app : std::ios::trunc);
    if (extra.global_step == 0) csv << LossBundle::csv_header() << "\n";

    Dataset ds{full_pose_set(), pick_cameras(cfg)};

    if (extra.global_step == 0) {
        extra.untrained_pa = evaluate_heldout(model, cfg);
        extra.best_pa = extra.untrained_pa;
    }
    report.untrained_pa = extra.untrained_pa;

    const long long steps_per_epoch = cfg.train_samples / cfg.batch_size;
    long long total_steps = steps_per_epoch * cfg.epochs;
    if (cfg.max_steps >= 0) total_steps = std::min(total_steps, cfg.max_steps);

    const auto params = model.parameters();
    std::unordered_map<const Tensor*, Tensor> grad_map;
    std::vector<double> recent;  // batch-mean totals for final_loss

    long long cached_epoch = -1;
    std::vector<int> order;

    for (long long gs = extra.global_step; gs < total_steps; ++gs) {
        const long long epoch = gs / steps_per_epoch;
        const long long pos = gs % steps_per_epoch;
        if (epoch != cached_epoch) {
            order = epoch_order(cfg, epoch);
            cached_epoch = epoch;
        }
        opt.lr = cfg.lr * (cfg.lr_decay_epoch >= 0 && epoch >= cfg.lr_decay_epoch ? 0.1 : 1.0);

        grad_map.clear();
        double sum_total = 0, sum_mesh = 0, sum_pose = 0, sum_norm = 0, sum_edge = 0, sum_c3 = 0,
               sum_c2 = 0;
        for (int b = 0; b < cfg.batch_size; ++b) {
            const int idx = order[static_cast<std::size_t>(pos * cfg.batch_size + b)];
            auto tv = train_sample(cfg, ds, idx);
            auto [bundle] = pair_loss(model, cfg, tv);
            ad::backward(bundle.total);
            ad::accumulate_param_grads(bundle.total, grad_map);
            sum_total += bundle.total->value[0];
            sum_mesh += bundle.mesh->value[0];
            sum_pose += bundle.pose2d->value[0];
            sum_norm += bundle.norm->value[0];
            sum_edge += bundle.edge->value[0];
            sum_c3 += bundle.con3d->value[0];
            sum_c2 += bundle.con2d->value[0];
        }
        const double inv = 1.0 / cfg.batch_size;
        const double batch_total = sum_total * inv;
        if (!std::isfinite(batch_total)) {
            report.aborted = true;
            report.abort_reason = "non-finite loss at optimizer step " + std::to_string(gs);
            report.steps = gs;
            return report;
        }

        std::vector<const Tensor*> grads;
        grads.reserve(params.size());
        for (auto* p : params) {
            auto& g = grad_map[p];
            if (g.numel() == 0) g = Tensor(p->shape);  // parameter unused this step
            for (std::int64_t k = 0; k < g.numel(); ++k) g[k] = static_cast<float>(g[k] * inv);
            grads.push_back(&g);
        }
        opt.step(grads);

        if (gs == 0) extra.initial_loss = batch_total;
        report.step_losses.push_back(batch_total);
        recent.push_back(batch_total);
        if (recent.size() > 10) recent.erase(recent.begin());
        csv << gs << "," << sum_mesh * inv << "," << sum_pose * inv << "," << sum_norm * inv << ","
            << sum_edge * inv << "," << sum_c3 * inv << "," << sum_c2 * inv << "," << batch_total
            << "\n";
        csv.flush();

        const bool epoch_end = pos == steps_per_epoch - 1;
        const bool last = gs == total_steps - 1;
        if (epoch_end || last) {
            const double pa = evaluate_heldout(model, cfg);
            report.final_pa = pa;
            extra.global_step = gs + 1;
            if (pa < extra.best_pa) {
                extra.best_pa = pa;
                save_checkpoint(out / "best", model, opt, extra);
            }
            save_checkpoint(out / "last", model, opt, extra);
        }
    }

    // ensure a checkpoint exists even for very short runs
    extra.global_step = total_steps;
    if (!fs::exists(out / "last" / "manifest.json") || cfg.max_steps >= 0)
        save_checkpoint(out / "last", model, opt, extra);

    report.steps = total_steps;
    report.initial_loss = extra.initial_loss;
    report.best_pa = extra.best_pa;
    report.final_loss =
        recent.empty() ? 0.0 : std::accumulate(recent.begin(), recent.end(), 0.0) / recent.size();
    report.best_checkpoint = (out / "best").string();
    report.last_checkpoint = (out / "last").string();
    return report;
}

}  // namespace hmr
