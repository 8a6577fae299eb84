#include "hmr/synthdata.hpp"

#include <cmath>
#include <stdexcept>

#include <json.hpp>

namespace hmr {

namespace {

constexpr int kFingers = 5;
constexpr double kMaxSegmentBend = M_PI / 3.0;  // per segment, so 3x60 deg total curl

// World-unit scale of the hand (span ~20 units, typical capsule edge ~1).
// Sized so the L1 mesh term and the normalized-edge orientation term produce
// gradients of comparable magnitude: orientation gradients scale with the
// reciprocal edge length while L1 gradients are scale-free, so a hand much
// smaller than unit edge length lets the orientation term dominate Adam's
// per-parameter step budget.
constexpr double kHandScale = 10.0;

Vec3 normalize(const Vec3& v) {
    const double n = norm(v);
    if (n < 1e-12) throw std::invalid_argument("synthdata: cannot normalize near-zero vector");
    return {v[0] / n, v[1] / n, v[2] / n};
}

// Rodrigues rotation of v about unit axis a.
Vec3 rotate_about(const Vec3& v, const Vec3& a, double angle) {
    const double c = std::cos(angle), s = std::sin(angle);
    const Vec3 crossed = cross(a, v);
    const double d = dot(a, v);
    return {v[0] * c + crossed[0] * s + a[0] * d * (1 - c),
            v[1] * c + crossed[1] * s + a[1] * d * (1 - c),
            v[2] * c + crossed[2] * s + a[2] * d * (1 - c)};
}

struct FingerLayout {
    double splay;     // angle from +y in the palm plane
    double palm_len;  // wrist -> MCP
    double segments[3];
};

const FingerLayout kFingerLayout[kFingers] = {
    {-0.60, 0.55, {0.30, 0.22, 0.18}},  // thumb
    {-0.25, 0.95, {0.42, 0.28, 0.22}},  // index
    {0.00, 1.00, {0.46, 0.30, 0.24}},   // middle
    {0.25, 0.95, {0.42, 0.28, 0.22}},   // ring
    {0.50, 0.85, {0.34, 0.24, 0.20}},   // little
};

// Closed capsule tube from p to q: `rings` rings of `segs` vertices plus two
// apex vertices (segs*rings + 2 vertices, 2*segs*rings faces).
void append_capsule(TriMesh& mesh, const Vec3& p, const Vec3& q, double radius, int segs = 4,
                    int rings = 2) {
    const Vec3 axis = normalize(q - p);
    Vec3 ref{0.31, 0.52, 0.80};
    if (std::abs(dot(axis, normalize(ref))) > 0.99) ref = {1.0, 0.0, 0.0};
    const Vec3 x = normalize(cross(axis, ref));
    const Vec3 y = cross(axis, x);

    const int base = mesh.vertex_count();
    mesh.vertices.push_back(p - radius * axis);  // apex 0
    for (int r = 0; r < rings; ++r) {
        const double t = rings > 1 ? static_cast<double>(r) / (rings - 1) : 0.5;
        const Vec3 center = p + t * (q - p);
        for (int i = 0; i < segs; ++i) {
            const double a = 2.0 * M_PI * i / segs;
            mesh.vertices.push_back(center + std::cos(a) * radius * x + std::sin(a) * radius * y);
        }
    }
    mesh.vertices.push_back(q + radius * axis);  // apex 1

    const int a0 = base, a1 = base + 1 + segs * rings;
    auto ring = [&](int r) { return base + 1 + segs * r; };
    for (int i = 0; i < segs; ++i) {
        const int j = (i + 1) % segs;
        mesh.faces.push_back({a0, ring(0) + j, ring(0) + i});                      // bottom cap
        for (int r = 0; r + 1 < rings; ++r) {
            mesh.faces.push_back({ring(r) + i, ring(r) + j, ring(r + 1) + j});     // side
            mesh.faces.push_back({ring(r) + i, ring(r + 1) + j, ring(r + 1) + i});
        }
        mesh.faces.push_back({a1, ring(rings - 1) + i, ring(rings - 1) + j});      // top cap
    }
}

}  // namespace

void HandPose::validate() const {
    for (double b : bend)
        if (!(b >= 0.0 && b <= 1.0))
            throw std::invalid_argument("hand pose: bend parameters must lie in [0,1]");
}

std::vector<CameraPose> camera_grid(double radius, const Vec3& palm_center) {
    if (radius <= 0) throw std::invalid_argument("camera_grid: radius must be positive");
    std::vector<CameraPose> cams;
    cams.reserve(216);
    for (int lat = 0; lat < 6; ++lat) {
        const double theta = lat * M_PI / 12.0;  // 0 = equator ring; pole ring excluded
        for (int lon = 0; lon < 36; ++lon) {
            const double phi = lon * M_PI / 18.0;
            CameraPose c;
            c.position = palm_center + radius * Vec3{std::cos(theta) * std::cos(phi),
                                                     std::cos(theta) * std::sin(phi), std::sin(theta)};
            c.look_at = palm_center;
            cams.push_back(c);
        }
    }
    return cams;
}

std::vector<HandPose> base_poses() {
    std::vector<HandPose> poses(32);
    for (int i = 0; i < 32; ++i)
        for (int f = 0; f < kFingers; ++f) poses[static_cast<std::size_t>(i)].bend[static_cast<std::size_t>(f)] = (i >> f) & 1 ? 1.0 : 0.0;
    return poses;
}

std::vector<std::pair<int, int>> pose_pairs() {
    std::vector<std::pair<int, int>> pairs;
    pairs.reserve(496);
    for (int a = 0; a < 32; ++a)
        for (int b = a + 1; b < 32; ++b) pairs.emplace_back(a, b);
    return pairs;
}

HandPose interpolate(const HandPose& a, const HandPose& b, double t) {
    if (!(t >= 0.0 && t <= 1.0)) throw std::invalid_argument("interpolate: t must lie in [0,1]");
    HandPose out;
    for (int f = 0; f < kFingers; ++f)
        out.bend[static_cast<std::size_t>(f)] =
            (1.0 - t) * a.bend[static_cast<std::size_t>(f)] + t * b.bend[static_cast<std::size_t>(f)];
    return out;
}

std::vector<HandPose> full_pose_set() {
    auto poses = base_poses();
    for (const auto& [a, b] : pose_pairs())
        for (int k = 1; k <= 3; ++k)
            poses.push_back(interpolate(poses[static_cast<std::size_t>(a)],
                                        poses[static_cast<std::size_t>(b)], k / 4.0));
    return poses;
}

std::vector<std::pair<int, int>> toy_hand_bones() {
    std::vector<std::pair<int, int>> bones;
    for (int f = 0; f < kFingers; ++f) {
        const int mcp = 1 + 4 * f;
        bones.emplace_back(0, mcp);
        bones.emplace_back(mcp, mcp + 1);
        bones.emplace_back(mcp + 1, mcp + 2);
        bones.emplace_back(mcp + 2, mcp + 3);
    }
    return bones;
}

namespace {
std::array<Vec3, 21> hand_skeleton(const HandPose& pose) {
    pose.validate();
    std::array<Vec3, 21> joints{};
    joints[0] = {0.0, 0.0, 0.0};
    for (int f = 0; f < kFingers; ++f) {
        const auto& lay = kFingerLayout[f];
        const Vec3 dir0{std::sin(lay.splay), std::cos(lay.splay), 0.0};
        const Vec3 axis{std::cos(lay.splay), -std::sin(lay.splay), 0.0};  // curl axis
        const double theta = pose.bend[static_cast<std::size_t>(f)] * kMaxSegmentBend;

        Vec3 at = joints[0] + lay.palm_len * dir0;
        joints[static_cast<std::size_t>(1 + 4 * f)] = at;
        for (int s = 0; s < 3; ++s) {
            const Vec3 dir = rotate_about(dir0, axis, (s + 1) * theta);
            at = at + lay.segments[s] * dir;
            joints[static_cast<std::size_t>(2 + 4 * f + s)] = at;
        }
    }
    for (auto& j : joints) j = kHandScale * j;
    return joints;
}

ToyHand skinned_hand(const HandPose& pose, int segs, int base_rings, int rich_rings) {
    ToyHand hand;
    hand.joints = TensorD({21, 3});
    const auto joints = hand_skeleton(pose);
    for (int j = 0; j < 21; ++j)
        for (int c = 0; c < 3; ++c) hand.joints.at({j, c}) = joints[static_cast<std::size_t>(j)][static_cast<std::size_t>(c)];

    const auto bones = toy_hand_bones();
    for (std::size_t k = 0; k < bones.size(); ++k) {
        const auto [a, b] = bones[k];
        // the wrist->MCP bones of the first three fingers get extra rings
        const int rings = (k % 4 == 0 && k < 12) ? rich_rings : base_rings;
        append_capsule(hand.mesh, joints[static_cast<std::size_t>(a)], joints[static_cast<std::size_t>(b)], 0.16 * kHandScale, segs, rings);
    }
    hand.mesh.validate();
    return hand;
}
}  // namespace

ToyHand toy_hand(const HandPose& pose) { return skinned_hand(pose, 4, 2, 2); }

// Denser skinning for the training template: 17 capsules of 6x6 rings plus
// 3 of 6x7 = exactly 778 vertices, so four ceil-halving decimation steps
// land on the 49-vertex coarse level.
ToyHand toy_hand_dense(const HandPose& pose) { return skinned_hand(pose, 6, 6, 7); }

namespace {
struct CameraBasis {
    Vec3 right, up, forward;
};

CameraBasis camera_basis(const CameraPose& cam) {
    const Vec3 forward = normalize(cam.look_at - cam.position);
    Vec3 upref = cam.up;
    if (std::abs(dot(normalize(upref), forward)) > 0.999) upref = {0.0, 1.0, 0.0};
    const Vec3 right = normalize(cross(forward, upref));
    return {right, cross(right, forward), forward};
}
}  // namespace

TensorD camera_space(const TensorD& pts, const CameraPose& cam) {
    if (pts.ndim() != 2 || pts.dim(1) != 3)
        throw std::invalid_argument("camera_space: points must be [N,3]");
    const auto b = camera_basis(cam);
    TensorD out(pts.shape);
    for (int j = 0; j < pts.dim(0); ++j) {
        const Vec3 d = Vec3{pts.at({j, 0}), pts.at({j, 1}), pts.at({j, 2})} - cam.position;
        out.at({j, 0}) = dot(b.right, d);
        out.at({j, 1}) = dot(b.up, d);
        out.at({j, 2}) = dot(b.forward, d);
    }
    return out;
}

TensorD project(const TensorD& joints, const CameraPose& cam) {
    if (joints.ndim() != 2 || joints.dim(1) != 3)
        throw std::invalid_argument("project: joints must be [N,3]");
    const auto [right, up, forward] = camera_basis(cam);

    TensorD out({joints.dim(0), 2});
    for (int j = 0; j < joints.dim(0); ++j) {
        const Vec3 d = Vec3{joints.at({j, 0}), joints.at({j, 1}), joints.at({j, 2})} - cam.position;
        const double z = dot(forward, d);
        if (z <= 1e-9)
            throw std::runtime_error("project: joint " + std::to_string(j) + " is behind the camera");
        out.at({j, 0}) = cam.cx + cam.focal * dot(right, d) / z;
        out.at({j, 1}) = cam.cy + cam.focal * dot(up, d) / z;
    }
    return out;
}

TensorD render_heatmaps(const TensorD& landmarks, int size, double sigma_px) {
    if (landmarks.ndim() != 2 || landmarks.dim(1) != 2)
        throw std::invalid_argument("render_heatmaps: landmarks must be [N,2]");
    if (size < 2 || sigma_px <= 0) throw std::invalid_argument("render_heatmaps: bad size or sigma");
    const int n = landmarks.dim(0);
    TensorD maps({n, size, size});
    const double inv = 1.0 / (2.0 * sigma_px * sigma_px);
    for (int j = 0; j < n; ++j) {
        const double lx = landmarks.at({j, 0}) * (size - 1);
        const double ly = landmarks.at({j, 1}) * (size - 1);
        for (int y = 0; y < size; ++y)
            for (int x = 0; x < size; ++x)
                maps.at({j, y, x}) = std::exp(-((x - lx) * (x - lx) + (y - ly) * (y - ly)) * inv);
    }
    return maps;
}

TensorD render_blob_image(const TensorD& landmarks, int size, double sigma_px) {
    const auto maps = render_heatmaps(landmarks, size, sigma_px);
    const int n = landmarks.dim(0);
    TensorD img({3, size, size});
    for (int j = 0; j < n; ++j) {
        const double w0 = static_cast<double>(j + 1) / n;
        const double w1 = 1.0 - static_cast<double>(j) / n;
        for (int y = 0; y < size; ++y)
            for (int x = 0; x < size; ++x) {
                const double v = maps.at({j, y, x});
                img.at({0, y, x}) += w0 * v;
                img.at({1, y, x}) += w1 * v;
                img.at({2, y, x}) += v;
            }
    }
    for (auto& v : img.data) v = std::min(v, 1.0);
    return img;
}

SyntheticSample make_sample(const HandPose& pose, const CameraPose& cam, int camera_id) {
    SyntheticSample s;
    s.pose = pose;
    s.camera_id = camera_id;
    auto hand = toy_hand(pose);
    s.joints3d = std::move(hand.joints);
    s.mesh = std::move(hand.mesh);
    s.landmarks = project(s.joints3d, cam);
    return s;
}

ViewTransformT<double> make_view_transform(double theta, double s, double tx, double ty) {
    auto vt = ViewTransformT<double>::from_rotation_z(theta, s, 0.0, 0.0);
    // rotate and scale about the image center (0.5, 0.5), then shift
    const double cx = 0.5, cy = 0.5;
    vt.t.at({0, 2}) = cx + tx - (vt.t.at({0, 0}) * cx + vt.t.at({0, 1}) * cy);
    vt.t.at({1, 2}) = cy + ty - (vt.t.at({1, 0}) * cx + vt.t.at({1, 1}) * cy);
    return vt;
}

namespace {
TensorD apply_transform_rows(const TensorD& l, const TensorT<double>& t23) {
    TensorD out(l.shape);
    for (int i = 0; i < l.dim(0); ++i)
        for (int a = 0; a < 2; ++a)
            out.at({i, a}) =
                t23.at({a, 0}) * l.at({i, 0}) + t23.at({a, 1}) * l.at({i, 1}) + t23.at({a, 2});
    return out;
}

TensorD root_relative(const TensorD& joints) {
    TensorD out(joints.shape);
    for (int i = 0; i < joints.dim(0); ++i)
        for (int c = 0; c < 3; ++c) out.at({i, c}) = joints.at({i, c}) - joints.at({0, c});
    return out;
}

TensorD rotate_rows3(const TensorD& v, const TensorT<double>& r) {
    TensorD out(v.shape);
    for (int i = 0; i < v.dim(0); ++i)
        for (int a = 0; a < 3; ++a)
            for (int b = 0; b < 3; ++b) out.at({i, a}) += r.at({a, b}) * v.at({i, b});
    return out;
}
}  // namespace

TwoViewSample two_view_augment(const SyntheticSample& sample, std::mt19937& rng) {
    std::uniform_real_distribution<double> angle(-M_PI / 4.0, M_PI / 4.0);
    std::uniform_real_distribution<double> scale(0.8, 1.2);
    std::uniform_real_distribution<double> shift(-0.1, 0.1);
    // fixed draw order keeps generation reproducible for a given seed
    const double theta = angle(rng);
    const double s = scale(rng);
    const double tx = shift(rng), ty = shift(rng);

    TwoViewSample out;
    out.transform = make_view_transform(theta, s, tx, ty);
    out.transform.validate();

    out.view1 = sample;
    out.view1.joints3d = root_relative(sample.joints3d);
    out.view2 = sample;
    out.view2.joints3d = rotate_rows3(out.view1.joints3d, out.transform.r);
    out.view2.landmarks = apply_transform_rows(sample.landmarks, out.transform.t);
    for (std::size_t i = 0; i < sample.mesh.vertices.size(); ++i) {
        // mesh vertices follow the same root-relative rotation
        const auto& mv = sample.mesh.vertices[i];
        TensorD row({1, 3}, {mv[0] - sample.joints3d.at({0, 0}), mv[1] - sample.joints3d.at({0, 1}),
                             mv[2] - sample.joints3d.at({0, 2})});
        auto rotated = rotate_rows3(row, out.transform.r);
        out.view1.mesh.vertices[i] = {row[0], row[1], row[2]};
        out.view2.mesh.vertices[i] = {rotated[0], rotated[1], rotated[2]};
    }
    return out;
}

std::string manifest_line(const SyntheticSample& sample, const std::string& mesh_ref,
                          const std::string& heatmap_ref) {
    nlohmann::json j;
    j["pose"] = sample.pose.bend;
    j["camera"] = sample.camera_id;
    auto& lm = j["landmarks"];
    for (int i = 0; i < sample.landmarks.dim(0); ++i)
        lm.push_back({sample.landmarks.at({i, 0}), sample.landmarks.at({i, 1})});
    if (!mesh_ref.empty()) j["mesh"] = mesh_ref;
    if (!heatmap_ref.empty()) j["heatmaps"] = heatmap_ref;
    return j.dump();
}

}  // namespace hmr
