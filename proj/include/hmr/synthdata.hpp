#pragma once

// Procedural training data: hemispherical camera grid, finger-state pose
// combinatorics with interpolation, a low-poly articulated toy hand,
// pinhole projection, Gaussian ground-truth heatmaps, and the two-view
// affine augmentation used by the consistency losses.

#include <array>
#include <random>
#include <string>
#include <utility>
#include <vector>

#include "hmr/losses.hpp"
#include "hmr/mesh.hpp"
#include "hmr/tensor.hpp"

namespace hmr {

struct CameraPose {
    Vec3 position{};
    Vec3 look_at{};
    Vec3 up{0.0, 0.0, 1.0};
    double focal = 0.8;  // normalized units
    double cx = 0.5, cy = 0.5;
};

// Five per-finger bend parameters in [0,1]; 0 = extended, 1 = total bend.
struct HandPose {
    std::array<double, 5> bend{};

    void validate() const;
    bool operator==(const HandPose&) const = default;
};

struct SyntheticSample {
    HandPose pose;
    int camera_id = -1;
    TensorD joints3d;   // [21,3]
    TensorD landmarks;  // [21,2] normalized image coordinates
    TriMesh mesh;
    TensorD heatmaps;  // optional, empty unless rendered
};

// 36 longitudes (step pi/18) x 6 latitudes (k*pi/12, k=0..5; the pole ring
// is left out) = 216 cameras, all aimed at the palm center.
std::vector<CameraPose> camera_grid(double radius, const Vec3& palm_center = {0.0, 0.0, 0.0});

// 2^5 binary finger-state combinations, ordered by bit pattern.
std::vector<HandPose> base_poses();

// All C(32,2) = 496 unordered index pairs into base_poses().
std::vector<std::pair<int, int>> pose_pairs();

// Linear interpolation of bend parameters.
HandPose interpolate(const HandPose& a, const HandPose& b, double t);

// 32 base poses plus 3 intermediates (t = 1/4, 2/4, 3/4) per pair = 1520.
std::vector<HandPose> full_pose_set();

// Forward kinematics + rigidly skinned capsule tubes. Joint order: wrist,
// then per finger MCP, PIP, DIP, TIP.
struct ToyHand {
    TriMesh mesh;
    TensorD joints;  // [21,3]
};
ToyHand toy_hand(const HandPose& pose);

// Denser skinning of the same skeleton (778 vertices), used as the
// mesh-decoder training template.
ToyHand toy_hand_dense(const HandPose& pose);

// Bone list of the toy skeleton as (parent joint, child joint) index pairs.
std::vector<std::pair<int, int>> toy_hand_bones();

// Rigid map into camera coordinates (right, image-up, forward), origin at
// the camera. In this frame an in-plane image rotation about the principal
// point corresponds exactly to a z-rotation of the 3D points, which is what
// the two-view consistency losses assume.
TensorD camera_space(const TensorD& pts, const CameraPose& cam);

// Pinhole projection to normalized image coordinates. Throws if any joint
// is on or behind the camera plane, naming the joint.
TensorD project(const TensorD& joints, const CameraPose& cam);

// [N,size,size] Gaussian heatmaps with unit peaks at the landmarks
// (align-corners pixel grid).
TensorD render_heatmaps(const TensorD& landmarks, int size = 32, double sigma_px = 2.0);

// Deterministic 3-channel landmark-blob image for the toy trainer.
TensorD render_blob_image(const TensorD& landmarks, int size = 64, double sigma_px = 2.0);

SyntheticSample make_sample(const HandPose& pose, const CameraPose& cam, int camera_id);

// In-plane affine about the image center: rotation theta, scale s, shift
// (tx, ty). The matching 3D rotation is the z-rotation by theta.
ViewTransformT<double> make_view_transform(double theta, double s, double tx, double ty);

// Random two-view split: view1 is the sample itself with root-relative 3D
// joints; view2 applies a random rotation (+-45 deg), scale (0.8-1.2) and
// shift (+-10%) to the landmarks and the matching rotation to the
// root-relative joints. The returned transform maps view1 to view2 exactly.
struct TwoViewSample {
    SyntheticSample view1, view2;
    ViewTransformT<double> transform;
};
TwoViewSample two_view_augment(const SyntheticSample& sample, std::mt19937& rng);

// One JSON-lines manifest row.
std::string manifest_line(const SyntheticSample& sample, const std::string& mesh_ref = "",
                          const std::string& heatmap_ref = "");

}  // namespace hmr
