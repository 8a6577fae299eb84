#pragma once

#include <array>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

#include "hmr/tensor.hpp"

namespace hmr {

using Vec3 = std::array<double, 3>;

inline Vec3 operator-(const Vec3& a, const Vec3& b) { return {a[0] - b[0], a[1] - b[1], a[2] - b[2]}; }
inline Vec3 operator+(const Vec3& a, const Vec3& b) { return {a[0] + b[0], a[1] + b[1], a[2] + b[2]}; }
inline Vec3 operator*(double s, const Vec3& a) { return {s * a[0], s * a[1], s * a[2]}; }
inline double dot(const Vec3& a, const Vec3& b) { return a[0] * b[0] + a[1] * b[1] + a[2] * b[2]; }
inline Vec3 cross(const Vec3& a, const Vec3& b) {
    return {a[1] * b[2] - a[2] * b[1], a[2] * b[0] - a[0] * b[2], a[0] * b[1] - a[1] * b[0]};
}
inline double norm(const Vec3& a) { return std::sqrt(dot(a, a)); }

struct TopologyError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Triangle mesh with consistent CCW winding. Immutable after construction by
// convention; derived adjacency is built on demand by free functions.
struct TriMesh {
    std::vector<Vec3> vertices;
    std::vector<std::array<int, 3>> faces;

    int vertex_count() const { return static_cast<int>(vertices.size()); }
    int face_count() const { return static_cast<int>(faces.size()); }
    void validate() const;
};

struct SpiralIndexTable {
    int spiral_length = 0;
    TensorT<int> entries;  // [V, S]
    bool padded = false;   // some row ran out of component vertices
};

// Ordered CCW one-ring of v following face winding; boundary fans run from
// one boundary edge to the other. Throws TopologyError on non-manifold fans.
std::vector<int> one_ring(const TriMesh& mesh, int v);

// Center vertex, then ring 1, ring 2, ... truncated to S. Interior 1-rings
// are rotated to start at the smallest-index neighbor; ring k+1 is collected
// by walking ring k in order. Pads by repeating v when the component is
// exhausted (padded flag reported via out param if given).
std::vector<int> spiral_sequence(const TriMesh& mesh, int v, int s, bool* padded = nullptr);

SpiralIndexTable build_spiral_table(const TriMesh& mesh, int s);

// Unit face normals in stored winding order; throws on zero-area faces.
std::vector<Vec3> face_normals(const TriMesh& mesh);

int euler_characteristic(const TriMesh& mesh);

// OBJ import/export, v/f records only, 1-based indices.
TriMesh load_obj(const std::string& path);
void save_obj(const TriMesh& mesh, const std::string& path);

// Procedural test meshes.
TriMesh make_grid(int nx, int ny, double spacing = 1.0);
TriMesh make_icosphere(int subdivisions, double radius = 1.0);
// Closed UV sphere with segments*(rings-1)+2 vertices (8 x 98 -> 778).
TriMesh make_uv_sphere(int segments, int rings, double radius = 1.0);

}  // namespace hmr
