#pragma once

#include "hmr/mesh.hpp"
#include "hmr/sparse.hpp"

namespace hmr {

// down: V'xV, one 1 per row (surviving-vertex selection).
// up:   VxV', 1-3 barycentric weights per row summing to 1.
struct MeshTransform {
    CooMatrix down;
    CooMatrix up;
};

// Quadric-error edge collapse until ceil(V/2) vertices survive. Collapses
// keep one endpoint's position (the cheaper one under the summed quadric),
// so the coarse vertex set is a subset of the fine one. Collapses that would
// break the link condition are skipped; if no legal collapse remains the
// achieved count is returned as-is.
std::pair<TriMesh, MeshTransform> decimate(const TriMesh& mesh);

// Repeated decimation; returns meshes[0]=input .. meshes[n] plus transforms.
struct MeshChain {
    std::vector<TriMesh> meshes;
    std::vector<MeshTransform> transforms;  // transforms[i]: meshes[i] <-> meshes[i+1]
};
MeshChain decimate_chain(const TriMesh& mesh, int levels);

}  // namespace hmr
