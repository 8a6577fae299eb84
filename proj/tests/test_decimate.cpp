#include <doctest.h>

#include <cmath>

#include "hmr/decimate.hpp"
#include "hmr/mesh.hpp"

using namespace hmr;

TEST_CASE("decimate: ceil-halving chain 778 -> 389 -> 195 -> 98 -> 49") {
    auto mesh = make_uv_sphere(8, 98);
    REQUIRE(mesh.vertex_count() == 778);
    auto chain = decimate_chain(mesh, 4);
    CHECK(chain.meshes[1].vertex_count() == 389);
    CHECK(chain.meshes[2].vertex_count() == 195);
    CHECK(chain.meshes[3].vertex_count() == 98);
    CHECK(chain.meshes[4].vertex_count() == 49);
    // each collapse sequence end-state keeps the sphere closed
    for (const auto& m : chain.meshes) CHECK(euler_characteristic(m) == 2);
}

TEST_CASE("decimate: down rows select exactly one vertex; up rows are barycentric") {
    auto mesh = make_icosphere(2);  // 162 vertices
    auto [coarse, tf] = decimate(mesh);
    CHECK(coarse.vertex_count() == (mesh.vertex_count() + 1) / 2);

    std::vector<int> down_nnz(static_cast<std::size_t>(tf.down.rows), 0);
    for (std::size_t i = 0; i < tf.down.nnz(); ++i) {
        CHECK(tf.down.w[i] == 1.0);
        down_nnz[static_cast<std::size_t>(tf.down.r[i])]++;
    }
    for (int c : down_nnz) CHECK(c == 1);

    std::vector<double> up_sum(static_cast<std::size_t>(tf.up.rows), 0.0);
    std::vector<int> up_nnz(static_cast<std::size_t>(tf.up.rows), 0);
    for (std::size_t i = 0; i < tf.up.nnz(); ++i) {
        up_sum[static_cast<std::size_t>(tf.up.r[i])] += tf.up.w[i];
        up_nnz[static_cast<std::size_t>(tf.up.r[i])]++;
    }
    for (int v = 0; v < tf.up.rows; ++v) {
        CHECK(up_sum[static_cast<std::size_t>(v)] == doctest::Approx(1.0).epsilon(1e-6));
        CHECK(up_nnz[static_cast<std::size_t>(v)] >= 1);
        CHECK(up_nnz[static_cast<std::size_t>(v)] <= 3);
    }
}

TEST_CASE("decimate: up*down reproduces coarse-linear functions on a flat grid") {
    auto grid = make_grid(9, 9);
    auto [coarse, tf] = decimate(grid);
    // linear field f(x,y,z) = 0.3x - 0.7y + 2
    TensorD f({grid.vertex_count(), 1});
    for (int v = 0; v < grid.vertex_count(); ++v) {
        const auto& p = grid.vertices[static_cast<std::size_t>(v)];
        f[v] = 0.3 * p[0] - 0.7 * p[1] + 2.0;
    }
    auto rebuilt = tf.up.apply(tf.down.apply(f));
    double rms = 0;
    for (int v = 0; v < grid.vertex_count(); ++v) {
        const double d = rebuilt[v] - f[v];
        rms += d * d;
    }
    rms = std::sqrt(rms / grid.vertex_count());
    CHECK(rms <= 1e-3);
}

TEST_CASE("decimate: rejects tiny meshes") {
    TriMesh tri;
    tri.vertices = {{0, 0, 0}, {1, 0, 0}, {0, 1, 0}};
    tri.faces = {{0, 1, 2}};
    CHECK_THROWS(decimate(tri));
}
