#include "hmr/decimate.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <limits>
#include <map>
#include <queue>
#include <set>
#include <tuple>
#include <vector>

namespace hmr {
namespace {

// Symmetric 4x4 quadric, packed upper triangle.
struct Quadric {
    std::array<double, 10> q{};
    void add_plane(const Vec3& n, double d, double w = 1.0) {
        const double p[4] = {n[0], n[1], n[2], d};
        int k = 0;
        for (int i = 0; i < 4; ++i)
            for (int j = i; j < 4; ++j) q[static_cast<std::size_t>(k++)] += w * p[i] * p[j];
    }
    Quadric& operator+=(const Quadric& o) {
        for (int i = 0; i < 10; ++i) q[static_cast<std::size_t>(i)] += o.q[static_cast<std::size_t>(i)];
        return *this;
    }
    double eval(const Vec3& v) const {
        const double p[4] = {v[0], v[1], v[2], 1.0};
        double acc = 0;
        int k = 0;
        for (int i = 0; i < 4; ++i)
            for (int j = i; j < 4; ++j) {
                const double c = q[static_cast<std::size_t>(k++)];
                acc += (i == j ? 1.0 : 2.0) * c * p[i] * p[j];
            }
        return acc;
    }
};

// Closest point on triangle abc to p, returned as barycentric (wa,wb,wc).
std::array<double, 3> closest_point_barycentric(const Vec3& p, const Vec3& a, const Vec3& b, const Vec3& c) {
    const Vec3 ab = b - a, ac = c - a, ap = p - a;
    const double d1 = dot(ab, ap), d2 = dot(ac, ap);
    if (d1 <= 0 && d2 <= 0) return {1, 0, 0};
    const Vec3 bp = p - b;
    const double d3 = dot(ab, bp), d4 = dot(ac, bp);
    if (d3 >= 0 && d4 <= d3) return {0, 1, 0};
    const double vc = d1 * d4 - d3 * d2;
    if (vc <= 0 && d1 >= 0 && d3 <= 0) {
        const double t = d1 / (d1 - d3);
        return {1 - t, t, 0};
    }
    const Vec3 cp = p - c;
    const double d5 = dot(ab, cp), d6 = dot(ac, cp);
    if (d6 >= 0 && d5 <= d6) return {0, 0, 1};
    const double vb = d5 * d2 - d1 * d6;
    if (vb <= 0 && d2 >= 0 && d6 <= 0) {
        const double t = d2 / (d2 - d6);
        return {1 - t, 0, t};
    }
    const double va = d3 * d6 - d5 * d4;
    if (va <= 0 && (d4 - d3) >= 0 && (d5 - d6) >= 0) {
        const double t = (d4 - d3) / ((d4 - d3) + (d5 - d6));
        return {0, 1 - t, t};
    }
    const double denom = 1.0 / (va + vb + vc);
    const double wb = vb * denom, wc = vc * denom;
    return {1.0 - wb - wc, wb, wc};
}

struct Collapser {
    const TriMesh& input;
    std::vector<Vec3> pos;
    std::vector<std::array<int, 3>> faces;
    std::vector<char> face_alive;
    std::vector<char> alive;
    std::vector<std::set<int>> nbr;
    std::vector<Quadric> quad;
    std::vector<int> stamp;
    int survivors;

    explicit Collapser(const TriMesh& m)
        : input(m),
          pos(m.vertices),
          faces(m.faces),
          face_alive(m.faces.size(), 1),
          alive(m.vertices.size(), 1),
          nbr(m.vertices.size()),
          quad(m.vertices.size()),
          stamp(m.vertices.size(), 0),
          survivors(m.vertex_count()) {
        std::map<std::pair<int, int>, int> edge_faces;
        for (std::size_t fi = 0; fi < faces.size(); ++fi) {
            const auto& f = faces[fi];
            const Vec3 nv = cross(pos[static_cast<std::size_t>(f[1])] - pos[static_cast<std::size_t>(f[0])],
                                  pos[static_cast<std::size_t>(f[2])] - pos[static_cast<std::size_t>(f[0])]);
            const double area2 = norm(nv);
            for (int k = 0; k < 3; ++k) {
                const int a = f[k], b = f[(k + 1) % 3];
                nbr[static_cast<std::size_t>(a)].insert(b);
                nbr[static_cast<std::size_t>(b)].insert(a);
                edge_faces[{std::min(a, b), std::max(a, b)}]++;
            }
            if (area2 < 1e-14) continue;
            const Vec3 n = (1.0 / area2) * nv;
            for (int k = 0; k < 3; ++k)
                quad[static_cast<std::size_t>(f[k])].add_plane(n, -dot(n, pos[static_cast<std::size_t>(f[k])]));
        }
        // Boundary constraint planes keep open borders straight.
        for (std::size_t fi = 0; fi < faces.size(); ++fi) {
            const auto& f = faces[fi];
            for (int k = 0; k < 3; ++k) {
                const int a = f[k], b = f[(k + 1) % 3];
                if (edge_faces[{std::min(a, b), std::max(a, b)}] != 1) continue;
                const Vec3 fn = cross(pos[static_cast<std::size_t>(f[1])] - pos[static_cast<std::size_t>(f[0])],
                                      pos[static_cast<std::size_t>(f[2])] - pos[static_cast<std::size_t>(f[0])]);
                const Vec3 e = pos[static_cast<std::size_t>(b)] - pos[static_cast<std::size_t>(a)];
                Vec3 m = cross(e, fn);
                const double ml = norm(m);
                if (ml < 1e-14) continue;
                m = (1.0 / ml) * m;
                quad[static_cast<std::size_t>(a)].add_plane(m, -dot(m, pos[static_cast<std::size_t>(a)]), 1e3);
                quad[static_cast<std::size_t>(b)].add_plane(m, -dot(m, pos[static_cast<std::size_t>(b)]), 1e3);
            }
        }
    }

    // cost, a, b, keep, stamps
    using Item = std::tuple<double, int, int, int, int, int>;
    std::priority_queue<Item, std::vector<Item>, std::greater<Item>> pq;

    void push_edge(int a, int b) {
        if (a > b) std::swap(a, b);
        Quadric q = quad[static_cast<std::size_t>(a)];
        q += quad[static_cast<std::size_t>(b)];
        const double ca = q.eval(pos[static_cast<std::size_t>(a)]);
        const double cb = q.eval(pos[static_cast<std::size_t>(b)]);
        const int keep = ca <= cb ? a : b;
        pq.emplace(std::min(ca, cb), a, b, keep, stamp[static_cast<std::size_t>(a)], stamp[static_cast<std::size_t>(b)]);
    }

    bool link_condition_ok(int a, int b) const {
        std::set<int> opp;
        for (std::size_t fi = 0; fi < faces.size(); ++fi) {
            if (!face_alive[fi]) continue;
            const auto& f = faces[fi];
            const bool ha = f[0] == a || f[1] == a || f[2] == a;
            const bool hb = f[0] == b || f[1] == b || f[2] == b;
            if (ha && hb)
                for (int k = 0; k < 3; ++k)
                    if (f[k] != a && f[k] != b) opp.insert(f[k]);
        }
        if (opp.empty() || opp.size() > 2) return false;
        for (int u : nbr[static_cast<std::size_t>(a)])
            if (u != b && nbr[static_cast<std::size_t>(b)].count(u) && !opp.count(u)) return false;
        return true;
    }

    void collapse(int keep, int gone) {
        for (std::size_t fi = 0; fi < faces.size(); ++fi) {
            if (!face_alive[fi]) continue;
            auto& f = faces[fi];
            const bool hg = f[0] == gone || f[1] == gone || f[2] == gone;
            if (!hg) continue;
            const bool hk = f[0] == keep || f[1] == keep || f[2] == keep;
            if (hk) {
                face_alive[fi] = 0;
                continue;
            }
            for (int k = 0; k < 3; ++k)
                if (f[k] == gone) f[k] = keep;
        }
        for (int u : nbr[static_cast<std::size_t>(gone)]) {
            nbr[static_cast<std::size_t>(u)].erase(gone);
            if (u != keep) {
                nbr[static_cast<std::size_t>(u)].insert(keep);
                nbr[static_cast<std::size_t>(keep)].insert(u);
            }
        }
        nbr[static_cast<std::size_t>(gone)].clear();
        quad[static_cast<std::size_t>(keep)] += quad[static_cast<std::size_t>(gone)];
        alive[static_cast<std::size_t>(gone)] = 0;
        ++stamp[static_cast<std::size_t>(keep)];
        --survivors;
        for (int u : nbr[static_cast<std::size_t>(keep)]) push_edge(keep, u);
    }

    void run(int target) {
        for (std::size_t v = 0; v < nbr.size(); ++v)
            for (int u : nbr[v])
                if (static_cast<int>(v) < u) push_edge(static_cast<int>(v), u);
        while (survivors > target && !pq.empty()) {
            auto [cost, a, b, keep, sa, sb] = pq.top();
            pq.pop();
            if (!alive[static_cast<std::size_t>(a)] || !alive[static_cast<std::size_t>(b)]) continue;
            if (sa != stamp[static_cast<std::size_t>(a)] || sb != stamp[static_cast<std::size_t>(b)]) continue;
            if (!nbr[static_cast<std::size_t>(a)].count(b)) continue;
            if (!link_condition_ok(a, b)) continue;
            collapse(keep, keep == a ? b : a);
        }
    }
};

}  // namespace

std::pair<TriMesh, MeshTransform> decimate(const TriMesh& mesh) {
    if (mesh.vertex_count() < 8) throw std::invalid_argument("decimate: need at least 8 vertices");
    Collapser col(mesh);
    const int target = (mesh.vertex_count() + 1) / 2;
    col.run(target);

    std::vector<int> new_index(mesh.vertices.size(), -1);
    TriMesh coarse;
    for (std::size_t v = 0; v < mesh.vertices.size(); ++v)
        if (col.alive[v]) {
            new_index[v] = coarse.vertex_count();
            coarse.vertices.push_back(mesh.vertices[v]);
        }
    std::set<std::array<int, 3>> seen;
    for (std::size_t fi = 0; fi < col.faces.size(); ++fi) {
        if (!col.face_alive[fi]) continue;
        const auto& f = col.faces[fi];
        std::array<int, 3> g = {new_index[static_cast<std::size_t>(f[0])], new_index[static_cast<std::size_t>(f[1])],
                                new_index[static_cast<std::size_t>(f[2])]};
        if (g[0] == g[1] || g[1] == g[2] || g[0] == g[2]) continue;
        std::array<int, 3> key = g;
        std::rotate(key.begin(), std::min_element(key.begin(), key.end()), key.end());
        if (!seen.insert(key).second) continue;
        coarse.faces.push_back(g);
    }

    MeshTransform tf;
    tf.down.rows = coarse.vertex_count();
    tf.down.cols = mesh.vertex_count();
    for (std::size_t v = 0; v < mesh.vertices.size(); ++v)
        if (new_index[v] >= 0) tf.down.push(new_index[v], static_cast<int>(v), 1.0);

    tf.up.rows = mesh.vertex_count();
    tf.up.cols = coarse.vertex_count();
    for (std::size_t v = 0; v < mesh.vertices.size(); ++v) {
        if (new_index[v] >= 0) {
            tf.up.push(static_cast<int>(v), new_index[v], 1.0);
            continue;
        }
        // removed vertex: barycentric coordinates in the closest coarse face
        const Vec3& p = mesh.vertices[v];
        double best = std::numeric_limits<double>::infinity();
        std::array<int, 3> bf{};
        std::array<double, 3> bw{};
        for (const auto& f : coarse.faces) {
            const auto w = closest_point_barycentric(p, coarse.vertices[static_cast<std::size_t>(f[0])],
                                                     coarse.vertices[static_cast<std::size_t>(f[1])],
                                                     coarse.vertices[static_cast<std::size_t>(f[2])]);
            Vec3 q = w[0] * coarse.vertices[static_cast<std::size_t>(f[0])] +
                     w[1] * coarse.vertices[static_cast<std::size_t>(f[1])] +
                     w[2] * coarse.vertices[static_cast<std::size_t>(f[2])];
            const double d = norm(p - q);
            if (d < best) {
                best = d;
                bf = f;
                bw = w;
            }
        }
        double sum = 0;
        for (double x : bw) sum += x;
        for (int k = 0; k < 3; ++k)
            if (bw[static_cast<std::size_t>(k)] / sum > 1e-12)
                tf.up.push(static_cast<int>(v), bf[static_cast<std::size_t>(k)], bw[static_cast<std::size_t>(k)] / sum);
    }
    return {std::move(coarse), std::move(tf)};
}

MeshChain decimate_chain(const TriMesh& mesh, int levels) {
    MeshChain chain;
    chain.meshes.push_back(mesh);
    for (int i = 0; i < levels; ++i) {
        auto [coarse, tf] = decimate(chain.meshes.back());
        chain.meshes.push_back(std::move(coarse));
        chain.transforms.push_back(std::move(tf));
    }
    return chain;
}

}  // namespace hmr
