#include "hmr/mesh.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>
#include <set>
#include <sstream>
#include <unordered_map>
#include <unordered_set>

namespace hmr {

void TriMesh::validate() const {
    const int nv = vertex_count();
    for (std::size_t fi = 0; fi < faces.size(); ++fi) {
        const auto& f = faces[fi];
        for (int k = 0; k < 3; ++k)
            if (f[k] < 0 || f[k] >= nv)
                throw std::invalid_argument("face " + std::to_string(fi) + " references vertex " +
                                            std::to_string(f[k]) + " out of range");
        if (f[0] == f[1] || f[1] == f[2] || f[0] == f[2])
            throw std::invalid_argument("face " + std::to_string(fi) + " has repeated vertices");
    }
}

std::vector<int> one_ring(const TriMesh& mesh, int v) {
    if (v < 0 || v >= mesh.vertex_count()) throw std::invalid_argument("one_ring: vertex out of range");
    // Wedges (b,c) around v; CCW face (v,b,c) orders neighbors b then c.
    std::unordered_map<int, int> next;  // b -> c
    std::unordered_set<int> firsts, seconds;
    for (const auto& f : mesh.faces) {
        int b = -1, c = -1;
        if (f[0] == v) {
            b = f[1];
            c = f[2];
        } else if (f[1] == v) {
            b = f[2];
            c = f[0];
        } else if (f[2] == v) {
            b = f[0];
            c = f[1];
        } else {
            continue;
        }
        if (next.count(b))
            throw TopologyError("non-manifold fan at vertex " + std::to_string(v));
        next[b] = c;
        firsts.insert(b);
        seconds.insert(c);
    }
    if (next.empty()) return {};
    // Boundary chain starts at the neighbor that is never a wedge's second
    // element; a closed fan has none, so start anywhere and rotate later.
    int start = -1;
    for (int b : firsts)
        if (!seconds.count(b)) {
            if (start != -1) throw TopologyError("multiple fans at vertex " + std::to_string(v));
            start = b;
        }
    const bool boundary = start != -1;
    if (!boundary) start = next.begin()->first;

    std::vector<int> ring;
    int cur = start;
    while (true) {
        ring.push_back(cur);
        auto it = next.find(cur);
        if (it == next.end()) break;  // open fan end (the last c has no wedge)
        cur = it->second;
        if (cur == start) break;  // closed the loop
        if (ring.size() > next.size() + 1) throw TopologyError("fan traversal loop at vertex " + std::to_string(v));
    }
    // All wedge endpoints must be covered, otherwise the fan is disconnected.
    std::unordered_set<int> all = firsts;
    all.insert(seconds.begin(), seconds.end());
    if (ring.size() != all.size()) throw TopologyError("disconnected fan at vertex " + std::to_string(v));
    if (!boundary) {
        auto mn = std::min_element(ring.begin(), ring.end());
        std::rotate(ring.begin(), mn, ring.end());
    }
    return ring;
}

std::vector<int> spiral_sequence(const TriMesh& mesh, int v, int s, bool* padded) {
    if (s < 1) throw std::invalid_argument("spiral_sequence: S must be >= 1");
    std::vector<int> spiral{v};
    std::vector<char> in_disk(static_cast<std::size_t>(mesh.vertex_count()), 0);
    in_disk[static_cast<std::size_t>(v)] = 1;
    std::vector<int> ring{v};
    if (padded) *padded = false;
    while (static_cast<int>(spiral.size()) < s) {
        std::vector<int> nxt;
        for (int u : ring)
            for (int w : one_ring(mesh, u))
                if (!in_disk[static_cast<std::size_t>(w)]) {
                    in_disk[static_cast<std::size_t>(w)] = 1;
                    nxt.push_back(w);
                }
        if (nxt.empty()) {  // component exhausted: pad with the center vertex
            if (padded) *padded = true;
            while (static_cast<int>(spiral.size()) < s) spiral.push_back(v);
            break;
        }
        for (int w : nxt) {
            if (static_cast<int>(spiral.size()) == s) break;
            spiral.push_back(w);
        }
        ring = std::move(nxt);
    }
    return spiral;
}

SpiralIndexTable build_spiral_table(const TriMesh& mesh, int s) {
    const int nv = mesh.vertex_count();
    SpiralIndexTable table;
    table.spiral_length = s;
    table.entries = TensorT<int>({nv, s});
    std::vector<char> pads(static_cast<std::size_t>(nv), 0);
    std::string error;
#pragma omp parallel for schedule(dynamic, 16)
    for (int v = 0; v < nv; ++v) {
        try {
            bool p = false;
            const auto row = spiral_sequence(mesh, v, s, &p);
            pads[static_cast<std::size_t>(v)] = p ? 1 : 0;
            std::copy(row.begin(), row.end(),
                      table.entries.data.begin() + static_cast<std::int64_t>(v) * s);
        } catch (const TopologyError& e) {
#pragma omp critical
            if (error.empty()) error = e.what();
        }
    }
    if (!error.empty()) throw TopologyError("build_spiral_table: " + error);
    table.padded = std::any_of(pads.begin(), pads.end(), [](char c) { return c != 0; });
    return table;
}

std::vector<Vec3> face_normals(const TriMesh& mesh) {
    std::vector<Vec3> normals(mesh.faces.size());
    for (std::size_t fi = 0; fi < mesh.faces.size(); ++fi) {
        const auto& f = mesh.faces[fi];
        const Vec3 n = cross(mesh.vertices[static_cast<std::size_t>(f[1])] - mesh.vertices[static_cast<std::size_t>(f[0])],
                             mesh.vertices[static_cast<std::size_t>(f[2])] - mesh.vertices[static_cast<std::size_t>(f[0])]);
        const double len = norm(n);
        if (len < 1e-14) throw std::invalid_argument("degenerate face " + std::to_string(fi));
        normals[fi] = (1.0 / len) * n;
    }
    return normals;
}

int euler_characteristic(const TriMesh& mesh) {
    std::set<std::pair<int, int>> edges;
    for (const auto& f : mesh.faces)
        for (int k = 0; k < 3; ++k) {
            int a = f[k], b = f[(k + 1) % 3];
            edges.insert({std::min(a, b), std::max(a, b)});
        }
    return mesh.vertex_count() - static_cast<int>(edges.size()) + mesh.face_count();
}

TriMesh load_obj(const std::string& path) {
    std::ifstream is(path);
    if (!is) throw std::runtime_error("cannot open OBJ: " + path);
    TriMesh mesh;
    std::string line;
    while (std::getline(is, line)) {
        std::istringstream ls(line);
        std::string tag;
        ls >> tag;
        if (tag == "v") {
            Vec3 p;
            ls >> p[0] >> p[1] >> p[2];
            mesh.vertices.push_back(p);
        } else if (tag == "f") {
            std::array<int, 3> f;
            for (int k = 0; k < 3; ++k) {
                std::string tok;
                ls >> tok;
                // accept v, v/vt, v/vt/vn, v//vn
                f[k] = std::stoi(tok.substr(0, tok.find('/'))) - 1;
            }
            mesh.faces.push_back(f);
        }
    }
    mesh.validate();
    return mesh;
}

void save_obj(const TriMesh& mesh, const std::string& path) {
    std::ofstream os(path);
    if (!os) throw std::runtime_error("cannot open OBJ for writing: " + path);
    os.precision(9);
    for (const auto& v : mesh.vertices) os << "v " << v[0] << ' ' << v[1] << ' ' << v[2] << '\n';
    for (const auto& f : mesh.faces) os << "f " << f[0] + 1 << ' ' << f[1] + 1 << ' ' << f[2] + 1 << '\n';
}

TriMesh make_grid(int nx, int ny, double spacing) {
    TriMesh mesh;
    for (int j = 0; j < ny; ++j)
        for (int i = 0; i < nx; ++i)
            mesh.vertices.push_back({i * spacing, j * spacing, 0.0});
    auto id = [nx](int i, int j) { return j * nx + i; };
    for (int j = 0; j + 1 < ny; ++j)
        for (int i = 0; i + 1 < nx; ++i) {
            // consistent diagonal: interior vertices get valence 6
            mesh.faces.push_back({id(i, j), id(i + 1, j), id(i + 1, j + 1)});
            mesh.faces.push_back({id(i, j), id(i + 1, j + 1), id(i, j + 1)});
        }
    return mesh;
}

TriMesh make_icosphere(int subdivisions, double radius) {
    const double t = (1.0 + std::sqrt(5.0)) / 2.0;
    TriMesh mesh;
    mesh.vertices = {{-1, t, 0}, {1, t, 0},  {-1, -t, 0}, {1, -t, 0}, {0, -1, t},  {0, 1, t},
                     {0, -1, -t}, {0, 1, -t}, {t, 0, -1},  {t, 0, 1},  {-t, 0, -1}, {-t, 0, 1}};
    mesh.faces = {{0, 11, 5}, {0, 5, 1},  {0, 1, 7},   {0, 7, 10}, {0, 10, 11}, {1, 5, 9},  {5, 11, 4},
                  {11, 10, 2}, {10, 7, 6}, {7, 1, 8},   {3, 9, 4},  {3, 4, 2},   {3, 2, 6},  {3, 6, 8},
                  {3, 8, 9},   {4, 9, 5},  {2, 4, 11},  {6, 2, 10}, {8, 6, 7},   {9, 8, 1}};
    for (int it = 0; it < subdivisions; ++it) {
        std::map<std::pair<int, int>, int> midpoint;
        auto mid = [&](int a, int b) {
            auto key = std::minmax(a, b);
            auto found = midpoint.find(key);
            if (found != midpoint.end()) return found->second;
            const Vec3 m = 0.5 * (mesh.vertices[static_cast<std::size_t>(a)] + mesh.vertices[static_cast<std::size_t>(b)]);
            mesh.vertices.push_back(m);
            const int idx = mesh.vertex_count() - 1;
            midpoint[key] = idx;
            return idx;
        };
        std::vector<std::array<int, 3>> faces;
        for (const auto& f : mesh.faces) {
            const int a = mid(f[0], f[1]), b = mid(f[1], f[2]), c = mid(f[2], f[0]);
            faces.push_back({f[0], a, c});
            faces.push_back({f[1], b, a});
            faces.push_back({f[2], c, b});
            faces.push_back({a, b, c});
        }
        mesh.faces = std::move(faces);
    }
    for (auto& v : mesh.vertices) v = (radius / norm(v)) * v;
    return mesh;
}

TriMesh make_uv_sphere(int segments, int rings, double radius) {
    if (segments < 3 || rings < 3) throw std::invalid_argument("make_uv_sphere: too few segments/rings");
    TriMesh mesh;
    mesh.vertices.push_back({0, 0, radius});  // north pole
    for (int r = 1; r < rings; ++r) {
        const double phi = M_PI * r / rings;
        for (int s = 0; s < segments; ++s) {
            const double th = 2.0 * M_PI * s / segments;
            mesh.vertices.push_back(
                {radius * std::sin(phi) * std::cos(th), radius * std::sin(phi) * std::sin(th), radius * std::cos(phi)});
        }
    }
    mesh.vertices.push_back({0, 0, -radius});  // south pole
    const int south = mesh.vertex_count() - 1;
    auto id = [segments](int r, int s) { return 1 + (r - 1) * segments + (s % segments); };
    for (int s = 0; s < segments; ++s) mesh.faces.push_back({0, id(1, s), id(1, s + 1)});
    for (int r = 1; r + 1 < rings; ++r)
        for (int s = 0; s < segments; ++s) {
            mesh.faces.push_back({id(r, s), id(r + 1, s), id(r + 1, s + 1)});
            mesh.faces.push_back({id(r, s), id(r + 1, s + 1), id(r, s + 1)});
        }
    for (int s = 0; s < segments; ++s) mesh.faces.push_back({south, id(rings - 1, s + 1), id(rings - 1, s)});
    return mesh;
}

}  // namespace hmr
