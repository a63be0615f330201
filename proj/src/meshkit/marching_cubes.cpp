#include <algorithm>
#include <array>
#include <cmath>
#include <stdexcept>
#include <unordered_map>
#include <vector>

#include "segapipe/meshkit.hpp"

namespace segapipe::mesh {
namespace {

// Cube corner k sits at (k & 1, (k >> 1) & 1, (k >> 2) & 1).
constexpr int kCentroid = 12;

struct Edge {
    int a, b, axis;
};

struct CaseEntry {
    // triangles over edge ids, kCentroid meaning the loop centroid
    std::vector<std::array<int, 3>> tris;
    // edge lists of loops that need a centroid, in the same order as kCentroid uses
    std::vector<std::vector<int>> centroid_loops;
    std::vector<int> centroid_of_tri;
};

std::array<Edge, 12> make_edges() {
    std::array<Edge, 12> e{};
    int n = 0;
    for (int axis = 0; axis < 3; ++axis)
        for (int k = 0; k < 8; ++k)
            if (!((k >> axis) & 1)) e[n++] = {k, k | (1 << axis), axis};
    return e;
}

const std::array<Edge, 12>& edges() {
    static const auto e = make_edges();
    return e;
}

int edge_between(int a, int b) {
    for (int i = 0; i < 12; ++i) {
        const auto& e = edges()[i];
        if ((e.a == a && e.b == b) || (e.a == b && e.b == a)) return i;
    }
    throw std::logic_error("corners not adjacent");
}

std::array<double, 3> corner_pos(int k) { return {double(k & 1), double((k >> 1) & 1), double((k >> 2) & 1)}; }

std::array<double, 3> edge_mid(int e) {
    auto a = corner_pos(edges()[e].a);
    auto b = corner_pos(edges()[e].b);
    return {(a[0] + b[0]) / 2, (a[1] + b[1]) / 2, (a[2] + b[2]) / 2};
}

// faces of the cube the edge lies on, as axis * 2 + side
std::array<int, 2> edge_faces(int e) {
    const auto& ed = edges()[e];
    std::array<int, 2> f{};
    int n = 0;
    for (int axis = 0; axis < 3; ++axis) {
        if (axis == ed.axis) continue;
        f[n++] = axis * 2 + ((ed.a >> axis) & 1);
    }
    return f;
}

bool share_face(int e1, int e2) {
    for (int f1 : edge_faces(e1))
        for (int f2 : edge_faces(e2))
            if (f1 == f2) return true;
    return false;
}

CaseEntry build_case(int mask, bool flip) {
    std::array<int, 12> next{};
    next.fill(-1);
    auto inside = [&](int k) { return (mask >> k) & 1; };

    auto add_segment = [&](int e1, int e2, int fg_corner, int axis, int side) {
        // foreground on the left when seen from outside the face
        const auto p = edge_mid(e1), q = edge_mid(e2), c = corner_pos(fg_corner);
        const std::array<double, 3> u{q[0] - p[0], q[1] - p[1], q[2] - p[2]};
        const std::array<double, 3> v{c[0] - p[0], c[1] - p[1], c[2] - p[2]};
        const std::array<double, 3> cr{u[1] * v[2] - u[2] * v[1], u[2] * v[0] - u[0] * v[2], u[0] * v[1] - u[1] * v[0]};
        const double along = cr[axis] * (side ? 1.0 : -1.0);
        if (along > 0) next[e1] = e2;
        else next[e2] = e1;
    };

    for (int axis = 0; axis < 3; ++axis) {
        for (int side = 0; side < 2; ++side) {
            const int a1 = (axis + 1) % 3, a2 = (axis + 2) % 3;
            const int base = side << axis;
            // face corners in cyclic order
            const std::array<int, 4> cyc{base, base | (1 << a1), base | (1 << a1) | (1 << a2), base | (1 << a2)};
            std::vector<int> crossing;
            for (int i = 0; i < 4; ++i)
                if (inside(cyc[i]) != inside(cyc[(i + 1) % 4])) crossing.push_back(i);
            if (crossing.empty()) continue;
            if (crossing.size() == 2) {
                const int e1 = edge_between(cyc[crossing[0]], cyc[(crossing[0] + 1) % 4]);
                const int e2 = edge_between(cyc[crossing[1]], cyc[(crossing[1] + 1) % 4]);
                int fg = -1;
                for (int c : cyc)
                    if (inside(c)) fg = c;
                add_segment(e1, e2, fg, axis, side);
            } else {
                // saddle face: cut each foreground corner off on its own
                for (int i = 0; i < 4; ++i) {
                    if (!inside(cyc[i])) continue;
                    const int e1 = edge_between(cyc[i], cyc[(i + 3) % 4]);
                    const int e2 = edge_between(cyc[i], cyc[(i + 1) % 4]);
                    add_segment(e1, e2, cyc[i], axis, side);
                }
            }
        }
    }

    CaseEntry entry;
    std::array<bool, 12> used{};
    for (int start = 0; start < 12; ++start) {
        if (next[start] < 0 || used[start]) continue;
        std::vector<int> loop;
        int e = start;
        while (!used[e]) {
            used[e] = true;
            loop.push_back(e);
            e = next[e];
            if (e < 0) throw std::logic_error("open marching cubes loop");
        }
        if (e != start) throw std::logic_error("malformed marching cubes loop");
        if (flip) std::reverse(loop.begin(), loop.end());

        const int m = static_cast<int>(loop.size());
        int apex = -1;
        for (int s = 0; s < m && apex < 0; ++s) {
            bool ok = true;
            for (int k = 2; k <= m - 2 && ok; ++k)
                if (share_face(loop[s], loop[(s + k) % m])) ok = false;
            if (ok) apex = s;
        }
        if (apex >= 0) {
            for (int k = 1; k + 1 < m; ++k)
                entry.tris.push_back({loop[apex], loop[(apex + k) % m], loop[(apex + k + 1) % m]});
            for (int k = 1; k + 1 < m; ++k) entry.centroid_of_tri.push_back(-1);
        } else {
            const int id = static_cast<int>(entry.centroid_loops.size());
            entry.centroid_loops.push_back(loop);
            for (int k = 0; k < m; ++k) {
                entry.tris.push_back({kCentroid, loop[k], loop[(k + 1) % m]});
                entry.centroid_of_tri.push_back(id);
            }
        }
    }
    return entry;
}

std::vector<CaseEntry> build_table() {
    // The raw rule yields some orientation; the single-corner case decides
    // whether every loop needs reversing to face away from the foreground.
    bool flip = false;
    const CaseEntry probe = build_case(1, false);
    const auto& t = probe.tris.at(0);
    const auto p0 = edge_mid(t[0]), p1 = edge_mid(t[1]), p2 = edge_mid(t[2]);
    const std::array<double, 3> u{p1[0] - p0[0], p1[1] - p0[1], p1[2] - p0[2]};
    const std::array<double, 3> v{p2[0] - p0[0], p2[1] - p0[1], p2[2] - p0[2]};
    const std::array<double, 3> n{u[1] * v[2] - u[2] * v[1], u[2] * v[0] - u[0] * v[2], u[0] * v[1] - u[1] * v[0]};
    // corner 0 is foreground; outward means pointing toward (1,1,1)
    if (n[0] + n[1] + n[2] < 0) flip = true;
    std::vector<CaseEntry> table(256);
    for (int c = 0; c < 256; ++c) table[c] = build_case(c, flip);
    return table;
}

const std::vector<CaseEntry>& table() {
    static const auto t = build_table();
    return t;
}

}  // namespace

TriMesh marching_cubes(const LabelVolume& mask) {
    const Geometry3& g = mask.geom;
    const Dims d = g.dims();
    TriMesh mesh;
    auto fg = [&](std::int64_t x, std::int64_t y, std::int64_t z) -> int {
        if (!g.contains(x, y, z)) return 0;
        return mask.voxels[g.flatten(x, y, z)] ? 1 : 0;
    };
    // lattice of the padded grid: points -1..n along each axis
    const std::int64_t px = d.nx + 2, py = d.ny + 2;
    std::unordered_map<std::uint64_t, std::uint32_t> edge_vertex;
    const auto& tab = table();

    for (std::int64_t z = -1; z < d.nz; ++z) {
        for (std::int64_t y = -1; y < d.ny; ++y) {
            for (std::int64_t x = -1; x < d.nx; ++x) {
                int code = 0;
                for (int k = 0; k < 8; ++k)
                    if (fg(x + (k & 1), y + ((k >> 1) & 1), z + ((k >> 2) & 1))) code |= 1 << k;
                if (code == 0 || code == 255) continue;
                const CaseEntry& ce = tab[code];

                auto vertex_of = [&](int e) {
                    const auto& ed = edges()[e];
                    const std::int64_t cx = x + (ed.a & 1) + 1, cy = y + ((ed.a >> 1) & 1) + 1,
                                       cz = z + ((ed.a >> 2) & 1) + 1;
                    const std::uint64_t key = (static_cast<std::uint64_t>((cz * py + cy) * px + cx)) * 3 + ed.axis;
                    auto it = edge_vertex.find(key);
                    if (it != edge_vertex.end()) return it->second;
                    const auto m = edge_mid(e);
                    const auto idx = static_cast<std::uint32_t>(mesh.vertices.size());
                    mesh.vertices.push_back(g.voxel_to_mm({double(x) + m[0], double(y) + m[1], double(z) + m[2]}));
                    edge_vertex.emplace(key, idx);
                    return idx;
                };

                std::vector<std::uint32_t> centroid_ids;
                for (const auto& loop : ce.centroid_loops) {
                    Vec3 c{0, 0, 0};
                    for (int e : loop) {
                        const auto m = edge_mid(e);
                        for (int a = 0; a < 3; ++a) c[a] += m[a] / static_cast<double>(loop.size());
                    }
                    centroid_ids.push_back(static_cast<std::uint32_t>(mesh.vertices.size()));
                    mesh.vertices.push_back(g.voxel_to_mm({double(x) + c[0], double(y) + c[1], double(z) + c[2]}));
                }
                for (std::size_t t = 0; t < ce.tris.size(); ++t) {
                    std::array<std::uint32_t, 3> tri{};
                    for (int j = 0; j < 3; ++j) {
                        const int e = ce.tris[t][j];
                        tri[j] = e == kCentroid ? centroid_ids[ce.centroid_of_tri[t]] : vertex_of(e);
                    }
                    mesh.triangles.push_back(tri);
                }
            }
        }
    }
    // a mirrored direction matrix turns the surface inside out
    if (signed_volume(mesh) < 0)
        for (auto& t : mesh.triangles) std::swap(t[1], t[2]);
    return mesh;
}

}  // namespace segapipe::mesh
