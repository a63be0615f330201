#include <algorithm>
#include <cmath>
#include <map>
#include <numbers>
#include <string>
#include <utility>
#include <vector>

#include "segapipe/errors.hpp"
#include "segapipe/meshkit.hpp"

namespace segapipe::mesh {
namespace {

using EdgeKey = std::pair<std::uint32_t, std::uint32_t>;

EdgeKey undirected(std::uint32_t a, std::uint32_t b) { return a < b ? EdgeKey{a, b} : EdgeKey{b, a}; }

Vec3 sub(const Vec3& a, const Vec3& b) { return {a[0] - b[0], a[1] - b[1], a[2] - b[2]}; }
Vec3 cross(const Vec3& a, const Vec3& b) {
    return {a[1] * b[2] - a[2] * b[1], a[2] * b[0] - a[0] * b[2], a[0] * b[1] - a[1] * b[0]};
}
double dot(const Vec3& a, const Vec3& b) { return a[0] * b[0] + a[1] * b[1] + a[2] * b[2]; }

Vec3 face_normal(const TriMesh& m, const std::array<std::uint32_t, 3>& t) {
    Vec3 n = cross(sub(m.vertices[t[1]], m.vertices[t[0]]), sub(m.vertices[t[2]], m.vertices[t[0]]));
    const double len = std::sqrt(dot(n, n));
    if (len > 0)
        for (auto& c : n) c /= len;
    return n;
}

// undirected edge -> incident triangle indices
std::map<EdgeKey, std::vector<std::uint32_t>> edge_faces(const TriMesh& m) {
    std::map<EdgeKey, std::vector<std::uint32_t>> ef;
    for (std::uint32_t f = 0; f < m.triangles.size(); ++f) {
        const auto& t = m.triangles[f];
        for (int j = 0; j < 3; ++j) ef[undirected(t[j], t[(j + 1) % 3])].push_back(f);
    }
    return ef;
}

}  // namespace

void SmoothingConfig::validate() const {
    if (iterations < 0) throw ArgumentError("smoothing iterations must be >= 0");
    if (!(pass_band > 0.0 && pass_band < 2.0)) throw ArgumentError("pass_band must lie in (0, 2)");
    if (!(feature_angle_deg >= 0.0 && feature_angle_deg <= 180.0))
        throw ArgumentError("feature_angle must lie in [0, 180] degrees");
}

std::vector<double> windowed_sinc_coefficients(int iterations, double pass_band) {
    const int n = iterations;
    const double pi = std::numbers::pi;
    const double theta_pb = std::acos(1.0 - 0.5 * pass_band);
    std::vector<double> w(n + 1);
    for (int i = 0; i <= n; ++i) w[i] = 0.54 + 0.46 * std::cos(i * pi / (n + 1));

    auto coeffs = [&](double cut) {
        std::vector<double> c(n + 1);
        c[0] = w[0] * cut / pi;
        for (int i = 1; i <= n; ++i) c[i] = w[i] * 2.0 * std::sin(i * cut) / (i * pi);
        return c;
    };
    auto response = [&](const std::vector<double>& c, double theta) {
        double f = 0;
        for (int i = 0; i <= n; ++i) f += c[i] * std::cos(i * theta);
        return f;
    };

    // widen the cutoff until the response reaches 1 at the pass band edge
    double sigma = 0.0;
    for (int it = 0; it < 500; ++it) {
        const double cut = theta_pb + sigma;
        const double f = response(coeffs(cut), theta_pb) - 1.0;
        if (std::abs(f) < 1e-3) break;
        double df = w[0] / pi;
        for (int i = 1; i <= n; ++i) df += w[i] * 2.0 * std::cos(i * cut) / pi * std::cos(i * theta_pb);
        if (df == 0.0) break;
        sigma -= f / df;
        sigma = std::clamp(sigma, -theta_pb, pi - theta_pb);
    }
    auto c = coeffs(theta_pb + sigma);
    double total = 0;
    for (double v : c) total += v;
    for (auto& v : c) v /= total;
    return c;
}

TriMesh windowed_sinc_smooth(const TriMesh& mesh, const SmoothingConfig& cfg) {
    cfg.validate();
    if (cfg.iterations < 2 || mesh.vertices.empty()) return mesh;
    const std::size_t nv = mesh.vertices.size();
    const auto ef = edge_faces(mesh);
    const double cos_feature = std::cos(cfg.feature_angle_deg * std::numbers::pi / 180.0);

    std::vector<std::vector<std::uint32_t>> all_nbrs(nv), special_nbrs(nv);
    std::vector<bool> fixed(nv, false);
    for (const auto& [e, faces] : ef) {
        const auto [a, b] = e;
        all_nbrs[a].push_back(b);
        all_nbrs[b].push_back(a);
        bool special = false;
        if (faces.size() == 1) {
            special = true;
            if (!cfg.boundary_smoothing) fixed[a] = fixed[b] = true;
        } else if (faces.size() > 2) {
            special = true;
            if (!cfg.non_manifold_smoothing) fixed[a] = fixed[b] = true;
        } else if (cfg.feature_edge_smoothing) {
            const Vec3 n0 = face_normal(mesh, mesh.triangles[faces[0]]);
            const Vec3 n1 = face_normal(mesh, mesh.triangles[faces[1]]);
            special = dot(n0, n1) < cos_feature;
        }
        if (special) {
            special_nbrs[a].push_back(b);
            special_nbrs[b].push_back(a);
        }
    }
    // 0 special edges: full umbrella; 2: slide along them; otherwise a corner
    std::vector<const std::vector<std::uint32_t>*> nbrs(nv, nullptr);
    for (std::size_t v = 0; v < nv; ++v) {
        if (fixed[v] || all_nbrs[v].empty()) continue;
        if (special_nbrs[v].empty()) nbrs[v] = &all_nbrs[v];
        else if (special_nbrs[v].size() == 2) nbrs[v] = &special_nbrs[v];
    }

    const auto c = windowed_sinc_coefficients(cfg.iterations, cfg.pass_band);
    auto apply_w = [&](const std::vector<Vec3>& x, std::vector<Vec3>& out) {
        for (std::size_t v = 0; v < nv; ++v) {
            if (!nbrs[v]) {
                out[v] = x[v];
                continue;
            }
            Vec3 s{0, 0, 0};
            for (auto u : *nbrs[v])
                for (int a = 0; a < 3; ++a) s[a] += x[u][a];
            // half step toward the umbrella average
            const double inv = 0.5 / static_cast<double>(nbrs[v]->size());
            for (int a = 0; a < 3; ++a) out[v][a] = 0.5 * x[v][a] + s[a] * inv;
        }
    };

    std::vector<Vec3> t_prev = mesh.vertices, t_cur(nv), t_next(nv);
    std::vector<Vec3> result(nv);
    apply_w(t_prev, t_cur);
    for (std::size_t v = 0; v < nv; ++v)
        for (int a = 0; a < 3; ++a) result[v][a] = c[0] * t_prev[v][a] + c[1] * t_cur[v][a];
    for (int i = 2; i <= cfg.iterations; ++i) {
        apply_w(t_cur, t_next);
        for (std::size_t v = 0; v < nv; ++v)
            for (int a = 0; a < 3; ++a) {
                t_next[v][a] = 2.0 * t_next[v][a] - t_prev[v][a];
                result[v][a] += c[i] * t_next[v][a];
            }
        std::swap(t_prev, t_cur);
        std::swap(t_cur, t_next);
    }
    TriMesh out = mesh;
    for (std::size_t v = 0; v < nv; ++v)
        if (nbrs[v]) out.vertices[v] = result[v];
    return out;
}

TriMesh close_holes(const TriMesh& mesh) {
    const auto ef = edge_faces(mesh);
    // directed boundary half-edges, keyed by their start vertex
    std::map<std::uint32_t, std::vector<std::uint32_t>> outgoing;
    for (const auto& t : mesh.triangles)
        for (int j = 0; j < 3; ++j) {
            const auto a = t[j], b = t[(j + 1) % 3];
            if (ef.at(undirected(a, b)).size() == 1) outgoing[a].push_back(b);
        }
    for (const auto& [v, outs] : outgoing)
        if (outs.size() != 1)
            throw TopologyError("boundary vertex " + std::to_string(v) + " has " + std::to_string(outs.size()) +
                                " outgoing boundary edges");

    TriMesh out = mesh;
    std::map<std::uint32_t, bool> visited;
    for (const auto& [start, outs] : outgoing) {
        if (visited[start]) continue;
        std::vector<std::uint32_t> loop;
        std::uint32_t v = start;
        while (!visited[v]) {
            visited[v] = true;
            loop.push_back(v);
            auto it = outgoing.find(v);
            if (it == outgoing.end()) throw TopologyError("boundary loop does not close");
            v = it->second[0];
        }
        if (v != start) throw TopologyError("boundary loop does not close");
        // the cap runs against the boundary direction
        if (loop.size() == 3) {
            out.triangles.push_back({loop[0], loop[2], loop[1]});
            continue;
        }
        Vec3 c{0, 0, 0};
        for (auto u : loop)
            for (int a = 0; a < 3; ++a) c[a] += mesh.vertices[u][a] / static_cast<double>(loop.size());
        const auto ci = static_cast<std::uint32_t>(out.vertices.size());
        out.vertices.push_back(c);
        for (std::size_t k = 0; k < loop.size(); ++k)
            out.triangles.push_back({ci, loop[(k + 1) % loop.size()], loop[k]});
    }
    return out;
}

WatertightReport check_watertight(const TriMesh& mesh) {
    WatertightReport r;
    std::map<std::pair<std::uint32_t, std::uint32_t>, int> directed;
    std::map<EdgeKey, int> count;
    for (const auto& t : mesh.triangles)
        for (int j = 0; j < 3; ++j) {
            const auto a = t[j], b = t[(j + 1) % 3];
            ++directed[{a, b}];
            ++count[undirected(a, b)];
        }
    for (const auto& [e, n] : count) {
        if (n == 1) ++r.boundary_edges;
        else if (n > 2) ++r.non_manifold_edges;
        else {
            const int fwd = directed[{e.first, e.second}];
            if (fwd != 1) ++r.inconsistent_edges;
        }
    }
    r.euler_characteristic = static_cast<std::int64_t>(mesh.vertices.size()) -
                             static_cast<std::int64_t>(count.size()) +
                             static_cast<std::int64_t>(mesh.triangles.size());
    r.watertight = !mesh.vertices.empty() && r.boundary_edges == 0 && r.non_manifold_edges == 0 &&
                   r.inconsistent_edges == 0;
    return r;
}

double signed_volume(const TriMesh& mesh) {
    double v = 0;
    for (const auto& t : mesh.triangles)
        v += dot(mesh.vertices[t[0]], cross(mesh.vertices[t[1]], mesh.vertices[t[2]]));
    return v / 6.0;
}

TriMesh make_icosphere(double radius, int subdivisions, const Vec3& center) {
    if (subdivisions < 0) throw ArgumentError("subdivisions must be >= 0");
    const double p = (1.0 + std::sqrt(5.0)) / 2.0;
    std::vector<Vec3> v = {{-1, p, 0}, {1, p, 0}, {-1, -p, 0}, {1, -p, 0}, {0, -1, p}, {0, 1, p},
                           {0, -1, -p}, {0, 1, -p}, {p, 0, -1}, {p, 0, 1}, {-p, 0, -1}, {-p, 0, 1}};
    std::vector<std::array<std::uint32_t, 3>> f = {
        {0, 11, 5}, {0, 5, 1},  {0, 1, 7},   {0, 7, 10}, {0, 10, 11}, {1, 5, 9}, {5, 11, 4},
        {11, 10, 2}, {10, 7, 6}, {7, 1, 8},  {3, 9, 4},  {3, 4, 2},   {3, 2, 6}, {3, 6, 8},
        {3, 8, 9},  {4, 9, 5},  {2, 4, 11}, {6, 2, 10}, {8, 6, 7},   {9, 8, 1}};
    auto project = [](Vec3 a) {
        const double l = std::sqrt(dot(a, a));
        return Vec3{a[0] / l, a[1] / l, a[2] / l};
    };
    for (auto& x : v) x = project(x);
    for (int s = 0; s < subdivisions; ++s) {
        std::map<EdgeKey, std::uint32_t> mid;
        auto midpoint = [&](std::uint32_t a, std::uint32_t b) {
            const auto key = undirected(a, b);
            auto it = mid.find(key);
            if (it != mid.end()) return it->second;
            const auto id = static_cast<std::uint32_t>(v.size());
            v.push_back(project({(v[a][0] + v[b][0]) / 2, (v[a][1] + v[b][1]) / 2, (v[a][2] + v[b][2]) / 2}));
            mid.emplace(key, id);
            return id;
        };
        std::vector<std::array<std::uint32_t, 3>> nf;
        nf.reserve(f.size() * 4);
        for (const auto& t : f) {
            const auto a = midpoint(t[0], t[1]), b = midpoint(t[1], t[2]), c = midpoint(t[2], t[0]);
            nf.push_back({t[0], a, c});
            nf.push_back({t[1], b, a});
            nf.push_back({t[2], c, b});
            nf.push_back({a, b, c});
        }
        f = std::move(nf);
    }
    TriMesh m;
    m.triangles = std::move(f);
    m.vertices.reserve(v.size());
    for (const auto& x : v) m.vertices.push_back({center[0] + radius * x[0], center[1] + radius * x[1], center[2] + radius * x[2]});
    return m;
}

}  // namespace segapipe::mesh
