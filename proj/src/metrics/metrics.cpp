#include "segapipe/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>

#include "segapipe/errors.hpp"
#include "segapipe/parallel.hpp"

namespace segapipe::metrics {
namespace {

void require_same_geometry(const LabelVolume& a, const LabelVolume& b, const char* what) {
    if (!a.geom.same_as(b.geom)) throw ArgumentError(std::string(what) + ": masks have different geometry");
}

constexpr double kInf = std::numeric_limits<double>::infinity();

// Lower envelope of parabolas (Felzenszwalb-Huttenlocher), finite sites only.
void edt_line(const double* f, std::int64_t n, std::int64_t stride, double step, double* out,
              std::vector<std::int64_t>& v, std::vector<double>& z) {
    v.clear();
    z.clear();
    for (std::int64_t q = 0; q < n; ++q) {
        const double fq = f[q * stride];
        if (fq == kInf) continue;
        const double xq = static_cast<double>(q) * step;
        while (!v.empty()) {
            const std::int64_t p = v.back();
            const double xp = static_cast<double>(p) * step;
            const double s = ((fq + xq * xq) - (f[p * stride] + xp * xp)) / (2.0 * (xq - xp));
            if (s <= z.back()) {
                v.pop_back();
                z.pop_back();
            } else {
                v.push_back(q);
                z.push_back(s);
                break;
            }
        }
        if (v.empty()) {
            v.push_back(q);
            z.push_back(-kInf);
        }
    }
    if (v.empty()) {
        for (std::int64_t q = 0; q < n; ++q) out[q] = kInf;
        return;
    }
    std::size_t k = 0;
    for (std::int64_t q = 0; q < n; ++q) {
        const double xq = static_cast<double>(q) * step;
        while (k + 1 < v.size() && z[k + 1] < xq) ++k;
        const double d = xq - static_cast<double>(v[k]) * step;
        out[q] = d * d + f[v[k] * stride];
    }
}

}  // namespace

double dice(const LabelVolume& a, const LabelVolume& b) {
    require_same_geometry(a, b, "dice");
    std::size_t na = 0, nb = 0, both = 0;
    for (std::size_t i = 0; i < a.voxels.size(); ++i) {
        const bool x = a.voxels[i] != 0, y = b.voxels[i] != 0;
        na += x;
        nb += y;
        both += x && y;
    }
    if (na + nb == 0) return 1.0;
    return 2.0 * static_cast<double>(both) / static_cast<double>(na + nb);
}

HdMode parse_hd_mode(const std::string& name) {
    if (name == "pooled") return HdMode::Pooled;
    if (name == "max") return HdMode::Max;
    throw ArgumentError("unknown hd95 mode '" + name + "' (expected pooled or max)");
}

std::vector<std::uint8_t> surface_voxels(const LabelVolume& mask) {
    const Geometry3& g = mask.geom;
    const Dims d = g.dims();
    std::vector<std::uint8_t> s(mask.voxels.size(), 0);
    auto bg = [&](std::int64_t x, std::int64_t y, std::int64_t z) {
        return !g.contains(x, y, z) || mask.voxels[g.flatten(x, y, z)] == 0;
    };
    for (std::int64_t z = 0; z < d.nz; ++z)
        for (std::int64_t y = 0; y < d.ny; ++y)
            for (std::int64_t x = 0; x < d.nx; ++x) {
                if (!mask.at(x, y, z)) continue;
                if (bg(x - 1, y, z) || bg(x + 1, y, z) || bg(x, y - 1, z) || bg(x, y + 1, z) || bg(x, y, z - 1) ||
                    bg(x, y, z + 1))
                    s[g.flatten(x, y, z)] = 1;
            }
    return s;
}

std::vector<double> squared_edt(const std::vector<std::uint8_t>& sites, const Geometry3& geom) {
    const Dims d = geom.dims();
    const Vec3 sp = geom.spacing();
    std::vector<double> f(sites.size()), tmp(sites.size());
    for (std::size_t i = 0; i < sites.size(); ++i) f[i] = sites[i] ? 0.0 : kInf;

    // x lines
    parallel_for(0, static_cast<std::size_t>(d.nz), [&](std::size_t z) {
        std::vector<std::int64_t> v;
        std::vector<double> zz;
        for (std::int64_t y = 0; y < d.ny; ++y) {
            const std::size_t base = geom.flatten(0, y, static_cast<std::int64_t>(z));
            edt_line(f.data() + base, d.nx, 1, sp[0], tmp.data() + base, v, zz);
        }
    });
    // y lines
    parallel_for(0, static_cast<std::size_t>(d.nz), [&](std::size_t z) {
        std::vector<std::int64_t> v;
        std::vector<double> zz;
        std::vector<double> out(static_cast<std::size_t>(d.ny));
        for (std::int64_t x = 0; x < d.nx; ++x) {
            const std::size_t base = geom.flatten(x, 0, static_cast<std::int64_t>(z));
            edt_line(tmp.data() + base, d.ny, d.nx, sp[1], out.data(), v, zz);
            for (std::int64_t y = 0; y < d.ny; ++y) f[base + y * d.nx] = out[y];
        }
    });
    // z lines
    parallel_for(0, static_cast<std::size_t>(d.ny), [&](std::size_t y) {
        std::vector<std::int64_t> v;
        std::vector<double> zz;
        std::vector<double> out(static_cast<std::size_t>(d.nz));
        for (std::int64_t x = 0; x < d.nx; ++x) {
            const std::size_t base = geom.flatten(x, static_cast<std::int64_t>(y), 0);
            edt_line(f.data() + base, d.nz, d.nx * d.ny, sp[2], out.data(), v, zz);
            for (std::int64_t z = 0; z < d.nz; ++z) tmp[base + z * d.nx * d.ny] = out[z];
        }
    });
    return tmp;
}

double percentile(std::vector<double> values, double q) {
    if (values.empty()) throw UndefinedMetricError("percentile of an empty set");
    std::sort(values.begin(), values.end());
    const double pos = q / 100.0 * static_cast<double>(values.size() - 1);
    const auto lo = static_cast<std::size_t>(std::floor(pos));
    const std::size_t hi = std::min(lo + 1, values.size() - 1);
    return values[lo] + (pos - static_cast<double>(lo)) * (values[hi] - values[lo]);
}

double hd95(const LabelVolume& a, const LabelVolume& b, HdMode mode) {
    require_same_geometry(a, b, "hd95");
    if (a.foreground_count() == 0 || b.foreground_count() == 0)
        throw UndefinedMetricError("hd95 is undefined for an empty mask");
    const auto sa = surface_voxels(a);
    const auto sb = surface_voxels(b);
    const auto to_b = squared_edt(sb, a.geom);
    const auto to_a = squared_edt(sa, a.geom);
    std::vector<double> da, db;
    for (std::size_t i = 0; i < sa.size(); ++i) {
        if (sa[i]) da.push_back(std::sqrt(to_b[i]));
        if (sb[i]) db.push_back(std::sqrt(to_a[i]));
    }
    if (mode == HdMode::Max) return std::max(percentile(da, 95.0), percentile(db, 95.0));
    da.insert(da.end(), db.begin(), db.end());
    return percentile(std::move(da), 95.0);
}

SegScore score(const LabelVolume& prediction, const LabelVolume& truth, HdMode mode) {
    return {dice(prediction, truth), hd95(prediction, truth, mode)};
}

double corner_jacobian(const std::array<Vec3, 4>& n, int corner) {
    static constexpr int order[4][4] = {{0, 1, 2, 3}, {1, 2, 0, 3}, {2, 0, 1, 3}, {3, 1, 0, 2}};
    const auto& o = order[corner];
    Vec3 e[3];
    for (int k = 0; k < 3; ++k)
        for (int a = 0; a < 3; ++a) e[k][a] = n[o[k + 1]][a] - n[o[0]][a];
    const double det = e[0][0] * (e[1][1] * e[2][2] - e[1][2] * e[2][1]) -
                       e[0][1] * (e[1][0] * e[2][2] - e[1][2] * e[2][0]) +
                       e[0][2] * (e[1][0] * e[2][1] - e[1][1] * e[2][0]);
    double len = 1.0;
    for (const auto& v : e) len *= std::sqrt(v[0] * v[0] + v[1] * v[1] + v[2] * v[2]);
    if (len == 0.0) return 0.0;
    return det / len;
}

double scaled_jacobian(const std::array<Vec3, 4>& nodes) {
    double m = std::numeric_limits<double>::infinity();
    for (int c = 0; c < 4; ++c) m = std::min(m, corner_jacobian(nodes, c));
    return std::numbers::sqrt2 * m;
}

TetQuality tet_quality_report(const TetMesh& mesh) {
    if (mesh.tets.empty()) throw ArgumentError("tet quality report needs at least one tetrahedron");
    std::vector<double> j;
    j.reserve(mesh.tets.size());
    for (const auto& t : mesh.tets) {
        for (auto id : t)
            if (id >= mesh.nodes.size()) throw IndexError("tetrahedron references node " + std::to_string(id));
        j.push_back(scaled_jacobian({mesh.nodes[t[0]], mesh.nodes[t[1]], mesh.nodes[t[2]], mesh.nodes[t[3]]}));
    }
    TetQuality q;
    q.tet_count = j.size();
    // running central moments (Welford / Terriberry update)
    double mean = 0, m2 = 0, m3 = 0;
    std::size_t n = 0;
    for (double x : j) {
        if (x <= 0) ++q.inverted_count;
        const std::size_t n1 = n++;
        const double delta = x - mean;
        const double dn = delta / static_cast<double>(n);
        const double term1 = delta * dn * static_cast<double>(n1);
        mean += dn;
        m3 += term1 * dn * static_cast<double>(n - 2) - 3.0 * dn * m2;
        m2 += term1;
    }
    const double var = m2 / static_cast<double>(n);
    q.jac_variance = var;
    q.jac_skewness = var > 0 ? (m3 / static_cast<double>(n)) / std::pow(var, 1.5) : 0.0;
    q.median_jac = percentile(std::move(j), 50.0);
    return q;
}

}  // namespace segapipe::metrics
