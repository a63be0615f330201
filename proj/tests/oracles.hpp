#pragma once

// Independent reference implementations used by the tests. They are written
// for clarity, not speed, and share no code with the library.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <limits>
#include <queue>
#include <string>
#include <vector>

#include "segapipe/rng.hpp"
#include "segapipe/volgrid.hpp"

namespace oracle {

using segapipe::LabelVolume;

inline LabelVolume random_mask(segapipe::Rng& rng, int max_dim, double min_fill = 0.05, double max_fill = 0.6) {
    const auto nx = 1 + static_cast<std::int64_t>(rng.below(max_dim));
    const auto ny = 1 + static_cast<std::int64_t>(rng.below(max_dim));
    const auto nz = 1 + static_cast<std::int64_t>(rng.below(max_dim));
    LabelVolume m(segapipe::Geometry3({nx, ny, nz}, {1, 1, 1}));
    const double p = rng.uniform(min_fill, max_fill);
    for (auto& v : m.voxels) v = rng.bernoulli(p) ? 1 : 0;
    return m;
}

/// BFS flood fill from every unvisited foreground voxel in scan order.
inline std::vector<int> flood_fill_labels(const LabelVolume& m, int connectivity, int& count) {
    const auto d = m.geom.dims();
    std::vector<int> label(m.voxels.size(), 0);
    count = 0;
    for (std::int64_t z = 0; z < d.nz; ++z)
        for (std::int64_t y = 0; y < d.ny; ++y)
            for (std::int64_t x = 0; x < d.nx; ++x) {
                const auto i = m.geom.flatten(x, y, z);
                if (!m.voxels[i] || label[i]) continue;
                ++count;
                std::queue<std::array<std::int64_t, 3>> q;
                q.push({x, y, z});
                label[i] = count;
                while (!q.empty()) {
                    const auto [cx, cy, cz] = q.front();
                    q.pop();
                    for (int dz = -1; dz <= 1; ++dz)
                        for (int dy = -1; dy <= 1; ++dy)
                            for (int dx = -1; dx <= 1; ++dx) {
                                const int ord = std::abs(dx) + std::abs(dy) + std::abs(dz);
                                if (ord == 0 || (connectivity == 6 && ord > 1) || (connectivity == 18 && ord > 2))
                                    continue;
                                const auto X = cx + dx, Y = cy + dy, Z = cz + dz;
                                if (!m.geom.contains(X, Y, Z)) continue;
                                const auto j = m.geom.flatten(X, Y, Z);
                                if (m.voxels[j] && !label[j]) {
                                    label[j] = count;
                                    q.push({X, Y, Z});
                                }
                            }
                }
            }
    return label;
}

/// Largest component by flood fill; first-found component wins ties.
inline LabelVolume flood_fill_largest(const LabelVolume& m, int connectivity = 26) {
    int count = 0;
    const auto label = flood_fill_labels(m, connectivity, count);
    LabelVolume out(m.geom);
    if (count == 0) return out;
    std::vector<std::size_t> size(count + 1, 0);
    for (int l : label) ++size[l];
    int best = 1;
    for (int l = 2; l <= count; ++l)
        if (size[l] > size[best]) best = l;
    for (std::size_t i = 0; i < label.size(); ++i) out.voxels[i] = label[i] == best;
    return out;
}

/// All-pairs surface distance percentile (pooled), numpy-style linear interpolation.
inline double brute_hd95(const LabelVolume& a, const LabelVolume& b, bool pooled = true) {
    const auto d = a.geom.dims();
    const auto sp = a.geom.spacing();
    auto surface = [&](const LabelVolume& m) {
        std::vector<std::array<std::int64_t, 3>> s;
        auto fg = [&](std::int64_t x, std::int64_t y, std::int64_t z) {
            return m.geom.contains(x, y, z) && m.at(x, y, z);
        };
        for (std::int64_t z = 0; z < d.nz; ++z)
            for (std::int64_t y = 0; y < d.ny; ++y)
                for (std::int64_t x = 0; x < d.nx; ++x)
                    if (fg(x, y, z) && (!fg(x - 1, y, z) || !fg(x + 1, y, z) || !fg(x, y - 1, z) || !fg(x, y + 1, z) ||
                                        !fg(x, y, z - 1) || !fg(x, y, z + 1)))
                        s.push_back({x, y, z});
        return s;
    };
    const auto sa = surface(a), sb = surface(b);
    auto directed = [&](const auto& from, const auto& to) {
        std::vector<double> out;
        for (const auto& p : from) {
            double best = std::numeric_limits<double>::infinity();
            for (const auto& q : to) {
                const double dx = (p[0] - q[0]) * sp[0], dy = (p[1] - q[1]) * sp[1], dz = (p[2] - q[2]) * sp[2];
                best = std::min(best, std::sqrt(dx * dx + dy * dy + dz * dz));
            }
            out.push_back(best);
        }
        return out;
    };
    auto pct = [](std::vector<double> v) {
        std::sort(v.begin(), v.end());
        const double pos = 0.95 * static_cast<double>(v.size() - 1);
        const auto lo = static_cast<std::size_t>(pos);
        const auto hi = std::min(lo + 1, v.size() - 1);
        return v[lo] * (1.0 - (pos - lo)) + v[hi] * (pos - lo);
    };
    auto da = directed(sa, sb), db = directed(sb, sa);
    if (!pooled) return std::max(pct(da), pct(db));
    da.insert(da.end(), db.begin(), db.end());
    return pct(da);
}

struct Moments {
    double median, variance, skewness;
};

/// Two-pass population statistics.
inline Moments two_pass(std::vector<double> v) {
    const double n = static_cast<double>(v.size());
    double mean = 0;
    for (double x : v) mean += x;
    mean /= n;
    double m2 = 0, m3 = 0;
    for (double x : v) {
        m2 += (x - mean) * (x - mean);
        m3 += (x - mean) * (x - mean) * (x - mean);
    }
    m2 /= n;
    m3 /= n;
    std::sort(v.begin(), v.end());
    const double median = v.size() % 2 ? v[v.size() / 2] : 0.5 * (v[v.size() / 2 - 1] + v[v.size() / 2]);
    return {median, m2, m2 > 0 ? m3 / std::pow(m2, 1.5) : 0.0};
}

struct StlTriangle {
    std::array<float, 3> normal;
    std::array<std::array<float, 3>, 3> v;
};

/// Minimal binary STL reader written against the format description.
inline std::vector<StlTriangle> read_stl(const std::filesystem::path& p, std::size_t* file_size = nullptr) {
    std::ifstream in(p, std::ios::binary);
    std::vector<char> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    if (file_size) *file_size = bytes.size();
    if (bytes.size() < 84) throw std::runtime_error("short stl");
    std::uint32_t n = 0;
    std::memcpy(&n, bytes.data() + 80, 4);
    if (bytes.size() != 84 + 50ull * n) throw std::runtime_error("stl size mismatch");
    std::vector<StlTriangle> tris(n);
    for (std::uint32_t t = 0; t < n; ++t) {
        const char* rec = bytes.data() + 84 + 50ull * t;
        std::memcpy(tris[t].normal.data(), rec, 12);
        for (int k = 0; k < 3; ++k) std::memcpy(tris[t].v[k].data(), rec + 12 + 12 * k, 12);
    }
    return tris;
}

inline std::vector<char> file_bytes(const std::filesystem::path& p) {
    std::ifstream in(p, std::ios::binary);
    return {(std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>()};
}

/// Undirected edge -> face count, used as a topology oracle.
inline void edge_census(const segapipe::TriMesh& m, std::size_t& boundary, std::size_t& nonmanifold,
                        std::size_t& edges) {
    std::vector<std::pair<std::uint64_t, int>> list;
    std::vector<std::uint64_t> keys;
    for (const auto& t : m.triangles)
        for (int j = 0; j < 3; ++j) {
            std::uint64_t a = t[j], b = t[(j + 1) % 3];
            if (a > b) std::swap(a, b);
            keys.push_back(a << 32 | b);
        }
    std::sort(keys.begin(), keys.end());
    boundary = nonmanifold = edges = 0;
    for (std::size_t i = 0; i < keys.size();) {
        std::size_t j = i;
        while (j < keys.size() && keys[j] == keys[i]) ++j;
        ++edges;
        if (j - i == 1) ++boundary;
        if (j - i > 2) ++nonmanifold;
        i = j;
    }
}

inline std::filesystem::path temp_dir(const std::string& name) {
    auto p = std::filesystem::temp_directory_path() / ("segapipe_test_" + name);
    std::filesystem::remove_all(p);
    std::filesystem::create_directories(p);
    return p;
}

}  // namespace oracle
