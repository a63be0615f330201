#include "segapipe/postproc.hpp"

#include <cstdlib>
#include <numeric>
#include <string>

#include "segapipe/errors.hpp"

namespace segapipe::postproc {

LabelVolume threshold(const ImageVolume& prob, double t) {
    if (!(t >= 0.0 && t <= 1.0)) throw ArgumentError("threshold must lie in [0, 1], got " + std::to_string(t));
    if (prob.domain != IntensityDomain::Probability)
        throw ArgumentError("threshold expects a probability volume");
    LabelVolume out(prob.geom);
    for (std::size_t i = 0; i < prob.voxels.size(); ++i) out.voxels[i] = prob.voxels[i] >= t ? 1 : 0;
    return out;
}

namespace {

struct UnionFind {
    std::vector<std::int32_t> parent;

    std::int32_t find(std::int32_t a) {
        while (parent[a] != a) {
            parent[a] = parent[parent[a]];
            a = parent[a];
        }
        return a;
    }
    // the smaller root wins
    void unite(std::int32_t a, std::int32_t b) {
        a = find(a);
        b = find(b);
        if (a == b) return;
        if (a < b) parent[b] = a;
        else parent[a] = b;
    }
};

std::vector<Index3> backward_offsets(int connectivity) {
    std::vector<Index3> offs;
    for (int dz = -1; dz <= 0; ++dz)
        for (int dy = -1; dy <= 1; ++dy)
            for (int dx = -1; dx <= 1; ++dx) {
                if (dz == 0 && (dy > 0 || (dy == 0 && dx >= 0))) continue;
                const int order = std::abs(dx) + std::abs(dy) + std::abs(dz);
                if (connectivity == 6 && order > 1) continue;
                if (connectivity == 18 && order > 2) continue;
                offs.push_back({dx, dy, dz});
            }
    return offs;
}

}  // namespace

int label_components(const LabelVolume& mask, std::vector<std::int32_t>& labels, int connectivity) {
    if (connectivity != 6 && connectivity != 18 && connectivity != 26)
        throw ArgumentError("connectivity must be 6, 18 or 26");
    const Dims d = mask.geom.dims();
    const std::size_t n = mask.voxels.size();
    UnionFind uf;
    uf.parent.resize(n);
    std::iota(uf.parent.begin(), uf.parent.end(), 0);
    const auto offs = backward_offsets(connectivity);

    for (std::int64_t z = 0; z < d.nz; ++z)
        for (std::int64_t y = 0; y < d.ny; ++y)
            for (std::int64_t x = 0; x < d.nx; ++x) {
                const std::size_t i = mask.geom.flatten(x, y, z);
                if (!mask.voxels[i]) continue;
                for (const auto& o : offs) {
                    const std::int64_t X = x + o.x, Y = y + o.y, Z = z + o.z;
                    if (!mask.geom.contains(X, Y, Z)) continue;
                    const std::size_t j = mask.geom.flatten(X, Y, Z);
                    if (mask.voxels[j]) uf.unite(static_cast<std::int32_t>(i), static_cast<std::int32_t>(j));
                }
            }

    labels.assign(n, 0);
    std::vector<std::int32_t> root_label(n, 0);
    int count = 0;
    for (std::size_t i = 0; i < n; ++i) {
        if (!mask.voxels[i]) continue;
        const auto r = uf.find(static_cast<std::int32_t>(i));
        if (root_label[r] == 0) root_label[r] = ++count;
        labels[i] = root_label[r];
    }
    return count;
}

LabelVolume largest_component(const LabelVolume& mask, int connectivity) {
    std::vector<std::int32_t> labels;
    const int count = label_components(mask, labels, connectivity);
    LabelVolume out(mask.geom);
    if (count == 0) return out;
    std::vector<std::size_t> sizes(count + 1, 0);
    for (auto l : labels) ++sizes[l];
    int best = 1;
    for (int l = 2; l <= count; ++l)
        if (sizes[l] > sizes[best]) best = l;
    for (std::size_t i = 0; i < labels.size(); ++i) out.voxels[i] = labels[i] == best ? 1 : 0;
    return out;
}

LabelVolume dilate(const LabelVolume& mask, int radius_voxels) {
    if (radius_voxels < 0) throw ArgumentError("dilation radius must be >= 0");
    LabelVolume cur = mask;
    const Dims d = mask.geom.dims();
    for (int r = 0; r < radius_voxels; ++r) {
        LabelVolume next = cur;
        for (std::int64_t z = 0; z < d.nz; ++z)
            for (std::int64_t y = 0; y < d.ny; ++y)
                for (std::int64_t x = 0; x < d.nx; ++x) {
                    if (!cur.at(x, y, z)) continue;
                    if (x > 0) next.at(x - 1, y, z) = 1;
                    if (x + 1 < d.nx) next.at(x + 1, y, z) = 1;
                    if (y > 0) next.at(x, y - 1, z) = 1;
                    if (y + 1 < d.ny) next.at(x, y + 1, z) = 1;
                    if (z > 0) next.at(x, y, z - 1) = 1;
                    if (z + 1 < d.nz) next.at(x, y, z + 1) = 1;
                }
        cur = std::move(next);
    }
    return cur;
}

}  // namespace segapipe::postproc
