#include "segapipe/phantom.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

#include "segapipe/errors.hpp"
#include "segapipe/rng.hpp"

namespace segapipe {
namespace {

double segment_distance(const Vec3& p, const Vec3& a, const Vec3& b) {
    Vec3 ab{b[0] - a[0], b[1] - a[1], b[2] - a[2]};
    Vec3 ap{p[0] - a[0], p[1] - a[1], p[2] - a[2]};
    const double len2 = ab[0] * ab[0] + ab[1] * ab[1] + ab[2] * ab[2];
    double t = len2 > 0 ? (ap[0] * ab[0] + ap[1] * ab[1] + ap[2] * ab[2]) / len2 : 0.0;
    t = std::clamp(t, 0.0, 1.0);
    double d2 = 0;
    for (int k = 0; k < 3; ++k) {
        const double r = ap[k] - t * ab[k];
        d2 += r * r;
    }
    return std::sqrt(d2);
}

double length(const Vec3& a, const Vec3& b) {
    return std::sqrt((a[0] - b[0]) * (a[0] - b[0]) + (a[1] - b[1]) * (a[1] - b[1]) + (a[2] - b[2]) * (a[2] - b[2]));
}

// Marks voxels whose centre lies within radius of the segment; touches only its bounding box.
template <typename Fn>
void rasterize(const Geometry3& g, const TubeSegment& s, Fn&& fn) {
    const Dims d = g.dims();
    const Vec3 sp = g.spacing();
    std::int64_t lo[3], hi[3];
    for (int k = 0; k < 3; ++k) {
        const double mn = std::min(s.a[k], s.b[k]) - s.radius_mm, mx = std::max(s.a[k], s.b[k]) + s.radius_mm;
        lo[k] = std::max<std::int64_t>(0, static_cast<std::int64_t>(std::floor(mn / sp[k])));
        hi[k] = std::min<std::int64_t>(d[k] - 1, static_cast<std::int64_t>(std::ceil(mx / sp[k])));
    }
    for (std::int64_t z = lo[2]; z <= hi[2]; ++z)
        for (std::int64_t y = lo[1]; y <= hi[1]; ++y)
            for (std::int64_t x = lo[0]; x <= hi[0]; ++x) {
                const Vec3 p{x * sp[0], y * sp[1], z * sp[2]};
                if (segment_distance(p, s.a, s.b) <= s.radius_mm) fn(g.flatten(x, y, z));
            }
}

}  // namespace

Phantom make_phantom(std::uint64_t seed, const PhantomSpec& spec) {
    const Dims d = spec.dims;
    if (d.nx < 16 || d.ny < 16 || d.nz < 16) throw ArgumentError("phantom dims must be at least 16 per axis");
    Geometry3 geom(d, spec.spacing);
    Rng rng(derive_seed(seed, 0x9ba5));

    const Vec3 ext{d.nx * spec.spacing[0], d.ny * spec.spacing[1], d.nz * spec.spacing[2]};
    const double min_ext = std::min({ext[0], ext[1], ext[2]});
    Phantom ph;
    ph.main_radius_mm = 0.07 * min_ext * rng.uniform(0.9, 1.1);
    const double R = ph.main_radius_mm;

    // centreline in fractions of the extent; the arch is a half circle in x-z
    const double cy = 0.5 + rng.uniform(-0.05, 0.05);
    const double arch_cx = 0.5 + rng.uniform(-0.04, 0.04);
    const double arch_r = 0.16 + rng.uniform(-0.02, 0.02);
    const double arch_z = 0.62 + rng.uniform(-0.04, 0.04);
    const double asc_bottom = 0.2 + rng.uniform(-0.03, 0.03);
    const double desc_bottom = 0.1 + rng.uniform(-0.02, 0.02);
    auto mm = [&](double fx, double fy, double fz) { return Vec3{fx * ext[0], fy * ext[1], fz * ext[2]}; };

    std::vector<Vec3> pts;
    pts.push_back(mm(arch_cx - arch_r, cy, asc_bottom));
    const int arc_steps = 48;
    for (int i = 0; i <= arc_steps; ++i) {
        const double a = std::numbers::pi * (1.0 - static_cast<double>(i) / arc_steps);
        pts.push_back(mm(arch_cx + arch_r * std::cos(a), cy, arch_z + arch_r * std::sin(a) * 0.9));
    }
    pts.push_back(mm(arch_cx + arch_r, cy, desc_bottom));
    for (std::size_t i = 0; i + 1 < pts.size(); ++i) {
        ph.centerline.push_back({pts[i], pts[i + 1], R});
        ph.main_length_mm += length(pts[i], pts[i + 1]);
    }

    // thin branches rising from the top of the arch
    const int n_branches = 2 + static_cast<int>(rng.below(3));
    const double min_sp = std::min({spec.spacing[0], spec.spacing[1], spec.spacing[2]});
    for (int b = 0; b < n_branches; ++b) {
        const double t = (b + 1.0) / (n_branches + 1.0) + rng.uniform(-0.04, 0.04);
        const double a = std::numbers::pi * (1.0 - t);
        const Vec3 base = mm(arch_cx + arch_r * std::cos(a), cy, arch_z + arch_r * std::sin(a) * 0.9);
        const double r = min_sp * rng.uniform(1.0, 3.0);
        const double len = 0.14 * ext[2] * rng.uniform(0.8, 1.2);
        const double tilt = rng.uniform(-0.35, 0.35);
        Vec3 tip{base[0] + len * std::sin(tilt), base[1] + len * rng.uniform(-0.2, 0.2), base[2] + len * std::cos(tilt)};
        tip[2] = std::min(tip[2], ext[2] - 2.0 * spec.spacing[2] - r);
        ph.branches.push_back({base, tip, r});
        // the part inside the aorta is not counted twice
        const double outside = std::max(0.0, length(base, tip) - R);
        ph.analytic_volume_mm3 += std::numbers::pi * r * r * outside + 2.0 / 3.0 * std::numbers::pi * r * r * r;
    }
    ph.analytic_volume_mm3 += std::numbers::pi * R * R * ph.main_length_mm + 4.0 / 3.0 * std::numbers::pi * R * R * R;

    ph.mask = LabelVolume(geom);
    for (const auto& s : ph.centerline) rasterize(geom, s, [&](std::size_t i) { ph.mask.voxels[i] = 1; });
    for (const auto& s : ph.branches) rasterize(geom, s, [&](std::size_t i) { ph.mask.voxels[i] = 1; });

    ph.image = ImageVolume(geom, IntensityDomain::HU, static_cast<float>(spec.background_hu));
    ph.image.element_type = ElementType::Short;
    if (spec.distractors) {
        // vertebral column behind the descending limb and a chamber below the arch
        const double sr = 0.09 * min_ext;
        const TubeSegment spine{mm(arch_cx + arch_r, 0.0, 0.0), mm(arch_cx + arch_r, 0.0, 1.0), sr};
        TubeSegment spine_at = spine;
        spine_at.a[1] = spine_at.b[1] = cy * ext[1] + R + sr + 0.06 * ext[1];
        rasterize(geom, spine_at, [&](std::size_t i) { ph.image.voxels[i] = 700.0f; });
        const double hr = 0.11 * min_ext;
        const Vec3 heart = mm(arch_cx - 0.05, cy - 0.18, asc_bottom + 0.05);
        rasterize(geom, {heart, heart, hr}, [&](std::size_t i) { ph.image.voxels[i] = 120.0f; });
    }
    for (std::size_t i = 0; i < ph.mask.voxels.size(); ++i)
        if (ph.mask.voxels[i]) ph.image.voxels[i] = static_cast<float>(spec.lumen_hu);
    Rng noise(derive_seed(seed, 0x5eed));
    for (auto& v : ph.image.voxels) v = static_cast<float>(std::round(v + noise.normal(0.0, spec.noise_hu)));
    return ph;
}

}  // namespace segapipe
