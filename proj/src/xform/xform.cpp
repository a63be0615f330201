#include "segapipe/xform.hpp"

#include <algorithm>
#include <cmath>

#include "segapipe/errors.hpp"
#include "segapipe/parallel.hpp"

namespace segapipe::xform {

namespace {

double det3(const Mat3& m) {
    return m[0] * (m[4] * m[8] - m[5] * m[7]) - m[1] * (m[3] * m[8] - m[5] * m[6]) +
           m[2] * (m[3] * m[7] - m[4] * m[6]);
}

Mat3 mul(const Mat3& a, const Mat3& b) {
    Mat3 out{};
    for (int r = 0; r < 3; ++r) {
        for (int c = 0; c < 3; ++c) {
            double acc = 0.0;
            for (int k = 0; k < 3; ++k) acc += a[r * 3 + k] * b[k * 3 + c];
            out[r * 3 + c] = acc;
        }
    }
    return out;
}

// Index-space affine map j = A i + b, built from any physical map.
struct IndexAffine {
    Vec3 offset{};
    std::array<Vec3, 3> column{};

    Vec3 at(std::int64_t x, std::int64_t y, std::int64_t z) const {
        Vec3 j = offset;
        for (int r = 0; r < 3; ++r) {
            j[r] += column[0][r] * static_cast<double>(x) + column[1][r] * static_cast<double>(y) +
                    column[2][r] * static_cast<double>(z);
        }
        return j;
    }
};

IndexAffine index_affine(const Geometry3& out_geom, const Geometry3& in_geom, const AffineTransform3& t) {
    auto f = [&](const Vec3& i) { return in_geom.mm_to_voxel(t.apply(out_geom.voxel_to_mm(i))); };
    IndexAffine ia;
    ia.offset = f({0, 0, 0});
    for (int c = 0; c < 3; ++c) {
        Vec3 e{0, 0, 0};
        e[c] = 1.0;
        const Vec3 fc = f(e);
        for (int r = 0; r < 3; ++r) ia.column[c][r] = fc[r] - ia.offset[r];
    }
    return ia;
}

bool inside_extent(const Dims& d, const Vec3& idx) {
    for (int a = 0; a < 3; ++a) {
        if (idx[a] < -0.5 || idx[a] > static_cast<double>(d[a]) - 0.5) return false;
    }
    return true;
}

template <typename Fn>
void for_each_voxel(const Geometry3& g, Fn&& fn) {
    const auto& d = g.dims();
    parallel_for(0, static_cast<std::size_t>(d.nz), [&](std::size_t zz) {
        const auto z = static_cast<std::int64_t>(zz);
        for (std::int64_t y = 0; y < d.ny; ++y) {
            for (std::int64_t x = 0; x < d.nx; ++x) fn(x, y, z, g.flatten(x, y, z));
        }
    });
}

}  // namespace

AffineTransform3::AffineTransform3(Mat3 m, Vec3 t) : matrix(m), translation(t) {
    if (std::abs(det3(m)) <= 1e-12) throw ArgumentError("affine matrix is singular");
}

Vec3 AffineTransform3::apply(const Vec3& p) const {
    Vec3 out = translation;
    for (int r = 0; r < 3; ++r) {
        for (int c = 0; c < 3; ++c) out[r] += matrix[r * 3 + c] * p[c];
    }
    return out;
}

AffineTransform3 AffineTransform3::inverse() const {
    const double det = det3(matrix);
    if (std::abs(det) <= 1e-12) throw ArgumentError("affine matrix is singular");
    const auto& m = matrix;
    Mat3 inv{(m[4] * m[8] - m[5] * m[7]) / det, (m[2] * m[7] - m[1] * m[8]) / det, (m[1] * m[5] - m[2] * m[4]) / det,
             (m[5] * m[6] - m[3] * m[8]) / det, (m[0] * m[8] - m[2] * m[6]) / det, (m[2] * m[3] - m[0] * m[5]) / det,
             (m[3] * m[7] - m[4] * m[6]) / det, (m[1] * m[6] - m[0] * m[7]) / det, (m[0] * m[4] - m[1] * m[3]) / det};
    Vec3 t{};
    for (int r = 0; r < 3; ++r) {
        for (int c = 0; c < 3; ++c) t[r] -= inv[r * 3 + c] * translation[c];
    }
    return {inv, t};
}

AffineTransform3 AffineTransform3::compose(const AffineTransform3& other) const {
    return {mul(matrix, other.matrix), apply(other.translation)};
}

AffineTransform3 AffineTransform3::translation_only(const Vec3& t) { return {identity3(), t}; }

AffineTransform3 AffineTransform3::about_center(const Vec3& center, const Vec3& euler_rad, const Vec3& scale,
                                                const Vec3& translation) {
    const double cx = std::cos(euler_rad[0]), sx = std::sin(euler_rad[0]);
    const double cy = std::cos(euler_rad[1]), sy = std::sin(euler_rad[1]);
    const double cz = std::cos(euler_rad[2]), sz = std::sin(euler_rad[2]);
    const Mat3 rx{1, 0, 0, 0, cx, -sx, 0, sx, cx};
    const Mat3 ry{cy, 0, sy, 0, 1, 0, -sy, 0, cy};
    const Mat3 rz{cz, -sz, 0, sz, cz, 0, 0, 0, 1};
    const Mat3 s{scale[0], 0, 0, 0, scale[1], 0, 0, 0, scale[2]};
    const Mat3 m = mul(mul(rz, mul(ry, rx)), s);
    // x -> m (x - c) + c + t
    Vec3 t{};
    for (int r = 0; r < 3; ++r) {
        double mc = 0.0;
        for (int c = 0; c < 3; ++c) mc += m[r * 3 + c] * center[c];
        t[r] = center[r] - mc + translation[r];
    }
    return {m, t};
}

Vec3 DisplacementField::at_mm(const Vec3& p) const {
    const Vec3 idx = geom.mm_to_voxel(p);
    const auto& d = geom.dims();
    if (!inside_extent(d, idx)) return {0, 0, 0};
    std::int64_t lo[3];
    double frac[3];
    for (int a = 0; a < 3; ++a) {
        const double c = std::clamp(idx[a], 0.0, static_cast<double>(d[a] - 1));
        lo[a] = std::min<std::int64_t>(static_cast<std::int64_t>(std::floor(c)), d[a] - 1);
        frac[a] = c - static_cast<double>(lo[a]);
    }
    Vec3 out{0, 0, 0};
    for (int corner = 0; corner < 8; ++corner) {
        double w = 1.0;
        std::int64_t q[3];
        for (int a = 0; a < 3; ++a) {
            const bool hi = (corner >> a) & 1;
            q[a] = std::min(lo[a] + (hi ? 1 : 0), d[a] - 1);
            w *= hi ? frac[a] : 1.0 - frac[a];
        }
        if (w == 0.0) continue;
        const auto& v = vectors[geom.flatten(q[0], q[1], q[2])];
        for (int r = 0; r < 3; ++r) out[r] += w * v[r];
    }
    return out;
}

float border_value(const ImageVolume& vol) {
    return vol.domain == IntensityDomain::HU ? static_cast<float>(kDefaultClipLow) : 0.0f;
}

float sample(const ImageVolume& vol, const Vec3& index, Interp mode, float fill) {
    const auto& d = vol.geom.dims();
    if (!inside_extent(d, index)) return fill;
    if (mode == Interp::Nearest) {
        std::int64_t q[3];
        for (int a = 0; a < 3; ++a) {
            q[a] = std::clamp<std::int64_t>(static_cast<std::int64_t>(std::floor(index[a] + 0.5)), 0, d[a] - 1);
        }
        return vol.voxels[vol.geom.flatten(q[0], q[1], q[2])];
    }
    std::int64_t lo[3], hi[3];
    double frac[3];
    for (int a = 0; a < 3; ++a) {
        const double c = std::clamp(index[a], 0.0, static_cast<double>(d[a] - 1));
        lo[a] = static_cast<std::int64_t>(std::floor(c));
        hi[a] = std::min(lo[a] + 1, d[a] - 1);
        frac[a] = c - static_cast<double>(lo[a]);
    }
    const auto& g = vol.geom;
    const auto& v = vol.voxels;
    auto lerp = [](double a, double b, double t) { return a + (b - a) * t; };
    const double c00 = lerp(v[g.flatten(lo[0], lo[1], lo[2])], v[g.flatten(hi[0], lo[1], lo[2])], frac[0]);
    const double c10 = lerp(v[g.flatten(lo[0], hi[1], lo[2])], v[g.flatten(hi[0], hi[1], lo[2])], frac[0]);
    const double c01 = lerp(v[g.flatten(lo[0], lo[1], hi[2])], v[g.flatten(hi[0], lo[1], hi[2])], frac[0]);
    const double c11 = lerp(v[g.flatten(lo[0], hi[1], hi[2])], v[g.flatten(hi[0], hi[1], hi[2])], frac[0]);
    return static_cast<float>(lerp(lerp(c00, c10, frac[1]), lerp(c01, c11, frac[1]), frac[2]));
}

std::uint8_t sample(const LabelVolume& vol, const Vec3& index, std::uint8_t fill) {
    const auto& d = vol.geom.dims();
    if (!inside_extent(d, index)) return fill;
    std::int64_t q[3];
    for (int a = 0; a < 3; ++a) {
        q[a] = std::clamp<std::int64_t>(static_cast<std::int64_t>(std::floor(index[a] + 0.5)), 0, d[a] - 1);
    }
    return vol.voxels[vol.geom.flatten(q[0], q[1], q[2])];
}

Geometry3 resampled_geometry(const Geometry3& g, Dims target) {
    if (target.nx < 1 || target.ny < 1 || target.nz < 1) throw ArgumentError("resample target dims must be >= 1");
    Vec3 spacing{};
    Vec3 shift{};
    for (int a = 0; a < 3; ++a) {
        spacing[a] = g.spacing()[a] * static_cast<double>(g.dims()[a]) / static_cast<double>(target[a]);
        // keep the outer voxel boundary fixed: first centre moves by half the spacing change
        shift[a] = 0.5 * (spacing[a] / g.spacing()[a] - 1.0);
    }
    return Geometry3(target, spacing, g.voxel_to_mm(shift), g.direction());
}

namespace {

// Continuous source index of an output voxel centre along one axis.
double source_coord(std::int64_t i, std::int64_t n_in, std::int64_t n_out) {
    return (static_cast<double>(i) + 0.5) * static_cast<double>(n_in) / static_cast<double>(n_out) - 0.5;
}

}  // namespace

ImageVolume resample(const ImageVolume& vol, Dims target, Interp mode) {
    ImageVolume out(resampled_geometry(vol.geom, target), vol.domain);
    out.element_type = vol.element_type == ElementType::Short && mode == Interp::Nearest ? ElementType::Short
                                                                                          : ElementType::Float;
    const auto& din = vol.geom.dims();
    const float fill = border_value(vol);
    for_each_voxel(out.geom, [&](std::int64_t x, std::int64_t y, std::int64_t z, std::size_t i) {
        const Vec3 idx{source_coord(x, din.nx, target.nx), source_coord(y, din.ny, target.ny),
                       source_coord(z, din.nz, target.nz)};
        out.voxels[i] = sample(vol, idx, mode, fill);
    });
    return out;
}

LabelVolume resample(const LabelVolume& vol, Dims target, Interp mode) {
    if (mode != Interp::Nearest) throw ArgumentError("label volumes must be resampled with nearest interpolation");
    LabelVolume out(resampled_geometry(vol.geom, target));
    const auto& din = vol.geom.dims();
    for_each_voxel(out.geom, [&](std::int64_t x, std::int64_t y, std::int64_t z, std::size_t i) {
        const Vec3 idx{source_coord(x, din.nx, target.nx), source_coord(y, din.ny, target.ny),
                       source_coord(z, din.nz, target.nz)};
        out.voxels[i] = sample(vol, idx);
    });
    return out;
}

ImageVolume clip_normalize(const ImageVolume& vol, double lo, double hi) {
    if (!(hi > lo)) throw ArgumentError("clip window requires hi > lo");
    ImageVolume out = vol;
    out.domain = IntensityDomain::Normalized01;
    out.element_type = ElementType::Float;
    const double range = hi - lo;
    for (auto& v : out.voxels) v = static_cast<float>((std::clamp(static_cast<double>(v), lo, hi) - lo) / range);
    return out;
}

ImageVolume warp(const ImageVolume& vol, const AffineTransform3& t, Interp mode, std::optional<float> fill) {
    (void)t.inverse();  // rejects singular maps
    const IndexAffine ia = index_affine(vol.geom, vol.geom, t);
    ImageVolume out(vol.geom, vol.domain);
    const float f = fill.value_or(border_value(vol));
    for_each_voxel(vol.geom, [&](std::int64_t x, std::int64_t y, std::int64_t z, std::size_t i) {
        out.voxels[i] = sample(vol, ia.at(x, y, z), mode, f);
    });
    return out;
}

LabelVolume warp(const LabelVolume& vol, const AffineTransform3& t) {
    (void)t.inverse();
    const IndexAffine ia = index_affine(vol.geom, vol.geom, t);
    LabelVolume out(vol.geom);
    for_each_voxel(vol.geom, [&](std::int64_t x, std::int64_t y, std::int64_t z, std::size_t i) {
        out.voxels[i] = sample(vol, ia.at(x, y, z));
    });
    return out;
}

namespace {

Vec3 displaced_index(const Geometry3& g, const DisplacementField& field, std::int64_t x, std::int64_t y,
                     std::int64_t z, std::size_t i, bool same_lattice) {
    const Vec3 p = g.voxel_to_mm({static_cast<double>(x), static_cast<double>(y), static_cast<double>(z)});
    const Vec3 u = same_lattice ? field.vectors[i] : field.at_mm(p);
    return g.mm_to_voxel({p[0] + u[0], p[1] + u[1], p[2] + u[2]});
}

}  // namespace

ImageVolume warp(const ImageVolume& vol, const DisplacementField& field, Interp mode, std::optional<float> fill) {
    if (field.vectors.size() != field.geom.voxel_count()) throw ShapeError("displacement field size mismatch");
    const bool same = field.geom.same_as(vol.geom);
    ImageVolume out(vol.geom, vol.domain);
    const float f = fill.value_or(border_value(vol));
    for_each_voxel(vol.geom, [&](std::int64_t x, std::int64_t y, std::int64_t z, std::size_t i) {
        out.voxels[i] = sample(vol, displaced_index(vol.geom, field, x, y, z, i, same), mode, f);
    });
    return out;
}

LabelVolume warp(const LabelVolume& vol, const DisplacementField& field) {
    if (field.vectors.size() != field.geom.voxel_count()) throw ShapeError("displacement field size mismatch");
    const bool same = field.geom.same_as(vol.geom);
    LabelVolume out(vol.geom);
    for_each_voxel(vol.geom, [&](std::int64_t x, std::int64_t y, std::int64_t z, std::size_t i) {
        out.voxels[i] = sample(vol, displaced_index(vol.geom, field, x, y, z, i, same));
    });
    return out;
}

}  // namespace segapipe::xform
