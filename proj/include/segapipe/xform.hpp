#pragma once

#include <optional>

#include "segapipe/volgrid.hpp"

namespace segapipe::xform {

enum class Interp { Trilinear, Nearest };

inline constexpr double kDefaultClipLow = -700.0;
inline constexpr double kDefaultClipHigh = 2300.0;

/// Physical-space affine map x -> matrix * x + translation (mm).
struct AffineTransform3 {
    Mat3 matrix = identity3();
    Vec3 translation{0, 0, 0};

    AffineTransform3() = default;
    AffineTransform3(Mat3 m, Vec3 t);

    Vec3 apply(const Vec3& p) const;
    AffineTransform3 inverse() const;
    /// (this o other)(x) = this(other(x))
    AffineTransform3 compose(const AffineTransform3& other) const;

    static AffineTransform3 translation_only(const Vec3& t);
    /// Rotation (Euler angles in radians, applied x then y then z) and
    /// per-axis scale about a physical centre, followed by a translation.
    static AffineTransform3 about_center(const Vec3& center, const Vec3& euler_rad, const Vec3& scale,
                                         const Vec3& translation);
};

/// Per-voxel displacement in mm; the sampled point is x + u(x).
struct DisplacementField {
    Geometry3 geom;
    std::vector<Vec3> vectors;

    explicit DisplacementField(Geometry3 g) : geom(std::move(g)), vectors(geom.voxel_count(), Vec3{0, 0, 0}) {}
    /// Trilinear lookup at a physical point; zero outside the field lattice.
    Vec3 at_mm(const Vec3& p) const;
};

/// Fill value used for samples outside the volume: the clip-window floor for
/// HU images, 0 for normalized/probability images and labels.
float border_value(const ImageVolume& vol);

/// Samples at a continuous voxel index. Points inside the physical extent of
/// the lattice (half a voxel beyond the outer centres) clamp to the edge;
/// anything further out returns `fill`.
float sample(const ImageVolume& vol, const Vec3& index, Interp mode, float fill);
std::uint8_t sample(const LabelVolume& vol, const Vec3& index, std::uint8_t fill = 0);

/// Resamples onto target_dims covering the same physical extent.
ImageVolume resample(const ImageVolume& vol, Dims target_dims, Interp mode = Interp::Trilinear);
LabelVolume resample(const LabelVolume& vol, Dims target_dims, Interp mode = Interp::Nearest);
/// Geometry of a resampling target: same box, spacing scaled by the dims ratio.
Geometry3 resampled_geometry(const Geometry3& g, Dims target_dims);

/// (clamp(v, lo, hi) - lo) / (hi - lo); output domain Normalized01.
ImageVolume clip_normalize(const ImageVolume& vol, double lo = kDefaultClipLow, double hi = kDefaultClipHigh);

/// Backward warping: out(x) = in(T(x)) on the input's own lattice.
ImageVolume warp(const ImageVolume& vol, const AffineTransform3& t, Interp mode = Interp::Trilinear,
                 std::optional<float> fill = std::nullopt);
LabelVolume warp(const LabelVolume& vol, const AffineTransform3& t);
ImageVolume warp(const ImageVolume& vol, const DisplacementField& field, Interp mode = Interp::Trilinear,
                 std::optional<float> fill = std::nullopt);
LabelVolume warp(const LabelVolume& vol, const DisplacementField& field);

}  // namespace segapipe::xform
