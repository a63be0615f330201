#include <algorithm>
#include <cmath>
#include <string>

#include "segapipe/errors.hpp"
#include "segapipe/volgrid.hpp"

namespace segapipe {

namespace {

constexpr double kOrthoTol = 1e-6;

std::string dims_string(const Dims& d) {
    return std::to_string(d.nx) + "x" + std::to_string(d.ny) + "x" + std::to_string(d.nz);
}

}  // namespace

Geometry3::Geometry3(Dims dims, Vec3 spacing, Vec3 origin, Mat3 direction)
    : dims_(dims), spacing_(spacing), origin_(origin), direction_(direction) {
    if (dims.nx < 1 || dims.ny < 1 || dims.nz < 1) {
        throw ArgumentError("geometry dims must be >= 1, got " + dims_string(dims));
    }
    for (double s : spacing) {
        if (!(s > 0.0) || !std::isfinite(s)) throw ArgumentError("geometry spacing must be > 0");
    }
    for (int a = 0; a < 3; ++a) {
        for (int b = a; b < 3; ++b) {
            double dot = 0.0;
            for (int r = 0; r < 3; ++r) dot += direction[r * 3 + a] * direction[r * 3 + b];
            const double expected = a == b ? 1.0 : 0.0;
            if (std::abs(dot - expected) > kOrthoTol) {
                throw ArgumentError("direction matrix must be orthonormal");
            }
        }
    }
}

Index3 Geometry3::unflatten(std::size_t linear) const {
    const auto i = static_cast<std::int64_t>(linear);
    const std::int64_t x = i % dims_.nx;
    const std::int64_t rest = i / dims_.nx;
    return {x, rest % dims_.ny, rest / dims_.ny};
}

Vec3 Geometry3::voxel_to_mm(const Vec3& index) const {
    Vec3 out = origin_;
    for (int r = 0; r < 3; ++r) {
        for (int c = 0; c < 3; ++c) out[r] += direction_[r * 3 + c] * spacing_[c] * index[c];
    }
    return out;
}

Vec3 Geometry3::mm_to_voxel(const Vec3& mm) const {
    // inverse of the orthonormal direction is its transpose
    Vec3 out{};
    for (int c = 0; c < 3; ++c) {
        double acc = 0.0;
        for (int r = 0; r < 3; ++r) acc += direction_[r * 3 + c] * (mm[r] - origin_[r]);
        out[c] = acc / spacing_[c];
    }
    return out;
}

bool Geometry3::same_as(const Geometry3& other, double tol) const {
    if (!(dims_ == other.dims_)) return false;
    for (int i = 0; i < 3; ++i) {
        if (std::abs(spacing_[i] - other.spacing_[i]) > tol) return false;
        if (std::abs(origin_[i] - other.origin_[i]) > tol) return false;
    }
    for (int i = 0; i < 9; ++i) {
        if (std::abs(direction_[i] - other.direction_[i]) > tol) return false;
    }
    return true;
}

const char* element_type_name(ElementType t) {
    switch (t) {
        case ElementType::UChar: return "MET_UCHAR";
        case ElementType::Short: return "MET_SHORT";
        case ElementType::Float: return "MET_FLOAT";
    }
    return "MET_FLOAT";
}

std::size_t element_size(ElementType t) {
    switch (t) {
        case ElementType::UChar: return 1;
        case ElementType::Short: return 2;
        case ElementType::Float: return 4;
    }
    return 4;
}

void ImageVolume::validate() const {
    if (voxels.size() != geom.voxel_count()) throw ShapeError("image voxel count does not match geometry");
    if (domain == IntensityDomain::HU) return;
    const bool in_range = std::all_of(voxels.begin(), voxels.end(), [](float v) { return v >= 0.0f && v <= 1.0f; });
    if (!in_range) throw ArgumentError("normalized/probability image has values outside [0,1]");
}

std::size_t LabelVolume::foreground_count() const {
    return static_cast<std::size_t>(std::count(voxels.begin(), voxels.end(), std::uint8_t{1}));
}

void LabelVolume::validate() const {
    if (voxels.size() != geom.voxel_count()) throw ShapeError("label voxel count does not match geometry");
    if (std::any_of(voxels.begin(), voxels.end(), [](std::uint8_t v) { return v > 1; })) {
        throw ArgumentError("label volume must contain only 0 and 1");
    }
}

void TriMesh::validate() const {
    const auto n = vertices.size();
    for (const auto& t : triangles) {
        if (t[0] >= n || t[1] >= n || t[2] >= n) throw IndexError("triangle index out of range");
        if (t[0] == t[1] || t[1] == t[2] || t[0] == t[2]) throw ArgumentError("triangle repeats a vertex index");
    }
}

void TetMesh::validate() const {
    const auto n = nodes.size();
    for (const auto& t : tets) {
        for (int i = 0; i < 4; ++i) {
            if (t[i] >= n) throw IndexError("tet index out of range");
            for (int j = i + 1; j < 4; ++j) {
                if (t[i] == t[j]) throw ArgumentError("tet repeats a node index");
            }
        }
    }
}

}  // namespace segapipe
