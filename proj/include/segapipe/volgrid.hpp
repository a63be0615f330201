#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <string>
#include <variant>
#include <vector>

namespace segapipe {

using Vec3 = std::array<double, 3>;
/// Row-major 3x3 matrix; column j is the physical direction of voxel axis j.
using Mat3 = std::array<double, 9>;

constexpr Mat3 identity3() { return {1, 0, 0, 0, 1, 0, 0, 0, 1}; }

struct Dims {
    std::int64_t nx = 1;
    std::int64_t ny = 1;
    std::int64_t nz = 1;

    std::size_t count() const { return static_cast<std::size_t>(nx * ny * nz); }
    std::int64_t operator[](int axis) const { return axis == 0 ? nx : (axis == 1 ? ny : nz); }
    std::int64_t& operator[](int axis) { return axis == 0 ? nx : (axis == 1 ? ny : nz); }
    bool operator==(const Dims&) const = default;
};

struct Index3 {
    std::int64_t x = 0;
    std::int64_t y = 0;
    std::int64_t z = 0;
    bool operator==(const Index3&) const = default;
};

/// Voxel lattice with physical placement. Voxel centers sit at
/// origin + direction * (spacing o index).
class Geometry3 {
public:
    Geometry3() = default;
    Geometry3(Dims dims, Vec3 spacing, Vec3 origin = {0, 0, 0}, Mat3 direction = identity3());

    const Dims& dims() const { return dims_; }
    const Vec3& spacing() const { return spacing_; }
    const Vec3& origin() const { return origin_; }
    const Mat3& direction() const { return direction_; }
    std::size_t voxel_count() const { return dims_.count(); }

    // x-fastest linear indexing
    std::size_t flatten(std::int64_t x, std::int64_t y, std::int64_t z) const {
        return static_cast<std::size_t>((z * dims_.ny + y) * dims_.nx + x);
    }
    std::size_t flatten(Index3 i) const { return flatten(i.x, i.y, i.z); }
    Index3 unflatten(std::size_t linear) const;
    bool contains(std::int64_t x, std::int64_t y, std::int64_t z) const {
        return x >= 0 && y >= 0 && z >= 0 && x < dims_.nx && y < dims_.ny && z < dims_.nz;
    }

    /// Continuous voxel index to physical millimetres.
    Vec3 voxel_to_mm(const Vec3& index) const;
    Vec3 mm_to_voxel(const Vec3& mm) const;

    /// Same lattice placement, equal within tol on spacing/origin/direction.
    bool same_as(const Geometry3& other, double tol = 1e-9) const;

private:
    Dims dims_{};
    Vec3 spacing_{1, 1, 1};
    Vec3 origin_{0, 0, 0};
    Mat3 direction_ = identity3();
};

enum class IntensityDomain { HU, Normalized01, Probability };

/// On-disk element type; write_mhd writes the same type back.
enum class ElementType { UChar, Short, Float };

const char* element_type_name(ElementType t);
std::size_t element_size(ElementType t);

struct ImageVolume {
    Geometry3 geom;
    std::vector<float> voxels;
    IntensityDomain domain = IntensityDomain::HU;
    ElementType element_type = ElementType::Float;

    ImageVolume() = default;
    ImageVolume(Geometry3 g, IntensityDomain d, float fill = 0.0f)
        : geom(std::move(g)), voxels(geom.voxel_count(), fill), domain(d) {}

    float& at(std::int64_t x, std::int64_t y, std::int64_t z) { return voxels[geom.flatten(x, y, z)]; }
    float at(std::int64_t x, std::int64_t y, std::int64_t z) const { return voxels[geom.flatten(x, y, z)]; }

    /// Checks voxel count and the value range implied by the domain tag.
    void validate() const;
};

struct LabelVolume {
    Geometry3 geom;
    std::vector<std::uint8_t> voxels;

    LabelVolume() = default;
    explicit LabelVolume(Geometry3 g, std::uint8_t fill = 0) : geom(std::move(g)), voxels(geom.voxel_count(), fill) {}

    std::uint8_t& at(std::int64_t x, std::int64_t y, std::int64_t z) { return voxels[geom.flatten(x, y, z)]; }
    std::uint8_t at(std::int64_t x, std::int64_t y, std::int64_t z) const { return voxels[geom.flatten(x, y, z)]; }

    std::size_t foreground_count() const;
    void validate() const;
};

struct TriMesh {
    std::vector<Vec3> vertices;
    std::vector<std::array<std::uint32_t, 3>> triangles;

    void validate() const;
};

struct TetMesh {
    std::vector<Vec3> nodes;
    std::vector<std::array<std::uint32_t, 4>> tets;

    void validate() const;
};

using AnyVolume = std::variant<ImageVolume, LabelVolume>;

// MetaImage (.mhd header + raw payload).
AnyVolume read_mhd(const std::filesystem::path& path);
ImageVolume read_image_mhd(const std::filesystem::path& path, IntensityDomain domain = IntensityDomain::HU);
LabelVolume read_label_mhd(const std::filesystem::path& path);
void write_mhd(const ImageVolume& vol, const std::filesystem::path& path);
void write_mhd(const LabelVolume& vol, const std::filesystem::path& path);

// Surface and tetrahedral mesh files.
void write_stl(const TriMesh& mesh, const std::filesystem::path& path);
void write_obj(const TriMesh& mesh, const std::filesystem::path& path);
TetMesh read_node_ele(const std::filesystem::path& node_path, const std::filesystem::path& ele_path);

}  // namespace segapipe
