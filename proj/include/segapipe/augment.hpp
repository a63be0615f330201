#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <string>
#include <utility>
#include <vector>

#include "segapipe/volgrid.hpp"
#include "segapipe/xform.hpp"

namespace segapipe::augment {

struct Range {
    double lo = 0.0;
    double hi = 0.0;
};

enum class Transform : int { Affine = 0, Intensity, Noise, Flip, Motion, Anisotropy, Blur };
inline constexpr int kTransformCount = 7;
const char* transform_name(Transform t);

struct AugmentationSpec {
    Range rotation_deg{-15.0, 15.0};
    Range scale{0.9, 1.1};
    Range translation_mm{-10.0, 10.0};
    Range gamma{0.7, 1.5};
    Range noise_std{0.0, 0.03};
    std::array<bool, 3> flip_axes{true, true, true};
    double flip_axis_probability = 0.5;
    int motion_ghosts_min = 2;
    int motion_ghosts_max = 4;
    double motion_magnitude_mm = 2.0;
    Range anisotropy_factor{1.5, 4.0};
    std::array<bool, 3> anisotropy_axes{true, true, true};
    Range blur_sigma_mm{0.0, 2.0};
    double apply_probability = 0.5;
    /// Per-transform switch; ablations turn whole groups off.
    std::array<bool, kTransformCount> enabled{true, true, true, true, true, true, true};

    void validate() const;

    static AugmentationSpec none();
    /// Affine and flip only.
    static AugmentationSpec geometric_only();
    /// Intensity, noise, motion, anisotropy, blur only.
    static AugmentationSpec intensity_only();
};

/// Which transforms fired, in application order (for tests and logs).
struct AugmentationTrace {
    std::vector<Transform> order;
    std::vector<bool> fired;
};

/// One seeded pass of the online pipeline: random order, each transform
/// independently with apply_probability. Geometric transforms apply to both
/// volumes (image trilinear, mask nearest); the rest touch the image only.
std::pair<ImageVolume, LabelVolume> augment_pair(const ImageVolume& img, const LabelVolume& mask,
                                                 const AugmentationSpec& spec, std::uint64_t seed,
                                                 AugmentationTrace* trace = nullptr);

// Individual transforms (image-only unless stated).
ImageVolume adjust_gamma(const ImageVolume& img, double gamma);
ImageVolume add_gaussian_noise(const ImageVolume& img, double stddev, std::uint64_t seed);
ImageVolume flip(const ImageVolume& img, int axis);
LabelVolume flip(const LabelVolume& mask, int axis);
ImageVolume gaussian_blur(const ImageVolume& img, const Vec3& sigma_mm);
ImageVolume random_motion(const ImageVolume& img, int n_ghosts, double magnitude_mm, std::uint64_t seed);
ImageVolume random_anisotropy(const ImageVolume& img, int axis, double factor);

struct ElasticSpec {
    std::array<int, 3> control_grid{8, 8, 8};
    double max_displacement_mm = 4.0;
    double smoothing_sigma_mm = 4.0;
    int n_output_cases = 0;

    void validate() const;
};

/// Smooth random field: control-point noise, upsampled, Gaussian smoothed,
/// scaled so the largest vector norm equals max_displacement_mm.
xform::DisplacementField random_elastic_field(const Geometry3& geom, const ElasticSpec& spec, std::uint64_t seed);

std::pair<ImageVolume, LabelVolume> elastic_deform(const ImageVolume& img, const LabelVolume& mask,
                                                   const ElasticSpec& spec, std::uint64_t seed);

struct ManifestEntry {
    std::string source_id;
    std::uint64_t seed = 0;
    std::filesystem::path image_path;
    std::filesystem::path mask_path;
};

struct Case {
    std::string id;
    ImageVolume image;
    LabelVolume mask;
};

/// Offline expansion; writes n_output_cases pairs plus manifest.tsv into out_dir.
std::vector<ManifestEntry> elastic_expand(const std::vector<Case>& dataset, const ElasticSpec& spec,
                                          const std::filesystem::path& out_dir, std::uint64_t master_seed);

void write_manifest(const std::vector<ManifestEntry>& entries, const std::filesystem::path& path);
std::vector<ManifestEntry> read_manifest(const std::filesystem::path& path);

}  // namespace segapipe::augment
