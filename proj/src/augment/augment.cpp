#include "segapipe/augment.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

#include "segapipe/errors.hpp"
#include "segapipe/rng.hpp"

namespace segapipe::augment {

namespace {

constexpr double kDegToRad = std::numbers::pi / 180.0;
constexpr double kMotionMaxRotationDeg = 3.0;

void check_range(const Range& r, const char* name) {
    if (!(r.lo <= r.hi)) throw ArgumentError(std::string("augmentation range ") + name + " has lo > hi");
}

Vec3 physical_center(const Geometry3& g) {
    const auto& d = g.dims();
    return g.voxel_to_mm({0.5 * static_cast<double>(d.nx - 1), 0.5 * static_cast<double>(d.ny - 1),
                          0.5 * static_cast<double>(d.nz - 1)});
}

// Separable Gaussian on a scalar field with replicate borders; sigma in voxels per axis.
void blur_in_place(std::vector<float>& data, const Dims& d, const Vec3& sigma_vox) {
    std::vector<float> line;
    for (int axis = 0; axis < 3; ++axis) {
        const double sigma = sigma_vox[axis];
        if (sigma < 1e-6 || d[axis] < 2) continue;
        const int radius = static_cast<int>(std::ceil(3.0 * sigma));
        std::vector<double> kernel(2 * radius + 1);
        double total = 0.0;
        for (int k = -radius; k <= radius; ++k) {
            kernel[k + radius] = std::exp(-0.5 * (k * k) / (sigma * sigma));
            total += kernel[k + radius];
        }
        for (auto& k : kernel) k /= total;

        const std::int64_t n = d[axis];
        const std::int64_t stride = axis == 0 ? 1 : (axis == 1 ? d.nx : d.nx * d.ny);
        const std::int64_t lines = static_cast<std::int64_t>(d.count()) / n;
        line.resize(static_cast<std::size_t>(n));
        for (std::int64_t l = 0; l < lines; ++l) {
            // base offset of line l: decompose over the two other axes
            std::int64_t base = 0;
            if (axis == 0) base = l * d.nx;
            else if (axis == 1) base = (l / d.nx) * d.nx * d.ny + (l % d.nx);
            else base = l;
            for (std::int64_t i = 0; i < n; ++i) line[static_cast<std::size_t>(i)] = data[static_cast<std::size_t>(base + i * stride)];
            for (std::int64_t i = 0; i < n; ++i) {
                double acc = 0.0;
                for (int k = -radius; k <= radius; ++k) {
                    const std::int64_t j = std::clamp<std::int64_t>(i + k, 0, n - 1);
                    acc += kernel[k + radius] * line[static_cast<std::size_t>(j)];
                }
                data[static_cast<std::size_t>(base + i * stride)] = static_cast<float>(acc);
            }
        }
    }
}

Mat3 axis_angle(Vec3 axis, double angle) {
    const double len = std::sqrt(axis[0] * axis[0] + axis[1] * axis[1] + axis[2] * axis[2]);
    if (len == 0.0) return identity3();
    for (auto& a : axis) a /= len;
    const double c = std::cos(angle), s = std::sin(angle), t = 1.0 - c;
    const double x = axis[0], y = axis[1], z = axis[2];
    return {t * x * x + c,     t * x * y - s * z, t * x * z + s * y, t * x * y + s * z, t * y * y + c,
            t * y * z - s * x, t * x * z - s * y, t * y * z + s * x, t * z * z + c};
}

Vec3 random_unit(Rng& rng) {
    for (;;) {
        Vec3 v{rng.normal(), rng.normal(), rng.normal()};
        const double len = std::sqrt(v[0] * v[0] + v[1] * v[1] + v[2] * v[2]);
        if (len > 1e-12) return {v[0] / len, v[1] / len, v[2] / len};
    }
}

template <typename Volume>
Volume flip_impl(const Volume& vol, int axis) {
    if (axis < 0 || axis > 2) throw ArgumentError("flip axis must be 0, 1 or 2");
    Volume out = vol;
    const auto& d = vol.geom.dims();
    for (std::int64_t z = 0; z < d.nz; ++z) {
        for (std::int64_t y = 0; y < d.ny; ++y) {
            for (std::int64_t x = 0; x < d.nx; ++x) {
                const std::int64_t sx = axis == 0 ? d.nx - 1 - x : x;
                const std::int64_t sy = axis == 1 ? d.ny - 1 - y : y;
                const std::int64_t sz = axis == 2 ? d.nz - 1 - z : z;
                out.voxels[vol.geom.flatten(x, y, z)] = vol.voxels[vol.geom.flatten(sx, sy, sz)];
            }
        }
    }
    return out;
}

}  // namespace

const char* transform_name(Transform t) {
    switch (t) {
        case Transform::Affine: return "affine";
        case Transform::Intensity: return "intensity";
        case Transform::Noise: return "noise";
        case Transform::Flip: return "flip";
        case Transform::Motion: return "motion";
        case Transform::Anisotropy: return "anisotropy";
        case Transform::Blur: return "blur";
    }
    return "?";
}

void AugmentationSpec::validate() const {
    check_range(rotation_deg, "rotation_deg");
    check_range(scale, "scale");
    check_range(translation_mm, "translation_mm");
    check_range(gamma, "gamma");
    check_range(noise_std, "noise_std");
    check_range(anisotropy_factor, "anisotropy_factor");
    check_range(blur_sigma_mm, "blur_sigma_mm");
    if (!(apply_probability >= 0.0 && apply_probability <= 1.0)) throw ArgumentError("apply_probability must be in [0,1]");
    if (!(flip_axis_probability >= 0.0 && flip_axis_probability <= 1.0)) {
        throw ArgumentError("flip_axis_probability must be in [0,1]");
    }
    if (scale.lo <= 0.0) throw ArgumentError("scale range must be positive");
    if (gamma.lo <= 0.0) throw ArgumentError("gamma range must be positive");
    if (noise_std.lo < 0.0 || blur_sigma_mm.lo < 0.0) throw ArgumentError("noise/blur ranges must be non-negative");
    if (anisotropy_factor.lo <= 1.0) throw ArgumentError("anisotropy factor range must exceed 1");
    if (motion_ghosts_min < 1 || motion_ghosts_max < motion_ghosts_min) throw ArgumentError("bad motion ghost range");
    if (motion_magnitude_mm < 0.0) throw ArgumentError("motion magnitude must be >= 0");
}

AugmentationSpec AugmentationSpec::none() {
    AugmentationSpec s;
    s.enabled.fill(false);
    return s;
}

AugmentationSpec AugmentationSpec::geometric_only() {
    AugmentationSpec s = none();
    s.enabled[static_cast<int>(Transform::Affine)] = true;
    s.enabled[static_cast<int>(Transform::Flip)] = true;
    return s;
}

AugmentationSpec AugmentationSpec::intensity_only() {
    AugmentationSpec s;
    s.enabled[static_cast<int>(Transform::Affine)] = false;
    s.enabled[static_cast<int>(Transform::Flip)] = false;
    return s;
}

ImageVolume adjust_gamma(const ImageVolume& img, double gamma) {
    if (!(gamma > 0.0)) throw ArgumentError("gamma must be > 0");
    ImageVolume out = img;
    for (auto& v : out.voxels) v = static_cast<float>(std::pow(std::max(0.0f, v), gamma));
    return out;
}

ImageVolume add_gaussian_noise(const ImageVolume& img, double stddev, std::uint64_t seed) {
    if (stddev < 0.0) throw ArgumentError("noise stddev must be >= 0");
    ImageVolume out = img;
    Rng rng(seed);
    for (auto& v : out.voxels) v = static_cast<float>(v + stddev * rng.normal());
    return out;
}

ImageVolume flip(const ImageVolume& img, int axis) { return flip_impl(img, axis); }
LabelVolume flip(const LabelVolume& mask, int axis) { return flip_impl(mask, axis); }

ImageVolume gaussian_blur(const ImageVolume& img, const Vec3& sigma_mm) {
    ImageVolume out = img;
    const auto& sp = img.geom.spacing();
    blur_in_place(out.voxels, img.geom.dims(), {sigma_mm[0] / sp[0], sigma_mm[1] / sp[1], sigma_mm[2] / sp[2]});
    return out;
}

ImageVolume random_motion(const ImageVolume& img, int n_ghosts, double magnitude_mm, std::uint64_t seed) {
    if (n_ghosts < 1) throw ArgumentError("random_motion requires n_ghosts >= 1");
    if (magnitude_mm < 0.0) throw ArgumentError("motion magnitude must be >= 0");
    Rng rng(seed);
    const Vec3 center = physical_center(img.geom);
    const Vec3 corner = img.geom.voxel_to_mm({0, 0, 0});
    const double half_diag = std::sqrt((center[0] - corner[0]) * (center[0] - corner[0]) +
                                       (center[1] - corner[1]) * (center[1] - corner[1]) +
                                       (center[2] - corner[2]) * (center[2] - corner[2])) +
                             1e-12;
    const double max_angle = std::min(kMotionMaxRotationDeg * kDegToRad, magnitude_mm / half_diag);

    std::vector<double> raw_weights{static_cast<double>(n_ghosts)};
    std::vector<ImageVolume> copies;
    for (int g = 0; g < n_ghosts; ++g) {
        const Vec3 axis = random_unit(rng);
        const double angle = rng.uniform(-max_angle, max_angle);
        const Vec3 dir = random_unit(rng);
        const double shift = rng.uniform(0.0, magnitude_mm);
        raw_weights.push_back(rng.uniform(0.25, 1.0));
        const Mat3 r = axis_angle(axis, angle);
        Vec3 t{};
        for (int i = 0; i < 3; ++i) {
            double rc = 0.0;
            for (int k = 0; k < 3; ++k) rc += r[i * 3 + k] * center[k];
            t[i] = center[i] - rc + dir[i] * shift;
        }
        copies.push_back(xform::warp(img, xform::AffineTransform3(r, t), xform::Interp::Trilinear, xform::border_value(img)));
    }
    double total = 0.0;
    for (double w : raw_weights) total += w;

    ImageVolume out = img;
    const double w0 = raw_weights[0] / total;
    for (std::size_t i = 0; i < out.voxels.size(); ++i) {
        double acc = w0 * img.voxels[i];
        for (int g = 0; g < n_ghosts; ++g) acc += raw_weights[g + 1] / total * copies[g].voxels[i];
        out.voxels[i] = static_cast<float>(acc);
    }
    return out;
}

ImageVolume random_anisotropy(const ImageVolume& img, int axis, double factor) {
    if (axis < 0 || axis > 2) throw ArgumentError("anisotropy axis must be 0, 1 or 2");
    if (!(factor > 1.0)) throw ArgumentError("anisotropy factor must be > 1");
    Dims low = img.geom.dims();
    low[axis] = std::max<std::int64_t>(1, std::llround(static_cast<double>(low[axis]) / factor));
    const ImageVolume down = xform::resample(img, low, xform::Interp::Trilinear);
    ImageVolume up = xform::resample(down, img.geom.dims(), xform::Interp::Trilinear);
    up.geom = img.geom;
    up.element_type = img.element_type;
    return up;
}

std::pair<ImageVolume, LabelVolume> augment_pair(const ImageVolume& img, const LabelVolume& mask,
                                                 const AugmentationSpec& spec, std::uint64_t seed,
                                                 AugmentationTrace* trace) {
    if (!img.geom.same_as(mask.geom)) throw ArgumentError("image and mask geometry differ");
    spec.validate();

    Rng rng(seed);
    std::array<int, kTransformCount> order{};
    for (int i = 0; i < kTransformCount; ++i) order[i] = i;
    for (int i = kTransformCount - 1; i > 0; --i) {
        const auto j = static_cast<int>(rng.below(static_cast<std::uint64_t>(i + 1)));
        std::swap(order[i], order[j]);
    }

    ImageVolume out_img = img;
    LabelVolume out_mask = mask;
    if (trace) {
        trace->order.clear();
        trace->fired.clear();
    }

    for (int idx : order) {
        const auto t = static_cast<Transform>(idx);
        // coin and parameter seed are drawn for every transform
        const bool coin = rng.bernoulli(spec.apply_probability);
        const std::uint64_t param_seed = rng.next();
        const bool fires = coin && spec.enabled[idx];
        if (trace) {
            trace->order.push_back(t);
            trace->fired.push_back(fires);
        }
        if (!fires) continue;

        Rng p(param_seed);
        switch (t) {
            case Transform::Affine: {
                const Vec3 euler{p.uniform(spec.rotation_deg.lo, spec.rotation_deg.hi) * kDegToRad,
                                 p.uniform(spec.rotation_deg.lo, spec.rotation_deg.hi) * kDegToRad,
                                 p.uniform(spec.rotation_deg.lo, spec.rotation_deg.hi) * kDegToRad};
                const Vec3 scale{p.uniform(spec.scale.lo, spec.scale.hi), p.uniform(spec.scale.lo, spec.scale.hi),
                                 p.uniform(spec.scale.lo, spec.scale.hi)};
                const Vec3 shift{p.uniform(spec.translation_mm.lo, spec.translation_mm.hi),
                                 p.uniform(spec.translation_mm.lo, spec.translation_mm.hi),
                                 p.uniform(spec.translation_mm.lo, spec.translation_mm.hi)};
                const auto a = xform::AffineTransform3::about_center(physical_center(img.geom), euler, scale, shift);
                out_img = xform::warp(out_img, a, xform::Interp::Trilinear);
                out_mask = xform::warp(out_mask, a);
                break;
            }
            case Transform::Intensity: {
                const double g = std::exp(p.uniform(std::log(spec.gamma.lo), std::log(spec.gamma.hi)));
                out_img = adjust_gamma(out_img, g);
                break;
            }
            case Transform::Noise:
                out_img = add_gaussian_noise(out_img, p.uniform(spec.noise_std.lo, spec.noise_std.hi), p.next());
                break;
            case Transform::Flip:
                for (int axis = 0; axis < 3; ++axis) {
                    if (spec.flip_axes[axis] && p.bernoulli(spec.flip_axis_probability)) {
                        out_img = flip(out_img, axis);
                        out_mask = flip(out_mask, axis);
                    }
                }
                break;
            case Transform::Motion: {
                const int span = spec.motion_ghosts_max - spec.motion_ghosts_min + 1;
                const int n = spec.motion_ghosts_min + static_cast<int>(p.below(static_cast<std::uint64_t>(span)));
                out_img = random_motion(out_img, n, spec.motion_magnitude_mm, p.next());
                break;
            }
            case Transform::Anisotropy: {
                std::vector<int> axes;
                for (int a = 0; a < 3; ++a) {
                    if (spec.anisotropy_axes[a]) axes.push_back(a);
                }
                if (axes.empty()) break;
                const int axis = axes[p.below(axes.size())];
                out_img = random_anisotropy(out_img, axis, p.uniform(spec.anisotropy_factor.lo, spec.anisotropy_factor.hi));
                break;
            }
            case Transform::Blur: {
                const Vec3 sigma{p.uniform(spec.blur_sigma_mm.lo, spec.blur_sigma_mm.hi),
                                 p.uniform(spec.blur_sigma_mm.lo, spec.blur_sigma_mm.hi),
                                 p.uniform(spec.blur_sigma_mm.lo, spec.blur_sigma_mm.hi)};
                out_img = gaussian_blur(out_img, sigma);
                break;
            }
        }
    }

    for (auto& v : out_img.voxels) v = std::clamp(v, 0.0f, 1.0f);
    return {std::move(out_img), std::move(out_mask)};
}

void ElasticSpec::validate() const {
    for (int g : control_grid) {
        if (g < 2) throw ArgumentError("elastic control grid needs >= 2 points per axis");
    }
    if (max_displacement_mm < 0.0) throw ArgumentError("max displacement must be >= 0");
    if (smoothing_sigma_mm < 0.0) throw ArgumentError("smoothing sigma must be >= 0");
    if (n_output_cases < 0) throw ArgumentError("n_output_cases must be >= 0");
}

xform::DisplacementField random_elastic_field(const Geometry3& geom, const ElasticSpec& spec, std::uint64_t seed) {
    spec.validate();
    xform::DisplacementField field(geom);
    if (spec.max_displacement_mm == 0.0) return field;

    Rng rng(seed);
    const auto& cg = spec.control_grid;
    const Geometry3 control_geom({cg[0], cg[1], cg[2]}, {1, 1, 1});
    std::array<ImageVolume, 3> control;
    for (auto& c : control) c = ImageVolume(control_geom, IntensityDomain::HU);
    for (std::size_t i = 0; i < control_geom.voxel_count(); ++i) {
        for (auto& c : control) c.voxels[i] = static_cast<float>(rng.uniform(-1.0, 1.0));
    }

    const auto& d = geom.dims();
    const auto& sp = geom.spacing();
    std::array<std::vector<float>, 3> comp;
    for (int k = 0; k < 3; ++k) {
        comp[k].resize(geom.voxel_count());
        for (std::int64_t z = 0; z < d.nz; ++z) {
            for (std::int64_t y = 0; y < d.ny; ++y) {
                for (std::int64_t x = 0; x < d.nx; ++x) {
                    // control points span the lattice corner to corner
                    auto coord = [&](std::int64_t i, int axis) {
                        return d[axis] > 1 ? static_cast<double>(i) * (cg[axis] - 1) / static_cast<double>(d[axis] - 1) : 0.0;
                    };
                    comp[k][geom.flatten(x, y, z)] = xform::sample(control[k], {coord(x, 0), coord(y, 1), coord(z, 2)},
                                                                   xform::Interp::Trilinear, 0.0f);
                }
            }
        }
        blur_in_place(comp[k], d, {spec.smoothing_sigma_mm / sp[0], spec.smoothing_sigma_mm / sp[1],
                                   spec.smoothing_sigma_mm / sp[2]});
    }

    double max_norm = 0.0;
    for (std::size_t i = 0; i < field.vectors.size(); ++i) {
        const double n2 = double(comp[0][i]) * comp[0][i] + double(comp[1][i]) * comp[1][i] + double(comp[2][i]) * comp[2][i];
        max_norm = std::max(max_norm, std::sqrt(n2));
    }
    const double scale = max_norm > 0.0 ? spec.max_displacement_mm / max_norm : 0.0;
    for (std::size_t i = 0; i < field.vectors.size(); ++i) {
        field.vectors[i] = {comp[0][i] * scale, comp[1][i] * scale, comp[2][i] * scale};
    }
    return field;
}

std::pair<ImageVolume, LabelVolume> elastic_deform(const ImageVolume& img, const LabelVolume& mask,
                                                   const ElasticSpec& spec, std::uint64_t seed) {
    if (!img.geom.same_as(mask.geom)) throw ArgumentError("image and mask geometry differ");
    if (spec.max_displacement_mm == 0.0) {
        spec.validate();
        return {img, mask};
    }
    const auto field = random_elastic_field(img.geom, spec, seed);
    return {xform::warp(img, field, xform::Interp::Trilinear), xform::warp(mask, field)};
}

}  // namespace segapipe::augment
