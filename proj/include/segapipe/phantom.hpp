#pragma once

#include <cstdint>
#include <utility>
#include <vector>

#include "segapipe/volgrid.hpp"

namespace segapipe {

struct PhantomSpec {
    Dims dims{64, 64, 64};
    Vec3 spacing{1.0, 1.0, 1.0};
    double lumen_hu = 300.0;
    double background_hu = -50.0;
    double noise_hu = 20.0;
    /// Spine-like bright cylinder and a dimmer chamber blob outside the mask.
    bool distractors = true;
};

struct TubeSegment {
    Vec3 a, b;  // mm
    double radius_mm;
};

struct Phantom {
    ImageVolume image;
    LabelVolume mask;
    std::vector<TubeSegment> centerline;  // aorta polyline
    std::vector<TubeSegment> branches;
    double main_radius_mm = 0.0;
    double main_length_mm = 0.0;
    /// Capsule volume of the main tube plus branch cylinders outside it.
    double analytic_volume_mm3 = 0.0;
};

/// Curved aorta-like tube (ascending limb, arch, descending limb) with 2-4
/// thin branches leaving the arch; deterministic per seed.
Phantom make_phantom(std::uint64_t seed, const PhantomSpec& spec = {});

}  // namespace segapipe
