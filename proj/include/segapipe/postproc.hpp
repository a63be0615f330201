#pragma once

#include "segapipe/volgrid.hpp"

namespace segapipe::postproc {

inline constexpr double kDefaultThreshold = 0.5;

/// voxel >= t -> 1. The image must carry probabilities.
LabelVolume threshold(const ImageVolume& prob, double t = kDefaultThreshold);

/// Component labels (0 = background, 1.. in order of first scan-order voxel)
/// under 6-, 18- or 26-connectivity. Returns the number of components.
int label_components(const LabelVolume& mask, std::vector<std::int32_t>& labels, int connectivity = 26);

/// Keeps only the largest component; ties go to the one seen first in scan order.
LabelVolume largest_component(const LabelVolume& mask, int connectivity = 26);

/// radius-fold dilation with the 6-neighbourhood.
LabelVolume dilate(const LabelVolume& mask, int radius_voxels = 1);

}  // namespace segapipe::postproc
