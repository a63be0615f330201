#pragma once

#include <array>
#include <string>
#include <vector>

#include "segapipe/volgrid.hpp"

namespace segapipe::metrics {

/// 2|A n B| / (|A| + |B|); two empty masks score 1.
double dice(const LabelVolume& a, const LabelVolume& b);

enum class HdMode { Pooled, Max };
HdMode parse_hd_mode(const std::string& name);

/// Foreground voxels with a face neighbour that is background or outside.
std::vector<std::uint8_t> surface_voxels(const LabelVolume& mask);

/// Exact squared Euclidean distance (mm^2) to the nearest nonzero site.
/// Returns +inf everywhere when there is no site.
std::vector<double> squared_edt(const std::vector<std::uint8_t>& sites, const Geometry3& geom);

/// Linear interpolation between closest ranks (values need not be sorted).
double percentile(std::vector<double> values, double q);

/// 95th percentile surface distance in mm.
double hd95(const LabelVolume& a, const LabelVolume& b, HdMode mode = HdMode::Pooled);

struct SegScore {
    double dice = 0.0;
    double hd95_mm = 0.0;
};

SegScore score(const LabelVolume& prediction, const LabelVolume& truth, HdMode mode = HdMode::Pooled);

/// Min over corners of the edge-length normalised corner determinant, scaled
/// by sqrt(2) so that a regular tetrahedron scores 1.
double scaled_jacobian(const std::array<Vec3, 4>& nodes);
/// Normalised determinant at one corner (0..3), without the sqrt(2) factor.
double corner_jacobian(const std::array<Vec3, 4>& nodes, int corner);

struct TetQuality {
    std::size_t tet_count = 0;
    std::size_t inverted_count = 0;
    double median_jac = 0.0;
    double jac_variance = 0.0;
    double jac_skewness = 0.0;
};

TetQuality tet_quality_report(const TetMesh& mesh);

}  // namespace segapipe::metrics
