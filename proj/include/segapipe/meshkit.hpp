#pragma once

#include <cstdint>

#include "segapipe/volgrid.hpp"

namespace segapipe::mesh {

struct SmoothingConfig {
    bool boundary_smoothing = false;
    bool feature_edge_smoothing = false;
    int iterations = 25;
    double feature_angle_deg = 120.0;
    double pass_band = 0.001;
    bool non_manifold_smoothing = true;

    void validate() const;

    static SmoothingConfig surface() { return {false, false, 25, 120.0, 0.001, true}; }
    static SmoothingConfig volumetric() { return {true, true, 30, 120.0, 0.001, true}; }
};

/// Binary marching cubes on the mask padded with one background layer.
/// Edge vertices sit halfway between voxel centres, in mm; normals face outward.
TriMesh marching_cubes(const LabelVolume& mask);

/// Windowed-sinc low-pass filter on vertex positions; topology is untouched.
TriMesh windowed_sinc_smooth(const TriMesh& mesh, const SmoothingConfig& cfg);

/// Chebyshev coefficients (window applied, summing to 1) used by the filter.
std::vector<double> windowed_sinc_coefficients(int iterations, double pass_band);

/// Caps every boundary loop: a triangle for 3-loops, a centroid fan otherwise.
TriMesh close_holes(const TriMesh& mesh);

struct WatertightReport {
    bool watertight = false;
    std::size_t boundary_edges = 0;
    std::size_t non_manifold_edges = 0;
    std::size_t inconsistent_edges = 0;
    std::int64_t euler_characteristic = 0;
};

WatertightReport check_watertight(const TriMesh& mesh);

/// Divergence-theorem volume; positive for outward-facing closed surfaces.
double signed_volume(const TriMesh& mesh);

/// Subdivided icosahedron projected on a sphere.
TriMesh make_icosphere(double radius, int subdivisions, const Vec3& center = {0, 0, 0});

}  // namespace segapipe::mesh
