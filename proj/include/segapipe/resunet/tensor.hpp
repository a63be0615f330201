#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <string>
#include <vector>

#include "segapipe/errors.hpp"

namespace segapipe::resunet {

/// Dense (B, C, H, W, D) tensor, D fastest. Volumes map as H = z, W = y, D = x
/// so the x-fastest voxel order carries over without a transpose.
template <typename Real>
struct Tensor5 {
    std::array<std::int64_t, 5> dims{0, 0, 0, 0, 0};
    std::vector<Real> values;

    Tensor5() = default;
    Tensor5(std::int64_t b, std::int64_t c, std::int64_t h, std::int64_t w, std::int64_t d, Real fill = Real(0))
        : dims{b, c, h, w, d}, values(static_cast<std::size_t>(b * c * h * w * d), fill) {}

    std::int64_t batch() const { return dims[0]; }
    std::int64_t channels() const { return dims[1]; }
    std::int64_t spatial() const { return dims[2] * dims[3] * dims[4]; }
    std::size_t size() const { return values.size(); }

    Real* plane(std::int64_t b, std::int64_t c) { return values.data() + (b * dims[1] + c) * spatial(); }
    const Real* plane(std::int64_t b, std::int64_t c) const { return values.data() + (b * dims[1] + c) * spatial(); }

    bool same_shape(const Tensor5& o) const { return dims == o.dims; }
};

template <typename Real>
std::string shape_string(const Tensor5<Real>& t) {
    std::string s = "(";
    for (std::size_t i = 0; i < 5; ++i) s += std::to_string(t.dims[i]) + (i < 4 ? "," : ")");
    return s;
}

template <typename Real>
void require_same_shape(const Tensor5<Real>& a, const Tensor5<Real>& b, const char* what) {
    if (!a.same_shape(b)) throw ShapeError(std::string(what) + ": shape " + shape_string(a) + " vs " + shape_string(b));
}

}  // namespace segapipe::resunet
