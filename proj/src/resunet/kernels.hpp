#pragma once

// Voxel kernels behind the network layers. Every routine works on one batch
// item; tensors are (C, H, W, D) blocks, D fastest.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <vector>

#include "segapipe/parallel.hpp"

namespace segapipe::resunet::kernels {

struct Shape3 {
    std::int64_t h = 0, w = 0, d = 0;
    std::int64_t size() const { return h * w * d; }
};

inline Shape3 conv_output_shape(const Shape3& in, int stride) {
    return {(in.h - 1) / stride + 1, (in.w - 1) / stride + 1, (in.d - 1) / stride + 1};
}

// acc[x] += a*src[x-1] + b*src[x] + c*src[x+1] with zero padding.
template <typename Real>
inline void row_stencil(Real* __restrict acc, const Real* __restrict src, std::int64_t n, Real a, Real b, Real c) {
    if (n == 1) {
        acc[0] += b * src[0];
        return;
    }
    acc[0] += b * src[0] + c * src[1];
    for (std::int64_t x = 1; x < n - 1; ++x) acc[x] += a * src[x - 1] + b * src[x] + c * src[x + 1];
    acc[n - 1] += a * src[n - 2] + b * src[n - 1];
}

/// 3x3x3 convolution, padding 1, stride 1 or 2. w is (cout, cin, 3, 3, 3).
template <typename Real>
void conv3_forward(const Real* in, std::int64_t cin, Shape3 si, const Real* w, std::int64_t cout, int stride,
                   Real* out) {
    const Shape3 so = conv_output_shape(si, stride);
    parallel_for(0, static_cast<std::size_t>(cout), [&](std::size_t co_) {
        const auto co = static_cast<std::int64_t>(co_);
        Real* out_c = out + co * so.size();
        std::fill(out_c, out_c + so.size(), Real(0));
        for (std::int64_t oz = 0; oz < so.h; ++oz) {
            for (std::int64_t oy = 0; oy < so.w; ++oy) {
                Real* acc = out_c + (oz * so.w + oy) * so.d;
                for (std::int64_t ci = 0; ci < cin; ++ci) {
                    const Real* in_c = in + ci * si.size();
                    const Real* wk = w + (co * cin + ci) * 27;
                    for (int kz = 0; kz < 3; ++kz) {
                        const std::int64_t iz = oz * stride + kz - 1;
                        if (iz < 0 || iz >= si.h) continue;
                        for (int ky = 0; ky < 3; ++ky) {
                            const std::int64_t iy = oy * stride + ky - 1;
                            if (iy < 0 || iy >= si.w) continue;
                            const Real* row = in_c + (iz * si.w + iy) * si.d;
                            const Real* wr = wk + kz * 9 + ky * 3;
                            if (stride == 1) {
                                row_stencil(acc, row, si.d, wr[0], wr[1], wr[2]);
                            } else {
                                for (std::int64_t ox = 0; ox < so.d; ++ox) {
                                    for (int kx = 0; kx < 3; ++kx) {
                                        const std::int64_t ix = ox * stride + kx - 1;
                                        if (ix >= 0 && ix < si.d) acc[ox] += wr[kx] * row[ix];
                                    }
                                }
                            }
                        }
                    }
                }
            }
        }
    });
}

/// Gradient w.r.t. the input (accumulated into din).
template <typename Real>
void conv3_backward_input(const Real* dout, std::int64_t cout, Shape3 si, const Real* w, std::int64_t cin, int stride,
                          Real* din) {
    const Shape3 so = conv_output_shape(si, stride);
    parallel_for(0, static_cast<std::size_t>(cin), [&](std::size_t ci_) {
        const auto ci = static_cast<std::int64_t>(ci_);
        Real* din_c = din + ci * si.size();
        if (stride == 1) {
            for (std::int64_t iz = 0; iz < si.h; ++iz) {
                for (std::int64_t iy = 0; iy < si.w; ++iy) {
                    Real* acc = din_c + (iz * si.w + iy) * si.d;
                    for (std::int64_t co = 0; co < cout; ++co) {
                        const Real* dout_c = dout + co * so.size();
                        const Real* wk = w + (co * cin + ci) * 27;
                        for (int kz = 0; kz < 3; ++kz) {
                            const std::int64_t oz = iz - kz + 1;
                            if (oz < 0 || oz >= so.h) continue;
                            for (int ky = 0; ky < 3; ++ky) {
                                const std::int64_t oy = iy - ky + 1;
                                if (oy < 0 || oy >= so.w) continue;
                                const Real* wr = wk + kz * 9 + ky * 3;
                                row_stencil(acc, dout_c + (oz * so.w + oy) * so.d, so.d, wr[2], wr[1], wr[0]);
                            }
                        }
                    }
                }
            }
            return;
        }
        for (std::int64_t co = 0; co < cout; ++co) {
            const Real* dout_c = dout + co * so.size();
            const Real* wk = w + (co * cin + ci) * 27;
            for (std::int64_t oz = 0; oz < so.h; ++oz) {
                for (std::int64_t oy = 0; oy < so.w; ++oy) {
                    const Real* drow = dout_c + (oz * so.w + oy) * so.d;
                    for (int kz = 0; kz < 3; ++kz) {
                        const std::int64_t iz = oz * stride + kz - 1;
                        if (iz < 0 || iz >= si.h) continue;
                        for (int ky = 0; ky < 3; ++ky) {
                            const std::int64_t iy = oy * stride + ky - 1;
                            if (iy < 0 || iy >= si.w) continue;
                            Real* row = din_c + (iz * si.w + iy) * si.d;
                            const Real* wr = wk + kz * 9 + ky * 3;
                            for (std::int64_t ox = 0; ox < so.d; ++ox) {
                                for (int kx = 0; kx < 3; ++kx) {
                                    const std::int64_t ix = ox * stride + kx - 1;
                                    if (ix >= 0 && ix < si.d) row[ix] += wr[kx] * drow[ox];
                                }
                            }
                        }
                    }
                }
            }
        }
    });
}

/// Gradient w.r.t. the weights, accumulated into dw.
template <typename Real>
void conv3_backward_weight(const Real* dout, std::int64_t cout, Shape3 si, const Real* in, std::int64_t cin, int stride,
                           Real* dw) {
    const Shape3 so = conv_output_shape(si, stride);
    parallel_for(0, static_cast<std::size_t>(cout), [&](std::size_t co_) {
        const auto co = static_cast<std::int64_t>(co_);
        const Real* dout_c = dout + co * so.size();
        Real* dw_c = dw + co * cin * 27;
        if (stride == 1) {
            // per-tap lane accumulators, one row wide
            const std::int64_t n = si.d;
            std::vector<Real> lanes(static_cast<std::size_t>(cin * 27 * n), Real(0));
            for (std::int64_t oz = 0; oz < so.h; ++oz) {
                for (std::int64_t oy = 0; oy < so.w; ++oy) {
                    const Real* __restrict drow = dout_c + (oz * so.w + oy) * so.d;
                    for (std::int64_t ci = 0; ci < cin; ++ci) {
                        const Real* in_c = in + ci * si.size();
                        for (int kz = 0; kz < 3; ++kz) {
                            const std::int64_t iz = oz + kz - 1;
                            if (iz < 0 || iz >= si.h) continue;
                            for (int ky = 0; ky < 3; ++ky) {
                                const std::int64_t iy = oy + ky - 1;
                                if (iy < 0 || iy >= si.w) continue;
                                const Real* __restrict row = in_c + (iz * si.w + iy) * si.d;
                                Real* __restrict l0 = lanes.data() + ((ci * 27) + kz * 9 + ky * 3) * n;
                                Real* __restrict l1 = l0 + n;
                                Real* __restrict l2 = l1 + n;
                                for (std::int64_t x = 1; x < n; ++x) l0[x] += drow[x] * row[x - 1];
                                for (std::int64_t x = 0; x < n; ++x) l1[x] += drow[x] * row[x];
                                for (std::int64_t x = 0; x + 1 < n; ++x) l2[x] += drow[x] * row[x + 1];
                            }
                        }
                    }
                }
            }
            for (std::int64_t k = 0; k < cin * 27; ++k) {
                double s = 0.0;
                const Real* l = lanes.data() + k * n;
                for (std::int64_t x = 0; x < n; ++x) s += l[x];
                dw_c[k] += static_cast<Real>(s);
            }
            return;
        }
        std::vector<double> acc(static_cast<std::size_t>(cin * 27), 0.0);
        for (std::int64_t oz = 0; oz < so.h; ++oz) {
            for (std::int64_t oy = 0; oy < so.w; ++oy) {
                const Real* drow = dout_c + (oz * so.w + oy) * so.d;
                for (std::int64_t ci = 0; ci < cin; ++ci) {
                    const Real* in_c = in + ci * si.size();
                    for (int kz = 0; kz < 3; ++kz) {
                        const std::int64_t iz = oz * stride + kz - 1;
                        if (iz < 0 || iz >= si.h) continue;
                        for (int ky = 0; ky < 3; ++ky) {
                            const std::int64_t iy = oy * stride + ky - 1;
                            if (iy < 0 || iy >= si.w) continue;
                            const Real* row = in_c + (iz * si.w + iy) * si.d;
                            double* ak = acc.data() + ci * 27 + kz * 9 + ky * 3;
                            for (int kx = 0; kx < 3; ++kx) {
                                Real s = 0;
                                for (std::int64_t ox = 0; ox < so.d; ++ox) {
                                    const std::int64_t ix = ox * stride + kx - 1;
                                    if (ix >= 0 && ix < si.d) s += drow[ox] * row[ix];
                                }
                                ak[kx] += s;
                            }
                        }
                    }
                }
            }
        }
        for (std::size_t i = 0; i < acc.size(); ++i) dw_c[i] += static_cast<Real>(acc[i]);
    });
}

// Linear upsampling by 2 along the middle axis of an (outer, n, inner) block,
// half-pixel centres with edge clamping.
struct UpsampleTap {
    std::int64_t i0, i1;
    double f;
};

inline UpsampleTap upsample_tap(std::int64_t o, std::int64_t n) {
    const double src = std::clamp((static_cast<double>(o) + 0.5) * 0.5 - 0.5, 0.0, static_cast<double>(n - 1));
    const auto i0 = static_cast<std::int64_t>(std::floor(src));
    return {i0, std::min(i0 + 1, n - 1), src - static_cast<double>(i0)};
}

template <typename Real>
void upsample_axis(const Real* in, std::int64_t outer, std::int64_t n, std::int64_t inner, Real* out) {
    for (std::int64_t a = 0; a < outer; ++a) {
        for (std::int64_t o = 0; o < 2 * n; ++o) {
            const auto t = upsample_tap(o, n);
            const Real f = static_cast<Real>(t.f);
            const Real* r0 = in + (a * n + t.i0) * inner;
            const Real* r1 = in + (a * n + t.i1) * inner;
            Real* dst = out + (a * 2 * n + o) * inner;
            for (std::int64_t k = 0; k < inner; ++k) dst[k] = (Real(1) - f) * r0[k] + f * r1[k];
        }
    }
}

template <typename Real>
void upsample_axis_adjoint(const Real* dout, std::int64_t outer, std::int64_t n, std::int64_t inner, Real* din) {
    std::fill(din, din + outer * n * inner, Real(0));
    for (std::int64_t a = 0; a < outer; ++a) {
        for (std::int64_t o = 0; o < 2 * n; ++o) {
            const auto t = upsample_tap(o, n);
            const Real f = static_cast<Real>(t.f);
            const Real* src = dout + (a * 2 * n + o) * inner;
            Real* r0 = din + (a * n + t.i0) * inner;
            Real* r1 = din + (a * n + t.i1) * inner;
            for (std::int64_t k = 0; k < inner; ++k) {
                r0[k] += (Real(1) - f) * src[k];
                r1[k] += f * src[k];
            }
        }
    }
}

}  // namespace segapipe::resunet::kernels
