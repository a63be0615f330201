#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "segapipe/resunet/tensor.hpp"

namespace segapipe::resunet {

/// Reference 3-D residual encoder-decoder.
///
/// Encoder level 0 is a stem conv; level l > 0 starts with a stride-2 conv that
/// halves every spatial axis and doubles the width (base_channels * 2^l).
/// Each level then runs `blocks_per_level` residual blocks
/// (conv-norm-act-conv-norm, identity add, act). The decoder upsamples
/// trilinearly by 2, concatenates the encoder skip, fuses with a conv and runs
/// the same residual blocks. A 1x1x1 conv and a sigmoid give the output.
/// Convolutions feeding an instance norm carry no bias (the norm removes it).
struct NetConfig {
    int levels = 3;
    int base_channels = 8;
    int blocks_per_level = 1;
    double leaky_slope = 0.01;
    double norm_eps = 1e-5;

    void validate() const;
    /// Spatial dims must be divisible by this.
    std::int64_t divisor() const { return std::int64_t{1} << (levels - 1); }
    bool operator==(const NetConfig&) const = default;
};

struct ParamSpec {
    std::string name;
    std::vector<std::int64_t> shape;
    std::size_t numel() const;
};

/// Parameter tensors in declaration order.
std::vector<ParamSpec> param_layout(const NetConfig& cfg);

template <typename Real>
struct ModelParams {
    NetConfig cfg;
    std::vector<std::vector<Real>> tensors;

    std::size_t tensor_count() const { return tensors.size(); }
    std::size_t numel() const;

    static ModelParams zeros(const NetConfig& cfg);
    /// He-normal conv weights, unit norm scales, zero shifts and head bias.
    static ModelParams initialize(const NetConfig& cfg, std::uint64_t seed);

    template <typename Other>
    ModelParams<Other> cast() const {
        ModelParams<Other> out;
        out.cfg = cfg;
        for (const auto& t : tensors) out.tensors.emplace_back(t.begin(), t.end());
        return out;
    }

    /// Throws NumericalError naming the first non-finite tensor.
    void check_finite() const;
};

/// Gradients share the parameter layout.
template <typename Real>
using Gradients = ModelParams<Real>;

/// Forward pass; x must have C = 1 and spatial dims divisible by cfg.divisor().
template <typename Real>
Tensor5<Real> forward(const ModelParams<Real>& params, const Tensor5<Real>& x);

enum class LossKind { DiceFocal, Dice, DiceCrossEntropy, Focal };

struct LossConfig {
    LossKind kind = LossKind::DiceFocal;
    double w_dice = 1.0;
    double w_focal = 1.0;
    double focal_gamma = 2.0;
    double focal_alpha = 1.0;
    double dice_eps = 1e-5;
};

template <typename Real>
struct BackwardResult {
    double loss = 0.0;
    Tensor5<Real> prediction;
    Gradients<Real> grads;
};

/// Exact reverse-mode gradients of the configured loss w.r.t. every parameter.
template <typename Real>
BackwardResult<Real> backward(const ModelParams<Real>& params, const Tensor5<Real>& x, const Tensor5<Real>& target,
                              const LossConfig& loss);

}  // namespace segapipe::resunet
