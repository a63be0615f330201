#pragma once

#include <string_view>

#include "segapipe/resunet/model.hpp"

namespace segapipe::resunet {

inline constexpr double kProbClamp = 1e-7;

LossKind parse_loss_kind(std::string_view name);
const char* loss_kind_name(LossKind kind);

/// 1 - (2 sum(p t) + eps) / (sum p + sum t + eps), per batch item, averaged.
template <typename Real>
double soft_dice_loss(const Tensor5<Real>& pred, const Tensor5<Real>& target, double eps = 1e-5);

/// Mean over voxels of -alpha (1 - p_t)^gamma log p_t, p clamped to [1e-7, 1 - 1e-7].
template <typename Real>
double focal_loss(const Tensor5<Real>& pred, const Tensor5<Real>& target, double gamma = 2.0, double alpha = 1.0);

/// Mean binary cross-entropy with the same clamp.
template <typename Real>
double cross_entropy_loss(const Tensor5<Real>& pred, const Tensor5<Real>& target);

/// Dice+Focal (default), Dice, Dice+CE or Focal according to cfg.kind.
template <typename Real>
double combined_loss(const Tensor5<Real>& pred, const Tensor5<Real>& target, const LossConfig& cfg);

/// Loss value plus d(loss)/d(pred) written into grad (resized to pred's shape).
template <typename Real>
double combined_loss_grad(const Tensor5<Real>& pred, const Tensor5<Real>& target, const LossConfig& cfg,
                          Tensor5<Real>& grad);

}  // namespace segapipe::resunet
