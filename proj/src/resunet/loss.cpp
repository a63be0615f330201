#include "segapipe/resunet/loss.hpp"

#include <algorithm>
#include <cmath>
#include <string>

namespace segapipe::resunet {

LossKind parse_loss_kind(std::string_view name) {
    if (name == "dice_focal" || name == "dice+focal") return LossKind::DiceFocal;
    if (name == "dice") return LossKind::Dice;
    if (name == "dice_ce" || name == "dice+ce" || name == "dice_cross_entropy") return LossKind::DiceCrossEntropy;
    if (name == "focal") return LossKind::Focal;
    throw ArgumentError("unknown loss variant '" + std::string(name) + "'");
}

const char* loss_kind_name(LossKind kind) {
    switch (kind) {
        case LossKind::DiceFocal: return "Dice + Focal";
        case LossKind::Dice: return "Dice";
        case LossKind::DiceCrossEntropy: return "Dice + Cross-Entropy";
        case LossKind::Focal: return "Focal";
    }
    return "?";
}

namespace {

double clamp_prob(double p) { return std::clamp(p, kProbClamp, 1.0 - kProbClamp); }

template <typename Real>
void zero_like(const Tensor5<Real>& ref, Tensor5<Real>& t) {
    t.dims = ref.dims;
    t.values.assign(ref.values.size(), Real(0));
}

// Each helper returns the loss and, when grad is non-null, adds weight * dloss/dpred.
template <typename Real>
double dice_term(const Tensor5<Real>& pred, const Tensor5<Real>& target, double eps, double weight, Tensor5<Real>* grad) {
    const std::int64_t B = pred.batch();
    const std::int64_t per = pred.channels() * pred.spatial();
    double total = 0.0;
    for (std::int64_t b = 0; b < B; ++b) {
        const Real* p = pred.values.data() + b * per;
        const Real* t = target.values.data() + b * per;
        double inter = 0.0, sum = 0.0;
        for (std::int64_t i = 0; i < per; ++i) {
            inter += static_cast<double>(p[i]) * t[i];
            sum += static_cast<double>(p[i]) + t[i];
        }
        const double num = 2.0 * inter + eps;
        const double den = sum + eps;
        total += 1.0 - num / den;
        if (grad) {
            Real* g = grad->values.data() + b * per;
            const double scale = weight / static_cast<double>(B);
            for (std::int64_t i = 0; i < per; ++i) {
                g[i] += static_cast<Real>(-scale * (2.0 * t[i] * den - num) / (den * den));
            }
        }
    }
    return total / static_cast<double>(B);
}

template <typename Real>
double focal_term(const Tensor5<Real>& pred, const Tensor5<Real>& target, double gamma, double alpha, double weight,
                  Tensor5<Real>* grad) {
    const std::size_t n = pred.values.size();
    double total = 0.0;
    const double inv_n = 1.0 / static_cast<double>(n);
    for (std::size_t i = 0; i < n; ++i) {
        const double raw = pred.values[i];
        const double p = clamp_prob(raw);
        const bool positive = target.values[i] > Real(0.5);
        const double pt = positive ? p : 1.0 - p;
        const double one_minus = 1.0 - pt;
        const double mod = gamma == 0.0 ? 1.0 : std::pow(one_minus, gamma);
        total += -alpha * mod * std::log(pt);
        if (grad && raw > kProbClamp && raw < 1.0 - kProbClamp) {
            // d/dpt of -alpha (1-pt)^g log pt, then chain through pt = p or 1 - p
            const double dmod = gamma == 0.0 ? 0.0 : gamma * std::pow(one_minus, gamma - 1.0);
            const double dpt = alpha * (dmod * std::log(pt) - mod / pt);
            grad->values[i] += static_cast<Real>(weight * inv_n * (positive ? dpt : -dpt));
        }
    }
    return total * inv_n;
}

template <typename Real>
double bce_term(const Tensor5<Real>& pred, const Tensor5<Real>& target, double weight, Tensor5<Real>* grad) {
    const std::size_t n = pred.values.size();
    const double inv_n = 1.0 / static_cast<double>(n);
    double total = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        const double raw = pred.values[i];
        const double p = clamp_prob(raw);
        const double t = target.values[i];
        total += -(t * std::log(p) + (1.0 - t) * std::log(1.0 - p));
        if (grad && raw > kProbClamp && raw < 1.0 - kProbClamp) {
            grad->values[i] += static_cast<Real>(weight * inv_n * (-(t / p) + (1.0 - t) / (1.0 - p)));
        }
    }
    return total * inv_n;
}

template <typename Real>
double evaluate(const Tensor5<Real>& pred, const Tensor5<Real>& target, const LossConfig& cfg, Tensor5<Real>* grad) {
    require_same_shape(pred, target, "loss");
    switch (cfg.kind) {
        case LossKind::DiceFocal:
            return cfg.w_dice * dice_term(pred, target, cfg.dice_eps, cfg.w_dice, grad) +
                   cfg.w_focal * focal_term(pred, target, cfg.focal_gamma, cfg.focal_alpha, cfg.w_focal, grad);
        case LossKind::Dice:
            return dice_term(pred, target, cfg.dice_eps, 1.0, grad);
        case LossKind::DiceCrossEntropy:
            return cfg.w_dice * dice_term(pred, target, cfg.dice_eps, cfg.w_dice, grad) +
                   cfg.w_focal * bce_term(pred, target, cfg.w_focal, grad);
        case LossKind::Focal:
            return focal_term(pred, target, cfg.focal_gamma, cfg.focal_alpha, 1.0, grad);
    }
    throw ArgumentError("unknown loss variant");
}

}  // namespace

template <typename Real>
double soft_dice_loss(const Tensor5<Real>& pred, const Tensor5<Real>& target, double eps) {
    require_same_shape(pred, target, "soft_dice_loss");
    return dice_term<Real>(pred, target, eps, 1.0, nullptr);
}

template <typename Real>
double focal_loss(const Tensor5<Real>& pred, const Tensor5<Real>& target, double gamma, double alpha) {
    require_same_shape(pred, target, "focal_loss");
    return focal_term<Real>(pred, target, gamma, alpha, 1.0, nullptr);
}

template <typename Real>
double cross_entropy_loss(const Tensor5<Real>& pred, const Tensor5<Real>& target) {
    require_same_shape(pred, target, "cross_entropy_loss");
    return bce_term<Real>(pred, target, 1.0, nullptr);
}

template <typename Real>
double combined_loss(const Tensor5<Real>& pred, const Tensor5<Real>& target, const LossConfig& cfg) {
    return evaluate<Real>(pred, target, cfg, nullptr);
}

template <typename Real>
double combined_loss_grad(const Tensor5<Real>& pred, const Tensor5<Real>& target, const LossConfig& cfg,
                          Tensor5<Real>& grad) {
    require_same_shape(pred, target, "loss");
    zero_like(pred, grad);
    return evaluate<Real>(pred, target, cfg, &grad);
}

#define SEGAPIPE_INSTANTIATE_LOSS(Real)                                                                    \
    template double soft_dice_loss(const Tensor5<Real>&, const Tensor5<Real>&, double);                     \
    template double focal_loss(const Tensor5<Real>&, const Tensor5<Real>&, double, double);                 \
    template double cross_entropy_loss(const Tensor5<Real>&, const Tensor5<Real>&);                         \
    template double combined_loss(const Tensor5<Real>&, const Tensor5<Real>&, const LossConfig&);           \
    template double combined_loss_grad(const Tensor5<Real>&, const Tensor5<Real>&, const LossConfig&,       \
                                       Tensor5<Real>&);

SEGAPIPE_INSTANTIATE_LOSS(float)
SEGAPIPE_INSTANTIATE_LOSS(double)

}  // namespace segapipe::resunet
