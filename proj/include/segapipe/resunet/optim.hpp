#pragma once

#include <cstdint>

#include "segapipe/resunet/model.hpp"

namespace segapipe::resunet {

struct AdamWConfig {
    double lr = 0.001;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
    double weight_decay = 0.005;
};

/// First and second moments plus the step counter.
template <typename Real>
struct AdamWState {
    Gradients<Real> m;
    Gradients<Real> v;
    std::int64_t step = 0;

    static AdamWState zeros_like(const ModelParams<Real>& params);
};

/// One AdamW update: p <- p - lr * wd * p - lr * m_hat / (sqrt(v_hat) + eps).
/// Throws NumericalError on non-finite gradients or parameters.
template <typename Real>
void adamw_step(ModelParams<Real>& params, const Gradients<Real>& grads, AdamWState<Real>& state,
                const AdamWConfig& cfg);

/// Elementwise clamp to [-clip_value, clip_value], then global rescale by
/// min(1, clip_norm / ||g||_2).
template <typename Real>
void clip_gradients(Gradients<Real>& grads, double clip_value = 2.0, double clip_norm = 10.0);

template <typename Real>
double global_norm(const Gradients<Real>& grads);

/// lr0 * decay^epoch
double learning_rate(double lr0, double decay, int epoch);

}  // namespace segapipe::resunet
