#include "segapipe/resunet/optim.hpp"

#include <algorithm>
#include <cmath>

namespace segapipe::resunet {

template <typename Real>
AdamWState<Real> AdamWState<Real>::zeros_like(const ModelParams<Real>& params) {
    AdamWState s;
    s.m = Gradients<Real>::zeros(params.cfg);
    s.v = Gradients<Real>::zeros(params.cfg);
    return s;
}

template <typename Real>
void adamw_step(ModelParams<Real>& params, const Gradients<Real>& grads, AdamWState<Real>& state,
                const AdamWConfig& cfg) {
    if (grads.tensors.size() != params.tensors.size() || state.m.tensors.size() != params.tensors.size()) {
        throw ShapeError("adamw_step: parameter/gradient/state layouts differ");
    }
    grads.check_finite();
    state.step += 1;
    const double t = static_cast<double>(state.step);
    const double bc1 = 1.0 - std::pow(cfg.beta1, t);
    const double bc2 = 1.0 - std::pow(cfg.beta2, t);
    for (std::size_t k = 0; k < params.tensors.size(); ++k) {
        auto& p = params.tensors[k];
        const auto& g = grads.tensors[k];
        auto& m = state.m.tensors[k];
        auto& v = state.v.tensors[k];
        if (g.size() != p.size()) throw ShapeError("adamw_step: tensor size mismatch");
        for (std::size_t i = 0; i < p.size(); ++i) {
            const double gi = g[i];
            const double mi = cfg.beta1 * m[i] + (1.0 - cfg.beta1) * gi;
            const double vi = cfg.beta2 * v[i] + (1.0 - cfg.beta2) * gi * gi;
            m[i] = static_cast<Real>(mi);
            v[i] = static_cast<Real>(vi);
            const double m_hat = mi / bc1;
            const double v_hat = vi / bc2;
            const double pi = p[i];
            p[i] = static_cast<Real>(pi - cfg.lr * cfg.weight_decay * pi - cfg.lr * m_hat / (std::sqrt(v_hat) + cfg.eps));
        }
    }
    params.check_finite();
}

template <typename Real>
double global_norm(const Gradients<Real>& grads) {
    double ss = 0.0;
    for (const auto& t : grads.tensors) {
        for (Real v : t) ss += static_cast<double>(v) * v;
    }
    return std::sqrt(ss);
}

template <typename Real>
void clip_gradients(Gradients<Real>& grads, double clip_value, double clip_norm) {
    const Real cv = static_cast<Real>(clip_value);
    for (auto& t : grads.tensors) {
        for (auto& v : t) v = std::clamp(v, -cv, cv);
    }
    const double norm = global_norm(grads);
    if (norm > clip_norm && norm > 0.0) {
        const double scale = clip_norm / norm;
        for (auto& t : grads.tensors) {
            for (auto& v : t) v = static_cast<Real>(v * scale);
        }
    }
}

double learning_rate(double lr0, double decay, int epoch) { return lr0 * std::pow(decay, epoch); }

template struct AdamWState<float>;
template struct AdamWState<double>;
template void adamw_step(ModelParams<float>&, const Gradients<float>&, AdamWState<float>&, const AdamWConfig&);
template void adamw_step(ModelParams<double>&, const Gradients<double>&, AdamWState<double>&, const AdamWConfig&);
template void clip_gradients(Gradients<float>&, double, double);
template void clip_gradients(Gradients<double>&, double, double);
template double global_norm(const Gradients<float>&);
template double global_norm(const Gradients<double>&);

}  // namespace segapipe::resunet
