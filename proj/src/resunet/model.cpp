#include "segapipe/resunet/model.hpp"

#include <cmath>
#include <functional>
#include <numeric>

#include "kernels.hpp"
#include "segapipe/resunet/loss.hpp"
#include "segapipe/rng.hpp"

namespace segapipe::resunet {

using kernels::Shape3;

void NetConfig::validate() const {
    if (levels < 1) throw ArgumentError("levels must be >= 1");
    if (base_channels < 1) throw ArgumentError("base_channels must be >= 1");
    if (blocks_per_level < 0) throw ArgumentError("blocks_per_level must be >= 0");
    if (!(leaky_slope >= 0.0)) throw ArgumentError("leaky_slope must be >= 0");
    if (!(norm_eps > 0.0)) throw ArgumentError("norm_eps must be > 0");
}

std::size_t ParamSpec::numel() const {
    return static_cast<std::size_t>(
        std::accumulate(shape.begin(), shape.end(), std::int64_t{1}, std::multiplies<>()));
}

namespace {

std::int64_t width(const NetConfig& cfg, int level) { return std::int64_t{cfg.base_channels} << level; }

// Architecture description walked by both the parameter layout and the forward pass.
template <typename Visitor>
void walk_architecture(const NetConfig& cfg, Visitor& v) {
    const int L = cfg.levels;
    auto res_blocks = [&](const std::string& prefix, std::int64_t c) {
        for (int k = 0; k < cfg.blocks_per_level; ++k) v.residual(prefix + ".res" + std::to_string(k), c);
    };
    for (int l = 0; l < L; ++l) {
        const std::string p = "enc" + std::to_string(l);
        if (l == 0) v.conv_block(p + ".stem", 1, width(cfg, 0), 1);
        else v.conv_block(p + ".down", width(cfg, l - 1), width(cfg, l), 2);
        res_blocks(p, width(cfg, l));
        v.end_encoder_level(l);
    }
    for (int l = L - 2; l >= 0; --l) {
        const std::string p = "dec" + std::to_string(l);
        v.begin_decoder_level(l);
        v.conv_block(p + ".fuse", width(cfg, l + 1) + width(cfg, l), width(cfg, l), 1);
        res_blocks(p, width(cfg, l));
    }
    v.head("head", width(cfg, 0));
}

struct LayoutBuilder {
    std::vector<ParamSpec> specs;

    void add_conv(const std::string& name, std::int64_t cin, std::int64_t cout) {
        specs.push_back({name + ".weight", {cout, cin, 3, 3, 3}});
    }
    void add_norm(const std::string& name, std::int64_t c) {
        specs.push_back({name + ".scale", {c}});
        specs.push_back({name + ".shift", {c}});
    }
    void conv_block(const std::string& p, std::int64_t cin, std::int64_t cout, int) {
        add_conv(p + ".conv", cin, cout);
        add_norm(p + ".norm", cout);
    }
    void residual(const std::string& p, std::int64_t c) {
        add_conv(p + ".conv1", c, c);
        add_norm(p + ".norm1", c);
        add_conv(p + ".conv2", c, c);
        add_norm(p + ".norm2", c);
    }
    void end_encoder_level(int) {}
    void begin_decoder_level(int) {}
    void head(const std::string& p, std::int64_t c) {
        specs.push_back({p + ".weight", {1, c}});
        specs.push_back({p + ".bias", {1}});
    }
};

template <typename Real>
bool all_finite(const std::vector<Real>& v) {
    return std::all_of(v.begin(), v.end(), [](Real x) { return std::isfinite(x); });
}

// Reverse-mode tape. Nodes are appended in execution order; backward walks
// them in reverse, accumulating into input-node and parameter gradients.
template <typename Real>
class Graph {
public:
    Graph(const ModelParams<Real>& params, Gradients<Real>* grads) : params_(params), grads_(grads) {}

    int input(Tensor5<Real> x) { return push("input", std::move(x), {}, nullptr); }

    const Tensor5<Real>& value(int id) const { return nodes_[id].value; }

    int conv3(int x, std::size_t w_id, std::int64_t cout, int stride, const std::string& name) {
        const auto& in = value(x);
        const std::int64_t cin = in.channels();
        const Shape3 si{in.dims[2], in.dims[3], in.dims[4]};
        const Shape3 so = kernels::conv_output_shape(si, stride);
        Tensor5<Real> out(in.batch(), cout, so.h, so.w, so.d);
        const Real* w = params_.tensors[w_id].data();
        for (std::int64_t b = 0; b < in.batch(); ++b) {
            kernels::conv3_forward(in.plane(b, 0), cin, si, w, cout, stride, out.plane(b, 0));
        }
        return push(name, std::move(out), {x}, [=, this](Node& self) {
            auto& src = nodes_[x];
            Tensor5<Real>& din = grad_of(x);
            for (std::int64_t b = 0; b < src.value.batch(); ++b) {
                if (grads_) {
                    kernels::conv3_backward_weight(self.grad.plane(b, 0), cout, si, src.value.plane(b, 0), cin, stride,
                                                   grads_->tensors[w_id].data());
                }
                kernels::conv3_backward_input(self.grad.plane(b, 0), cout, si, params_.tensors[w_id].data(), cin,
                                              stride, din.plane(b, 0));
            }
        });
    }

    int instance_norm(int x, std::size_t scale_id, std::size_t shift_id, double eps, const std::string& name) {
        const auto& in = value(x);
        const std::int64_t B = in.batch(), C = in.channels(), N = in.spatial();
        Tensor5<Real> out(B, C, in.dims[2], in.dims[3], in.dims[4]);
        std::vector<double> mean(static_cast<std::size_t>(B * C)), inv_std(static_cast<std::size_t>(B * C));
        const auto& scale = params_.tensors[scale_id];
        const auto& shift = params_.tensors[shift_id];
        for (std::int64_t b = 0; b < B; ++b) {
            for (std::int64_t c = 0; c < C; ++c) {
                const Real* src = in.plane(b, c);
                double s = 0.0;
                for (std::int64_t i = 0; i < N; ++i) s += src[i];
                const double mu = s / static_cast<double>(N);
                double ss = 0.0;
                for (std::int64_t i = 0; i < N; ++i) ss += (src[i] - mu) * (src[i] - mu);
                const double is = 1.0 / std::sqrt(ss / static_cast<double>(N) + eps);
                mean[b * C + c] = mu;
                inv_std[b * C + c] = is;
                Real* dst = out.plane(b, c);
                const double g = scale[c], h = shift[c];
                for (std::int64_t i = 0; i < N; ++i) dst[i] = static_cast<Real>(g * (src[i] - mu) * is + h);
            }
        }
        return push(name, std::move(out), {x}, [=, this](Node& self) {
            auto& src = nodes_[x].value;
            Tensor5<Real>& din = grad_of(x);
            const auto& sc = params_.tensors[scale_id];
            for (std::int64_t b = 0; b < B; ++b) {
                for (std::int64_t c = 0; c < C; ++c) {
                    const Real* xv = src.plane(b, c);
                    const Real* dy = self.grad.plane(b, c);
                    const double mu = mean[b * C + c], is = inv_std[b * C + c];
                    double sum_dy = 0.0, sum_dy_xhat = 0.0;
                    for (std::int64_t i = 0; i < N; ++i) {
                        const double xhat = (xv[i] - mu) * is;
                        sum_dy += dy[i];
                        sum_dy_xhat += dy[i] * xhat;
                    }
                    if (grads_) {
                        grads_->tensors[scale_id][c] += static_cast<Real>(sum_dy_xhat);
                        grads_->tensors[shift_id][c] += static_cast<Real>(sum_dy);
                    }
                    const double g = sc[c];
                    const double mdy = sum_dy / static_cast<double>(N), mdyx = sum_dy_xhat / static_cast<double>(N);
                    Real* dx = din.plane(b, c);
                    for (std::int64_t i = 0; i < N; ++i) {
                        const double xhat = (xv[i] - mu) * is;
                        dx[i] += static_cast<Real>(g * is * (dy[i] - mdy - xhat * mdyx));
                    }
                }
            }
        });
    }

    int leaky_relu(int x, double slope, const std::string& name) {
        Tensor5<Real> out = value(x);
        const Real s = static_cast<Real>(slope);
        for (auto& v : out.values) v = v > Real(0) ? v : s * v;
        return push(name, std::move(out), {x}, [=, this](Node& self) {
            const auto& in = nodes_[x].value.values;
            auto& din = grad_of(x).values;
            for (std::size_t i = 0; i < in.size(); ++i) din[i] += in[i] > Real(0) ? self.grad.values[i] : s * self.grad.values[i];
        });
    }

    int add(int a, int b, const std::string& name) {
        require_same_shape(value(a), value(b), "residual add");
        Tensor5<Real> out = value(a);
        const auto& bv = value(b).values;
        for (std::size_t i = 0; i < out.values.size(); ++i) out.values[i] += bv[i];
        return push(name, std::move(out), {a, b}, [=, this](Node& self) {
            for (int id : {a, b}) {
                auto& d = grad_of(id).values;
                for (std::size_t i = 0; i < d.size(); ++i) d[i] += self.grad.values[i];
            }
        });
    }

    int concat(int a, int b, const std::string& name) {
        const auto& av = value(a);
        const auto& bv = value(b);
        if (av.batch() != bv.batch() || av.dims[2] != bv.dims[2] || av.dims[3] != bv.dims[3] || av.dims[4] != bv.dims[4]) {
            throw ShapeError("concat: " + shape_string(av) + " vs " + shape_string(bv));
        }
        const std::int64_t ca = av.channels(), cb = bv.channels(), N = av.spatial();
        Tensor5<Real> out(av.batch(), ca + cb, av.dims[2], av.dims[3], av.dims[4]);
        for (std::int64_t n = 0; n < av.batch(); ++n) {
            std::copy(av.plane(n, 0), av.plane(n, 0) + ca * N, out.plane(n, 0));
            std::copy(bv.plane(n, 0), bv.plane(n, 0) + cb * N, out.plane(n, ca));
        }
        return push(name, std::move(out), {a, b}, [=, this](Node& self) {
            auto& da = grad_of(a);
            auto& db = grad_of(b);
            for (std::int64_t n = 0; n < self.grad.batch(); ++n) {
                const Real* g = self.grad.plane(n, 0);
                Real* pa = da.plane(n, 0);
                for (std::int64_t i = 0; i < ca * N; ++i) pa[i] += g[i];
                const Real* gb = self.grad.plane(n, ca);
                Real* pb = db.plane(n, 0);
                for (std::int64_t i = 0; i < cb * N; ++i) pb[i] += gb[i];
            }
        });
    }

    int upsample2(int x, const std::string& name) {
        const auto& in = value(x);
        const std::int64_t H = in.dims[2], W = in.dims[3], D = in.dims[4];
        Tensor5<Real> out(in.batch(), in.channels(), 2 * H, 2 * W, 2 * D);
        std::vector<Real> t1(static_cast<std::size_t>(H * W * 2 * D)), t2(static_cast<std::size_t>(H * 2 * W * 2 * D));
        for (std::int64_t b = 0; b < in.batch(); ++b) {
            for (std::int64_t c = 0; c < in.channels(); ++c) {
                kernels::upsample_axis(in.plane(b, c), H * W, D, 1, t1.data());
                kernels::upsample_axis(t1.data(), H, W, 2 * D, t2.data());
                kernels::upsample_axis(t2.data(), 1, H, 4 * W * D, out.plane(b, c));
            }
        }
        return push(name, std::move(out), {x}, [=, this](Node& self) {
            auto& din = grad_of(x);
            std::vector<Real> g2(static_cast<std::size_t>(H * 2 * W * 2 * D)), g1(static_cast<std::size_t>(H * W * 2 * D)),
                g0(static_cast<std::size_t>(H * W * D));
            for (std::int64_t b = 0; b < self.grad.batch(); ++b) {
                for (std::int64_t c = 0; c < self.grad.channels(); ++c) {
                    kernels::upsample_axis_adjoint(self.grad.plane(b, c), 1, H, 4 * W * D, g2.data());
                    kernels::upsample_axis_adjoint(g2.data(), H, W, 2 * D, g1.data());
                    kernels::upsample_axis_adjoint(g1.data(), H * W, D, 1, g0.data());
                    Real* d = din.plane(b, c);
                    for (std::int64_t i = 0; i < H * W * D; ++i) d[i] += g0[i];
                }
            }
        });
    }

    int pointwise_head(int x, std::size_t w_id, std::size_t b_id, const std::string& name) {
        const auto& in = value(x);
        const std::int64_t C = in.channels(), N = in.spatial();
        Tensor5<Real> out(in.batch(), 1, in.dims[2], in.dims[3], in.dims[4]);
        const auto& w = params_.tensors[w_id];
        const Real bias = params_.tensors[b_id][0];
        for (std::int64_t b = 0; b < in.batch(); ++b) {
            Real* dst = out.plane(b, 0);
            std::fill(dst, dst + N, bias);
            for (std::int64_t c = 0; c < C; ++c) {
                const Real* src = in.plane(b, c);
                for (std::int64_t i = 0; i < N; ++i) dst[i] += w[c] * src[i];
            }
        }
        return push(name, std::move(out), {x}, [=, this](Node& self) {
            const auto& src = nodes_[x].value;
            auto& din = grad_of(x);
            const auto& wv = params_.tensors[w_id];
            for (std::int64_t b = 0; b < src.batch(); ++b) {
                const Real* g = self.grad.plane(b, 0);
                if (grads_) {
                    double sb = 0.0;
                    for (std::int64_t i = 0; i < N; ++i) sb += g[i];
                    grads_->tensors[b_id][0] += static_cast<Real>(sb);
                }
                for (std::int64_t c = 0; c < C; ++c) {
                    const Real* xv = src.plane(b, c);
                    Real* dx = din.plane(b, c);
                    double sw = 0.0;
                    for (std::int64_t i = 0; i < N; ++i) {
                        sw += g[i] * xv[i];
                        dx[i] += wv[c] * g[i];
                    }
                    if (grads_) grads_->tensors[w_id][c] += static_cast<Real>(sw);
                }
            }
        });
    }

    int sigmoid(int x, const std::string& name) {
        Tensor5<Real> out = value(x);
        for (auto& v : out.values) {
            v = v >= Real(0) ? Real(1) / (Real(1) + std::exp(-v)) : std::exp(v) / (Real(1) + std::exp(v));
        }
        return push(name, std::move(out), {x}, [=, this](Node& self) {
            auto& din = grad_of(x).values;
            for (std::size_t i = 0; i < din.size(); ++i) {
                const Real p = self.value.values[i];
                din[i] += self.grad.values[i] * p * (Real(1) - p);
            }
        });
    }

    void backward(int out, Tensor5<Real> dout) {
        require_same_shape(nodes_[out].value, dout, "output gradient");
        nodes_[out].grad = std::move(dout);
        for (int id = out; id >= 0; --id) {
            Node& n = nodes_[id];
            if (n.grad.values.empty() || !n.back) continue;
            n.back(n);
            n.grad = Tensor5<Real>();
        }
    }

    Tensor5<Real> take_input_grad() { return std::move(nodes_[0].grad); }

private:
    struct Node {
        std::string name;
        Tensor5<Real> value;
        Tensor5<Real> grad;
        std::vector<int> inputs;
        std::function<void(Node&)> back;
    };

    int push(const std::string& name, Tensor5<Real> value, std::vector<int> inputs, std::function<void(Node&)> back) {
        if (!all_finite(value.values)) throw NumericalError("non-finite activation at layer " + name);
        nodes_.push_back(Node{name, std::move(value), {}, std::move(inputs), std::move(back)});
        return static_cast<int>(nodes_.size()) - 1;
    }

    Tensor5<Real>& grad_of(int id) {
        Node& n = nodes_[id];
        if (n.grad.values.empty()) {
            n.grad = Tensor5<Real>(n.value.dims[0], n.value.dims[1], n.value.dims[2], n.value.dims[3], n.value.dims[4]);
        }
        return n.grad;
    }

    const ModelParams<Real>& params_;
    Gradients<Real>* grads_;
    std::vector<Node> nodes_;
};

template <typename Real>
struct ForwardBuilder {
    Graph<Real>& g;
    const NetConfig& cfg;
    int current;
    std::size_t cursor = 0;
    std::vector<int> skips;

    std::size_t next() { return cursor++; }

    int norm_act(int x, const std::string& p, bool act) {
        const std::size_t scale = next(), shift = next();
        const int n = g.instance_norm(x, scale, shift, cfg.norm_eps, p);
        return act ? g.leaky_relu(n, cfg.leaky_slope, p + ".act") : n;
    }

    void conv_block(const std::string& p, std::int64_t, std::int64_t cout, int stride) {
        const int c = g.conv3(current, next(), cout, stride, p + ".conv");
        current = norm_act(c, p + ".norm", true);
    }
    void residual(const std::string& p, std::int64_t c) {
        const int in = current;
        int h = g.conv3(in, next(), c, 1, p + ".conv1");
        h = norm_act(h, p + ".norm1", true);
        h = g.conv3(h, next(), c, 1, p + ".conv2");
        h = norm_act(h, p + ".norm2", false);
        current = g.leaky_relu(g.add(h, in, p + ".add"), cfg.leaky_slope, p + ".act");
    }
    void end_encoder_level(int) { skips.push_back(current); }
    void begin_decoder_level(int l) {
        const int up = g.upsample2(current, "dec" + std::to_string(l) + ".up");
        current = g.concat(up, skips[static_cast<std::size_t>(l)], "dec" + std::to_string(l) + ".cat");
    }
    void head(const std::string& p, std::int64_t) {
        const std::size_t w = next(), b = next();
        current = g.sigmoid(g.pointwise_head(current, w, b, p), p + ".sigmoid");
    }
};

template <typename Real>
void check_input(const ModelParams<Real>& params, const Tensor5<Real>& x) {
    params.cfg.validate();
    const auto layout = param_layout(params.cfg);
    if (params.tensors.size() != layout.size()) throw ShapeError("parameter tensor count does not match the network config");
    for (std::size_t i = 0; i < layout.size(); ++i) {
        if (params.tensors[i].size() != layout[i].numel()) throw ShapeError("parameter " + layout[i].name + " has wrong size");
    }
    if (x.channels() != 1) throw ShapeError("network input must have 1 channel, got " + std::to_string(x.channels()));
    if (x.size() != static_cast<std::size_t>(x.dims[0] * x.dims[1] * x.dims[2] * x.dims[3] * x.dims[4])) {
        throw ShapeError("input tensor value count does not match its dims");
    }
    const std::int64_t div = params.cfg.divisor();
    static const char* axis_names[] = {"H", "W", "D"};
    for (int a = 0; a < 3; ++a) {
        const std::int64_t n = x.dims[2 + a];
        if (n < 1 || n % div != 0) {
            throw ShapeError("input axis " + std::string(axis_names[a]) + " = " + std::to_string(n) +
                             " is not divisible by " + std::to_string(div));
        }
    }
}

template <typename Real>
int build_forward(Graph<Real>& g, const ModelParams<Real>& params, const Tensor5<Real>& x) {
    ForwardBuilder<Real> fb{g, params.cfg, g.input(x), 0, {}};
    walk_architecture(params.cfg, fb);
    return fb.current;
}

}  // namespace

std::vector<ParamSpec> param_layout(const NetConfig& cfg) {
    cfg.validate();
    LayoutBuilder lb;
    walk_architecture(cfg, lb);
    return lb.specs;
}

template <typename Real>
std::size_t ModelParams<Real>::numel() const {
    std::size_t n = 0;
    for (const auto& t : tensors) n += t.size();
    return n;
}

template <typename Real>
ModelParams<Real> ModelParams<Real>::zeros(const NetConfig& cfg) {
    ModelParams p;
    p.cfg = cfg;
    for (const auto& spec : param_layout(cfg)) p.tensors.emplace_back(spec.numel(), Real(0));
    return p;
}

template <typename Real>
ModelParams<Real> ModelParams<Real>::initialize(const NetConfig& cfg, std::uint64_t seed) {
    ModelParams p = zeros(cfg);
    const auto layout = param_layout(cfg);
    Rng rng(seed);
    for (std::size_t i = 0; i < layout.size(); ++i) {
        const auto& spec = layout[i];
        auto& t = p.tensors[i];
        const auto ends_with = [&](std::string_view suffix) {
            return spec.name.size() >= suffix.size() && spec.name.compare(spec.name.size() - suffix.size(), suffix.size(), suffix) == 0;
        };
        if (ends_with(".scale")) {
            std::fill(t.begin(), t.end(), Real(1));
        } else if (ends_with(".weight")) {
            const double fan_in = spec.shape.size() == 5 ? static_cast<double>(spec.shape[1] * 27) : static_cast<double>(spec.shape[1]);
            const double std = std::sqrt((spec.shape.size() == 5 ? 2.0 : 1.0) / fan_in);
            for (auto& v : t) v = static_cast<Real>(rng.normal(0.0, std));
        }
    }
    return p;
}

template <typename Real>
void ModelParams<Real>::check_finite() const {
    const auto layout = param_layout(cfg);
    for (std::size_t i = 0; i < tensors.size(); ++i) {
        if (!all_finite(tensors[i])) {
            throw NumericalError("non-finite value in parameter " + (i < layout.size() ? layout[i].name : std::to_string(i)));
        }
    }
}

template <typename Real>
Tensor5<Real> forward(const ModelParams<Real>& params, const Tensor5<Real>& x) {
    check_input(params, x);
    Graph<Real> g(params, nullptr);
    const int out = build_forward(g, params, x);
    return g.value(out);
}

template <typename Real>
BackwardResult<Real> backward(const ModelParams<Real>& params, const Tensor5<Real>& x, const Tensor5<Real>& target,
                              const LossConfig& loss) {
    check_input(params, x);
    BackwardResult<Real> result;
    result.grads = Gradients<Real>::zeros(params.cfg);
    Graph<Real> g(params, &result.grads);
    const int out = build_forward(g, params, x);
    result.prediction = g.value(out);
    Tensor5<Real> dpred;
    result.loss = combined_loss_grad(result.prediction, target, loss, dpred);
    g.backward(out, std::move(dpred));
    result.grads.check_finite();
    return result;
}

template struct ModelParams<float>;
template struct ModelParams<double>;
template Tensor5<float> forward(const ModelParams<float>&, const Tensor5<float>&);
template Tensor5<double> forward(const ModelParams<double>&, const Tensor5<double>&);
template BackwardResult<float> backward(const ModelParams<float>&, const Tensor5<float>&, const Tensor5<float>&,
                                        const LossConfig&);
template BackwardResult<double> backward(const ModelParams<double>&, const Tensor5<double>&, const Tensor5<double>&,
                                         const LossConfig&);

}  // namespace segapipe::resunet
