#include <doctest.h>

#include <cmath>
#include <fstream>
#include <numeric>

#include "oracles.hpp"
#include "segapipe/errors.hpp"
#include "segapipe/phantom.hpp"
#include "segapipe/resunet/loss.hpp"
#include "segapipe/resunet/optim.hpp"
#include "segapipe/resunet/train.hpp"
#include "segapipe/rng.hpp"
#include "segapipe/xform.hpp"

using namespace segapipe;
using namespace segapipe::resunet;

namespace {

template <typename Real>
Tensor5<Real> random_tensor(std::array<std::int64_t, 5> d, std::uint64_t seed, double lo = 0, double hi = 1) {
    Tensor5<Real> t(d[0], d[1], d[2], d[3], d[4]);
    Rng rng(seed);
    for (auto& v : t.values) v = static_cast<Real>(rng.uniform(lo, hi));
    return t;
}

template <typename Real>
Tensor5<Real> random_binary(std::array<std::int64_t, 5> d, std::uint64_t seed) {
    Tensor5<Real> t(d[0], d[1], d[2], d[3], d[4]);
    Rng rng(seed);
    for (auto& v : t.values) v = rng.bernoulli(0.4) ? Real(1) : Real(0);
    return t;
}

double bce_oracle(const std::vector<double>& p, const std::vector<double>& t) {
    double s = 0;
    for (std::size_t i = 0; i < p.size(); ++i) {
        const double q = std::clamp(p[i], 1e-7, 1 - 1e-7);
        s -= t[i] * std::log(q) + (1 - t[i]) * std::log(1 - q);
    }
    return s / static_cast<double>(p.size());
}

NetConfig tiny_net() {
    NetConfig n;
    n.levels = 2;
    n.base_channels = 2;
    return n;
}

std::vector<Sample> phantom_samples(int n, std::int64_t size, std::uint64_t seed) {
    std::vector<Sample> out;
    PhantomSpec ps;
    ps.dims = {size, size, size};
    for (int i = 0; i < n; ++i) {
        const auto ph = make_phantom(seed + i, ps);
        out.push_back({"p" + std::to_string(i), xform::clip_normalize(ph.image), ph.mask, {}});
    }
    return out;
}

TrainConfig quick_config() {
    TrainConfig c;
    c.batch = 2;
    c.iterations_per_epoch = 1;
    c.max_epochs = 2;
    c.augment = false;
    return c;
}

}  // namespace

TEST_SUITE("resunet") {

TEST_CASE("forward preserves shape and stays in (0,1)") {
    NetConfig n;
    const auto p = ModelParams<float>::initialize(n, 1);
    const auto x = random_tensor<float>({2, 1, 16, 16, 16}, 2);
    const auto y = forward(p, x);
    CHECK(y.dims == x.dims);
    for (float v : y.values) CHECK((v > 0.0f && v < 1.0f));
}

TEST_CASE("forward shape property over random divisible shapes") {
    Rng rng(3);
    for (int trial = 0; trial < 5; ++trial) {
        NetConfig n = tiny_net();
        n.levels = 1 + static_cast<int>(rng.below(3));
        const auto div = n.divisor();
        std::array<std::int64_t, 5> d{1, 1, div * (1 + static_cast<std::int64_t>(rng.below(3))), div * (1 + static_cast<std::int64_t>(rng.below(3))),
                                      div * (1 + static_cast<std::int64_t>(rng.below(3)))};
        const auto p = ModelParams<float>::initialize(n, trial);
        CHECK(forward(p, random_tensor<float>(d, trial)).dims == d);
    }
}

TEST_CASE("zero parameters give 0.5 everywhere") {
    const auto p = ModelParams<float>::zeros(NetConfig{});
    for (float v : forward(p, random_tensor<float>({1, 1, 8, 8, 8}, 4)).values) CHECK(v == doctest::Approx(0.5));
}

TEST_CASE("indivisible input names the axis") {
    const auto p = ModelParams<float>::zeros(NetConfig{});
    try {
        forward(p, random_tensor<float>({1, 1, 8, 6, 8}, 5));
        FAIL("expected ShapeError");
    } catch (const ShapeError& e) {
        CHECK(std::string(e.what()).find("W") != std::string::npos);
    }
    CHECK_THROWS_AS(forward(p, random_tensor<float>({1, 2, 8, 8, 8}, 5)), ShapeError);
}

TEST_CASE("soft dice examples") {
    Tensor5<double> ones(1, 1, 4, 4, 4, 1.0);
    CHECK(soft_dice_loss(ones, ones) < 1e-4);
    Tensor5<double> zeros(1, 1, 4, 4, 4, 0.0);
    CHECK(soft_dice_loss(ones, zeros) == doctest::Approx(1.0).epsilon(1e-6));
    Tensor5<double> half(1, 1, 2, 2, 2, 0.5), t(1, 1, 2, 2, 2, 1.0);
    CHECK(soft_dice_loss(half, t) == doctest::Approx(1 - (8 + 1e-5) / (12 + 1e-5)).epsilon(1e-12));
    CHECK(soft_dice_loss(half, t) == doctest::Approx(0.3333).epsilon(1e-3));
    CHECK_THROWS_AS(soft_dice_loss(half, ones), ShapeError);
}

TEST_CASE("focal loss examples") {
    Tensor5<double> p(1, 1, 1, 1, 1, 0.5), t(1, 1, 1, 1, 1, 1.0);
    CHECK(focal_loss(p, t) == doctest::Approx(0.25 * std::log(2.0)).epsilon(1e-9));
    CHECK(focal_loss(p, t) == doctest::Approx(0.173287).epsilon(1e-5));
    const auto tb = random_binary<double>({1, 1, 3, 3, 3}, 6);
    CHECK(focal_loss(tb, tb) < 1e-6);
    const auto pr = random_tensor<double>({1, 1, 3, 3, 3}, 7);
    CHECK(focal_loss(pr, tb, 0.0, 1.0) == doctest::Approx(bce_oracle(pr.values, tb.values)).epsilon(1e-12));
    CHECK(cross_entropy_loss(pr, tb) == doctest::Approx(bce_oracle(pr.values, tb.values)).epsilon(1e-12));
}

TEST_CASE("combined loss variants") {
    const auto t = random_binary<double>({2, 1, 3, 3, 3}, 8);
    const auto p = random_tensor<double>({2, 1, 3, 3, 3}, 9);
    LossConfig c;
    CHECK(combined_loss(p, t, c) == doctest::Approx(soft_dice_loss(p, t) + focal_loss(p, t)).epsilon(1e-12));
    for (auto kind : {LossKind::DiceFocal, LossKind::Dice, LossKind::DiceCrossEntropy, LossKind::Focal}) {
        c.kind = kind;
        CHECK(combined_loss(t, t, c) < 1e-4);
    }
    CHECK(parse_loss_kind("dice_focal") == LossKind::DiceFocal);
    CHECK(parse_loss_kind("dice_ce") == LossKind::DiceCrossEntropy);
    CHECK(std::string(loss_kind_name(LossKind::Focal)) == "Focal");
    CHECK_THROWS_AS(parse_loss_kind("hinge"), ArgumentError);
}

TEST_CASE("loss gradient matches finite differences") {
    const auto t = random_binary<double>({2, 1, 2, 2, 2}, 10);
    auto p = random_tensor<double>({2, 1, 2, 2, 2}, 11, 0.05, 0.95);
    for (auto kind : {LossKind::DiceFocal, LossKind::Dice, LossKind::DiceCrossEntropy, LossKind::Focal}) {
        LossConfig c;
        c.kind = kind;
        Tensor5<double> g;
        combined_loss_grad(p, t, c, g);
        for (std::size_t i = 0; i < p.size(); ++i) {
            auto q = p;
            q.values[i] += 1e-6;
            const double up = combined_loss(q, t, c);
            q.values[i] -= 2e-6;
            const double dn = combined_loss(q, t, c);
            CHECK(g.values[i] == doctest::Approx((up - dn) / 2e-6).epsilon(1e-5));
        }
    }
}

TEST_CASE("backward matches central differences on a tiny net") {
    NetConfig n;
    n.levels = 1;
    n.base_channels = 2;
    auto p = ModelParams<double>::initialize(n, 12);
    // non-trivial norm scales and shifts so every group has a gradient
    Rng rng(13);
    for (auto& tensor : p.tensors)
        for (auto& v : tensor) v += 0.1 * rng.normal();
    const auto x = random_tensor<double>({1, 1, 4, 4, 4}, 14);
    const auto t = random_binary<double>({1, 1, 4, 4, 4}, 15);
    const LossConfig lc;
    const auto res = backward(p, x, t, lc);
    CHECK(res.loss == doctest::Approx(combined_loss(forward(p, x), t, lc)).epsilon(1e-12));
    const double h = 1e-3;
    int checked = 0;
    for (std::size_t k = 0; k < p.tensors.size(); ++k)
        for (std::size_t i = 0; i < p.tensors[k].size(); ++i) {
            auto q = p;
            q.tensors[k][i] += h;
            const double up = combined_loss(forward(q, x), t, lc);
            q.tensors[k][i] -= 2 * h;
            const double dn = combined_loss(forward(q, x), t, lc);
            const double fd = (up - dn) / (2 * h);
            const double an = res.grads.tensors[k][i];
            CAPTURE(k);
            CAPTURE(i);
            CHECK(std::abs(fd - an) <= 1e-3 * std::max(std::abs(fd), std::abs(an)) + 1e-7);
            ++checked;
        }
    CHECK(checked == static_cast<int>(p.numel()));
}

TEST_CASE("backward is invariant to batch order") {
    const auto p = ModelParams<double>::initialize(tiny_net(), 16);
    const auto x = random_tensor<double>({2, 1, 4, 4, 4}, 17);
    const auto t = random_binary<double>({2, 1, 4, 4, 4}, 18);
    auto xs = x, ts = t;
    const std::size_t n = 64;
    std::swap_ranges(xs.values.begin(), xs.values.begin() + n, xs.values.begin() + n);
    std::swap_ranges(ts.values.begin(), ts.values.begin() + n, ts.values.begin() + n);
    const auto a = backward(p, x, t, LossConfig{});
    const auto b = backward(p, xs, ts, LossConfig{});
    CHECK(a.loss == doctest::Approx(b.loss).epsilon(1e-12));
    for (std::size_t k = 0; k < a.grads.tensors.size(); ++k)
        for (std::size_t i = 0; i < a.grads.tensors[k].size(); ++i)
            CHECK(std::abs(a.grads.tensors[k][i] - b.grads.tensors[k][i]) < 1e-10);
}

TEST_CASE("saturated correct prediction has a vanishing gradient") {
    NetConfig n;
    n.levels = 1;
    n.base_channels = 2;
    auto p = ModelParams<double>::zeros(n);
    p.tensors.back().back() = 40.0;  // head bias: prediction saturates at 1
    const auto x = random_tensor<double>({1, 1, 4, 4, 4}, 19);
    Tensor5<double> t(1, 1, 4, 4, 4, 1.0);
    LossConfig lc;
    lc.kind = LossKind::Dice;
    CHECK(global_norm(backward(p, x, t, lc).grads) < 1e-5);
}

TEST_CASE("adamw examples") {
    NetConfig n;
    n.levels = 1;
    n.base_channels = 2;
    auto p = ModelParams<double>::initialize(n, 20);
    const auto p0 = p;
    auto g = ModelParams<double>::zeros(n);
    auto st = AdamWState<double>::zeros_like(p);
    AdamWConfig c;
    adamw_step(p, g, st, c);
    for (std::size_t k = 0; k < p.tensors.size(); ++k)
        for (std::size_t i = 0; i < p.tensors[k].size(); ++i)
            CHECK(p.tensors[k][i] == doctest::Approx(p0.tensors[k][i] * (1 - 5e-6)).epsilon(1e-12));

    auto q = p0;
    auto st2 = AdamWState<double>::zeros_like(q);
    for (auto& t : g.tensors) std::fill(t.begin(), t.end(), 0.3);
    c.lr = 0;
    adamw_step(q, g, st2, c);
    CHECK(q.tensors == p0.tensors);

    auto z = ModelParams<double>::zeros(n);
    auto st3 = AdamWState<double>::zeros_like(z);
    for (auto& t : g.tensors) std::fill(t.begin(), t.end(), 1.0);
    c.lr = 0.001;
    c.weight_decay = 0;
    adamw_step(z, g, st3, c);
    CHECK(z.tensors[0][0] == doctest::Approx(-0.001).epsilon(1e-6));

    g.tensors[0][0] = std::nan("");
    CHECK_THROWS_AS(adamw_step(z, g, st3, c), NumericalError);
}

TEST_CASE("gradient clipping") {
    NetConfig n;
    n.levels = 1;
    n.base_channels = 2;
    auto g = ModelParams<double>::zeros(n);
    g.tensors[0][0] = 5;
    g.tensors[0][1] = -5;
    clip_gradients(g);
    CHECK(g.tensors[0][0] == 2.0);
    CHECK(g.tensors[0][1] == -2.0);
    const auto once = g;
    clip_gradients(g);
    CHECK(g.tensors == once.tensors);

    auto h = ModelParams<double>::zeros(n);
    std::size_t set = 0;
    for (auto& t : h.tensors)
        for (auto& v : t)
            if (set < 100) v = 2.0, ++set;
    REQUIRE(set == 100);
    CHECK(global_norm(h) == doctest::Approx(20.0));
    clip_gradients(h);
    CHECK(global_norm(h) == doctest::Approx(10.0).epsilon(1e-12));
    const auto again = h;
    clip_gradients(h);
    for (std::size_t k = 0; k < h.tensors.size(); ++k)
        for (std::size_t i = 0; i < h.tensors[k].size(); ++i)
            CHECK(h.tensors[k][i] == doctest::Approx(again.tensors[k][i]).epsilon(1e-12));
}

TEST_CASE("learning rate schedule") {
    for (int e = 1; e < 50; ++e)
        CHECK(learning_rate(0.001, 0.999, e) / learning_rate(0.001, 0.999, e - 1) == doctest::Approx(0.999).epsilon(1e-14));
    CHECK(learning_rate(0.001, 0.999, 0) == 0.001);
}

TEST_CASE("checkpoint round trip and rejection") {
    const auto dir = oracle::temp_dir("ckpt");
    const auto p = ModelParams<float>::initialize(tiny_net(), 21);
    save_checkpoint(p, dir / "a.sgpm");
    const auto q = load_checkpoint(dir / "a.sgpm");
    CHECK(q.cfg == p.cfg);
    CHECK(q.tensors == p.tensors);
    save_checkpoint(q, dir / "b.sgpm");
    CHECK(oracle::file_bytes(dir / "a.sgpm") == oracle::file_bytes(dir / "b.sgpm"));

    auto bytes = oracle::file_bytes(dir / "a.sgpm");
    bytes[4] = 2;
    {
        std::ofstream out(dir / "v2.sgpm", std::ios::binary);
        out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
    }
    CHECK_THROWS_AS(load_checkpoint(dir / "v2.sgpm"), FormatError);
    bytes = oracle::file_bytes(dir / "a.sgpm");
    bytes.push_back(0);
    {
        std::ofstream out(dir / "tail.sgpm", std::ios::binary);
        out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
    }
    CHECK_THROWS_AS(load_checkpoint(dir / "tail.sgpm"), FormatError);
    CHECK_THROWS_AS(load_checkpoint(dir / "missing.sgpm"), IoError);
}

TEST_CASE("kfold partition properties") {
    for (std::size_t n : {5u, 7u, 12u})
        for (int k : {2, 3, 5}) {
            if (static_cast<std::size_t>(k) > n) continue;
            const auto folds = kfold_partition(n, k, 22);
            REQUIRE(folds.size() == static_cast<std::size_t>(k));
            std::vector<int> seen(n, 0);
            for (const auto& f : folds) {
                CHECK(f.size() >= n / k);
                CHECK(f.size() <= n / k + 1);
                for (auto i : f) ++seen[i];
            }
            for (int s : seen) CHECK(s == 1);
            CHECK(kfold_partition(n, k, 22) == folds);
        }
    const auto loo = kfold_partition(4, 4, 1);
    for (const auto& f : loo) CHECK(f.size() == 1);
    CHECK_THROWS_AS(kfold_partition(3, 4, 1), ArgumentError);
    CHECK_THROWS_AS(kfold_partition(3, 1, 1), ArgumentError);
}

TEST_CASE("training runs, stops on patience and is deterministic") {
    const auto data = phantom_samples(2, 16, 30);
    auto cfg = quick_config();
    cfg.patience = 0;
    const auto r0 = train({data[0]}, {data[1]}, cfg, tiny_net(), 5);
    CHECK(r0.log.size() == 1);
    CHECK_FALSE(r0.monitored_training_set);

    cfg.patience = 20;
    std::vector<std::string> lines;
    const auto a = train({data[0]}, {}, cfg, tiny_net(), 5, [&](const EpochLog& e) { lines.push_back(format_epoch(e)); });
    const auto b = train({data[0]}, {}, cfg, tiny_net(), 5);
    REQUIRE(a.log.size() == 2);
    CHECK(a.monitored_training_set);
    CHECK(lines.size() == 2);
    for (std::size_t i = 0; i < a.log.size(); ++i) {
        CHECK(a.log[i].loss == b.log[i].loss);
        CHECK(a.log[i].dice == b.log[i].dice);
        CHECK(format_epoch(b.log[i]) == lines[i]);
    }
    CHECK(a.params.tensors == b.params.tensors);
    CHECK(a.log[1].lr == doctest::Approx(a.log[0].lr * 0.999));
    CHECK_THROWS_AS(train({}, {}, cfg, tiny_net(), 5), ArgumentError);
}

TEST_CASE("kfold reports the mean of its folds") {
    const auto data = phantom_samples(3, 16, 40);
    auto cfg = quick_config();
    cfg.max_epochs = 1;
    const auto r = kfold(data, 3, cfg, tiny_net(), 9);
    REQUIRE(r.folds.size() == 3);
    double d = 0, h = 0;
    for (const auto& f : r.folds) d += f.dice, h += f.hd95_mm;
    CHECK(std::abs(r.mean_dice - d / 3) < 1e-12);
    CHECK(std::abs(r.mean_hd95_mm - h / 3) < 1e-12);
    CHECK_THROWS_AS(kfold(data, 4, cfg, tiny_net(), 9), ArgumentError);
}

TEST_CASE("training config validation") {
    TrainConfig c;
    c.batch = 0;
    CHECK_THROWS_AS(c.validate(), ArgumentError);
    c = {};
    c.patience = -1;
    CHECK_THROWS_AS(c.validate(), ArgumentError);
    NetConfig n;
    n.levels = 0;
    CHECK_THROWS_AS(n.validate(), ArgumentError);
}

}
