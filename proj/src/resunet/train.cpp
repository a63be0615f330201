#include "segapipe/resunet/train.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>
#include <numeric>

#include "segapipe/errors.hpp"
#include "segapipe/postproc.hpp"
#include "segapipe/rng.hpp"
#include "segapipe/xform.hpp"

namespace segapipe::resunet {

void TrainConfig::validate() const {
    if (!(lr0 >= 0.0)) throw ArgumentError("lr0 must be >= 0");
    if (!(decay > 0.0 && decay <= 1.0)) throw ArgumentError("decay must lie in (0, 1]");
    if (batch < 1) throw ArgumentError("batch must be >= 1");
    if (iterations_per_epoch < 1) throw ArgumentError("iterations_per_epoch must be >= 1");
    if (weight_decay < 0.0) throw ArgumentError("weight_decay must be >= 0");
    if (!(clip_value > 0.0) || !(clip_norm > 0.0)) throw ArgumentError("gradient clip limits must be > 0");
    if (max_epochs < 1) throw ArgumentError("max_epochs must be >= 1");
    if (patience < 0) throw ArgumentError("patience must be >= 0");
    if (!(threshold >= 0.0 && threshold <= 1.0)) throw ArgumentError("threshold must lie in [0, 1]");
    if (loss.w_dice < 0.0 || loss.w_focal < 0.0) throw ArgumentError("loss weights must be >= 0");
    if (!(loss.dice_eps > 0.0)) throw ArgumentError("dice epsilon must be > 0");
    if (loss.focal_gamma < 0.0 || !(loss.focal_alpha > 0.0)) throw ArgumentError("bad focal gamma/alpha");
    augmentation.validate();
}

std::string format_epoch(const EpochLog& e) {
    char buf[160];
    std::snprintf(buf, sizeof buf, "epoch=%d lr=%.9g loss=%.9g dice=%.9g hd95_mm=%.9g", e.epoch, e.lr, e.loss, e.dice,
                  e.hd95_mm);
    return buf;
}

Tensor5<float> to_tensor(const ImageVolume& img) {
    const Dims d = img.geom.dims();
    Tensor5<float> t(1, 1, d.nz, d.ny, d.nx);
    t.values = img.voxels;
    return t;
}

Tensor5<float> to_tensor(const LabelVolume& mask) {
    const Dims d = mask.geom.dims();
    Tensor5<float> t(1, 1, d.nz, d.ny, d.nx);
    for (std::size_t i = 0; i < mask.voxels.size(); ++i) t.values[i] = mask.voxels[i] ? 1.0f : 0.0f;
    return t;
}

ImageVolume predict(const ModelParams<float>& params, const ImageVolume& normalized) {
    auto out = forward(params, to_tensor(normalized));
    ImageVolume prob(normalized.geom, IntensityDomain::Probability);
    prob.voxels = std::move(out.values);
    return prob;
}

metrics::SegScore evaluate_prediction(const LabelVolume& prediction, const LabelVolume& truth, metrics::HdMode mode) {
    metrics::SegScore s;
    s.dice = metrics::dice(prediction, truth);
    if (prediction.foreground_count() == 0 || truth.foreground_count() == 0) {
        const Dims d = truth.geom.dims();
        const Vec3 sp = truth.geom.spacing();
        s.hd95_mm = std::sqrt(std::pow(d.nx * sp[0], 2) + std::pow(d.ny * sp[1], 2) + std::pow(d.nz * sp[2], 2));
    } else {
        s.hd95_mm = metrics::hd95(prediction, truth, mode);
    }
    return s;
}

LabelVolume predict_mask(const ModelParams<float>& params, const Sample& s, double threshold) {
    auto prob = predict(params, s.image);
    if (s.reference_mask.voxels.empty()) return postproc::threshold(prob, threshold);
    auto back = xform::resample(prob, s.reference_mask.geom.dims(), xform::Interp::Trilinear);
    back.geom = s.reference_mask.geom;
    return postproc::threshold(back, threshold);
}

namespace {

metrics::SegScore mean_score(const ModelParams<float>& params, const std::vector<Sample>& set, const TrainConfig& cfg) {
    metrics::SegScore total;
    for (const auto& s : set) {
        const auto pred = predict_mask(params, s, cfg.threshold);
        const auto& truth = s.reference_mask.voxels.empty() ? s.mask : s.reference_mask;
        const auto sc = evaluate_prediction(pred, truth, cfg.hd_mode);
        total.dice += sc.dice;
        total.hd95_mm += sc.hd95_mm;
    }
    total.dice /= static_cast<double>(set.size());
    total.hd95_mm /= static_cast<double>(set.size());
    return total;
}

}  // namespace

TrainResult train(const std::vector<Sample>& train_set, const std::vector<Sample>& val_set, const TrainConfig& cfg,
                  const NetConfig& net, std::uint64_t seed, const EpochCallback& on_epoch) {
    cfg.validate();
    net.validate();
    if (train_set.empty()) throw ArgumentError("training set is empty");

    TrainResult result;
    result.monitored_training_set = val_set.empty();
    const auto& monitored = val_set.empty() ? train_set : val_set;

    auto params = ModelParams<float>::initialize(net, derive_seed(seed, 0));
    auto state = AdamWState<float>::zeros_like(params);
    result.params = params;
    double best = -1.0;
    int since_best = 0;

    for (int epoch = 0; epoch < cfg.max_epochs; ++epoch) {
        Rng rng(derive_seed(seed, 1000 + static_cast<std::uint64_t>(epoch)));
        AdamWConfig opt;
        opt.lr = learning_rate(cfg.lr0, cfg.decay, epoch);
        opt.weight_decay = cfg.weight_decay;

        double loss_sum = 0.0;
        for (int it = 0; it < cfg.iterations_per_epoch; ++it) {
            auto grads = Gradients<float>::zeros(net);
            for (int b = 0; b < cfg.batch; ++b) {
                const auto& s = train_set[rng.below(train_set.size())];
                const std::uint64_t aug_seed = rng.next();
                BackwardResult<float> r;
                if (cfg.augment) {
                    auto [img, mask] = augment::augment_pair(s.image, s.mask, cfg.augmentation, aug_seed);
                    r = backward(params, to_tensor(img), to_tensor(mask), cfg.loss);
                } else {
                    r = backward(params, to_tensor(s.image), to_tensor(s.mask), cfg.loss);
                }
                loss_sum += r.loss;
                for (std::size_t t = 0; t < grads.tensors.size(); ++t)
                    for (std::size_t i = 0; i < grads.tensors[t].size(); ++i) grads.tensors[t][i] += r.grads.tensors[t][i];
            }
            const float inv = 1.0f / static_cast<float>(cfg.batch);
            for (auto& t : grads.tensors)
                for (auto& g : t) g *= inv;
            clip_gradients(grads, cfg.clip_value, cfg.clip_norm);
            adamw_step(params, grads, state, opt);
        }

        const auto sc = mean_score(params, monitored, cfg);
        EpochLog e{epoch + 1, opt.lr, loss_sum / (cfg.iterations_per_epoch * cfg.batch), sc.dice, sc.hd95_mm};
        result.log.push_back(e);
        if (on_epoch) on_epoch(e);

        if (sc.dice > best) {
            best = sc.dice;
            result.params = params;
            result.best_epoch = e.epoch;
            since_best = 0;
        } else {
            ++since_best;
        }
        if (cfg.stop_at_dice && sc.dice >= *cfg.stop_at_dice) break;
        if (since_best >= cfg.patience) break;
    }
    return result;
}

std::vector<std::vector<std::size_t>> kfold_partition(std::size_t n, int k, std::uint64_t seed) {
    if (k < 2) throw ArgumentError("k-fold needs k >= 2");
    if (static_cast<std::size_t>(k) > n)
        throw ArgumentError("k = " + std::to_string(k) + " exceeds dataset size " + std::to_string(n));
    std::vector<std::size_t> perm(n);
    std::iota(perm.begin(), perm.end(), 0);
    Rng rng(seed);
    for (std::size_t i = n; i > 1; --i) std::swap(perm[i - 1], perm[rng.below(i)]);
    std::vector<std::vector<std::size_t>> folds(static_cast<std::size_t>(k));
    for (std::size_t i = 0; i < n; ++i) folds[i % k].push_back(perm[i]);
    for (auto& f : folds) std::sort(f.begin(), f.end());
    return folds;
}

KFoldResult kfold(const std::vector<Sample>& dataset, int k, const TrainConfig& cfg, const NetConfig& net,
                  std::uint64_t seed, const EpochCallback& on_epoch) {
    if (dataset.empty()) throw ArgumentError("dataset is empty");
    const auto folds = kfold_partition(dataset.size(), k, derive_seed(seed, 7));
    KFoldResult out;
    for (std::size_t f = 0; f < folds.size(); ++f) {
        std::vector<Sample> tr, va;
        std::vector<bool> is_val(dataset.size(), false);
        for (auto i : folds[f]) is_val[i] = true;
        for (std::size_t i = 0; i < dataset.size(); ++i) (is_val[i] ? va : tr).push_back(dataset[i]);
        auto r = train(tr, va, cfg, net, derive_seed(seed, 100 + f), on_epoch);
        FoldResult fr;
        fr.val_indices = folds[f];
        fr.best_epoch = r.best_epoch;
        const auto sc = mean_score(r.params, va, cfg);
        fr.dice = sc.dice;
        fr.hd95_mm = sc.hd95_mm;
        out.folds.push_back(fr);
    }
    for (const auto& fr : out.folds) {
        out.mean_dice += fr.dice;
        out.mean_hd95_mm += fr.hd95_mm;
    }
    out.mean_dice /= static_cast<double>(out.folds.size());
    out.mean_hd95_mm /= static_cast<double>(out.folds.size());
    return out;
}

}  // namespace segapipe::resunet
