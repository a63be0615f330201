#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "segapipe/augment.hpp"
#include "segapipe/metrics.hpp"
#include "segapipe/resunet/model.hpp"
#include "segapipe/resunet/optim.hpp"
#include "segapipe/volgrid.hpp"

namespace segapipe::resunet {

struct TrainConfig {
    double lr0 = 0.001;
    double decay = 0.999;
    int batch = 16;                 // micro-batches accumulated per optimizer step
    int iterations_per_epoch = 64;  // optimizer steps per epoch
    double weight_decay = 0.005;
    double clip_value = 2.0;
    double clip_norm = 10.0;
    LossConfig loss;
    int max_epochs = 200;
    int patience = 20;
    bool augment = true;
    augment::AugmentationSpec augmentation;
    double threshold = 0.5;
    metrics::HdMode hd_mode = metrics::HdMode::Pooled;
    /// Stop as soon as the monitored DSC reaches this value.
    std::optional<double> stop_at_dice;

    void validate() const;
};

/// One training or validation case at network resolution; the image is
/// already clip-normalised.
struct Sample {
    std::string id;
    ImageVolume image;
    LabelVolume mask;
    /// Optional ground truth at acquisition resolution. When present, scores
    /// use the prediction resampled (trilinear) back onto this lattice.
    LabelVolume reference_mask;
};

/// Thresholded prediction for a sample, on the reference lattice if it has one.
LabelVolume predict_mask(const ModelParams<float>& params, const Sample& s, double threshold);

struct EpochLog {
    int epoch = 0;
    double lr = 0.0;
    double loss = 0.0;
    double dice = 0.0;
    double hd95_mm = 0.0;
};

std::string format_epoch(const EpochLog& e);

struct TrainResult {
    ModelParams<float> params;  // best monitored epoch
    std::vector<EpochLog> log;
    int best_epoch = 0;
    /// True when the monitored set was the training set (no validation cases).
    bool monitored_training_set = false;
};

using EpochCallback = std::function<void(const EpochLog&)>;

/// Validation DSC is monitored when val is non-empty, otherwise the
/// un-augmented training DSC.
TrainResult train(const std::vector<Sample>& train_set, const std::vector<Sample>& val_set, const TrainConfig& cfg,
                  const NetConfig& net, std::uint64_t seed, const EpochCallback& on_epoch = {});

Tensor5<float> to_tensor(const ImageVolume& img);
Tensor5<float> to_tensor(const LabelVolume& mask);

/// Network probabilities on the image lattice (domain Probability).
ImageVolume predict(const ModelParams<float>& params, const ImageVolume& normalized);

/// Dice and HD95 of the thresholded prediction. An empty prediction gets the
/// volume diagonal as HD95 so averages stay finite.
metrics::SegScore evaluate_prediction(const LabelVolume& prediction, const LabelVolume& truth,
                                      metrics::HdMode mode = metrics::HdMode::Pooled);

struct FoldResult {
    std::vector<std::size_t> val_indices;
    double dice = 0.0;
    double hd95_mm = 0.0;
    int best_epoch = 0;
};

struct KFoldResult {
    std::vector<FoldResult> folds;
    double mean_dice = 0.0;
    double mean_hd95_mm = 0.0;
};

/// Seeded permutation dealt round-robin into k folds.
std::vector<std::vector<std::size_t>> kfold_partition(std::size_t n, int k, std::uint64_t seed);

KFoldResult kfold(const std::vector<Sample>& dataset, int k, const TrainConfig& cfg, const NetConfig& net,
                  std::uint64_t seed, const EpochCallback& on_epoch = {});

// Checkpoint: "SGPM", u32 version, u32 levels/base/blocks, f64 slope/eps,
// u32 tensor count, then per tensor u64 numel and little-endian f32 values.
inline constexpr std::uint32_t kCheckpointVersion = 1;
void save_checkpoint(const ModelParams<float>& params, const std::filesystem::path& path);
ModelParams<float> load_checkpoint(const std::filesystem::path& path);

}  // namespace segapipe::resunet
