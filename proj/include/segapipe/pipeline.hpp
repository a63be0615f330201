#pragma once

#include <filesystem>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

#include "segapipe/config.hpp"
#include "segapipe/resunet/train.hpp"

namespace segapipe {

/// Resample to the network resolution and clip-normalise.
ImageVolume preprocess_image(const ImageVolume& raw, const PipelineConfig& cfg);

/// Network-resolution training sample; the original mask is kept as reference.
resunet::Sample make_sample(const std::string& id, const ImageVolume& raw, const LabelVolume& mask,
                            const PipelineConfig& cfg);

struct InferResult {
    ImageVolume probability;  // on the input lattice
    LabelVolume mask;         // thresholded, unfiltered
    std::optional<TriMesh> surface;
};

/// load -> resample -> clip/normalise -> forward -> resample back -> threshold,
/// optionally followed by the meshing chain.
InferResult infer(const ImageVolume& raw, const resunet::ModelParams<float>& params, const PipelineConfig& cfg,
                  bool with_mesh);

/// largest component -> dilate -> marching cubes -> smoothing -> hole closing.
TriMesh mesh_from_mask(const LabelVolume& mask, const PipelineConfig& cfg);

/// Raw cases listed in a manifest (paths relative to the manifest directory).
std::vector<augment::Case> load_cases(const std::filesystem::path& manifest);

enum class AblationAxis { Resolution, Loss, Augmentation };
AblationAxis parse_ablation_axis(const std::string& name);

struct AblationRow {
    std::string label;
    double dice = 0.0;
    double hd95_mm = 0.0;
};

struct AblationPlan {
    AblationAxis axis = AblationAxis::Resolution;
    std::vector<Dims> resolutions{{64, 64, 64}, {32, 32, 32}, {16, 16, 16}};
};

/// One k-fold run per configuration row of the axis.
std::vector<AblationRow> run_ablation(const std::vector<augment::Case>& cases, const PipelineConfig& cfg,
                                      const AblationPlan& plan, const resunet::EpochCallback& on_epoch = {});

void write_ablation_table(std::ostream& out, const std::string& title, const std::vector<AblationRow>& rows);

}  // namespace segapipe
