#pragma once

#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include "segapipe/augment.hpp"
#include "segapipe/meshkit.hpp"
#include "segapipe/metrics.hpp"
#include "segapipe/phantom.hpp"
#include "segapipe/resunet/train.hpp"

namespace segapipe {

/// Every tunable of the pipeline. Loaded from an INI file ("key = value"
/// under [section] headers) with "section.key=value" overrides on top.
struct PipelineConfig {
    resunet::TrainConfig train;
    resunet::NetConfig net;
    augment::ElasticSpec elastic;
    mesh::SmoothingConfig smoothing = mesh::SmoothingConfig::surface();
    std::string smoothing_preset = "surface";
    Dims resolution{64, 64, 64};
    double clip_low = -700.0;
    double clip_high = 2300.0;
    double threshold = 0.5;
    int connectivity = 26;
    int dilation_radius = 1;
    std::uint64_t seed = 0;
    int folds = 5;
    metrics::HdMode hd_mode = metrics::HdMode::Pooled;
    PhantomSpec phantom;

    void validate() const;
};

using ConfigOverrides = std::map<std::string, std::string>;

/// Parses "section.key=value".
std::pair<std::string, std::string> parse_override(const std::string& text);

PipelineConfig load_config(const std::filesystem::path& path, const ConfigOverrides& overrides = {});
PipelineConfig config_from_entries(const ConfigOverrides& entries);

/// Augmentation presets by name: full, none, geometric, intensity.
augment::AugmentationSpec augmentation_preset(const std::string& name);

}  // namespace segapipe
