#include "segapipe/pipeline.hpp"

#include <cstdio>

#include "segapipe/errors.hpp"
#include "segapipe/postproc.hpp"
#include "segapipe/resunet/loss.hpp"
#include "segapipe/xform.hpp"

namespace segapipe {

ImageVolume preprocess_image(const ImageVolume& raw, const PipelineConfig& cfg) {
    auto img = raw;
    if (raw.geom.dims() != cfg.resolution) img = xform::resample(raw, cfg.resolution, xform::Interp::Trilinear);
    return xform::clip_normalize(img, cfg.clip_low, cfg.clip_high);
}

resunet::Sample make_sample(const std::string& id, const ImageVolume& raw, const LabelVolume& mask,
                            const PipelineConfig& cfg) {
    if (!raw.geom.same_as(mask.geom)) throw ArgumentError("case " + id + ": image and mask geometry differ");
    resunet::Sample s;
    s.id = id;
    s.image = preprocess_image(raw, cfg);
    s.mask = mask.geom.dims() == cfg.resolution ? mask : xform::resample(mask, cfg.resolution);
    s.mask.geom = s.image.geom;
    if (mask.geom.dims() != cfg.resolution) s.reference_mask = mask;
    return s;
}

InferResult infer(const ImageVolume& raw, const resunet::ModelParams<float>& params, const PipelineConfig& cfg,
                  bool with_mesh) {
    InferResult r;
    const auto net_in = preprocess_image(raw, cfg);
    auto prob = resunet::predict(params, net_in);
    if (prob.geom.dims() != raw.geom.dims()) prob = xform::resample(prob, raw.geom.dims(), xform::Interp::Trilinear);
    prob.geom = raw.geom;
    r.mask = postproc::threshold(prob, cfg.threshold);
    r.probability = std::move(prob);
    if (with_mesh) r.surface = mesh_from_mask(r.mask, cfg);
    return r;
}

TriMesh mesh_from_mask(const LabelVolume& mask, const PipelineConfig& cfg) {
    const auto kept = postproc::largest_component(mask, cfg.connectivity);
    const auto grown = postproc::dilate(kept, cfg.dilation_radius);
    const auto raw = mesh::marching_cubes(grown);
    const auto smooth = mesh::windowed_sinc_smooth(raw, cfg.smoothing);
    return mesh::close_holes(smooth);
}

std::vector<augment::Case> load_cases(const std::filesystem::path& manifest) {
    const auto entries = augment::read_manifest(manifest);
    if (entries.empty()) throw ArgumentError("manifest " + manifest.string() + " lists no cases");
    std::vector<augment::Case> cases;
    for (const auto& e : entries) {
        augment::Case c;
        c.id = e.source_id;
        c.image = read_image_mhd(e.image_path);
        c.mask = read_label_mhd(e.mask_path);
        cases.push_back(std::move(c));
    }
    return cases;
}

AblationAxis parse_ablation_axis(const std::string& name) {
    if (name == "resolution") return AblationAxis::Resolution;
    if (name == "loss") return AblationAxis::Loss;
    if (name == "augmentation") return AblationAxis::Augmentation;
    throw ArgumentError("unknown ablation axis '" + name + "' (expected resolution, loss or augmentation)");
}

std::vector<AblationRow> run_ablation(const std::vector<augment::Case>& cases, const PipelineConfig& cfg,
                                      const AblationPlan& plan, const resunet::EpochCallback& on_epoch) {
    struct Row {
        std::string label;
        PipelineConfig cfg;
    };
    std::vector<Row> rows;
    switch (plan.axis) {
        case AblationAxis::Resolution:
            for (const auto& d : plan.resolutions) {
                Row r{std::to_string(d.nx) + "x" + std::to_string(d.ny) + "x" + std::to_string(d.nz), cfg};
                r.cfg.resolution = d;
                rows.push_back(r);
            }
            break;
        case AblationAxis::Loss:
            for (auto k : {resunet::LossKind::DiceFocal, resunet::LossKind::Dice, resunet::LossKind::DiceCrossEntropy,
                           resunet::LossKind::Focal}) {
                Row r{resunet::loss_kind_name(k), cfg};
                r.cfg.train.loss.kind = k;
                rows.push_back(r);
            }
            break;
        case AblationAxis::Augmentation:
            for (const char* name : {"full", "geometric", "intensity", "none"}) {
                Row r{std::string(name), cfg};
                r.cfg.train.augmentation = augmentation_preset(name);
                r.cfg.train.augment = std::string(name) != "none";
                rows.push_back(r);
            }
            break;
    }
    std::vector<AblationRow> out;
    for (auto& row : rows) {
        row.cfg.validate();
        std::vector<resunet::Sample> samples;
        for (const auto& c : cases) samples.push_back(make_sample(c.id, c.image, c.mask, row.cfg));
        const int k = std::min<int>(row.cfg.folds, static_cast<int>(samples.size()));
        const auto res = resunet::kfold(samples, k, row.cfg.train, row.cfg.net, row.cfg.seed, on_epoch);
        out.push_back({row.label, res.mean_dice, res.mean_hd95_mm});
    }
    return out;
}

void write_ablation_table(std::ostream& out, const std::string& title, const std::vector<AblationRow>& rows) {
    out << "# " << title << "\n";
    out << "config\tAvg. DSC\tAvg. HD95 [mm]\n";
    char buf[64];
    for (const auto& r : rows) {
        std::snprintf(buf, sizeof buf, "%.4f\t%.4f", r.dice, r.hd95_mm);
        out << r.label << "\t" << buf << "\n";
    }
}

}  // namespace segapipe
