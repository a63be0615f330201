// segapipe command line: preprocessing, augmentation, training, inference,
// meshing, evaluation, ablations and phantom generation.

#include <CLI11.hpp>
#include <cstdio>
#include <fstream>
#include <memory>
#include <sstream>
#include <iostream>

#include "segapipe/augment.hpp"
#include "segapipe/config.hpp"
#include "segapipe/errors.hpp"
#include "segapipe/meshkit.hpp"
#include "segapipe/metrics.hpp"
#include "segapipe/phantom.hpp"
#include "segapipe/pipeline.hpp"
#include "segapipe/resunet/train.hpp"
#include "segapipe/xform.hpp"

namespace fs = std::filesystem;
using namespace segapipe;

namespace {

std::string g_stage = "setup";

struct Common {
    std::string config;
    std::vector<std::string> overrides;
    long long seed = -1;
};

PipelineConfig load(const Common& c) {
    g_stage = "config";
    ConfigOverrides ov;
    for (const auto& o : c.overrides) ov.insert_or_assign(parse_override(o).first, parse_override(o).second);
    if (c.seed >= 0) ov["pipeline.seed"] = std::to_string(c.seed);
    return load_config(c.config, ov);
}

void add_common(CLI::App* cmd, Common& c) {
    cmd->add_option("-c,--config", c.config, "INI configuration file");
    cmd->add_option("--set", c.overrides, "Override as section.key=value (repeatable, wins over the file)");
    cmd->add_option("--seed", c.seed, "Master seed (same as --set pipeline.seed=N)");
}

Dims parse_dims(const std::string& s) {
    auto cfg = config_from_entries({{"phantom.dims", s}});
    return cfg.phantom.dims;
}

void log_line(std::ostream* file, const std::string& line) {
    std::cerr << line << "\n";
    if (file) *file << line << "\n";
}

int cmd_phantom(const Common& common, const std::string& out_dir, int count, const std::string& dims,
                const std::string& spacing) {
    auto cfg = load(common);
    if (!dims.empty()) cfg.phantom.dims = parse_dims(dims);
    if (!spacing.empty()) cfg.phantom.spacing = config_from_entries({{"phantom.spacing", spacing}}).phantom.spacing;
    g_stage = "phantom";
    fs::create_directories(out_dir);
    std::vector<augment::ManifestEntry> entries;
    for (int i = 0; i < count; ++i) {
        const std::uint64_t seed = cfg.seed + static_cast<std::uint64_t>(i);
        const auto ph = make_phantom(seed, cfg.phantom);
        char stem[64];
        std::snprintf(stem, sizeof stem, "phantom_%03d", i);
        const fs::path img = fs::path(out_dir) / (std::string(stem) + "_img.mhd");
        const fs::path mask = fs::path(out_dir) / (std::string(stem) + "_mask.mhd");
        write_mhd(ph.image, img);
        write_mhd(ph.mask, mask);
        entries.push_back({stem, seed, img, mask});
        std::cerr << stem << ": " << ph.mask.foreground_count() << " foreground voxels\n";
    }
    augment::write_manifest(entries, fs::path(out_dir) / "manifest.tsv");
    return 0;
}

int cmd_preprocess(const Common& common, const std::string& in, const std::string& out, const std::string& mask_in,
                   const std::string& mask_out) {
    const auto cfg = load(common);
    g_stage = "load";
    const auto raw = read_image_mhd(in);
    g_stage = "preprocess";
    write_mhd(preprocess_image(raw, cfg), out);
    if (!mask_in.empty()) {
        if (mask_out.empty()) throw ArgumentError("--mask-out is required with --mask");
        const auto m = read_label_mhd(mask_in);
        write_mhd(m.geom.dims() == cfg.resolution ? m : xform::resample(m, cfg.resolution), mask_out);
    }
    return 0;
}

int cmd_augment(const Common& common, const std::string& img, const std::string& mask, const std::string& out_img,
                const std::string& out_mask) {
    const auto cfg = load(common);
    g_stage = "load";
    const auto i = read_image_mhd(img);
    const auto m = read_label_mhd(mask);
    g_stage = "augment";
    augment::AugmentationTrace trace;
    auto [ai, am] = augment::augment_pair(i, m, cfg.train.augmentation, cfg.seed, &trace);
    for (std::size_t k = 0; k < trace.order.size(); ++k)
        std::cerr << augment::transform_name(trace.order[k]) << (trace.fired[k] ? " applied\n" : " skipped\n");
    write_mhd(ai, out_img);
    write_mhd(am, out_mask);
    return 0;
}

int cmd_elastic(const Common& common, const std::string& manifest, const std::string& out_dir, int count) {
    auto cfg = load(common);
    if (count >= 0) cfg.elastic.n_output_cases = count;
    g_stage = "load";
    const auto cases = load_cases(manifest);
    g_stage = "elastic-expand";
    fs::create_directories(out_dir);
    const auto entries = augment::elastic_expand(cases, cfg.elastic, out_dir, cfg.seed);
    std::cerr << "wrote " << entries.size() << " cases to " << out_dir << "\n";
    return 0;
}

std::vector<resunet::Sample> samples_from(const std::vector<augment::Case>& cases, const PipelineConfig& cfg) {
    std::vector<resunet::Sample> s;
    for (const auto& c : cases) s.push_back(make_sample(c.id, c.image, c.mask, cfg));
    return s;
}

int cmd_train(const Common& common, const std::string& manifest, const std::string& val_manifest,
              const std::string& checkpoint, const std::string& log_path) {
    const auto cfg = load(common);
    g_stage = "load";
    const auto train_set = samples_from(load_cases(manifest), cfg);
    std::vector<resunet::Sample> val_set;
    if (!val_manifest.empty()) val_set = samples_from(load_cases(val_manifest), cfg);
    std::unique_ptr<std::ofstream> log;
    if (!log_path.empty()) {
        log = std::make_unique<std::ofstream>(log_path, std::ios::trunc);
        if (!*log) throw IoError("cannot write log " + log_path);
    }
    g_stage = "train";
    const auto r = resunet::train(train_set, val_set, cfg.train, cfg.net, cfg.seed,
                                  [&](const resunet::EpochLog& e) { log_line(log.get(), resunet::format_epoch(e)); });
    log_line(log.get(), "best_epoch=" + std::to_string(r.best_epoch));
    g_stage = "save";
    resunet::save_checkpoint(r.params, checkpoint);
    return 0;
}

int cmd_kfold(const Common& common, const std::string& manifest, int k, const std::string& report) {
    auto cfg = load(common);
    if (k > 0) cfg.folds = k;
    g_stage = "load";
    const auto cases = load_cases(manifest);
    const auto samples = samples_from(cases, cfg);
    g_stage = "kfold";
    const auto r = resunet::kfold(samples, cfg.folds, cfg.train, cfg.net, cfg.seed,
                                  [](const resunet::EpochLog& e) { std::cerr << resunet::format_epoch(e) << "\n"; });
    std::ostringstream out;
    char buf[128];
    out << "fold\tAvg. DSC\tAvg. HD95 [mm]\n";
    for (std::size_t f = 0; f < r.folds.size(); ++f) {
        std::snprintf(buf, sizeof buf, "%zu\t%.4f\t%.4f\n", f + 1, r.folds[f].dice, r.folds[f].hd95_mm);
        out << buf;
    }
    std::snprintf(buf, sizeof buf, "mean\t%.4f\t%.4f\n", r.mean_dice, r.mean_hd95_mm);
    out << buf;
    g_stage = "report";
    if (report.empty()) std::cout << out.str();
    else {
        std::ofstream f(report);
        if (!f) throw IoError("cannot write report " + report);
        f << out.str();
    }
    return 0;
}

int cmd_infer(const Common& common, const std::string& input, const std::string& checkpoint, const std::string& output,
              const std::string& mesh_out, const std::string& prob_out) {
    const auto cfg = load(common);
    g_stage = "load checkpoint";
    if (!fs::exists(checkpoint)) throw IoError("checkpoint not found: " + checkpoint);
    const auto params = resunet::load_checkpoint(checkpoint);
    g_stage = "load image";
    const auto raw = read_image_mhd(input);
    g_stage = "inference";
    const auto r = infer(raw, params, cfg, !mesh_out.empty());
    g_stage = "save";
    write_mhd(r.mask, output);
    if (!prob_out.empty()) write_mhd(r.probability, prob_out);
    if (r.surface) {
        const auto check = mesh::check_watertight(*r.surface);
        std::cerr << "mesh: " << r.surface->vertices.size() << " vertices, " << r.surface->triangles.size()
                  << " triangles, watertight=" << (check.watertight ? "yes" : "no") << "\n";
        write_stl(*r.surface, mesh_out);
    }
    return 0;
}

void write_surface(const TriMesh& m, const fs::path& out) {
    if (out.extension() == ".obj") write_obj(m, out);
    else write_stl(m, out);
}

int cmd_mesh(const Common& common, const std::string& mask_path, const std::string& output) {
    const auto cfg = load(common);
    g_stage = "load";
    const auto mask = read_label_mhd(mask_path);
    g_stage = "mesh";
    const auto m = mesh_from_mask(mask, cfg);
    const auto check = mesh::check_watertight(m);
    std::cerr << "vertices=" << m.vertices.size() << " triangles=" << m.triangles.size()
              << " watertight=" << (check.watertight ? "yes" : "no") << " euler=" << check.euler_characteristic << "\n";
    g_stage = "save";
    write_surface(m, output);
    return 0;
}

int cmd_evaluate(const Common& common, const std::string& pred, const std::string& truth, const std::string& id,
                 const std::string& node, const std::string& ele, const std::string& report) {
    const auto cfg = load(common);
    std::ostringstream out;
    char buf[256];
    if (!pred.empty() || !truth.empty()) {
        if (pred.empty() || truth.empty()) throw ArgumentError("--pred and --truth go together");
        g_stage = "load";
        const auto p = read_label_mhd(pred);
        const auto t = read_label_mhd(truth);
        g_stage = "evaluate";
        const auto s = metrics::score(p, t, cfg.hd_mode);
        std::snprintf(buf, sizeof buf, "%s\t%.6f\t%.6f\n", (id.empty() ? fs::path(pred).stem().string() : id).c_str(),
                      s.dice, s.hd95_mm);
        out << buf;
    }
    if (!node.empty() || !ele.empty()) {
        g_stage = "load tetra mesh";
        const auto tets = read_node_ele(node, ele);
        g_stage = "tet quality";
        const auto q = metrics::tet_quality_report(tets);
        std::snprintf(buf, sizeof buf,
                      "tets=%zu\tinverted=%zu\tmedian_jac=%.6f\tjac_variance=%.6g\tjac_skewness=%.6f\n", q.tet_count,
                      q.inverted_count, q.median_jac, q.jac_variance, q.jac_skewness);
        out << buf;
    }
    if (out.str().empty()) throw ArgumentError("nothing to evaluate: give --pred/--truth or --node/--ele");
    g_stage = "report";
    if (report.empty()) std::cout << out.str();
    else {
        std::ofstream f(report, std::ios::app);
        if (!f) throw IoError("cannot write report " + report);
        f << out.str();
    }
    return 0;
}

int cmd_ablate(const Common& common, const std::string& axis_name, const std::string& manifest, int n_phantoms,
               const std::vector<std::string>& resolutions, const std::string& report) {
    g_stage = "ablate";
    AblationPlan plan;
    plan.axis = parse_ablation_axis(axis_name);
    const auto cfg = load(common);
    if (!resolutions.empty()) {
        plan.resolutions.clear();
        for (const auto& r : resolutions) plan.resolutions.push_back(parse_dims(r));
    }
    g_stage = "load";
    std::vector<augment::Case> cases;
    if (!manifest.empty()) {
        cases = load_cases(manifest);
    } else {
        for (int i = 0; i < n_phantoms; ++i) {
            auto ph = make_phantom(cfg.seed + static_cast<std::uint64_t>(i), cfg.phantom);
            cases.push_back({"phantom_" + std::to_string(i), std::move(ph.image), std::move(ph.mask)});
        }
    }
    g_stage = "ablate";
    const auto rows = run_ablation(cases, cfg, plan,
                                   [](const resunet::EpochLog& e) { std::cerr << resunet::format_epoch(e) << "\n"; });
    const std::string title = "Ablation - " + axis_name;
    if (report.empty()) write_ablation_table(std::cout, title, rows);
    else {
        std::ofstream f(report);
        if (!f) throw IoError("cannot write report " + report);
        write_ablation_table(f, title, rows);
    }
    return 0;
}

int exit_code_for(const std::exception& e) {
    if (dynamic_cast<const ShapeError*>(&e)) return 3;
    if (dynamic_cast<const NumericalError*>(&e) || dynamic_cast<const TopologyError*>(&e) ||
        dynamic_cast<const UndefinedMetricError*>(&e))
        return 4;
    return 2;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"segapipe: volumetric segmentation pipeline"};
    app.require_subcommand(1);
    Common common;

    std::string a, b, c, d, e, f;
    std::vector<std::string> list;
    int count = -1;
    int n_phantoms = 4;

    auto* phantom = app.add_subcommand("phantom", "Generate synthetic aorta phantoms");
    add_common(phantom, common);
    phantom->add_option("-o,--out-dir", a, "Output directory")->required();
    phantom->add_option("-n,--count", count, "Number of phantoms")->default_val(1);
    phantom->add_option("--dims", b, "N or nx,ny,nz");
    phantom->add_option("--spacing", c, "sx,sy,sz in mm");

    auto* pre = app.add_subcommand("preprocess", "Resample and clip-normalise a volume");
    add_common(pre, common);
    pre->add_option("-i,--input", a)->required();
    pre->add_option("-o,--output", b)->required();
    pre->add_option("--mask", c, "Optional mask resampled alongside");
    pre->add_option("--mask-out", d);

    auto* aug = app.add_subcommand("augment", "One seeded online-augmentation pass");
    add_common(aug, common);
    aug->add_option("--image", a)->required();
    aug->add_option("--mask", b)->required();
    aug->add_option("--out-image", c)->required();
    aug->add_option("--out-mask", d)->required();

    auto* ela = app.add_subcommand("elastic-expand", "Offline elastic expansion of a dataset");
    add_common(ela, common);
    ela->add_option("-m,--manifest", a)->required();
    ela->add_option("-o,--out-dir", b)->required();
    ela->add_option("-n,--count", count, "Overrides elastic.n_output_cases");

    auto* tr = app.add_subcommand("train", "Train a network");
    add_common(tr, common);
    tr->add_option("-m,--manifest", a)->required();
    tr->add_option("--val-manifest", b);
    tr->add_option("-o,--checkpoint", c)->required();
    tr->add_option("--log", d);

    auto* kf = app.add_subcommand("kfold", "k-fold cross-validation");
    add_common(kf, common);
    kf->add_option("-m,--manifest", a)->required();
    kf->add_option("-k", count, "Folds (default pipeline.folds)");
    kf->add_option("--report", b);

    auto* inf = app.add_subcommand("infer", "Segment a volume");
    add_common(inf, common);
    inf->add_option("-i,--input", a)->required();
    inf->add_option("--checkpoint", b)->required();
    inf->add_option("-o,--output", c)->required();
    inf->add_option("--mesh", d, "Also write a watertight STL surface");
    inf->add_option("--prob", e, "Also write the probability map");

    auto* me = app.add_subcommand("mesh", "Surface mesh from a mask");
    add_common(me, common);
    me->add_option("--mask", a)->required();
    me->add_option("-o,--output", b, ".stl or .obj")->required();

    auto* ev = app.add_subcommand("evaluate", "Dice/HD95 and tetrahedral quality");
    add_common(ev, common);
    ev->add_option("--pred", a);
    ev->add_option("--truth", b);
    ev->add_option("--id", c, "Case id for the report line");
    ev->add_option("--node", d, "TetGen .node file");
    ev->add_option("--ele", e, "TetGen .ele file");
    ev->add_option("--report", f, "Append to this file instead of stdout");
    std::string hd_mode;
    ev->add_option("--hd95-mode", hd_mode, "pooled or max");

    auto* ab = app.add_subcommand("ablate", "Ablation study over one configuration axis");
    add_common(ab, common);
    ab->add_option("--axis", a, "resolution, loss or augmentation")->required();
    ab->add_option("-m,--manifest", b, "Dataset (default: generated phantoms)");
    ab->add_option("--phantoms", n_phantoms, "Phantom count when no manifest is given");
    ab->add_option("--resolutions", list, "Rows of the resolution axis, e.g. 64 32 16");
    ab->add_option("--report", c);

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& err) {
        const int rc = app.exit(err);
        return rc == 0 ? 0 : 2;
    }

    const auto* sub = app.get_subcommands().front();
    const std::string name = sub->get_name();
    try {
        if (!hd_mode.empty()) common.overrides.push_back("pipeline.hd95_mode=" + hd_mode);
        if (name == "phantom") return cmd_phantom(common, a, count, b, c);
        if (name == "preprocess") return cmd_preprocess(common, a, b, c, d);
        if (name == "augment") return cmd_augment(common, a, b, c, d);
        if (name == "elastic-expand") return cmd_elastic(common, a, b, count);
        if (name == "train") return cmd_train(common, a, b, c, d);
        if (name == "kfold") return cmd_kfold(common, a, count, b);
        if (name == "infer") return cmd_infer(common, a, b, c, d, e);
        if (name == "mesh") return cmd_mesh(common, a, b);
        if (name == "evaluate") return cmd_evaluate(common, a, b, c, d, e, f);
        if (name == "ablate") return cmd_ablate(common, a, b, n_phantoms, list, c);
    } catch (const std::exception& ex) {
        std::cerr << "segapipe " << name << ": " << g_stage << ": " << ex.what() << "\n";
        return exit_code_for(ex);
    }
    return 2;
}
