#include "segapipe/config.hpp"

#include <boost/property_tree/ini_parser.hpp>
#include <boost/property_tree/ptree.hpp>
#include <functional>
#include <sstream>

#include "segapipe/errors.hpp"
#include "segapipe/resunet/loss.hpp"

namespace segapipe {
namespace {

std::string trim(const std::string& s) {
    const auto b = s.find_first_not_of(" \t\r\n");
    if (b == std::string::npos) return "";
    const auto e = s.find_last_not_of(" \t\r\n");
    return s.substr(b, e - b + 1);
}

std::vector<std::string> split(const std::string& s, char sep) {
    std::vector<std::string> out;
    std::stringstream ss(s);
    std::string item;
    while (std::getline(ss, item, sep)) out.push_back(trim(item));
    return out;
}

double to_double(const std::string& key, const std::string& v) {
    try {
        std::size_t pos = 0;
        const double d = std::stod(v, &pos);
        if (pos != v.size()) throw std::invalid_argument(v);
        return d;
    } catch (const std::exception&) {
        throw ArgumentError("config " + key + ": '" + v + "' is not a number");
    }
}

long long to_int(const std::string& key, const std::string& v) {
    try {
        std::size_t pos = 0;
        const long long i = std::stoll(v, &pos);
        if (pos != v.size()) throw std::invalid_argument(v);
        return i;
    } catch (const std::exception&) {
        throw ArgumentError("config " + key + ": '" + v + "' is not an integer");
    }
}

bool to_bool(const std::string& key, const std::string& v) {
    if (v == "true" || v == "1" || v == "yes" || v == "on") return true;
    if (v == "false" || v == "0" || v == "no" || v == "off") return false;
    throw ArgumentError("config " + key + ": '" + v + "' is not a boolean");
}

augment::Range to_range(const std::string& key, const std::string& v) {
    const auto parts = split(v, ',');
    if (parts.size() != 2) throw ArgumentError("config " + key + ": expected 'lo, hi'");
    return {to_double(key, parts[0]), to_double(key, parts[1])};
}

std::array<bool, 3> to_axes(const std::string& key, const std::string& v) {
    const auto parts = split(v, ',');
    if (parts.size() != 3) throw ArgumentError("config " + key + ": expected three booleans");
    return {to_bool(key, parts[0]), to_bool(key, parts[1]), to_bool(key, parts[2])};
}

Dims to_dims(const std::string& key, const std::string& v) {
    const auto parts = split(v, ',');
    if (parts.size() == 1) {
        const auto n = to_int(key, parts[0]);
        return {n, n, n};
    }
    if (parts.size() != 3) throw ArgumentError("config " + key + ": expected N or nx, ny, nz");
    return {to_int(key, parts[0]), to_int(key, parts[1]), to_int(key, parts[2])};
}

}  // namespace

augment::AugmentationSpec augmentation_preset(const std::string& name) {
    if (name == "full") return {};
    if (name == "none") return augment::AugmentationSpec::none();
    if (name == "geometric") return augment::AugmentationSpec::geometric_only();
    if (name == "intensity") return augment::AugmentationSpec::intensity_only();
    throw ArgumentError("unknown augmentation preset '" + name + "'");
}

void PipelineConfig::validate() const {
    train.validate();
    net.validate();
    elastic.validate();
    smoothing.validate();
    if (resolution.nx < 1 || resolution.ny < 1 || resolution.nz < 1) throw ArgumentError("resolution must be >= 1");
    for (int a = 0; a < 3; ++a)
        if (resolution[a] % net.divisor() != 0)
            throw ArgumentError("resolution axis " + std::to_string(a) + " (" + std::to_string(resolution[a]) +
                                ") is not divisible by " + std::to_string(net.divisor()));
    if (!(clip_high > clip_low)) throw ArgumentError("clip_high must exceed clip_low");
    if (!(threshold >= 0.0 && threshold <= 1.0)) throw ArgumentError("threshold must lie in [0, 1]");
    if (connectivity != 6 && connectivity != 18 && connectivity != 26)
        throw ArgumentError("connectivity must be 6, 18 or 26");
    if (dilation_radius < 0) throw ArgumentError("dilation_radius must be >= 0");
    if (folds < 2) throw ArgumentError("folds must be >= 2");
}

std::pair<std::string, std::string> parse_override(const std::string& text) {
    const auto eq = text.find('=');
    if (eq == std::string::npos) throw ArgumentError("override '" + text + "' must look like section.key=value");
    const auto key = trim(text.substr(0, eq));
    if (key.find('.') == std::string::npos) throw ArgumentError("override key '" + key + "' lacks a section");
    return {key, trim(text.substr(eq + 1))};
}

PipelineConfig config_from_entries(const ConfigOverrides& entries) {
    PipelineConfig c;
    using Setter = std::function<void(const std::string&, const std::string&)>;
    auto& t = c.train;
    auto& a = c.train.augmentation;
    // presets first, then individual keys
    if (auto it = entries.find("augment.preset"); it != entries.end()) a = augmentation_preset(it->second);
    if (auto it = entries.find("smoothing.preset"); it != entries.end()) {
        if (it->second == "surface") c.smoothing = mesh::SmoothingConfig::surface();
        else if (it->second == "volumetric") c.smoothing = mesh::SmoothingConfig::volumetric();
        else throw ArgumentError("unknown smoothing preset '" + it->second + "'");
        c.smoothing_preset = it->second;
    }

    const std::map<std::string, Setter> setters = {
        {"train.lr0", [&](auto& k, auto& v) { t.lr0 = to_double(k, v); }},
        {"train.decay", [&](auto& k, auto& v) { t.decay = to_double(k, v); }},
        {"train.batch", [&](auto& k, auto& v) { t.batch = static_cast<int>(to_int(k, v)); }},
        {"train.iterations_per_epoch", [&](auto& k, auto& v) { t.iterations_per_epoch = static_cast<int>(to_int(k, v)); }},
        {"train.weight_decay", [&](auto& k, auto& v) { t.weight_decay = to_double(k, v); }},
        {"train.clip_value", [&](auto& k, auto& v) { t.clip_value = to_double(k, v); }},
        {"train.clip_norm", [&](auto& k, auto& v) { t.clip_norm = to_double(k, v); }},
        {"train.max_epochs", [&](auto& k, auto& v) { t.max_epochs = static_cast<int>(to_int(k, v)); }},
        {"train.patience", [&](auto& k, auto& v) { t.patience = static_cast<int>(to_int(k, v)); }},
        {"train.loss", [&](auto&, auto& v) { t.loss.kind = resunet::parse_loss_kind(v); }},
        {"train.w_dice", [&](auto& k, auto& v) { t.loss.w_dice = to_double(k, v); }},
        {"train.w_focal", [&](auto& k, auto& v) { t.loss.w_focal = to_double(k, v); }},
        {"train.focal_gamma", [&](auto& k, auto& v) { t.loss.focal_gamma = to_double(k, v); }},
        {"train.focal_alpha", [&](auto& k, auto& v) { t.loss.focal_alpha = to_double(k, v); }},
        {"train.dice_eps", [&](auto& k, auto& v) { t.loss.dice_eps = to_double(k, v); }},
        {"train.augment", [&](auto& k, auto& v) { t.augment = to_bool(k, v); }},
        {"train.stop_at_dice", [&](auto& k, auto& v) { t.stop_at_dice = to_double(k, v); }},
        {"net.levels", [&](auto& k, auto& v) { c.net.levels = static_cast<int>(to_int(k, v)); }},
        {"net.base_channels", [&](auto& k, auto& v) { c.net.base_channels = static_cast<int>(to_int(k, v)); }},
        {"net.blocks_per_level", [&](auto& k, auto& v) { c.net.blocks_per_level = static_cast<int>(to_int(k, v)); }},
        {"net.leaky_slope", [&](auto& k, auto& v) { c.net.leaky_slope = to_double(k, v); }},
        {"net.norm_eps", [&](auto& k, auto& v) { c.net.norm_eps = to_double(k, v); }},
        {"augment.preset", [](auto&, auto&) {}},
        {"augment.rotation_deg", [&](auto& k, auto& v) { a.rotation_deg = to_range(k, v); }},
        {"augment.scale", [&](auto& k, auto& v) { a.scale = to_range(k, v); }},
        {"augment.translation_mm", [&](auto& k, auto& v) { a.translation_mm = to_range(k, v); }},
        {"augment.gamma", [&](auto& k, auto& v) { a.gamma = to_range(k, v); }},
        {"augment.noise_std", [&](auto& k, auto& v) { a.noise_std = to_range(k, v); }},
        {"augment.flip_axes", [&](auto& k, auto& v) { a.flip_axes = to_axes(k, v); }},
        {"augment.flip_axis_probability", [&](auto& k, auto& v) { a.flip_axis_probability = to_double(k, v); }},
        {"augment.motion_ghosts",
         [&](auto& k, auto& v) {
             const auto r = to_range(k, v);
             a.motion_ghosts_min = static_cast<int>(r.lo);
             a.motion_ghosts_max = static_cast<int>(r.hi);
         }},
        {"augment.motion_magnitude_mm", [&](auto& k, auto& v) { a.motion_magnitude_mm = to_double(k, v); }},
        {"augment.anisotropy_factor", [&](auto& k, auto& v) { a.anisotropy_factor = to_range(k, v); }},
        {"augment.anisotropy_axes", [&](auto& k, auto& v) { a.anisotropy_axes = to_axes(k, v); }},
        {"augment.blur_sigma_mm", [&](auto& k, auto& v) { a.blur_sigma_mm = to_range(k, v); }},
        {"augment.apply_probability", [&](auto& k, auto& v) { a.apply_probability = to_double(k, v); }},
        {"elastic.control_grid",
         [&](auto& k, auto& v) {
             const auto d = to_dims(k, v);
             c.elastic.control_grid = {static_cast<int>(d.nx), static_cast<int>(d.ny), static_cast<int>(d.nz)};
         }},
        {"elastic.max_displacement_mm", [&](auto& k, auto& v) { c.elastic.max_displacement_mm = to_double(k, v); }},
        {"elastic.smoothing_sigma_mm", [&](auto& k, auto& v) { c.elastic.smoothing_sigma_mm = to_double(k, v); }},
        {"elastic.n_output_cases", [&](auto& k, auto& v) { c.elastic.n_output_cases = static_cast<int>(to_int(k, v)); }},
        {"smoothing.preset", [](auto&, auto&) {}},
        {"smoothing.boundary_smoothing", [&](auto& k, auto& v) { c.smoothing.boundary_smoothing = to_bool(k, v); }},
        {"smoothing.feature_edge_smoothing", [&](auto& k, auto& v) { c.smoothing.feature_edge_smoothing = to_bool(k, v); }},
        {"smoothing.iterations", [&](auto& k, auto& v) { c.smoothing.iterations = static_cast<int>(to_int(k, v)); }},
        {"smoothing.feature_angle", [&](auto& k, auto& v) { c.smoothing.feature_angle_deg = to_double(k, v); }},
        {"smoothing.pass_band", [&](auto& k, auto& v) { c.smoothing.pass_band = to_double(k, v); }},
        {"smoothing.non_manifold_smoothing", [&](auto& k, auto& v) { c.smoothing.non_manifold_smoothing = to_bool(k, v); }},
        {"pipeline.resolution", [&](auto& k, auto& v) { c.resolution = to_dims(k, v); }},
        {"pipeline.clip_low", [&](auto& k, auto& v) { c.clip_low = to_double(k, v); }},
        {"pipeline.clip_high", [&](auto& k, auto& v) { c.clip_high = to_double(k, v); }},
        {"pipeline.threshold", [&](auto& k, auto& v) { c.threshold = to_double(k, v); }},
        {"pipeline.connectivity", [&](auto& k, auto& v) { c.connectivity = static_cast<int>(to_int(k, v)); }},
        {"pipeline.dilation_radius", [&](auto& k, auto& v) { c.dilation_radius = static_cast<int>(to_int(k, v)); }},
        {"pipeline.seed", [&](auto& k, auto& v) { c.seed = static_cast<std::uint64_t>(to_int(k, v)); }},
        {"pipeline.folds", [&](auto& k, auto& v) { c.folds = static_cast<int>(to_int(k, v)); }},
        {"pipeline.hd95_mode", [&](auto&, auto& v) { c.hd_mode = metrics::parse_hd_mode(v); }},
        {"phantom.dims", [&](auto& k, auto& v) { c.phantom.dims = to_dims(k, v); }},
        {"phantom.spacing",
         [&](auto& k, auto& v) {
             const auto p = split(v, ',');
             if (p.size() != 3) throw ArgumentError("config " + k + ": expected three spacings");
             c.phantom.spacing = {to_double(k, p[0]), to_double(k, p[1]), to_double(k, p[2])};
         }},
        {"phantom.noise_hu", [&](auto& k, auto& v) { c.phantom.noise_hu = to_double(k, v); }},
        {"phantom.distractors", [&](auto& k, auto& v) { c.phantom.distractors = to_bool(k, v); }},
    };
    for (const auto& [key, value] : entries) {
        auto it = setters.find(key);
        if (it == setters.end()) throw ArgumentError("unknown config key '" + key + "'");
        it->second(key, value);
    }
    t.threshold = c.threshold;
    t.hd_mode = c.hd_mode;
    c.validate();
    return c;
}

PipelineConfig load_config(const std::filesystem::path& path, const ConfigOverrides& overrides) {
    ConfigOverrides entries;
    if (!path.empty()) {
        boost::property_tree::ptree tree;
        try {
            boost::property_tree::read_ini(path.string(), tree);
        } catch (const boost::property_tree::ini_parser_error& e) {
            if (!std::filesystem::exists(path)) throw IoError("cannot open config " + path.string());
            throw FormatError("config " + path.string() + ": " + e.message() + " (line " + std::to_string(e.line()) + ")");
        }
        for (const auto& [section, body] : tree) {
            if (body.empty() && !body.data().empty()) throw FormatError("config " + path.string() + ": key '" + section + "' outside a section");
            for (const auto& [key, value] : body) entries[section + "." + key] = trim(value.data());
        }
    }
    for (const auto& [k, v] : overrides) entries[k] = v;
    return config_from_entries(entries);
}

}  // namespace segapipe
