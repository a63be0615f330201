#include <cstdio>
#include <fstream>
#include <sstream>

#include "segapipe/augment.hpp"
#include "segapipe/errors.hpp"
#include "segapipe/parallel.hpp"
#include "segapipe/rng.hpp"

namespace segapipe::augment {

namespace fs = std::filesystem;

std::vector<ManifestEntry> elastic_expand(const std::vector<Case>& dataset, const ElasticSpec& spec,
                                          const fs::path& out_dir, std::uint64_t master_seed) {
    if (dataset.empty()) throw ArgumentError("elastic_expand needs a nonempty dataset");
    spec.validate();
    std::error_code ec;
    fs::create_directories(out_dir, ec);
    if (ec || !fs::is_directory(out_dir)) throw IoError("cannot create output directory " + out_dir.string());

    std::vector<ManifestEntry> entries(static_cast<std::size_t>(spec.n_output_cases));
    parallel_for(0, entries.size(), [&](std::size_t i) {
        const Case& src = dataset[i % dataset.size()];
        const std::uint64_t seed = derive_seed(master_seed, i);
        auto [img, mask] = elastic_deform(src.image, src.mask, spec, seed);
        char stem[32];
        std::snprintf(stem, sizeof(stem), "case_%05zu", i);
        ManifestEntry e{src.id, seed, out_dir / (std::string(stem) + "_img.mhd"), out_dir / (std::string(stem) + "_mask.mhd")};
        img.element_type = ElementType::Float;
        write_mhd(img, e.image_path);
        write_mhd(mask, e.mask_path);
        entries[i] = std::move(e);
    });
    write_manifest(entries, out_dir / "manifest.tsv");
    return entries;
}

void write_manifest(const std::vector<ManifestEntry>& entries, const fs::path& path) {
    std::ofstream out(path, std::ios::trunc);
    if (!out) throw IoError("cannot write manifest " + path.string());
    const fs::path base = path.parent_path();
    for (const auto& e : entries) {
        auto rel = [&](const fs::path& p) {
            const auto r = p.lexically_relative(base);
            return r.empty() || *r.begin() == ".." ? p : r;
        };
        out << e.source_id << '\t' << e.seed << '\t' << rel(e.image_path).string() << '\t' << rel(e.mask_path).string()
            << '\n';
    }
    if (!out) throw IoError("failed writing manifest " + path.string());
}

std::vector<ManifestEntry> read_manifest(const fs::path& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open manifest " + path.string());
    std::vector<ManifestEntry> entries;
    std::string line;
    const fs::path base = path.parent_path();
    while (std::getline(in, line)) {
        if (line.empty() || line[0] == '#') continue;
        std::istringstream ss(line);
        std::string id, seed, img, mask;
        if (!std::getline(ss, id, '\t') || !std::getline(ss, seed, '\t') || !std::getline(ss, img, '\t') ||
            !std::getline(ss, mask)) {
            throw FormatError("manifest line needs 4 tab-separated fields: " + line);
        }
        ManifestEntry e;
        e.source_id = id;
        try {
            e.seed = std::stoull(seed);
        } catch (const std::exception&) {
            throw FormatError("manifest seed is not an integer: " + seed);
        }
        e.image_path = fs::path(img).is_absolute() ? fs::path(img) : base / img;
        e.mask_path = fs::path(mask).is_absolute() ? fs::path(mask) : base / mask;
        entries.push_back(std::move(e));
    }
    return entries;
}

}  // namespace segapipe::augment
