#include <algorithm>
#include <bit>
#include <cstring>
#include <fstream>

#include "segapipe/errors.hpp"
#include "segapipe/resunet/train.hpp"

namespace segapipe::resunet {
namespace {

template <typename T>
void put(std::ofstream& out, T v) {
    unsigned char b[sizeof(T)];
    std::memcpy(b, &v, sizeof(T));
    if constexpr (std::endian::native == std::endian::big) std::reverse(b, b + sizeof(T));
    out.write(reinterpret_cast<const char*>(b), sizeof(T));
}

template <typename T>
T get(std::ifstream& in, const std::filesystem::path& path) {
    unsigned char b[sizeof(T)];
    if (!in.read(reinterpret_cast<char*>(b), sizeof(T)))
        throw TruncationError("checkpoint " + path.string() + " is truncated");
    if constexpr (std::endian::native == std::endian::big) std::reverse(b, b + sizeof(T));
    T v;
    std::memcpy(&v, b, sizeof(T));
    return v;
}

}  // namespace

void save_checkpoint(const ModelParams<float>& params, const std::filesystem::path& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError("cannot write checkpoint " + path.string());
    out.write("SGPM", 4);
    put<std::uint32_t>(out, kCheckpointVersion);
    put<std::uint32_t>(out, static_cast<std::uint32_t>(params.cfg.levels));
    put<std::uint32_t>(out, static_cast<std::uint32_t>(params.cfg.base_channels));
    put<std::uint32_t>(out, static_cast<std::uint32_t>(params.cfg.blocks_per_level));
    put<double>(out, params.cfg.leaky_slope);
    put<double>(out, params.cfg.norm_eps);
    put<std::uint32_t>(out, static_cast<std::uint32_t>(params.tensors.size()));
    for (const auto& t : params.tensors) {
        put<std::uint64_t>(out, t.size());
        for (float v : t) put<float>(out, v);
    }
    if (!out) throw IoError("failed writing checkpoint " + path.string());
}

ModelParams<float> load_checkpoint(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open checkpoint " + path.string());
    char magic[4];
    if (!in.read(magic, 4) || std::memcmp(magic, "SGPM", 4) != 0)
        throw FormatError("checkpoint " + path.string() + " lacks the SGPM magic");
    const auto version = get<std::uint32_t>(in, path);
    if (version != kCheckpointVersion)
        throw FormatError("checkpoint " + path.string() + " has version " + std::to_string(version) + ", expected " +
                          std::to_string(kCheckpointVersion));
    NetConfig cfg;
    cfg.levels = static_cast<int>(get<std::uint32_t>(in, path));
    cfg.base_channels = static_cast<int>(get<std::uint32_t>(in, path));
    cfg.blocks_per_level = static_cast<int>(get<std::uint32_t>(in, path));
    cfg.leaky_slope = get<double>(in, path);
    cfg.norm_eps = get<double>(in, path);
    try {
        cfg.validate();
    } catch (const ArgumentError& e) {
        throw FormatError("checkpoint " + path.string() + " has an invalid network config: " + e.what());
    }
    const auto layout = param_layout(cfg);
    const auto count = get<std::uint32_t>(in, path);
    if (count != layout.size())
        throw FormatError("checkpoint " + path.string() + " holds " + std::to_string(count) + " tensors, expected " +
                          std::to_string(layout.size()));
    ModelParams<float> p;
    p.cfg = cfg;
    for (const auto& spec : layout) {
        const auto n = get<std::uint64_t>(in, path);
        if (n != spec.numel())
            throw FormatError("checkpoint tensor " + spec.name + " has " + std::to_string(n) + " values, expected " +
                              std::to_string(spec.numel()));
        std::vector<float> t(n);
        for (auto& v : t) v = get<float>(in, path);
        p.tensors.push_back(std::move(t));
    }
    if (in.peek() != std::char_traits<char>::eof())
        throw FormatError("checkpoint " + path.string() + " has trailing bytes");
    return p;
}

}  // namespace segapipe::resunet
