#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <iomanip>
#include <limits>
#include <map>
#include <sstream>

#include "segapipe/errors.hpp"
#include "segapipe/volgrid.hpp"

namespace segapipe {

namespace fs = std::filesystem;

namespace {

std::string trim(const std::string& s) {
    const auto b = s.find_first_not_of(" \t\r\n");
    if (b == std::string::npos) return {};
    const auto e = s.find_last_not_of(" \t\r\n");
    return s.substr(b, e - b + 1);
}

using Header = std::map<std::string, std::string>;

Header parse_header(const fs::path& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open MetaImage header " + path.string());
    Header header;
    std::string line;
    while (std::getline(in, line)) {
        const auto eq = line.find('=');
        if (eq == std::string::npos) continue;
        header[trim(line.substr(0, eq))] = trim(line.substr(eq + 1));
    }
    return header;
}

// Returns the value of the first key present; aliases follow the MetaIO reader.
const std::string& require(const Header& h, std::initializer_list<const char*> keys) {
    for (const char* k : keys) {
        if (auto it = h.find(k); it != h.end()) return it->second;
    }
    throw FormatError(std::string("missing key ") + *keys.begin());
}

template <typename T>
std::vector<T> parse_numbers(const std::string& value, std::size_t expected, const char* key) {
    std::istringstream ss(value);
    std::vector<T> out;
    T v{};
    while (ss >> v) out.push_back(v);
    if (out.size() != expected) {
        throw FormatError(std::string("key ") + key + " expects " + std::to_string(expected) + " values");
    }
    return out;
}

bool parse_bool(const std::string& v) {
    std::string lower = v;
    std::transform(lower.begin(), lower.end(), lower.begin(), [](unsigned char c) { return std::tolower(c); });
    return lower == "true" || lower == "1";
}

template <typename T>
T byteswap_value(T v) {
    unsigned char bytes[sizeof(T)];
    std::memcpy(bytes, &v, sizeof(T));
    std::reverse(bytes, bytes + sizeof(T));
    std::memcpy(&v, bytes, sizeof(T));
    return v;
}

template <typename T>
std::vector<T> read_payload(const fs::path& raw, std::size_t count, bool big_endian) {
    std::error_code ec;
    const auto size = fs::file_size(raw, ec);
    if (ec) throw IoError("cannot open MetaImage payload " + raw.string());
    const std::size_t expected = count * sizeof(T);
    if (size != expected) {
        throw TruncationError("payload " + raw.string() + " has " + std::to_string(size) + " bytes, expected " +
                              std::to_string(expected));
    }
    std::vector<T> data(count);
    std::ifstream in(raw, std::ios::binary);
    if (!in.read(reinterpret_cast<char*>(data.data()), static_cast<std::streamsize>(expected))) {
        throw TruncationError("short read from " + raw.string());
    }
    const bool host_big = std::endian::native == std::endian::big;
    if (big_endian != host_big) {
        for (auto& v : data) v = byteswap_value(v);
    }
    return data;
}

template <typename T>
void write_payload(const fs::path& raw, const T* data, std::size_t count) {
    std::ofstream out(raw, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot write " + raw.string());
    if constexpr (std::endian::native == std::endian::big) {
        for (std::size_t i = 0; i < count; ++i) {
            const T v = byteswap_value(data[i]);
            out.write(reinterpret_cast<const char*>(&v), sizeof(T));
        }
    } else {
        out.write(reinterpret_cast<const char*>(data), static_cast<std::streamsize>(count * sizeof(T)));
    }
    if (!out) throw IoError("failed writing " + raw.string());
}

void write_header(const Geometry3& g, ElementType type, const fs::path& path, const fs::path& raw_name) {
    std::ofstream out(path, std::ios::trunc);
    if (!out) throw IoError("cannot write " + path.string());
    out << std::setprecision(17);
    const auto& d = g.direction();
    // TransformMatrix lists the per-axis direction vectors consecutively (MetaIO/ITK convention).
    out << "ObjectType = Image\n"
        << "NDims = 3\n"
        << "BinaryData = True\n"
        << "BinaryDataByteOrderMSB = False\n"
        << "CompressedData = False\n"
        << "TransformMatrix = " << d[0] << ' ' << d[3] << ' ' << d[6] << ' ' << d[1] << ' ' << d[4] << ' ' << d[7]
        << ' ' << d[2] << ' ' << d[5] << ' ' << d[8] << '\n'
        << "Offset = " << g.origin()[0] << ' ' << g.origin()[1] << ' ' << g.origin()[2] << '\n'
        << "CenterOfRotation = 0 0 0\n"
        << "ElementSpacing = " << g.spacing()[0] << ' ' << g.spacing()[1] << ' ' << g.spacing()[2] << '\n'
        << "DimSize = " << g.dims().nx << ' ' << g.dims().ny << ' ' << g.dims().nz << '\n'
        << "ElementType = " << element_type_name(type) << '\n'
        << "ElementDataFile = " << raw_name.string() << '\n';
    if (!out) throw IoError("failed writing " + path.string());
}

fs::path raw_path_for(const fs::path& header) {
    fs::path raw = header;
    raw.replace_extension(".raw");
    return raw;
}

}  // namespace

AnyVolume read_mhd(const fs::path& path) {
    const Header h = parse_header(path);

    if (require(h, {"ObjectType"}) != "Image") throw FormatError("ObjectType must be Image");
    if (require(h, {"NDims"}) != "3") throw FormatError("only NDims = 3 is supported");
    const auto dim = parse_numbers<std::int64_t>(require(h, {"DimSize"}), 3, "DimSize");
    const auto spacing = parse_numbers<double>(require(h, {"ElementSpacing"}), 3, "ElementSpacing");
    const auto offset = parse_numbers<double>(require(h, {"Offset", "Position", "Origin"}), 3, "Offset");
    const auto tm = parse_numbers<double>(require(h, {"TransformMatrix", "Rotation", "Orientation"}), 9,
                                          "TransformMatrix");
    const std::string& type_name = require(h, {"ElementType"});
    const std::string& data_file = require(h, {"ElementDataFile"});

    if (auto it = h.find("CompressedData"); it != h.end() && parse_bool(it->second)) {
        throw FormatError("compressed MetaImage payloads are not supported");
    }
    if (data_file == "LOCAL" || data_file == "LIST") {
        throw FormatError("ElementDataFile = " + data_file + " is not supported");
    }
    bool msb = false;
    if (auto it = h.find("BinaryDataByteOrderMSB"); it != h.end()) msb = parse_bool(it->second);
    else if (auto it2 = h.find("ElementByteOrderMSB"); it2 != h.end()) msb = parse_bool(it2->second);

    const Mat3 direction{tm[0], tm[3], tm[6], tm[1], tm[4], tm[7], tm[2], tm[5], tm[8]};
    Geometry3 geom;
    try {
        geom = Geometry3({dim[0], dim[1], dim[2]}, {spacing[0], spacing[1], spacing[2]},
                         {offset[0], offset[1], offset[2]}, direction);
    } catch (const ArgumentError& e) {
        throw FormatError(std::string("invalid geometry in ") + path.string() + ": " + e.what());
    }

    const fs::path raw = path.parent_path() / data_file;
    const std::size_t count = geom.voxel_count();

    if (type_name == "MET_UCHAR") {
        LabelVolume label(geom);
        label.voxels = read_payload<std::uint8_t>(raw, count, msb);
        return label;
    }
    ImageVolume img;
    img.geom = geom;
    img.domain = IntensityDomain::HU;
    if (type_name == "MET_SHORT") {
        const auto data = read_payload<std::int16_t>(raw, count, msb);
        img.voxels.assign(data.begin(), data.end());
        img.element_type = ElementType::Short;
    } else if (type_name == "MET_FLOAT") {
        img.voxels = read_payload<float>(raw, count, msb);
        img.element_type = ElementType::Float;
    } else {
        throw FormatError("unsupported ElementType " + type_name);
    }
    return img;
}

ImageVolume read_image_mhd(const fs::path& path, IntensityDomain domain) {
    auto any = read_mhd(path);
    auto* img = std::get_if<ImageVolume>(&any);
    if (!img) throw FormatError(path.string() + " holds a label volume, expected an image");
    img->domain = domain;
    return std::move(*img);
}

LabelVolume read_label_mhd(const fs::path& path) {
    auto any = read_mhd(path);
    if (auto* label = std::get_if<LabelVolume>(&any)) {
        label->validate();
        return std::move(*label);
    }
    throw FormatError(path.string() + " holds an image volume, expected MET_UCHAR labels");
}

void write_mhd(const ImageVolume& vol, const fs::path& path) {
    if (vol.voxels.size() != vol.geom.voxel_count()) throw ShapeError("image voxel count does not match geometry");
    const fs::path raw = raw_path_for(path);
    if (vol.element_type == ElementType::Short) {
        std::vector<std::int16_t> data(vol.voxels.size());
        for (std::size_t i = 0; i < data.size(); ++i) {
            const float v = vol.voxels[i];
            if (v != std::nearbyint(v) || v < std::numeric_limits<std::int16_t>::min() ||
                v > std::numeric_limits<std::int16_t>::max()) {
                throw ArgumentError("MET_SHORT image holds a non-integral or out-of-range value");
            }
            data[i] = static_cast<std::int16_t>(v);
        }
        write_payload(raw, data.data(), data.size());
        write_header(vol.geom, ElementType::Short, path, raw.filename());
        return;
    }
    write_payload(raw, vol.voxels.data(), vol.voxels.size());
    write_header(vol.geom, ElementType::Float, path, raw.filename());
}

void write_mhd(const LabelVolume& vol, const fs::path& path) {
    if (vol.voxels.size() != vol.geom.voxel_count()) throw ShapeError("label voxel count does not match geometry");
    const fs::path raw = raw_path_for(path);
    write_payload(raw, vol.voxels.data(), vol.voxels.size());
    write_header(vol.geom, ElementType::UChar, path, raw.filename());
}

}  // namespace segapipe
