#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <iomanip>
#include <sstream>
#include <unordered_map>

#include "segapipe/errors.hpp"
#include "segapipe/volgrid.hpp"

namespace segapipe {

namespace fs = std::filesystem;

namespace {

template <typename T>
void put_le(std::ostream& out, T v) {
    static_assert(std::is_trivially_copyable_v<T>);
    unsigned char bytes[sizeof(T)];
    std::memcpy(bytes, &v, sizeof(T));
    if constexpr (std::endian::native == std::endian::big) std::reverse(bytes, bytes + sizeof(T));
    out.write(reinterpret_cast<const char*>(bytes), sizeof(T));
}

Vec3 facet_normal(const Vec3& a, const Vec3& b, const Vec3& c) {
    const Vec3 u{b[0] - a[0], b[1] - a[1], b[2] - a[2]};
    const Vec3 v{c[0] - a[0], c[1] - a[1], c[2] - a[2]};
    Vec3 n{u[1] * v[2] - u[2] * v[1], u[2] * v[0] - u[0] * v[2], u[0] * v[1] - u[1] * v[0]};
    const double len = std::sqrt(n[0] * n[0] + n[1] * n[1] + n[2] * n[2]);
    if (len > 0) {
        for (auto& x : n) x /= len;
    }
    return n;
}

// Reads non-empty, non-comment lines of a TetGen-style ASCII file.
std::vector<std::string> content_lines(const fs::path& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open " + path.string());
    std::vector<std::string> lines;
    std::string line;
    while (std::getline(in, line)) {
        if (const auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
        if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
        lines.push_back(line);
    }
    return lines;
}

}  // namespace

void write_stl(const TriMesh& mesh, const fs::path& path) {
    mesh.validate();
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot write " + path.string());
    char header[80] = {};
    std::strncpy(header, "segapipe binary STL", sizeof(header) - 1);
    out.write(header, sizeof(header));
    put_le<std::uint32_t>(out, static_cast<std::uint32_t>(mesh.triangles.size()));
    for (const auto& t : mesh.triangles) {
        const auto& a = mesh.vertices[t[0]];
        const auto& b = mesh.vertices[t[1]];
        const auto& c = mesh.vertices[t[2]];
        for (double x : facet_normal(a, b, c)) put_le<float>(out, static_cast<float>(x));
        for (const auto* p : {&a, &b, &c}) {
            for (double x : *p) put_le<float>(out, static_cast<float>(x));
        }
        put_le<std::uint16_t>(out, 0);
    }
    if (!out) throw IoError("failed writing " + path.string());
}

void write_obj(const TriMesh& mesh, const fs::path& path) {
    mesh.validate();
    std::ofstream out(path, std::ios::trunc);
    if (!out) throw IoError("cannot write " + path.string());
    out << std::setprecision(9);
    for (const auto& v : mesh.vertices) out << "v " << v[0] << ' ' << v[1] << ' ' << v[2] << '\n';
    for (const auto& t : mesh.triangles) out << "f " << t[0] + 1 << ' ' << t[1] + 1 << ' ' << t[2] + 1 << '\n';
    if (!out) throw IoError("failed writing " + path.string());
}

TetMesh read_node_ele(const fs::path& node_path, const fs::path& ele_path) {
    const auto node_lines = content_lines(node_path);
    if (node_lines.empty()) throw FormatError(node_path.string() + " is empty");
    std::size_t node_count = 0;
    int dim = 0;
    {
        std::istringstream ss(node_lines[0]);
        if (!(ss >> node_count >> dim) || dim != 3) throw FormatError("bad .node header in " + node_path.string());
    }
    if (node_lines.size() < node_count + 1) throw TruncationError(node_path.string() + " lists fewer nodes than declared");

    TetMesh mesh;
    mesh.nodes.reserve(node_count);
    std::unordered_map<long long, std::uint32_t> id_to_index;
    for (std::size_t i = 0; i < node_count; ++i) {
        std::istringstream ss(node_lines[i + 1]);
        long long id = 0;
        Vec3 p{};
        if (!(ss >> id >> p[0] >> p[1] >> p[2])) throw FormatError("bad node line in " + node_path.string());
        id_to_index.emplace(id, static_cast<std::uint32_t>(i));
        mesh.nodes.push_back(p);
    }

    const auto ele_lines = content_lines(ele_path);
    if (ele_lines.empty()) throw FormatError(ele_path.string() + " is empty");
    std::size_t tet_count = 0;
    int per_tet = 0;
    {
        std::istringstream ss(ele_lines[0]);
        if (!(ss >> tet_count >> per_tet) || per_tet != 4) throw FormatError("bad .ele header in " + ele_path.string());
    }
    if (ele_lines.size() < tet_count + 1) throw TruncationError(ele_path.string() + " lists fewer tets than declared");
    mesh.tets.reserve(tet_count);
    for (std::size_t i = 0; i < tet_count; ++i) {
        std::istringstream ss(ele_lines[i + 1]);
        long long id = 0;
        long long ref[4];
        if (!(ss >> id >> ref[0] >> ref[1] >> ref[2] >> ref[3])) throw FormatError("bad tet line in " + ele_path.string());
        std::array<std::uint32_t, 4> tet{};
        for (int k = 0; k < 4; ++k) {
            const auto it = id_to_index.find(ref[k]);
            if (it == id_to_index.end()) {
                throw IndexError("tet " + std::to_string(id) + " references node " + std::to_string(ref[k]) +
                                 " absent from " + node_path.string());
            }
            tet[k] = it->second;
        }
        mesh.tets.push_back(tet);
    }
    mesh.validate();
    return mesh;
}

}  // namespace segapipe
