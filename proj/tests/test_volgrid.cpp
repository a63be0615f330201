#include <doctest.h>

#include <fstream>

#include "oracles.hpp"
#include "segapipe/errors.hpp"
#include "segapipe/volgrid.hpp"

using namespace segapipe;
namespace fs = std::filesystem;

namespace {

void write_text(const fs::path& p, const std::string& s) {
    std::ofstream out(p, std::ios::binary);
    out << s;
}

const char* kHeader2x2x2 =
    "ObjectType = Image\nNDims = 3\nBinaryData = True\nBinaryDataByteOrderMSB = False\n"
    "TransformMatrix = 1 0 0 0 1 0 0 0 1\nOffset = 0 0 0\nElementSpacing = 1 1 1\nDimSize = 2 2 2\n"
    "ElementType = MET_UCHAR\nElementDataFile = ones.raw\n";

}  // namespace

TEST_SUITE("volgrid") {

TEST_CASE("flatten and unflatten are inverse") {
    Geometry3 g({5, 4, 3}, {1, 1, 1});
    for (std::int64_t z = 0; z < 3; ++z)
        for (std::int64_t y = 0; y < 4; ++y)
            for (std::int64_t x = 0; x < 5; ++x) {
                const auto i = g.flatten(x, y, z);
                CHECK(g.unflatten(i) == Index3{x, y, z});
            }
    CHECK(g.flatten(1, 0, 0) == 1);
    CHECK(g.flatten(0, 1, 0) == 5);
    CHECK(g.flatten(0, 0, 1) == 20);
}

TEST_CASE("voxel_to_mm and mm_to_voxel round trip with a rotated direction") {
    const double c = std::cos(0.3), s = std::sin(0.3);
    Mat3 dir{c, -s, 0, s, c, 0, 0, 0, 1};
    Geometry3 g({7, 8, 9}, {0.7, 1.3, 2.1}, {-10, 5, 3}, dir);
    Rng rng(3);
    for (int t = 0; t < 200; ++t) {
        const Vec3 idx{rng.uniform(-2, 9), rng.uniform(-2, 9), rng.uniform(-2, 9)};
        const auto mm = g.voxel_to_mm(idx);
        const auto back = g.mm_to_voxel(mm);
        const auto again = g.voxel_to_mm(back);
        for (int a = 0; a < 3; ++a) CHECK(std::abs(again[a] - mm[a]) < 1e-9);
    }
    // mm = origin + direction * (spacing o index)
    const auto p = g.voxel_to_mm({1, 0, 0});
    CHECK(p[0] == doctest::Approx(-10 + c * 0.7));
    CHECK(p[1] == doctest::Approx(5 + s * 0.7));
}

TEST_CASE("geometry rejects bad dims, spacing and direction") {
    CHECK_THROWS_AS(Geometry3({0, 1, 1}, {1, 1, 1}), ArgumentError);
    CHECK_THROWS_AS(Geometry3({1, 1, 1}, {1, 0, 1}), ArgumentError);
    CHECK_THROWS_AS(Geometry3({1, 1, 1}, {1, 1, 1}, {0, 0, 0}, {1, 0, 0, 0, 2, 0, 0, 0, 1}), ArgumentError);
    CHECK_THROWS_AS(Geometry3({1, 1, 1}, {1, 1, 1}, {0, 0, 0}, {1, 0, 0, 1, 0, 0, 0, 0, 1}), ArgumentError);
}

TEST_CASE("read_mhd maps a 2x2x2 MET_UCHAR header to a label volume") {
    const auto dir = oracle::temp_dir("mhd_ones");
    write_text(dir / "ones.mhd", kHeader2x2x2);
    write_text(dir / "ones.raw", std::string(8, '\x01'));
    const auto any = read_mhd(dir / "ones.mhd");
    REQUIRE(std::holds_alternative<LabelVolume>(any));
    const auto& m = std::get<LabelVolume>(any);
    CHECK(m.voxels == std::vector<std::uint8_t>(8, 1));
    CHECK(m.geom.spacing() == Vec3{1, 1, 1});
    CHECK(m.geom.dims() == Dims{2, 2, 2});
}

TEST_CASE("missing ElementSpacing is reported by name") {
    const auto dir = oracle::temp_dir("mhd_missing");
    std::string h = kHeader2x2x2;
    h.erase(h.find("ElementSpacing"), std::string("ElementSpacing = 1 1 1\n").size());
    write_text(dir / "ones.mhd", h);
    write_text(dir / "ones.raw", std::string(8, '\x01'));
    try {
        read_mhd(dir / "ones.mhd");
        FAIL("expected a format error");
    } catch (const FormatError& e) {
        CHECK(std::string(e.what()) == "missing key ElementSpacing");
    }
}

TEST_CASE("short payload raises a truncation error") {
    const auto dir = oracle::temp_dir("mhd_trunc");
    write_text(dir / "ones.mhd", kHeader2x2x2);
    write_text(dir / "ones.raw", std::string(7, '\x01'));
    CHECK_THROWS_AS(read_mhd(dir / "ones.mhd"), TruncationError);
}

TEST_CASE("big-endian payloads are byte swapped") {
    const auto dir = oracle::temp_dir("mhd_msb");
    std::string h = kHeader2x2x2;
    h.replace(h.find("MET_UCHAR"), 9, "MET_SHORT");
    h.replace(h.find("MSB = False"), 11, "MSB = True");
    h = h.substr(0, h.find("DimSize")) + "DimSize = 1 1 1\n" + h.substr(h.find("ElementType"));
    write_text(dir / "ones.mhd", h);
    write_text(dir / "ones.raw", std::string("\x01\x02", 2));
    const auto img = read_image_mhd(dir / "ones.mhd");
    CHECK(img.voxels[0] == 258.0f);
}

TEST_CASE("MET_FLOAT round trip is bit identical") {
    const auto dir = oracle::temp_dir("mhd_float");
    ImageVolume v(Geometry3({5, 4, 3}, {0.5, 0.75, 2.0}, {1.5, -2.25, 3.125}), IntensityDomain::HU);
    Rng rng(11);
    for (auto& x : v.voxels) x = static_cast<float>(rng.normal(0, 1000));
    write_mhd(v, dir / "v.mhd");
    const auto raw_before = oracle::file_bytes(dir / "v.raw");
    const auto back = read_image_mhd(dir / "v.mhd");
    CHECK(std::memcmp(back.voxels.data(), v.voxels.data(), v.voxels.size() * 4) == 0);
    CHECK(back.geom.same_as(v.geom, 0.0));
    write_mhd(back, dir / "w.mhd");
    CHECK(oracle::file_bytes(dir / "w.raw") == raw_before);
    CHECK(oracle::file_bytes(dir / "w.mhd").size() > 0);
}

TEST_CASE("64^3 random volumes round trip for every element type") {
    const auto dir = oracle::temp_dir("mhd_64");
    Geometry3 g({64, 64, 64}, {1, 1, 1});
    Rng rng(5);
    ImageVolume f(g, IntensityDomain::HU);
    for (auto& x : f.voxels) x = static_cast<float>(rng.uniform(-1e4, 1e4));
    ImageVolume s(g, IntensityDomain::HU);
    s.element_type = ElementType::Short;
    for (auto& x : s.voxels) x = static_cast<float>(static_cast<int>(rng.below(65536)) - 32768);
    LabelVolume l(g);
    for (auto& x : l.voxels) x = rng.bernoulli(0.5);

    write_mhd(f, dir / "f.mhd");
    write_mhd(s, dir / "s.mhd");
    write_mhd(l, dir / "l.mhd");
    CHECK(read_image_mhd(dir / "f.mhd").voxels == f.voxels);
    const auto s2 = read_image_mhd(dir / "s.mhd");
    CHECK(s2.voxels == s.voxels);
    CHECK(s2.element_type == ElementType::Short);
    CHECK(read_label_mhd(dir / "l.mhd").voxels == l.voxels);
    CHECK(oracle::file_bytes(dir / "s.raw").size() == 64u * 64 * 64 * 2);
}

TEST_CASE("1x1x1 zero volume and the label header") {
    const auto dir = oracle::temp_dir("mhd_tiny");
    LabelVolume l(Geometry3({1, 1, 1}, {1, 1, 1}));
    write_mhd(l, dir / "l.mhd");
    CHECK(read_label_mhd(dir / "l.mhd").voxels == std::vector<std::uint8_t>{0});
    const auto bytes = oracle::file_bytes(dir / "l.mhd");
    const std::string header(bytes.begin(), bytes.end());
    CHECK(header.find("ElementType = MET_UCHAR") != std::string::npos);
}

TEST_CASE("direction matrices survive the header") {
    const auto dir = oracle::temp_dir("mhd_dir");
    Mat3 d{0, 1, 0, 0, 0, 1, 1, 0, 0};
    LabelVolume l(Geometry3({2, 3, 4}, {1, 2, 3}, {4, 5, 6}, d));
    write_mhd(l, dir / "l.mhd");
    CHECK(read_label_mhd(dir / "l.mhd").geom.same_as(l.geom, 0.0));
}

TEST_CASE("label volumes reject values other than 0 and 1") {
    LabelVolume l(Geometry3({2, 1, 1}, {1, 1, 1}));
    l.voxels[1] = 2;
    CHECK_THROWS(l.validate());
}

TEST_CASE("single triangle STL is 134 bytes and reads back") {
    const auto dir = oracle::temp_dir("stl");
    TriMesh m;
    m.vertices = {{0, 0, 0}, {1, 0, 0}, {0, 1, 0}};
    m.triangles = {{0, 1, 2}};
    write_stl(m, dir / "t.stl");
    std::size_t size = 0;
    const auto tris = oracle::read_stl(dir / "t.stl", &size);
    CHECK(size == 80 + 4 + 50);
    REQUIRE(tris.size() == 1);
    CHECK(tris[0].normal[2] == doctest::Approx(1.0));
    CHECK(tris[0].v[1][0] == 1.0f);
}

TEST_CASE("OBJ uses 1-based faces") {
    const auto dir = oracle::temp_dir("obj");
    TriMesh m;
    m.vertices = {{0, 0, 0}, {1, 0, 0}, {0, 1, 0}};
    m.triangles = {{0, 1, 2}};
    write_obj(m, dir / "t.obj");
    const auto b = oracle::file_bytes(dir / "t.obj");
    const std::string s(b.begin(), b.end());
    CHECK(s.find("f 1 2 3") != std::string::npos);
    CHECK(s.find("v 1 0 0") != std::string::npos);
}

TEST_CASE("node/ele reader normalises the index base") {
    const auto dir = oracle::temp_dir("tet");
    write_text(dir / "m.node", "4 3 0 0\n1 0 0 0\n2 1 0 0\n3 0 1 0\n4 0 0 1\n");
    write_text(dir / "m.ele", "1 4 0\n1 1 2 3 4\n");
    const auto t = read_node_ele(dir / "m.node", dir / "m.ele");
    REQUIRE(t.tets.size() == 1);
    CHECK(t.tets[0] == std::array<std::uint32_t, 4>{0, 1, 2, 3});
    CHECK(t.nodes[3] == Vec3{0, 0, 1});

    write_text(dir / "z.node", "# zero based\n4 3 0 0\n0 0 0 0\n1 1 0 0\n2 0 1 0\n3 0 0 1\n");
    write_text(dir / "z.ele", "1 4 0\n0 0 1 2 3\n");
    CHECK(read_node_ele(dir / "z.node", dir / "z.ele").tets[0] == std::array<std::uint32_t, 4>{0, 1, 2, 3});

    write_text(dir / "bad.ele", "1 4 0\n1 1 2 3 9\n");
    CHECK_THROWS_AS(read_node_ele(dir / "m.node", dir / "bad.ele"), IndexError);
}

TEST_CASE("unwritable paths raise I/O errors") {
    const auto dir = oracle::temp_dir("unwritable");
    write_text(dir / "blocker", "");
    LabelVolume l(Geometry3({1, 1, 1}, {1, 1, 1}));
    CHECK_THROWS_AS(write_mhd(l, dir / "blocker" / "l.mhd"), IoError);
    CHECK_THROWS_AS(read_mhd(dir / "missing.mhd"), IoError);
}

}
