#include <doctest.h>

#include <cmath>
#include <fstream>
#include <numbers>

#include "oracles.hpp"
#include "segapipe/augment.hpp"
#include "segapipe/errors.hpp"
#include "segapipe/phantom.hpp"
#include "segapipe/xform.hpp"

using namespace segapipe;
using namespace segapipe::augment;

namespace {

std::pair<ImageVolume, LabelVolume> random_pair(std::uint64_t seed, Dims d = {12, 10, 8}) {
    Rng rng(seed);
    Geometry3 g(d, {1, 1.5, 2});
    ImageVolume img(g, IntensityDomain::Normalized01);
    for (auto& v : img.voxels) v = static_cast<float>(rng.uniform());
    LabelVolume m(g);
    for (auto& v : m.voxels) v = rng.bernoulli(0.3);
    return {img, m};
}

ImageVolume sinusoid(Dims d, double period, int axis) {
    ImageVolume v(Geometry3(d, {1, 1, 1}), IntensityDomain::Normalized01);
    for (std::int64_t z = 0; z < d.nz; ++z)
        for (std::int64_t y = 0; y < d.ny; ++y)
            for (std::int64_t x = 0; x < d.nx; ++x) {
                const double c = axis == 0 ? x : (axis == 1 ? y : z);
                v.at(x, y, z) = static_cast<float>(0.5 + 0.4 * std::sin(2 * std::numbers::pi * (c + 0.5) / period));
            }
    return v;
}

// half the peak-to-peak range over the central region
double amplitude(const ImageVolume& v, std::int64_t margin) {
    const auto d = v.geom.dims();
    float lo = 1e9f, hi = -1e9f;
    for (std::int64_t z = margin; z < d.nz - margin; ++z)
        for (std::int64_t y = margin; y < d.ny - margin; ++y)
            for (std::int64_t x = margin; x < d.nx - margin; ++x) {
                lo = std::min(lo, v.at(x, y, z));
                hi = std::max(hi, v.at(x, y, z));
            }
    return 0.5 * (hi - lo);
}

}  // namespace

TEST_SUITE("augment") {

TEST_CASE("zero apply probability leaves the pair unchanged") {
    auto [img, mask] = random_pair(1);
    AugmentationSpec spec;
    spec.apply_probability = 0.0;
    auto [a, b] = augment_pair(img, mask, spec, 42);
    CHECK(a.voxels == img.voxels);
    CHECK(b.voxels == mask.voxels);
}

TEST_CASE("augment_pair is deterministic per seed") {
    auto [img, mask] = random_pair(2);
    AugmentationSpec spec;
    spec.apply_probability = 0.9;
    auto [a1, b1] = augment_pair(img, mask, spec, 7);
    auto [a2, b2] = augment_pair(img, mask, spec, 7);
    CHECK(a1.voxels == a2.voxels);
    CHECK(b1.voxels == b2.voxels);
    auto [a3, b3] = augment_pair(img, mask, spec, 8);
    CHECK(a3.voxels != a1.voxels);
}

TEST_CASE("flip-only augmentation applied twice restores the pair") {
    auto [img, mask] = random_pair(3);
    auto spec = AugmentationSpec::none();
    spec.enabled[static_cast<int>(Transform::Flip)] = true;
    spec.apply_probability = 1.0;
    spec.flip_axes = {true, false, false};
    spec.flip_axis_probability = 1.0;
    AugmentationTrace trace;
    auto [a, b] = augment_pair(img, mask, spec, 100, &trace);
    CHECK(a.voxels != img.voxels);
    auto [c, d] = augment_pair(a, b, spec, 200);
    CHECK(c.voxels == img.voxels);
    CHECK(d.voxels == mask.voxels);
    CHECK(a.at(0, 0, 0) == img.at(11, 0, 0));
}

TEST_CASE("flip is an involution on every axis") {
    auto [img, mask] = random_pair(4);
    for (int axis = 0; axis < 3; ++axis) {
        CHECK(flip(flip(img, axis), axis).voxels == img.voxels);
        CHECK(flip(flip(mask, axis), axis).voxels == mask.voxels);
    }
    CHECK_THROWS_AS(flip(img, 3), ArgumentError);
}

TEST_CASE("each transform fires about half the time") {
    auto [img, mask] = random_pair(5, {4, 4, 4});
    AugmentationSpec spec;
    std::array<int, kTransformCount> fired{};
    AugmentationTrace trace;
    for (int s = 0; s < 1000; ++s) {
        augment_pair(img, mask, spec, derive_seed(99, s), &trace);
        REQUIRE(trace.order.size() == kTransformCount);
        for (std::size_t k = 0; k < trace.order.size(); ++k)
            if (trace.fired[k]) ++fired[static_cast<int>(trace.order[k])];
    }
    for (int t = 0; t < kTransformCount; ++t) {
        CAPTURE(t);
        CHECK(fired[t] >= 450);
        CHECK(fired[t] <= 550);
    }
}

TEST_CASE("masks stay binary and images stay in [0,1]") {
    auto [img, mask] = random_pair(6);
    AugmentationSpec spec;
    spec.apply_probability = 1.0;
    for (int s = 0; s < 10; ++s) {
        auto [a, b] = augment_pair(img, mask, spec, s);
        for (auto v : b.voxels) CHECK((v == 0 || v == 1));
        for (auto v : a.voxels) CHECK((v >= 0.0f && v <= 1.0f));
    }
}

TEST_CASE("geometry mismatch is rejected") {
    auto [img, mask] = random_pair(7);
    LabelVolume other(Geometry3({3, 3, 3}, {1, 1, 1}));
    CHECK_THROWS_AS(augment_pair(img, other, AugmentationSpec{}, 1), ArgumentError);
}

TEST_CASE("augmentation settings validation") {
    AugmentationSpec s;
    s.gamma = {1.5, 0.7};
    CHECK_THROWS_AS(s.validate(), ArgumentError);
    s = {};
    s.apply_probability = 1.5;
    CHECK_THROWS_AS(s.validate(), ArgumentError);
}

TEST_CASE("gamma adjustment") {
    ImageVolume v(Geometry3({2, 1, 1}, {1, 1, 1}), IntensityDomain::Normalized01);
    v.voxels = {0.25f, 1.0f};
    const auto g = adjust_gamma(v, 2.0);
    CHECK(g.voxels[0] == doctest::Approx(0.0625));
    CHECK(g.voxels[1] == doctest::Approx(1.0));
}

TEST_CASE("gaussian noise statistics") {
    ImageVolume v(Geometry3({100, 100, 100}, {1, 1, 1}), IntensityDomain::Normalized01, 0.0f);
    const double sd = 0.03;
    const auto n = add_gaussian_noise(v, sd, 123);
    double mean = 0, sq = 0;
    for (float x : n.voxels) mean += x;
    mean /= n.voxels.size();
    for (float x : n.voxels) sq += (x - mean) * (x - mean);
    const double std = std::sqrt(sq / n.voxels.size());
    CHECK(std::abs(mean) < 3 * sd / std::sqrt(1e6));
    CHECK(std::abs(std - sd) / sd < 0.02);
}

TEST_CASE("motion with zero magnitude is the identity") {
    auto [img, mask] = random_pair(8);
    const auto m = random_motion(img, 3, 0.0, 5);
    for (std::size_t i = 0; i < img.voxels.size(); ++i) CHECK(std::abs(m.voxels[i] - img.voxels[i]) < 1e-6);
}

TEST_CASE("motion keeps constant volumes constant away from the border") {
    ImageVolume v(Geometry3({16, 16, 16}, {1, 1, 1}), IntensityDomain::Normalized01, 0.6f);
    const auto m = random_motion(v, 4, 2.0, 9);
    for (std::int64_t z = 4; z < 12; ++z)
        for (std::int64_t y = 4; y < 12; ++y)
            for (std::int64_t x = 4; x < 12; ++x) CHECK(m.at(x, y, z) == doctest::Approx(0.6).epsilon(1e-5));
}

TEST_CASE("motion turns a step edge into a monotone ramp") {
    ImageVolume v(Geometry3({24, 16, 16}, {1, 1, 1}), IntensityDomain::Normalized01);
    for (std::int64_t z = 0; z < 16; ++z)
        for (std::int64_t y = 0; y < 16; ++y)
            for (std::int64_t x = 12; x < 24; ++x) v.at(x, y, z) = 1.0f;
    const auto m = random_motion(v, 3, 2.0, 17);
    int levels = 0;
    for (std::int64_t x = 4; x < 20; ++x) {
        const float a = m.at(x, 8, 8), b = m.at(x + 1, 8, 8);
        CHECK(b >= a - 1e-6f);
        if (a > 1e-4f && a < 1 - 1e-4f) ++levels;
    }
    CHECK(levels >= 2);
}

TEST_CASE("anisotropy attenuates detail along its axis only") {
    const auto along = sinusoid({32, 32, 32}, 4, 0);
    const auto across = sinusoid({32, 32, 32}, 8, 1);
    const double a0 = amplitude(along, 4), a1 = amplitude(random_anisotropy(along, 0, 4.0), 4);
    CHECK(a1 <= 0.5 * a0);
    const double b0 = amplitude(across, 4), b1 = amplitude(random_anisotropy(across, 0, 4.0), 4);
    CHECK(std::abs(b1 - b0) / b0 < 0.02);
    ImageVolume c(Geometry3({8, 8, 8}, {1, 1, 1}), IntensityDomain::Normalized01, 0.3f);
    for (float x : random_anisotropy(c, 2, 2.0).voxels) CHECK(x == doctest::Approx(0.3));
    CHECK_THROWS_AS(random_anisotropy(c, 0, 1.0), ArgumentError);
}

TEST_CASE("elastic field honours the displacement bound") {
    Geometry3 g({20, 20, 20}, {1, 1, 1});
    ElasticSpec spec;
    const auto f = random_elastic_field(g, spec, 3);
    double mx = 0;
    for (const auto& v : f.vectors) mx = std::max(mx, std::sqrt(v[0] * v[0] + v[1] * v[1] + v[2] * v[2]));
    CHECK(mx == doctest::Approx(spec.max_displacement_mm).epsilon(1e-9));
}

TEST_CASE("elastic deformation keeps masks binary and roughly volume preserving") {
    PhantomSpec ps;
    ps.dims = {32, 32, 32};
    const auto ph = make_phantom(4, ps);
    const auto img = xform::clip_normalize(ph.image);
    for (std::uint64_t s = 0; s < 5; ++s) {
        auto [a, b] = elastic_deform(img, ph.mask, ElasticSpec{}, s);
        for (auto v : b.voxels) CHECK((v == 0 || v == 1));
        const double before = static_cast<double>(ph.mask.foreground_count());
        const double after = static_cast<double>(b.foreground_count());
        CHECK(std::abs(after - before) / before <= 0.25);
    }
    ElasticSpec none;
    none.max_displacement_mm = 0;
    auto [a, b] = elastic_deform(img, ph.mask, none, 1);
    CHECK(a.voxels == img.voxels);
    CHECK(b.voxels == ph.mask.voxels);
}

TEST_CASE("elastic_expand writes cases and a manifest") {
    const auto dir = oracle::temp_dir("elastic");
    auto [img, mask] = random_pair(9);
    std::vector<Case> data{{"a", img, mask}, {"b", img, mask}};
    ElasticSpec spec;
    spec.n_output_cases = 0;
    CHECK(elastic_expand(data, spec, dir / "none", 1).empty());
    CHECK(read_manifest(dir / "none" / "manifest.tsv").empty());

    spec.n_output_cases = 3;
    const auto entries = elastic_expand(data, spec, dir / "three", 1);
    REQUIRE(entries.size() == 3);
    CHECK(entries[0].source_id == "a");
    CHECK(entries[1].source_id == "b");
    CHECK(entries[2].source_id == "a");
    const auto back = read_manifest(dir / "three" / "manifest.tsv");
    REQUIRE(back.size() == 3);
    for (std::size_t i = 0; i < 3; ++i) {
        CHECK(back[i].seed == entries[i].seed);
        CHECK(read_label_mhd(back[i].mask_path).voxels.size() == mask.voxels.size());
    }
    // regeneration is identical
    const auto again = elastic_expand(data, spec, dir / "again", 1);
    CHECK(oracle::file_bytes(dir / "again" / "case_00001_img.raw") == oracle::file_bytes(dir / "three" / "case_00001_img.raw"));
    {
        std::ofstream blocker(dir / "file");
    }
    CHECK_THROWS_AS(elastic_expand(data, spec, dir / "file" / "out", 1), IoError);
}

}
