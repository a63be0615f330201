#include <doctest.h>

#include "oracles.hpp"
#include "segapipe/errors.hpp"
#include "segapipe/postproc.hpp"

using namespace segapipe;
using namespace segapipe::postproc;

namespace {

ImageVolume prob_volume(Dims d, float fill) {
    return ImageVolume(Geometry3(d, {1, 1, 1}), IntensityDomain::Probability, fill);
}

}  // namespace

TEST_SUITE("postproc") {

TEST_CASE("threshold examples") {
    for (auto v : threshold(prob_volume({3, 3, 3}, 0.4f)).voxels) CHECK(v == 0);
    for (auto v : threshold(prob_volume({3, 3, 3}, 0.5f)).voxels) CHECK(v == 1);
    auto p = prob_volume({4, 4, 4}, 0);
    for (std::int64_t z = 0; z < 4; ++z)
        for (std::int64_t y = 0; y < 4; ++y)
            for (std::int64_t x = 0; x < 4; ++x) p.at(x, y, z) = (x + y + z) % 2 ? 0.9f : 0.2f;
    const auto m = threshold(p);
    for (std::int64_t z = 0; z < 4; ++z)
        for (std::int64_t y = 0; y < 4; ++y)
            for (std::int64_t x = 0; x < 4; ++x) CHECK(m.at(x, y, z) == (x + y + z) % 2);
    CHECK_THROWS_AS(threshold(p, 1.5), ArgumentError);
    CHECK_THROWS_AS(threshold(ImageVolume(p.geom, IntensityDomain::HU)), ArgumentError);
}

TEST_CASE("largest component examples") {
    LabelVolume m(Geometry3({10, 10, 10}, {1, 1, 1}));
    for (int x = 0; x < 10; ++x) m.at(x, 1, 1) = 1;
    for (int x = 0; x < 3; ++x) m.at(x, 7, 7) = 1;
    const auto keep = largest_component(m);
    CHECK(keep.foreground_count() == 10);
    CHECK(keep.at(0, 7, 7) == 0);
    CHECK(largest_component(keep).voxels == keep.voxels);

    LabelVolume tie(Geometry3({10, 10, 10}, {1, 1, 1}));
    for (int x = 0; x < 5; ++x) tie.at(x, 8, 8) = 1, tie.at(x, 2, 2) = 1;
    const auto t = largest_component(tie);
    CHECK(t.at(0, 2, 2) == 1);
    CHECK(t.at(0, 8, 8) == 0);
    CHECK(t.voxels == oracle::flood_fill_largest(tie).voxels);
    CHECK_THROWS_AS(largest_component(m, 8), ArgumentError);
}

TEST_CASE("connectivity changes what counts as connected") {
    LabelVolume m(Geometry3({3, 3, 3}, {1, 1, 1}));
    m.at(0, 0, 0) = 1;
    m.at(1, 1, 0) = 1;
    m.at(2, 2, 1) = 1;
    std::vector<std::int32_t> labels;
    CHECK(label_components(m, labels, 6) == 3);
    CHECK(label_components(m, labels, 18) == 2);
    CHECK(label_components(m, labels, 26) == 1);
}

TEST_CASE("component labelling matches a flood-fill oracle") {
    Rng rng(11);
    for (int trial = 0; trial < 40; ++trial) {
        const auto m = oracle::random_mask(rng, 9);
        for (int conn : {6, 18, 26}) {
            std::vector<std::int32_t> labels;
            int count = 0;
            const auto ref = oracle::flood_fill_labels(m, conn, count);
            CHECK(label_components(m, labels, conn) == count);
            CHECK(std::vector<int>(labels.begin(), labels.end()) == ref);
            CHECK(largest_component(m, conn).voxels == oracle::flood_fill_largest(m, conn).voxels);
        }
    }
}

TEST_CASE("dilation examples and extensivity") {
    LabelVolume m(Geometry3({5, 5, 5}, {1, 1, 1}));
    m.at(2, 2, 2) = 1;
    CHECK(dilate(m, 0).voxels == m.voxels);
    CHECK(dilate(m, 1).foreground_count() == 7);
    CHECK(dilate(m, 2).foreground_count() == 25);
    CHECK_THROWS_AS(dilate(m, -1), ArgumentError);
    Rng rng(12);
    for (int trial = 0; trial < 20; ++trial) {
        const auto r = oracle::random_mask(rng, 8, 0.01, 0.2);
        const auto d = dilate(r, 1);
        for (std::size_t i = 0; i < r.voxels.size(); ++i)
            if (r.voxels[i]) CHECK(d.voxels[i] == 1);
    }
}

}
