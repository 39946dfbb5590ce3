#include <catch2/catch_amalgamated.hpp>

#include "graphwalk/sobel.hpp"

using namespace graphwalk;

namespace {
VolumeF step_volume(GridDims d, int channels = 1, int step_channel = 0) {
    VolumeF v(d, channels);
    for (Index z = 0; z < d.z; ++z)
        for (Index y = 0; y < d.y; ++y)
            for (Index x = 0; x < d.x; ++x)
                v.at(step_channel, x, y, z) = x >= d.x / 2 ? 1.f : 0.f;
    return v;
}
} // namespace

TEST_CASE("constant volume has zero gradients and an empty mask") {
    VolumeF v({4, 4, 4}, 1, 2.5f);
    const BoundaryMask m = sobel3d(v);
    for (const Real mag : m.magnitude) CHECK(mag == 0.0);
    for (const auto b : m.mask) CHECK(b == 0);
    CHECK(m.threshold == 0.0);
}

TEST_CASE("axis-aligned step marks exactly the two adjacent voxel layers") {
    const GridDims d{6, 5, 4};
    const BoundaryMask m = sobel3d(step_volume(d));
    for (Index z = 0; z < d.z; ++z)
        for (Index y = 0; y < d.y; ++y)
            for (Index x = 0; x < d.x; ++x) {
                const bool expected = (x == d.x / 2 - 1 || x == d.x / 2);
                const Index j = linear_index(d, x, y, z);
                CHECK(m.at(j) == expected);
                // hand convolution: derivative 2 across the step, smoothing 16
                CHECK(m.magnitude[static_cast<size_t>(j)] == (expected ? 16.0 : 0.0));
            }
}

TEST_CASE("max-over-channels: a one-channel step dominates a flat channel") {
    const GridDims d{6, 5, 4};
    const BoundaryMask ref = sobel3d(step_volume(d));
    const BoundaryMask two = sobel3d(step_volume(d, 2, 1));  // channel 0 all zero
    CHECK(two.mask == ref.mask);
    CHECK(two.magnitude == ref.magnitude);
}

TEST_CASE("mask voxels always reach the threshold") {
    VolumeF v({5, 5, 5}, 1);
    for (Index z = 0; z < 5; ++z)
        for (Index y = 0; y < 5; ++y)
            for (Index x = 0; x < 5; ++x) v.at(0, x, y, z) = static_cast<float>(x * x + y);
    const BoundaryMask m = sobel3d(v, 0.7);
    int kept = 0;
    for (size_t i = 0; i < m.mask.size(); ++i)
        if (m.mask[i]) {
            ++kept;
            CHECK(m.magnitude[i] >= m.threshold);
        }
    CHECK(kept > 0);
    CHECK(kept < static_cast<int>(m.mask.size()));
}

TEST_CASE("lower quantiles keep more voxels") {
    VolumeF v({5, 5, 5}, 1);
    for (Index z = 0; z < 5; ++z)
        for (Index y = 0; y < 5; ++y)
            for (Index x = 0; x < 5; ++x) v.at(0, x, y, z) = static_cast<float>(x * x + y * z);
    auto count = [&](Real q) {
        const BoundaryMask m = sobel3d(v, q);
        int n = 0;
        for (const auto b : m.mask) n += b;
        return n;
    };
    CHECK(count(0.5) >= count(0.9));
}

TEST_CASE("degenerate dims are rejected") {
    CHECK_THROWS_AS(sobel3d(VolumeF({2, 4, 4}, 1)), InvalidInputError);
    CHECK_THROWS_AS(sobel3d(VolumeF({4, 4, 4}, 1), 1.5), InvalidInputError);
}
