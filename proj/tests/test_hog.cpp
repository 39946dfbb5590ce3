#include <catch2/catch_amalgamated.hpp>

#include "graphwalk/hog.hpp"

using namespace graphwalk;

namespace {
VolumeF ramp(const GridDims& dims, int axis) {
    VolumeF v(dims, 1);
    for (Index z = 0; z < dims.z; ++z)
        for (Index y = 0; y < dims.y; ++y)
            for (Index x = 0; x < dims.x; ++x)
                v.at(0, x, y, z) = static_cast<Real>(axis == 0 ? x : (axis == 1 ? y : z));
    return v;
}
} // namespace

TEST_CASE("ramps produce axis-aligned modes") {
    const GridDims dims{6, 6, 6};
    SECTION("x ramp: mode 0 degrees") {
        const HogMode m = hog_mode(ramp(dims, 0), 0, {0, 0, 0}, {6, 6, 6});
        REQUIRE(m.defined);
        CHECK(m.angle_deg == 0.0);
    }
    SECTION("y ramp: mode 90 degrees") {
        const HogMode m = hog_mode(ramp(dims, 1), 0, {0, 0, 0}, {6, 6, 6});
        REQUIRE(m.defined);
        CHECK(m.angle_deg == 90.0);
    }
    SECTION("z ramp has no axial-plane orientation") {
        CHECK_FALSE(hog_mode(ramp(dims, 2), 0, {0, 0, 0}, {6, 6, 6}).defined);
    }
}

TEST_CASE("a 45-degree grating lands in the 45-degree bin") {
    const GridDims dims{12, 12, 4};
    VolumeF v(dims, 1);
    for (Index z = 0; z < dims.z; ++z)
        for (Index y = 0; y < dims.y; ++y)
            for (Index x = 0; x < dims.x; ++x)
                v.at(0, x, y, z) = std::sin(2.0 * std::numbers::pi * (x + y) / 8.0);
    const HogMode m = hog_mode(v, 0, {1, 1, 0}, {11, 11, 4});
    REQUIRE(m.defined);
    CHECK(m.angle_deg == 45.0);  // bin covers [42.5, 47.5)
}

TEST_CASE("constant patch raises the undefined-orientation flag") {
    VolumeF v(GridDims{4, 4, 4}, 1);
    for (Index j = 0; j < 64; ++j) v.at(0, j) = 2.5;
    CHECK_FALSE(hog_mode(v, 0, {0, 0, 0}, {4, 4, 4}).defined);
}

TEST_CASE("patches below 3 voxels per axis are rejected") {
    const VolumeF v(GridDims{4, 4, 4}, 1);
    CHECK_THROWS_AS(hog_mode(v, 0, {0, 0, 0}, {2, 4, 4}), InvalidInputError);
    CHECK_THROWS_AS(hog_mode(v, 0, {0, 0, 0}, {4, 4, 2}), InvalidInputError);
}

TEST_CASE("orientation folding: opposite gradients share a bin") {
    // two half-volumes with opposite x-slopes still vote for 0 degrees
    const GridDims dims{8, 4, 4};
    VolumeF v(dims, 1);
    for (Index z = 0; z < 4; ++z)
        for (Index y = 0; y < 4; ++y)
            for (Index x = 0; x < 8; ++x)
                v.at(0, x, y, z) = static_cast<Real>(x < 4 ? x : 8 - x);
    const HogMode m = hog_mode(v, 0, {0, 0, 0}, {8, 4, 4});
    REQUIRE(m.defined);
    CHECK(m.angle_deg == 0.0);
}

TEST_CASE("per-layer modes use the 3-cube at r = 0 and the patch above") {
    const GridDims dims{6, 6, 6};
    const Pyramid pyr = build_pyramid(dims, 1);
    const VolumeF v = ramp(dims, 0);

    const auto fine = hog_modes_for_layer(v, 0, pyr, 0);
    REQUIRE(static_cast<Index>(fine.size()) == dims.count());
    for (const auto& m : fine) {
        REQUIRE(m.defined);
        CHECK(m.angle_deg == 0.0);
    }
    const auto coarse = hog_modes_for_layer(v, 0, pyr, 1);
    REQUIRE(static_cast<Index>(coarse.size()) == pyr.dims[1].count());
    for (const auto& m : coarse) {
        REQUIRE(m.defined);
        CHECK(m.angle_deg == 0.0);
    }
    CHECK_THROWS_AS(hog_modes_for_layer(v, 0, pyr, 2), OutOfHierarchyError);
}

TEST_CASE("axial angles fold directions to [0, 180)") {
    CHECK(axial_angle_deg({1, 0, 0}) == 0.0);
    CHECK(axial_angle_deg({-1, 0, 0}) == 0.0);
    CHECK(axial_angle_deg({0, 1, 0.3}) == 90.0);
    CHECK(axial_angle_deg({1, 1, 0}) == Catch::Approx(45.0).margin(1e-12));
    CHECK_THROWS_AS(axial_angle_deg({0, 0, 1}), InvalidInputError);
}
