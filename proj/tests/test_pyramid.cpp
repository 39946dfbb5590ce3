#include <catch2/catch_amalgamated.hpp>

#include "graphwalk/pyramid.hpp"

using namespace graphwalk;

TEST_CASE("patch edge table: 1, 3, 6, 12, 24, 48") {
    CHECK(patch_edge(0) == 1);
    CHECK(patch_edge(1) == 3);
    CHECK(patch_edge(2) == 6);
    CHECK(patch_edge(3) == 12);
    CHECK(patch_edge(4) == 24);
    CHECK(patch_edge(5) == 48);
    CHECK_THROWS_AS(patch_edge(-1), InvalidInputError);
}

TEST_CASE("48^3 with 5 layers: 1, 8, 64, 512, 4096, 48^3 samples") {
    const Pyramid p = build_pyramid({48, 48, 48}, 5);
    CHECK(p.layer_samples(5) == 1);
    CHECK(p.layer_samples(4) == 8);
    CHECK(p.layer_samples(3) == 64);
    CHECK(p.layer_samples(2) == 512);
    CHECK(p.layer_samples(1) == 4096);
    CHECK(p.layer_samples(0) == 48 * 48 * 48);
}

TEST_CASE("3^3 single-patch case") {
    const Pyramid p = build_pyramid({3, 3, 3}, 1);
    CHECK(p.layer_samples(1) == 1);
    CHECK(p.layer_samples(0) == 27);
    for (Index j = 0; j < 27; ++j) CHECK(parent_of(p, 0, j) == 0);
    CHECK(children_of(p, 1, 0).size() == 27);
}

TEST_CASE("6^3 with 2 layers: counts 1, 8, 216") {
    const Pyramid p = build_pyramid({6, 6, 6}, 2);
    CHECK(p.layer_samples(2) == 1);
    CHECK(p.layer_samples(1) == 8);
    CHECK(p.layer_samples(0) == 216);
}

TEST_CASE("edge ratios: 3 into the voxel layer, 2 above") {
    const Pyramid p = build_pyramid({48, 48, 48}, 5);
    CHECK(p.edge_ratio_up(0) == 3);
    for (int r = 1; r < 5; ++r) CHECK(p.edge_ratio_up(r) == 2);
}

TEST_CASE("voxel (4,4,4) has parent (1,1,1) at r=1") {
    const Pyramid p = build_pyramid({6, 6, 6}, 2);
    const Index j = linear_index(p.layer_dims(0), 4, 4, 4);
    const Index parent = parent_of(p, 0, j);
    CHECK(delinearize(p.layer_dims(1), parent) == Coord3{1, 1, 1});
}

TEST_CASE("r=2 sample (0,0,0) has the 2x2x2 child block at r=1") {
    const Pyramid p = build_pyramid({48, 48, 48}, 5);
    const auto kids = children_of(p, 2, 0);
    REQUIRE(kids.size() == 8);
    for (const Index k : kids) {
        const Coord3 c = delinearize(p.layer_dims(1), k);
        CHECK(c.x <= 1);
        CHECK(c.y <= 1);
        CHECK(c.z <= 1);
    }
}

TEST_CASE("parent/child consistency and exact tiling") {
    const Pyramid p = build_pyramid({12, 6, 6}, 2);
    for (int r = 1; r <= p.n_lay; ++r) {
        std::vector<int> covered(static_cast<size_t>(p.layer_samples(r - 1)), 0);
        for (Index j = 0; j < p.layer_samples(r); ++j)
            for (const Index k : children_of(p, r, j)) {
                CHECK(parent_of(p, r - 1, k) == j);
                covered[static_cast<size_t>(k)] += 1;
            }
        // children tile the finer layer exactly: each sample exactly once
        for (const int c : covered) CHECK(c == 1);
    }
}

TEST_CASE("non-divisible dims pad at high-index faces") {
    const Pyramid p = build_pyramid({7, 5, 6}, 2);  // coarsest edge 6
    CHECK(p.layer_dims(2) == GridDims{2, 1, 1});
    CHECK(p.layer_dims(1) == GridDims{4, 2, 2});
    CHECK(p.layer_dims(0) == GridDims{12, 6, 6});
    CHECK(p.dims_orig == GridDims{7, 5, 6});
}

TEST_CASE("hierarchy bounds raise dedicated errors") {
    const Pyramid p = build_pyramid({6, 6, 6}, 2);
    CHECK_THROWS_AS(parent_of(p, 2, 0), OutOfHierarchyError);
    CHECK_THROWS_AS(children_of(p, 0, 0), OutOfHierarchyError);
    CHECK_THROWS_AS(build_pyramid({0, 6, 6}, 2), InvalidInputError);
    CHECK_THROWS_AS(build_pyramid({6, 6, 6}, 0), InvalidInputError);
}
