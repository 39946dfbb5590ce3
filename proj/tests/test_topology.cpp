#include <catch2/catch_amalgamated.hpp>

#include <set>

#include "graphwalk/pyramid.hpp"
#include "graphwalk/topology.hpp"

using namespace graphwalk;

TEST_CASE("interior sample has 26 neighbors") {
    const Pyramid p = build_pyramid({24, 24, 24}, 1);  // r=1 layer is 8x8x8
    const Index j = linear_index(p.layer_dims(1), 4, 4, 4);
    CHECK(neighbors_26(p, 1, j).size() == 26);
}

TEST_CASE("corner sample has 7 neighbors") {
    const Pyramid p = build_pyramid({6, 6, 6}, 1);
    CHECK(neighbors_26(p, 0, 0).size() == 7);
}

TEST_CASE("(0,1,1) in a 3x3x3 layer has 17 neighbors") {
    const Pyramid p = build_pyramid({3, 3, 3}, 1);
    const Index j = linear_index(p.layer_dims(0), 0, 1, 1);
    CHECK(neighbors_26(p, 0, j).size() == 17);
}

TEST_CASE("adjacency is symmetric and self-loop free at desk scale") {
    const NeighborhoodTopology t = build_topology({4, 3, 5});
    std::set<std::pair<Index, Index>> seen;
    for (Index j = 0; j < t.size(); ++j) {
        const auto row = t.row(j);
        for (size_t i = 0; i < row.n; ++i) {
            CHECK(row.nbr[i] != j);
            seen.insert({j, row.nbr[i]});
        }
    }
    for (const auto& [j, k] : seen) CHECK(seen.count({k, j}) == 1);
}

TEST_CASE("csr rows match the standalone neighbor query") {
    const Pyramid p = build_pyramid({6, 6, 6}, 2);
    for (int r = 0; r <= 2; ++r) {
        const NeighborhoodTopology t = build_topology(p, r);
        for (Index j = 0; j < t.size(); ++j) {
            const auto row = t.row(j);
            const auto ref = neighbors_26(p, r, j);
            REQUIRE(row.n == ref.size());
            for (size_t i = 0; i < row.n; ++i) CHECK(row.nbr[i] == ref[i]);
        }
    }
}

TEST_CASE("canonical offset slots: -x is 12, +x is 13") {
    const auto& offs = neighbor_offsets_26();
    CHECK(offs[12] == Coord3{-1, 0, 0});
    CHECK(offs[13] == Coord3{1, 0, 0});
    CHECK(offs[0] == Coord3{-1, -1, -1});
    CHECK(offs[25] == Coord3{1, 1, 1});

    // Slot annotations are consistent with the offsets they claim.
    const NeighborhoodTopology t = build_topology({3, 3, 3});
    for (Index j = 0; j < t.size(); ++j) {
        const Coord3 c = delinearize(t.dims, j);
        const auto row = t.row(j);
        for (size_t i = 0; i < row.n; ++i) {
            const Coord3& o = offs[row.slot[i]];
            CHECK(row.nbr[i] == linear_index(t.dims, c.x + o.x, c.y + o.y, c.z + o.z));
        }
    }
}

TEST_CASE("edge iteration yields each undirected edge once") {
    const NeighborhoodTopology t = build_topology({3, 3, 1});
    std::set<std::pair<Index, Index>> edges;
    t.for_each_edge([&](Index j, Index k) {
        CHECK(j < k);
        CHECK(edges.insert({j, k}).second);
    });
    // 3x3 plane with 8-connectivity: 12 rook + 8 diagonal edges
    CHECK(edges.size() == 20);
    CHECK(t.edge_count() == 20);
}
