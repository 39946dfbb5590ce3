#pragma once

#include <array>
#include <vector>

#include "graphwalk/core.hpp"
#include "graphwalk/pyramid.hpp"

namespace graphwalk {

/// The 26 neighbor offsets in canonical slot order: dz major, then dy, then dx
/// (x fastest), origin skipped. Slot indices are stable across the library;
/// the robust-scale estimator keys its difference-matrix columns on them.
inline const std::array<Coord3, 26>& neighbor_offsets_26() {
    static const std::array<Coord3, 26> offsets = [] {
        std::array<Coord3, 26> o{};
        size_t s = 0;
        for (Index dz = -1; dz <= 1; ++dz)
            for (Index dy = -1; dy <= 1; ++dy)
                for (Index dx = -1; dx <= 1; ++dx) {
                    if (dx == 0 && dy == 0 && dz == 0) continue;
                    o[s++] = {dx, dy, dz};
                }
        return o;
    }();
    return offsets;
}

/// 26-connected adjacency over one lattice layer. Immutable after
/// construction; safe for concurrent reads.
struct NeighborhoodTopology {
    GridDims dims;
    std::vector<Index> offsets;    // CSR row starts, size count()+1
    std::vector<Index> neighbors;  // concatenated adjacency, ascending per row
    std::vector<std::uint8_t> slots;  // canonical slot of each entry

    Index size() const { return dims.count(); }

    struct Row {
        const Index* nbr;
        const std::uint8_t* slot;
        size_t n;
    };
    Row row(Index j) const {
        const auto b = static_cast<size_t>(offsets[static_cast<size_t>(j)]);
        const auto e = static_cast<size_t>(offsets[static_cast<size_t>(j) + 1]);
        return {neighbors.data() + b, slots.data() + b, e - b};
    }

    /// Unordered unique edges (j < k), deterministic order.
    template <typename Fn>
    void for_each_edge(Fn&& fn) const {
        for (Index j = 0; j < size(); ++j) {
            Row r = row(j);
            for (size_t i = 0; i < r.n; ++i)
                if (r.nbr[i] > j) fn(j, r.nbr[i]);
        }
    }

    Index edge_count() const {
        Index m = 0;
        for_each_edge([&](Index, Index) { ++m; });
        return m;
    }
};

inline NeighborhoodTopology build_topology(GridDims dims) {
    if (dims.x <= 0 || dims.y <= 0 || dims.z <= 0)
        throw InvalidInputError("zero dimension in topology grid");
    NeighborhoodTopology t;
    t.dims = dims;
    const Index n = dims.count();
    t.offsets.assign(static_cast<size_t>(n) + 1, 0);
    t.neighbors.reserve(static_cast<size_t>(n) * 26);
    t.slots.reserve(static_cast<size_t>(n) * 26);
    const auto& offs = neighbor_offsets_26();
    for (Index j = 0; j < n; ++j) {
        const Coord3 c = delinearize(dims, j);
        for (size_t s = 0; s < offs.size(); ++s) {
            const Index ix = c.x + offs[s].x, iy = c.y + offs[s].y, iz = c.z + offs[s].z;
            if (!in_bounds(dims, ix, iy, iz)) continue;
            t.neighbors.push_back(linear_index(dims, ix, iy, iz));
            t.slots.push_back(static_cast<std::uint8_t>(s));
        }
        t.offsets[static_cast<size_t>(j) + 1] = static_cast<Index>(t.neighbors.size());
    }
    return t;
}

inline NeighborhoodTopology build_topology(const Pyramid& p, int r) {
    return build_topology(p.layer_dims(r));
}

/// Neighbor indices of sample j at resolution r, ascending.
inline std::vector<Index> neighbors_26(const Pyramid& p, int r, Index j) {
    const GridDims dims = p.layer_dims(r);
    if (j < 0 || j >= dims.count()) throw InvalidInputError("sample index out of range");
    std::vector<Index> out;
    out.reserve(26);
    const Coord3 c = delinearize(dims, j);
    for (const Coord3& o : neighbor_offsets_26()) {
        const Index ix = c.x + o.x, iy = c.y + o.y, iz = c.z + o.z;
        if (in_bounds(dims, ix, iy, iz)) out.push_back(linear_index(dims, ix, iy, iz));
    }
    return out;
}

} // namespace graphwalk
