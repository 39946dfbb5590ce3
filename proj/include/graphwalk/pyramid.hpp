#pragma once

#include <vector>

#include "graphwalk/core.hpp"

namespace graphwalk {

/// Voxels per patch edge at resolution r: 1 at r=0, 3·2^(r-1) at r>=1
/// (3, 6, 12, 24, 48 for r = 1..5).
inline Index patch_edge(int r) {
    if (r < 0) throw InvalidInputError("negative resolution");
    if (r == 0) return 1;
    return Index{3} << (r - 1);
}

/// Multiresolution sample lattice. Layer r=0 is voxel resolution; layer
/// r=n_lay is the coarsest. Layer dims are derived from the coarsest layer so
/// that children tile their parent's patch exactly; the finest layer may be
/// padded past the original dims at the high-index faces.
struct Pyramid {
    int n_lay = 0;
    GridDims dims_orig;                  // caller-supplied finest dims
    std::vector<GridDims> dims;          // dims[r], r = 0..n_lay (padded)

    GridDims layer_dims(int r) const {
        if (r < 0 || r > n_lay) throw InvalidInputError("resolution out of range");
        return dims[static_cast<size_t>(r)];
    }
    Index layer_samples(int r) const { return layer_dims(r).count(); }

    /// Edge ratio of the r -> r+1 transition: 3 for r=0, 2 for r>=1.
    Index edge_ratio_up(int r) const {
        if (r < 0 || r >= n_lay) throw OutOfHierarchyError("no layer above r");
        return patch_edge(r + 1) / patch_edge(r);
    }
};

inline Pyramid build_pyramid(GridDims dims_finest, int n_lay) {
    if (dims_finest.x <= 0 || dims_finest.y <= 0 || dims_finest.z <= 0)
        throw InvalidInputError("zero dimension in finest layer");
    if (n_lay < 1) throw InvalidInputError("layer count must be >= 1");

    Pyramid p;
    p.n_lay = n_lay;
    p.dims_orig = dims_finest;
    p.dims.resize(static_cast<size_t>(n_lay) + 1);

    const Index coarse_edge = patch_edge(n_lay);
    GridDims coarse{(dims_finest.x + coarse_edge - 1) / coarse_edge,
                    (dims_finest.y + coarse_edge - 1) / coarse_edge,
                    (dims_finest.z + coarse_edge - 1) / coarse_edge};
    p.dims[static_cast<size_t>(n_lay)] = coarse;
    for (int r = 0; r < n_lay; ++r) {
        const Index f = coarse_edge / patch_edge(r);
        p.dims[static_cast<size_t>(r)] = {coarse.x * f, coarse.y * f, coarse.z * f};
    }
    return p;
}

inline Index parent_of(const Pyramid& p, int r, Index j) {
    if (r >= p.n_lay) throw OutOfHierarchyError("sample at the coarsest layer has no parent");
    const GridDims d = p.layer_dims(r);
    if (j < 0 || j >= d.count()) throw InvalidInputError("sample index out of range");
    const Index ratio = p.edge_ratio_up(r);
    const Coord3 c = delinearize(d, j);
    return linear_index(p.layer_dims(r + 1), c.x / ratio, c.y / ratio, c.z / ratio);
}

inline std::vector<Index> children_of(const Pyramid& p, int r, Index j) {
    if (r <= 0) throw OutOfHierarchyError("voxel-resolution samples have no children");
    const GridDims d = p.layer_dims(r);
    if (j < 0 || j >= d.count()) throw InvalidInputError("sample index out of range");
    const Index ratio = p.edge_ratio_up(r - 1);
    const GridDims dc = p.layer_dims(r - 1);
    const Coord3 c = delinearize(d, j);
    std::vector<Index> out;
    out.reserve(static_cast<size_t>(ratio * ratio * ratio));
    for (Index dz = 0; dz < ratio; ++dz)
        for (Index dy = 0; dy < ratio; ++dy)
            for (Index dx = 0; dx < ratio; ++dx)
                out.push_back(linear_index(dc, c.x * ratio + dx, c.y * ratio + dy,
                                           c.z * ratio + dz));
    return out;
}

} // namespace graphwalk
