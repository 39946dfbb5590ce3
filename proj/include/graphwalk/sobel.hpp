#pragma once

#include <cmath>
#include <vector>

#include "graphwalk/core.hpp"
#include "graphwalk/volume.hpp"

namespace graphwalk {

/// Voxel-level boundary mask plus the gradient magnitude field it came from.
struct BoundaryMask {
    GridDims dims;
    std::vector<std::uint8_t> mask;
    std::vector<Real> magnitude;  // max over channels
    Real threshold = 0.0;         // nearest-rank quantile of nonzero magnitudes

    bool at(Index j) const { return mask[static_cast<size_t>(j)] != 0; }
};

/// 3x3x3 Sobel per channel (separable [-1,0,1] x [1,2,1] x [1,2,1]), gradient
/// magnitudes combined by max over channels, replicate padding at the faces.
/// The mask keeps voxels whose magnitude reaches the q-quantile of the
/// nonzero magnitudes; constant volumes yield an empty mask.
inline BoundaryMask sobel3d(const VolumeF& volume, Real quantile = 0.9) {
    const GridDims d = volume.dims;
    if (d.x < 3 || d.y < 3 || d.z < 3)
        throw InvalidInputError("sobel3d needs >= 3 voxels per axis, got " + format_dims(d));
    if (!(quantile >= 0.0 && quantile <= 1.0))
        throw InvalidInputError("sobel quantile outside [0,1]");

    static const int deriv[3] = {-1, 0, 1};
    static const int smooth[3] = {1, 2, 1};

    BoundaryMask out;
    out.dims = d;
    out.magnitude.assign(static_cast<size_t>(d.count()), 0.0);

    for (int c = 0; c < volume.channels; ++c) {
        for (Index z = 0; z < d.z; ++z)
            for (Index y = 0; y < d.y; ++y)
                for (Index x = 0; x < d.x; ++x) {
                    Real gx = 0, gy = 0, gz = 0;
                    for (int kz = -1; kz <= 1; ++kz)
                        for (int ky = -1; ky <= 1; ++ky)
                            for (int kx = -1; kx <= 1; ++kx) {
                                const Real v = volume.at_clamped(c, x + kx, y + ky, z + kz);
                                gx += v * deriv[kx + 1] * smooth[ky + 1] * smooth[kz + 1];
                                gy += v * smooth[kx + 1] * deriv[ky + 1] * smooth[kz + 1];
                                gz += v * smooth[kx + 1] * smooth[ky + 1] * deriv[kz + 1];
                            }
                    const Real mag = std::sqrt(gx * gx + gy * gy + gz * gz);
                    auto& cell = out.magnitude[static_cast<size_t>(linear_index(d, x, y, z))];
                    cell = std::max(cell, mag);
                }
    }

    std::vector<Real> nonzero;
    for (const Real m : out.magnitude)
        if (m > 0.0) nonzero.push_back(m);
    out.threshold = nonzero.empty() ? 0.0 : quantile_nearest_rank(nonzero, quantile);

    out.mask.assign(out.magnitude.size(), 0);
    for (size_t i = 0; i < out.magnitude.size(); ++i)
        if (out.magnitude[i] > 0.0 && out.magnitude[i] >= out.threshold) out.mask[i] = 1;
    return out;
}

} // namespace graphwalk
