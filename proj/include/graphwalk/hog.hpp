#pragma once

// Histogram-of-oriented-gradients modes: the dominant axial-plane gradient
// orientation of a volume patch, folded to [0, 180) in 5-degree bins.

#include <cmath>
#include <numbers>
#include <vector>

#include <Eigen/Dense>

#include "graphwalk/core.hpp"
#include "graphwalk/pyramid.hpp"
#include "graphwalk/threads.hpp"
#include "graphwalk/volume.hpp"

namespace graphwalk {

inline constexpr int kHogBins = 36;  // centered at 0, 5, ..., 175 degrees

struct HogMode {
    Real angle_deg = 0.0;
    bool defined = false;  // false when no voxel has an axial-plane gradient
};

// Central-difference gradients (replicate padding) over the inclusive-lo,
// exclusive-hi patch; orientations are the azimuth of the axial-plane
// projection, magnitude-weighted. Bin k covers [5k - 2.5, 5k + 2.5) with
// wraparound, so the mode is the center of the strongest bin.
inline HogMode hog_mode(const VolumeF& vol, int channel, Coord3 lo, Coord3 hi) {
    if (hi.x - lo.x < 3 || hi.y - lo.y < 3 || hi.z - lo.z < 3)
        throw InvalidInputError("hog patch must span >= 3 voxels per axis");

    Real bins[kHogBins] = {};
    bool any = false;
    for (Index z = lo.z; z < hi.z; ++z)
        for (Index y = lo.y; y < hi.y; ++y)
            for (Index x = lo.x; x < hi.x; ++x) {
                const Real gx = 0.5 * (vol.at_clamped(channel, x + 1, y, z) -
                                       vol.at_clamped(channel, x - 1, y, z));
                const Real gy = 0.5 * (vol.at_clamped(channel, x, y + 1, z) -
                                       vol.at_clamped(channel, x, y - 1, z));
                const Real gz = 0.5 * (vol.at_clamped(channel, x, y, z + 1) -
                                       vol.at_clamped(channel, x, y, z - 1));
                if (gx * gx + gy * gy < 1e-24) continue;  // no axial-plane orientation
                Real ang = std::atan2(gy, gx) * 180.0 / std::numbers::pi;
                ang = std::fmod(ang + 360.0, 360.0);
                if (ang >= 180.0) ang -= 180.0;  // orientation, not direction
                int b = static_cast<int>(std::floor((ang + 2.5) / 5.0)) % kHogBins;
                bins[b] += std::sqrt(gx * gx + gy * gy + gz * gz);
                any = true;
            }
    HogMode out;
    if (!any) return out;  // undefined-orientation flag
    int best = 0;
    for (int b = 1; b < kHogBins; ++b)
        if (bins[b] > bins[best]) best = b;  // ties keep the smallest center
    out.angle_deg = 5.0 * best;
    out.defined = true;
    return out;
}

// Per-sample modes for one pyramid layer. Layer-0 samples use their 3^3
// neighborhood; coarser samples use their own patch (edge >= 3).
inline std::vector<HogMode> hog_modes_for_layer(const VolumeF& vol, int channel,
                                                const Pyramid& pyr, int r) {
    if (r < 0 || r > pyr.n_lay) throw OutOfHierarchyError("layer out of range");
    const Index pe = patch_edge(r);
    const GridDims layer = pyr.dims[static_cast<size_t>(r)];
    std::vector<HogMode> out(static_cast<size_t>(layer.count()));
    parallel_for(layer.count(), [&](Index j) {
        const Coord3 c = delinearize(layer, j);
        Coord3 lo, hi;
        if (pe == 1) {
            lo = {c.x - 1, c.y - 1, c.z - 1};
            hi = {c.x + 2, c.y + 2, c.z + 2};
        } else {
            lo = {c.x * pe, c.y * pe, c.z * pe};
            hi = {lo.x + pe, lo.y + pe, lo.z + pe};
        }
        out[static_cast<size_t>(j)] = hog_mode(vol, channel, lo, hi);
    });
    return out;
}

// Azimuth of a 3D direction's axial-plane projection, folded to [0, 180);
// used for the curvature directions the hit equations compare against.
inline Real axial_angle_deg(const Eigen::Vector3d& d) {
    if (d.x() * d.x() + d.y() * d.y() < 1e-24)
        throw InvalidInputError("direction has no axial-plane component");
    Real ang = std::atan2(d.y(), d.x()) * 180.0 / std::numbers::pi;
    ang = std::fmod(ang + 360.0, 360.0);
    if (ang >= 180.0) ang -= 180.0;
    return ang;
}

} // namespace graphwalk
