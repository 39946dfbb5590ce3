#pragma once

// Susceptibility derivation: rays marched outward from typed surface samples
// boost the aligned class of every sample they hit; unhit samples stay
// uniform. Class order is fixed: EpAT, PeAT, PvAT, Background.

#include <cmath>
#include <thread>
#include <vector>

#include <Eigen/Dense>

#include "graphwalk/hog.hpp"
#include "graphwalk/pyramid.hpp"
#include "graphwalk/sir.hpp"
#include "graphwalk/surface.hpp"
#include "graphwalk/threads.hpp"

namespace graphwalk {

enum AdiposeClass : int { kEpAT = 0, kPeAT = 1, kPvAT = 2, kBackgroundClass = 3 };
inline constexpr int kAdiposeClasses = 4;

struct SusceptibilityConfig {
    Real max_range = 30.0;  // ray length in layer-0 voxels
    Real step = 1.0;        // one voxel per trial
};

namespace detail {

// Boundary points land between voxels; ties resolve to the lower index.
inline Index floor_tie_low(Real p) {
    const Real f = std::floor(p);
    if (p == f) return static_cast<Index>(f) - 1;
    return static_cast<Index>(f);
}

} // namespace detail

// One ray per myocardium/vessel surface sample, stepping along its median
// outward normal from the surface-voxel centroid. A hit sample's boosted
// class gets s' = exp(|cos(hog mode - source direction)|); repeated hits
// keep the per-class maximum, then rows normalize to sum 1. Samples whose
// HOG mode is undefined are treated as unhit.
inline SusceptibilityField derive_susceptibilities(const SurfaceSamples& surface,
                                                   const std::vector<HogMode>& hog,
                                                   const Pyramid& pyr, int r,
                                                   const SusceptibilityConfig& cfg = {}) {
    if (r != surface.r) throw InvalidInputError("surface samples belong to a different layer");
    if (cfg.step <= 0.0 || cfg.max_range < cfg.step)
        throw InvalidInputError("ray step/range must be positive");
    const GridDims layer = pyr.dims[static_cast<size_t>(r)];
    const Index n = layer.count();
    if (static_cast<Index>(hog.size()) != n)
        throw InvalidInputError("one hog mode per layer sample required");
    const Index pe = patch_edge(r);
    const GridDims grid = pyr.dims_orig;

    // s' starts at 1 everywhere (the unhit value); boosts only raise it
    Eigen::MatrixXd sp = Eigen::MatrixXd::Ones(n, kAdiposeClasses);

    const int workers = std::min<int>(worker_count(), std::max<size_t>(surface.samples.size(), 1));
    std::vector<Eigen::MatrixXd> local(static_cast<size_t>(workers),
                                       Eigen::MatrixXd::Ones(n, kAdiposeClasses));
    std::vector<std::thread> pool;
    for (int w = 0; w < workers; ++w)
        pool.emplace_back([&, w]() {
            Eigen::MatrixXd& acc = local[static_cast<size_t>(w)];
            for (size_t i = static_cast<size_t>(w); i < surface.samples.size();
                 i += static_cast<size_t>(workers)) {
                const SurfaceSample& src = surface.samples[i];
                if (src.tag == SurfaceTag::untyped || !src.has_attributes) continue;
                if (src.dir.x() * src.dir.x() + src.dir.y() * src.dir.y() < 1e-24)
                    continue;  // direction has no axial-plane angle to compare
                const Real src_angle = axial_angle_deg(src.dir);
                const int boosted = src.tag == SurfaceTag::myocardium ? kEpAT : kPvAT;

                std::vector<char> seen(static_cast<size_t>(n), 0);
                for (Real t = cfg.step; t <= cfg.max_range; t += cfg.step) {
                    const Eigen::Vector3d p = src.centroid + t * src.normal;
                    const Coord3 v{detail::floor_tie_low(p.x()), detail::floor_tie_low(p.y()),
                                   detail::floor_tie_low(p.z())};
                    if (!in_bounds(grid, v.x, v.y, v.z)) break;
                    const Coord3 sc{v.x / pe, v.y / pe, v.z / pe};
                    const Index hit = linear_index(layer, sc.x, sc.y, sc.z);
                    if (hit == src.sample || seen[static_cast<size_t>(hit)]) continue;
                    seen[static_cast<size_t>(hit)] = 1;
                    const HogMode& mode = hog[static_cast<size_t>(hit)];
                    if (!mode.defined) continue;  // treated as unhit
                    const Real delta =
                        (mode.angle_deg - src_angle) * std::numbers::pi / 180.0;
                    const Real boost = std::exp(std::abs(std::cos(delta)));
                    acc(hit, boosted) = std::max(acc(hit, boosted), boost);
                }
            }
        });
    for (auto& th : pool) th.join();
    for (const auto& acc : local) sp = sp.cwiseMax(acc);

    SusceptibilityField field;
    field.s = sp.array().colwise() / sp.rowwise().sum().array();
    field.validate();
    return field;
}

} // namespace graphwalk
