#pragma once

// Surface voxelization, the two-population curvature histogram, and the
// per-layer surface-sample aggregation feeding the susceptibility search.

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <map>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "graphwalk/core.hpp"
#include "graphwalk/mesh.hpp"
#include "graphwalk/pyramid.hpp"

namespace graphwalk {

namespace detail {

// Componentwise median of vectors, renormalized. `sign_free` canonicalizes
// each vector's sign first (directions are lines, orientation-free);
// normals keep their outward orientation.
inline Eigen::Vector3d vector_median(std::vector<Eigen::Vector3d> vs, bool sign_free) {
    if (vs.empty()) return Eigen::Vector3d::Zero();
    if (sign_free) {
        for (auto& v : vs) {
            Real lead = 0.0;
            for (int a = 0; a < 3; ++a)
                if (std::abs(v[a]) > 1e-12) {
                    lead = v[a];
                    break;
                }
            if (lead < 0.0) v = -v;
        }
    }
    Eigen::Vector3d m;
    std::vector<Real> comp(vs.size());
    for (int a = 0; a < 3; ++a) {
        for (size_t i = 0; i < vs.size(); ++i) comp[i] = vs[i][a];
        m[a] = median(comp);
    }
    const Real len = m.norm();
    if (len < 1e-12) return vs.front().normalized();  // degenerate cancellation
    return m / len;
}

} // namespace detail

struct SurfaceVoxel {
    Coord3 voxel;
    Real kappa = 0.0;              // median |k_max| of contributing triangles
    Eigen::Vector3d dir = Eigen::Vector3d::Zero();     // median k_max direction
    Eigen::Vector3d normal = Eigen::Vector3d::Zero();  // median outward normal
    bool has_attributes = false;   // false when every contributor was untyped
};

struct SurfaceVoxels {
    GridDims dims;
    std::vector<SurfaceVoxel> voxels;  // sorted by linear index, unique
};

// Marks every voxel that any triangle passes through, sampling each triangle
// at half-voxel barycentric spacing. Voxel attributes are medians over the
// contributing triangles (a triangle's own attributes average its typed
// vertices; fully untyped triangles contribute the mark only).
inline SurfaceVoxels voxelize_surface(const TriMesh& mesh,
                                      const std::vector<VertexCurvature>& curv,
                                      const GridDims& dims) {
    struct Agg {
        std::vector<Real> kappa;
        std::vector<Eigen::Vector3d> dir, normal;
    };
    std::map<Index, Agg> agg;

    for (const auto& f : mesh.faces) {
        const Eigen::Vector3d& p0 = mesh.vertices[static_cast<size_t>(f[0])];
        const Eigen::Vector3d& p1 = mesh.vertices[static_cast<size_t>(f[1])];
        const Eigen::Vector3d& p2 = mesh.vertices[static_cast<size_t>(f[2])];

        // one attribute set per triangle, averaged over its typed corners
        Real tk = 0.0;
        std::vector<Eigen::Vector3d> tds, tns;
        int typed = 0;
        for (Index v : f) {
            const VertexCurvature& vc = curv[static_cast<size_t>(v)];
            if (!vc.typed) continue;
            ++typed;
            tk += std::abs(vc.k_max);
            tds.push_back(vc.dir_max);
            tns.push_back(vc.normal);
        }
        Eigen::Vector3d tdir = Eigen::Vector3d::Zero(), tnormal = Eigen::Vector3d::Zero();
        if (typed > 0) {
            tk /= typed;
            tdir = detail::vector_median(tds, true);
            tnormal = detail::vector_median(tns, false);
        }

        const Real longest = std::max({(p1 - p0).norm(), (p2 - p0).norm(), (p2 - p1).norm()});
        const int n_steps = std::max(1, static_cast<int>(std::ceil(2.0 * longest)));  // half-voxel
        for (int i = 0; i <= n_steps; ++i)
            for (int j = 0; i + j <= n_steps; ++j) {
                const Real s = static_cast<Real>(i) / n_steps;
                const Real t = static_cast<Real>(j) / n_steps;
                const Eigen::Vector3d p = p0 + s * (p1 - p0) + t * (p2 - p0);
                const Coord3 c{static_cast<Index>(std::floor(p.x())),
                               static_cast<Index>(std::floor(p.y())),
                               static_cast<Index>(std::floor(p.z()))};
                if (!in_bounds(dims, c.x, c.y, c.z))
                    throw InvalidInputError("mesh extends outside the voxel grid at (" +
                                            std::to_string(p.x()) + ", " + std::to_string(p.y()) +
                                            ", " + std::to_string(p.z()) + ")");
                Agg& a = agg[linear_index(dims, c.x, c.y, c.z)];
                if (typed > 0) {
                    a.kappa.push_back(tk);
                    a.dir.push_back(tdir);
                    a.normal.push_back(tnormal);
                }
            }
    }

    SurfaceVoxels out;
    out.dims = dims;
    out.voxels.reserve(agg.size());
    for (auto& [lin, a] : agg) {
        SurfaceVoxel sv;
        sv.voxel = delinearize(dims, lin);
        if (!a.kappa.empty()) {
            sv.kappa = median(a.kappa);
            sv.dir = detail::vector_median(a.dir, true);
            sv.normal = detail::vector_median(a.normal, false);
            sv.has_attributes = true;
        }
        out.voxels.push_back(sv);
    }
    return out;
}

struct CurvaturePopulations {
    std::vector<Real> bin_centers;  // 64 bins over [0, p99]
    std::vector<Real> counts;
    std::vector<Real> smoothed;     // moving average, window 5
    // FWHM intervals in bin-edge coordinates, half-open [lo, hi). The last
    // bin absorbs everything clamped above p99, so an interval reaching it
    // is unbounded above.
    Real myo_lo = 0.0, myo_hi = 0.0;
    Real ves_lo = 0.0, ves_hi = 0.0;

    bool is_myo(Real k) const { return k >= myo_lo && k < myo_hi; }
    bool is_ves(Real k) const { return k >= ves_lo && k < ves_hi; }

    std::string to_csv() const {
        std::string csv = "bin_center,count\n";
        char buf[80];
        for (size_t i = 0; i < bin_centers.size(); ++i) {
            std::snprintf(buf, sizeof(buf), "%.17g,%.17g\n", bin_centers[i], counts[i]);
            csv += buf;
        }
        return csv;
    }
};

inline constexpr int kHistogramBins = 64;
inline constexpr int kSmoothingWindow = 5;

// Histogram of |k_max| over attributed surface voxels; the FWHM of the lower
// smoothed peak types myocardium-like curvature, the upper one vessel-like.
// Fewer than two peaks, or overlapping intervals, abort with the histogram
// attached for diagnosis.
inline CurvaturePopulations curvature_histogram(const SurfaceVoxels& surface) {
    std::vector<Real> ks;
    for (const auto& sv : surface.voxels)
        if (sv.has_attributes) ks.push_back(sv.kappa);
    if (ks.size() < 4) throw InvalidInputError("too few attributed surface voxels for a histogram");

    const Real p99 = quantile_nearest_rank(ks, 0.99);
    if (p99 <= 0.0) throw InvalidInputError("degenerate curvature range");
    const Real width = p99 / kHistogramBins;

    CurvaturePopulations pop;
    pop.bin_centers.resize(kHistogramBins);
    pop.counts.assign(kHistogramBins, 0.0);
    for (int b = 0; b < kHistogramBins; ++b) pop.bin_centers[b] = (b + 0.5) * width;
    for (Real k : ks) {
        int b = static_cast<int>(k / width);
        if (b >= kHistogramBins) b = kHistogramBins - 1;  // clamp values above p99
        pop.counts[static_cast<size_t>(b)] += 1.0;
    }

    pop.smoothed.resize(kHistogramBins);
    const int half = kSmoothingWindow / 2;
    for (int b = 0; b < kHistogramBins; ++b) {
        Real sum = 0.0;
        int n = 0;
        for (int o = -half; o <= half; ++o) {
            const int i = b + o;
            if (i < 0 || i >= kHistogramBins) continue;  // window shrinks at the edges
            sum += pop.counts[static_cast<size_t>(i)];
            ++n;
        }
        pop.smoothed[static_cast<size_t>(b)] = sum / n;
    }

    // local maxima of the smoothed curve; plateaus collapse to their start
    std::vector<int> peaks;
    for (int b = 0; b < kHistogramBins; ++b) {
        const Real v = pop.smoothed[static_cast<size_t>(b)];
        if (v <= 0.0) continue;
        const Real left = b > 0 ? pop.smoothed[static_cast<size_t>(b - 1)] : -1.0;
        const Real right = b + 1 < kHistogramBins ? pop.smoothed[static_cast<size_t>(b + 1)] : -1.0;
        if (v > left && v >= right) peaks.push_back(b);
    }
    if (peaks.size() < 2)
        throw PopulationDetectionError("found " + std::to_string(peaks.size()) +
                                           " curvature peak(s), need 2",
                                       pop.to_csv());

    // two dominant peaks, ordered by center
    std::sort(peaks.begin(), peaks.end(), [&](int a, int b) {
        return pop.smoothed[static_cast<size_t>(a)] > pop.smoothed[static_cast<size_t>(b)];
    });
    int lo_bin = peaks[0], hi_bin = peaks[1];
    if (lo_bin > hi_bin) std::swap(lo_bin, hi_bin);
    if (lo_bin == hi_bin)
        throw PopulationDetectionError("curvature peaks coincide", pop.to_csv());

    auto fwhm = [&](int peak, Real& lo, Real& hi) {
        const Real half_h = 0.5 * pop.smoothed[static_cast<size_t>(peak)];
        int l = peak, r = peak;
        while (l > 0 && pop.smoothed[static_cast<size_t>(l - 1)] >= half_h) --l;
        while (r + 1 < kHistogramBins && pop.smoothed[static_cast<size_t>(r + 1)] >= half_h) ++r;
        lo = l * width;
        hi = r + 1 == kHistogramBins ? std::numeric_limits<Real>::infinity() : (r + 1) * width;
    };
    fwhm(lo_bin, pop.myo_lo, pop.myo_hi);
    fwhm(hi_bin, pop.ves_lo, pop.ves_hi);
    if (pop.myo_hi > pop.ves_lo)
        throw PopulationDetectionError("curvature population intervals overlap", pop.to_csv());
    return pop;
}

enum class SurfaceTag { untyped = 0, myocardium = 1, vessel = 2 };

struct SurfaceSample {
    Index sample = 0;  // linear index at layer r
    Real kappa = 0.0;
    Eigen::Vector3d dir = Eigen::Vector3d::Zero();
    Eigen::Vector3d normal = Eigen::Vector3d::Zero();
    Eigen::Vector3d centroid = Eigen::Vector3d::Zero();  // mean surface-voxel center
    SurfaceTag tag = SurfaceTag::untyped;
    bool has_attributes = false;
};

struct SurfaceSamples {
    int r = 0;
    std::vector<SurfaceSample> samples;
};

// A layer-r sample is a surface sample when its patch holds >= 1 surface
// voxel; its curvature/direction/normal are medians over those voxels and
// the FWHM intervals assign the population tag.
inline SurfaceSamples surface_samples(const SurfaceVoxels& surface,
                                      const CurvaturePopulations& pop, const Pyramid& pyr,
                                      int r) {
    if (r < 0 || r > pyr.n_lay) throw OutOfHierarchyError("layer out of range");
    const Index pe = patch_edge(r);
    const GridDims layer = pyr.dims[static_cast<size_t>(r)];

    struct Agg {
        std::vector<Real> kappa;
        std::vector<Eigen::Vector3d> dir, normal;
        Eigen::Vector3d centroid = Eigen::Vector3d::Zero();
        Index n_marked = 0;
    };
    std::map<Index, Agg> agg;
    for (const auto& sv : surface.voxels) {
        const Coord3 sc{sv.voxel.x / pe, sv.voxel.y / pe, sv.voxel.z / pe};
        if (!in_bounds(layer, sc.x, sc.y, sc.z))
            throw OutOfHierarchyError("surface voxel maps outside layer " + std::to_string(r));
        Agg& a = agg[linear_index(layer, sc.x, sc.y, sc.z)];
        ++a.n_marked;
        a.centroid += Eigen::Vector3d(sv.voxel.x + 0.5, sv.voxel.y + 0.5, sv.voxel.z + 0.5);
        if (!sv.has_attributes) continue;
        a.kappa.push_back(sv.kappa);
        a.dir.push_back(sv.dir);
        a.normal.push_back(sv.normal);
    }

    SurfaceSamples out;
    out.r = r;
    out.samples.reserve(agg.size());
    for (auto& [lin, a] : agg) {
        SurfaceSample ss;
        ss.sample = lin;
        ss.centroid = a.centroid / static_cast<Real>(a.n_marked);
        if (!a.kappa.empty()) {
            ss.kappa = median(a.kappa);
            ss.dir = detail::vector_median(a.dir, true);
            ss.normal = detail::vector_median(a.normal, false);
            ss.has_attributes = true;
            if (pop.is_myo(ss.kappa))
                ss.tag = SurfaceTag::myocardium;
            else if (pop.is_ves(ss.kappa))
                ss.tag = SurfaceTag::vessel;
        }
        out.samples.push_back(ss);
    }
    return out;
}

} // namespace graphwalk
