#pragma once

// Synthetic test volumes with known labels: a two-region step, nested
// spherical shells, and a sphere-plus-tube scene whose analytic surface mesh
// feeds the guided variant. Reference labels exist at every resolution and
// are hierarchically consistent by construction (parent = child majority).

#include <functional>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include "graphwalk/core.hpp"
#include "graphwalk/mesh.hpp"
#include "graphwalk/pyramid.hpp"
#include "graphwalk/volume.hpp"

namespace graphwalk {

enum class PhantomKind { kStep, kNestedShells, kSphereTube };

inline PhantomKind phantom_kind_from_string(const std::string& s) {
    if (s == "step") return PhantomKind::kStep;
    if (s == "nested-shells") return PhantomKind::kNestedShells;
    if (s == "sphere-tube") return PhantomKind::kSphereTube;
    throw InvalidInputError("unknown phantom kind: " + s);
}

inline std::string to_string(PhantomKind k) {
    switch (k) {
        case PhantomKind::kStep: return "step";
        case PhantomKind::kNestedShells: return "nested-shells";
        default: return "sphere-tube";
    }
}

struct PhantomConfig {
    GridDims dims{24, 24, 24};
    int n_lay = 1;
    Real noise_sigma = 0.0;
    bool weak_boundaries = false;
    std::uint64_t seed = 0;
};

struct Phantom {
    PhantomKind kind = PhantomKind::kStep;
    int n_clas = 0;
    VolumeF volume;  // step/shells: 1 channel; sphere-tube: fat + water
    Pyramid pyr;
    std::vector<std::vector<int>> reference;  // labels per layer, r = 0..n_lay
    std::optional<TriMesh> mesh;              // sphere-tube anatomy surface
};

/// Majority vote over each parent's children, ties to the smallest class.
inline std::vector<int> lift_labels_majority(const std::vector<int>& child, const Pyramid& pyr,
                                             int r_child, int n_clas) {
    if (r_child < 0 || r_child >= pyr.n_lay)
        throw OutOfHierarchyError("no layer above r_child");
    if (static_cast<Index>(child.size()) != pyr.layer_samples(r_child))
        throw InvalidInputError("child label count mismatch");
    const Index np = pyr.layer_samples(r_child + 1);
    std::vector<int> parent(static_cast<size_t>(np));
    for (Index j = 0; j < np; ++j) {
        std::vector<Index> votes(static_cast<size_t>(n_clas), 0);
        for (Index ch : children_of(pyr, r_child + 1, j)) {
            const int l = child[static_cast<size_t>(ch)];
            if (l < 0 || l >= n_clas) throw InvalidInputError("child label out of range");
            ++votes[static_cast<size_t>(l)];
        }
        int best = 0;
        for (int c = 1; c < n_clas; ++c)
            if (votes[static_cast<size_t>(c)] > votes[static_cast<size_t>(best)]) best = c;
        parent[static_cast<size_t>(j)] = best;
    }
    return parent;
}

/// One-hot labels box-blurred over a (2*radius+1)^3 clamped window, then mixed
/// with the uniform distribution so every entry lands strictly inside (0,1).
inline Eigen::MatrixXd blurred_priors(const std::vector<int>& labels, GridDims dims, int n_clas,
                                      int radius = 1, Real mix = 0.2) {
    if (static_cast<Index>(labels.size()) != dims.count())
        throw InvalidInputError("label count != grid size");
    if (n_clas < 2) throw InvalidInputError("need >= 2 classes");
    if (radius < 0) throw InvalidInputError("negative blur radius");
    if (!(mix > 0.0 && mix < 1.0)) throw InvalidInputError("mix must lie in (0,1)");

    Eigen::MatrixXd a(dims.count(), n_clas);
    for (Index j = 0; j < dims.count(); ++j) {
        const Coord3 c = delinearize(dims, j);
        std::vector<Real> acc(static_cast<size_t>(n_clas), 0.0);
        Real total = 0.0;
        for (Index dz = -radius; dz <= radius; ++dz)
            for (Index dy = -radius; dy <= radius; ++dy)
                for (Index dx = -radius; dx <= radius; ++dx) {
                    const Index x = std::clamp<Index>(c.x + dx, 0, dims.x - 1);
                    const Index y = std::clamp<Index>(c.y + dy, 0, dims.y - 1);
                    const Index z = std::clamp<Index>(c.z + dz, 0, dims.z - 1);
                    const int l = labels[static_cast<size_t>(linear_index(dims, x, y, z))];
                    if (l < 0 || l >= n_clas) throw InvalidInputError("label out of range");
                    acc[static_cast<size_t>(l)] += 1.0;
                    total += 1.0;
                }
        for (int k = 0; k < n_clas; ++k)
            a(j, k) = (1.0 - mix) * acc[static_cast<size_t>(k)] / total +
                      mix / static_cast<Real>(n_clas);
    }
    return a;
}

namespace detail {

/// Labels each voxel of the finest (padded) layer; padded coordinates
/// replicate the nearest in-volume voxel, mirroring clamped feature reads.
template <typename LabelFn>
std::vector<std::vector<int>> reference_stack(const Pyramid& pyr, int n_clas, LabelFn&& label) {
    std::vector<std::vector<int>> ref(static_cast<size_t>(pyr.n_lay) + 1);
    const GridDims d0 = pyr.layer_dims(0);
    const GridDims orig = pyr.dims_orig;
    ref[0].resize(static_cast<size_t>(d0.count()));
    for (Index j = 0; j < d0.count(); ++j) {
        Coord3 c = delinearize(d0, j);
        c.x = std::min(c.x, orig.x - 1);
        c.y = std::min(c.y, orig.y - 1);
        c.z = std::min(c.z, orig.z - 1);
        ref[0][static_cast<size_t>(j)] = label(c);
    }
    for (int r = 0; r < pyr.n_lay; ++r)
        ref[static_cast<size_t>(r) + 1] =
            lift_labels_majority(ref[static_cast<size_t>(r)], pyr, r, n_clas);
    return ref;
}

/// Midpoint blend for voxels on a 6-connected class interface, so the step
/// across the boundary shrinks below the additive noise.
inline void blend_weak_boundaries(VolumeF& vol, const std::vector<int>& labels0,
                                  const Pyramid& pyr,
                                  const std::vector<std::vector<Real>>& base) {
    const GridDims d = vol.dims;
    const GridDims d0 = pyr.layer_dims(0);
    static const Coord3 face[6] = {{1, 0, 0}, {-1, 0, 0}, {0, 1, 0},
                                   {0, -1, 0}, {0, 0, 1}, {0, 0, -1}};
    for (Index z = 0; z < d.z; ++z)
        for (Index y = 0; y < d.y; ++y)
            for (Index x = 0; x < d.x; ++x) {
                const int self = labels0[static_cast<size_t>(linear_index(d0, x, y, z))];
                int other = -1;
                for (const Coord3& f : face) {
                    const Index nx = x + f.x, ny = y + f.y, nz = z + f.z;
                    if (!in_bounds(d, nx, ny, nz)) continue;
                    const int l = labels0[static_cast<size_t>(linear_index(d0, nx, ny, nz))];
                    if (l != self) {
                        other = l;
                        break;
                    }
                }
                if (other < 0) continue;
                for (int c = 0; c < vol.channels; ++c) {
                    const Real mid = 0.5 * (base[static_cast<size_t>(c)][static_cast<size_t>(self)] +
                                            base[static_cast<size_t>(c)][static_cast<size_t>(other)]);
                    vol.at(c, x, y, z) = static_cast<float>(mid);
                }
            }
}

}  // namespace detail

inline Phantom generate_phantom(PhantomKind kind, const PhantomConfig& cfg) {
    const GridDims d = cfg.dims;
    if (d.x < 4 || d.y < 4 || d.z < 4)
        throw InvalidInputError("phantom dims too small: " + format_dims(d));
    if (cfg.noise_sigma < 0.0) throw InvalidInputError("negative noise sigma");

    Phantom ph;
    ph.kind = kind;
    ph.pyr = build_pyramid(d, cfg.n_lay);

    // per-channel base intensity of each class
    std::vector<std::vector<Real>> base;
    std::function<int(Coord3)> label;

    if (kind == PhantomKind::kStep) {
        ph.n_clas = 2;
        base = {{1.0, 0.0}};
        const Index mid = d.x / 2;
        label = [mid](Coord3 c) { return c.x < mid ? 0 : 1; };
    } else if (kind == PhantomKind::kNestedShells) {
        ph.n_clas = 4;
        base = {{0.2, 0.45, 0.7, 0.95}};
        const Real m = static_cast<Real>(std::min({d.x, d.y, d.z}));
        const Real r0 = 0.20 * m, r1 = 0.32 * m, r2 = 0.42 * m;
        const Eigen::Vector3d center(0.5 * d.x, 0.5 * d.y, 0.5 * d.z);
        label = [=](Coord3 c) {
            const Real rad =
                (Eigen::Vector3d(c.x + 0.5, c.y + 0.5, c.z + 0.5) - center).norm();
            if (rad < r0) return 0;
            if (rad < r1) return 1;
            if (rad < r2) return 2;
            return 3;
        };
    } else {  // sphere-tube: fat shells around bright anatomy, background last
        if (d.x < 32 || d.y < 3 * d.x / 4 || d.z < d.x)
            throw InvalidInputError(
                "sphere-tube phantom needs x >= 32, y >= 3x/4, z >= x; got " + format_dims(d));
        ph.n_clas = 4;
        // channels: fat, water; classes: EpAT-like shell, PeAT-like blob,
        // PvAT-like shell, background. All depots share one fat intensity so
        // only priors and geometry can separate them.
        base = {{0.9, 0.9, 0.9, 0.1},   // fat channel
                {0.15, 0.15, 0.15, 0.15}};  // water channel: anatomy added below
        const Real rs = 0.1875 * static_cast<Real>(d.x);
        const Real rt = rs / 4.0;
        const Real len = 0.5 * static_cast<Real>(d.z);
        const Eigen::Vector3d cs(0.3125 * d.x, 0.5 * d.y, 0.5 * d.z);
        const Eigen::Vector3d ct(0.75 * d.x, 0.5 * d.y, 0.5 * d.z);
        const Eigen::Vector3d blob(0.53 * d.x, 0.5 * d.y, 0.25 * d.z);
        const Real rb = 0.08 * static_cast<Real>(d.x);
        ph.mesh = make_sphere_tube(rs, rt, len, cs, ct);
        label = [=](Coord3 c) {
            const Eigen::Vector3d p(c.x + 0.5, c.y + 0.5, c.z + 0.5);
            const Real ds = (p - cs).norm();
            if (ds > rs && ds <= rs + 2.0) return 0;  // epicardial-like shell
            const Real dt = std::hypot(p.x() - ct.x(), p.y() - ct.y());
            const bool in_span = std::abs(p.z() - ct.z()) <= 0.5 * len;
            if (in_span && dt > rt && dt <= rt + 1.5) return 2;  // perivascular-like
            if ((p - blob).norm() <= rb) return 1;               // pericardial-like blob
            return 3;
        };
        // water channel anatomy is filled after the label pass below
    }

    ph.reference = detail::reference_stack(ph.pyr, ph.n_clas, label);

    const int channels = static_cast<int>(base.size());
    ph.volume = VolumeF(d, channels);
    const GridDims d0 = ph.pyr.layer_dims(0);
    for (int c = 0; c < channels; ++c)
        for (Index z = 0; z < d.z; ++z)
            for (Index y = 0; y < d.y; ++y)
                for (Index x = 0; x < d.x; ++x) {
                    const int l =
                        ph.reference[0][static_cast<size_t>(linear_index(d0, x, y, z))];
                    ph.volume.at(c, x, y, z) =
                        static_cast<float>(base[static_cast<size_t>(c)][static_cast<size_t>(l)]);
                }

    if (kind == PhantomKind::kSphereTube) {
        // bright anatomy interiors on the water channel drive the gradients
        const Real rs = 0.1875 * static_cast<Real>(d.x);
        const Real rt = rs / 4.0;
        const Real len = 0.5 * static_cast<Real>(d.z);
        const Eigen::Vector3d cs(0.3125 * d.x, 0.5 * d.y, 0.5 * d.z);
        const Eigen::Vector3d ct(0.75 * d.x, 0.5 * d.y, 0.5 * d.z);
        for (Index z = 0; z < d.z; ++z)
            for (Index y = 0; y < d.y; ++y)
                for (Index x = 0; x < d.x; ++x) {
                    const Eigen::Vector3d p(x + 0.5, y + 0.5, z + 0.5);
                    const bool in_sphere = (p - cs).norm() <= rs;
                    const bool in_tube = std::hypot(p.x() - ct.x(), p.y() - ct.y()) <= rt &&
                                         std::abs(p.z() - ct.z()) <= 0.5 * len;
                    if (in_sphere || in_tube) ph.volume.at(1, x, y, z) = 0.9f;
                }
    }

    if (cfg.weak_boundaries)
        detail::blend_weak_boundaries(ph.volume, ph.reference[0], ph.pyr, base);

    if (cfg.noise_sigma > 0.0) {
        std::mt19937_64 rng(cfg.seed);
        std::normal_distribution<Real> noise(0.0, cfg.noise_sigma);
        for (auto& v : ph.volume.data) v = static_cast<float>(v + noise(rng));
    }
    return ph;
}

}  // namespace graphwalk
