#pragma once

#include <vector>

#include <Eigen/Dense>
#include <Eigen/Sparse>

#include "graphwalk/core.hpp"
#include "graphwalk/pyramid.hpp"
#include "graphwalk/sample_set.hpp"
#include "graphwalk/sobel.hpp"
#include "graphwalk/solver.hpp"
#include "graphwalk/weights.hpp"

namespace graphwalk {

/// One-vs-all sample partition for one foreground class. fore/back/hard/rest
/// partition the samples (precedence hard > fore > back); soft is a subset of
/// rest kept for diagnostics.
struct SampleCategories {
    int c = 0;
    std::vector<Index> fore, back, hard, soft, rest;
    std::vector<std::uint8_t> tag;  // 0 rest, 1 fore, 2 back, 3 hard

    enum Tag : std::uint8_t { kRest = 0, kFore = 1, kBack = 2, kHard = 3 };
};

/// Lifts a voxel-level boundary mask to layer-r samples: a sample is boundary
/// when any voxel of its patch is masked. Voxels beyond the original volume
/// (padding) are unmasked.
inline std::vector<std::uint8_t> lift_boundary(const BoundaryMask& mask, const Pyramid& p,
                                               int r) {
    const GridDims ds = p.layer_dims(r);
    const Index edge = patch_edge(r);
    std::vector<std::uint8_t> out(static_cast<size_t>(ds.count()), 0);
    for (Index j = 0; j < ds.count(); ++j) {
        const Coord3 c = delinearize(ds, j);
        bool hit = false;
        for (Index dz = 0; dz < edge && !hit; ++dz)
            for (Index dy = 0; dy < edge && !hit; ++dy)
                for (Index dx = 0; dx < edge && !hit; ++dx) {
                    const Index vx = c.x * edge + dx, vy = c.y * edge + dy, vz = c.z * edge + dz;
                    if (!in_bounds(mask.dims, vx, vy, vz)) continue;
                    hit = mask.at(linear_index(mask.dims, vx, vy, vz));
                }
        out[static_cast<size_t>(j)] = hit ? 1 : 0;
    }
    return out;
}

/// Thresholds: fore a >= 0.8, back a <= 0.2, soft a in [0.4, 0.6]; boundary
/// samples are hard regardless of prior. rest = all - (fore | back | hard).
inline SampleCategories categorize(const SampleSet& samples,
                                   const std::vector<std::uint8_t>& boundary, int c) {
    const Index n = samples.size();
    if (static_cast<Index>(boundary.size()) != n)
        throw InvalidInputError("boundary flag count mismatch");
    if (c < 0 || c >= samples.n_clas) throw InvalidInputError("class out of range");

    SampleCategories cat;
    cat.c = c;
    cat.tag.assign(static_cast<size_t>(n), SampleCategories::kRest);
    for (Index j = 0; j < n; ++j) {
        const Real a = samples.priors(j, c);
        if (boundary[static_cast<size_t>(j)]) {
            cat.tag[static_cast<size_t>(j)] = SampleCategories::kHard;
            cat.hard.push_back(j);
        } else if (a >= 0.8) {
            cat.tag[static_cast<size_t>(j)] = SampleCategories::kFore;
            cat.fore.push_back(j);
        } else if (a <= 0.2) {
            cat.tag[static_cast<size_t>(j)] = SampleCategories::kBack;
            cat.back.push_back(j);
        } else {
            cat.rest.push_back(j);
        }
        if (!boundary[static_cast<size_t>(j)] && a >= 0.4 && a <= 0.6) cat.soft.push_back(j);
    }
    return cat;
}

struct ConstrainedSolveResult {
    Eigen::VectorXd p;       // full length; constraint samples carry 1/0/0.5
    bool rest_empty = false;  // solve degenerated to the constraint values
};

/// Reduced one-vs-all solve: fore/back/hard rows are fixed at 1/0/0.5 and fold
/// into the right-hand side; rest rows keep the full degree d_j + lambda.
inline ConstrainedSolveResult solve_constrained(const EdgeWeights& weights,
                                                const SampleCategories& cat,
                                                const SampleSet& samples, Real lambda_prior) {
    const Index n = weights.n;
    if (samples.size() != n) throw InvalidInputError("weights/sample count mismatch");
    if (!(lambda_prior > 0.0)) throw InvalidInputError("lambda_prior must be > 0");

    auto fixed_value = [](std::uint8_t tag) -> Real {
        switch (tag) {
            case SampleCategories::kFore: return 1.0;
            case SampleCategories::kBack: return 0.0;
            default: return 0.5;  // hard
        }
    };

    ConstrainedSolveResult out;
    out.p.resize(n);
    for (Index j = 0; j < n; ++j)
        if (cat.tag[static_cast<size_t>(j)] != SampleCategories::kRest)
            out.p(j) = fixed_value(cat.tag[static_cast<size_t>(j)]);

    if (cat.rest.empty()) {
        out.rest_empty = true;
        return out;
    }

    std::vector<Index> to_row(static_cast<size_t>(n), -1);
    for (size_t i = 0; i < cat.rest.size(); ++i)
        to_row[static_cast<size_t>(cat.rest[i])] = static_cast<Index>(i);
    const auto m = static_cast<Index>(cat.rest.size());

    Eigen::VectorXd rhs(m);
    for (Index r = 0; r < m; ++r)
        rhs(r) = lambda_prior * samples.priors(cat.rest[static_cast<size_t>(r)], cat.c);

    std::vector<Eigen::Triplet<Real>> trip;
    for (Index r = 0; r < m; ++r) {
        const Index j = cat.rest[static_cast<size_t>(r)];
        trip.emplace_back(r, r, weights.degree[static_cast<size_t>(j)] + lambda_prior);
    }
    for (const auto& e : weights.edges) {
        const Index rj = to_row[static_cast<size_t>(e.j)];
        const Index rk = to_row[static_cast<size_t>(e.k)];
        if (rj >= 0 && rk >= 0) {
            trip.emplace_back(rj, rk, -e.w);
            trip.emplace_back(rk, rj, -e.w);
        } else if (rj >= 0) {
            rhs(rj) += e.w * out.p(e.k);
        } else if (rk >= 0) {
            rhs(rk) += e.w * out.p(e.j);
        }
    }

    SpMat gamma(m, m);
    gamma.setFromTriplets(trip.begin(), trip.end());
    Eigen::SimplicialLDLT<SpMat> ldlt(gamma);
    if (ldlt.info() != Eigen::Success)
        throw SingularityError("constrained factorization failed", cat.rest);
    const Eigen::VectorXd x = ldlt.solve(rhs);
    for (Index r = 0; r < m; ++r) out.p(cat.rest[static_cast<size_t>(r)]) = x(r);
    return out;
}

} // namespace graphwalk
