#pragma once

#include <cmath>
#include <vector>

#include <Eigen/Dense>
#include <Eigen/Sparse>

#include "graphwalk/core.hpp"
#include "graphwalk/sample_set.hpp"
#include "graphwalk/solver.hpp"
#include "graphwalk/weights.hpp"

namespace graphwalk {

/// Sample- and class-specific susceptibilities; rows sum to 1, entries in (0,1).
struct SusceptibilityField {
    Eigen::MatrixXd s;  // n x n_clas

    void validate() const {
        for (Index j = 0; j < s.rows(); ++j) {
            Real row = 0.0;
            for (Index c = 0; c < s.cols(); ++c) {
                if (!(s(j, c) > 0.0 && s(j, c) < 1.0))
                    throw InvalidInputError("susceptibility outside (0,1)");
                row += s(j, c);
            }
            if (std::abs(row - 1.0) > 1e-9)
                throw InvalidInputError("susceptibility row does not sum to 1");
        }
    }
};

/// Directional class-specific weights w'_jk = (w_jk/sqrt(d_k)) * (s_kc/s_jc)
/// with modified degrees d'_j = sum_k w'_jk. Generally w'_jk != w'_kj.
struct ModifiedWeights {
    Index n = 0;
    std::vector<std::vector<std::pair<Index, Real>>> out;  // per j: (k, w'_jk)
    std::vector<Real> degree;                              // d'_j
    std::vector<Real> consistency_gap;                     // |sqrt(d_j) - d'_j|
};

inline ModifiedWeights modified_weights(const EdgeWeights& weights,
                                        const SusceptibilityField& field, int c) {
    const Index n = weights.n;
    if (field.s.rows() != n) throw InvalidInputError("susceptibility row count mismatch");
    if (c < 0 || c >= field.s.cols()) throw InvalidInputError("class out of range");
    for (Index j = 0; j < n; ++j)
        if (!(field.s(j, c) > 0.0))
            throw InvalidInputError("zero susceptibility makes the weight ratio undefined");
    // isolated samples carry no edges, so only edge endpoints need d > 0
    for (const auto& e : weights.edges)
        if (!(weights.degree[static_cast<size_t>(e.j)] > 0.0) ||
            !(weights.degree[static_cast<size_t>(e.k)] > 0.0))
            throw InvalidInputError("zero-degree sample in modified weights");

    ModifiedWeights mw;
    mw.n = n;
    mw.out.resize(static_cast<size_t>(n));
    mw.degree.assign(static_cast<size_t>(n), 0.0);
    for (const auto& e : weights.edges) {
        const Real wjk = e.w / std::sqrt(weights.degree[static_cast<size_t>(e.k)]) *
                         (field.s(e.k, c) / field.s(e.j, c));
        const Real wkj = e.w / std::sqrt(weights.degree[static_cast<size_t>(e.j)]) *
                         (field.s(e.j, c) / field.s(e.k, c));
        mw.out[static_cast<size_t>(e.j)].emplace_back(e.k, wjk);
        mw.out[static_cast<size_t>(e.k)].emplace_back(e.j, wkj);
        mw.degree[static_cast<size_t>(e.j)] += wjk;
        mw.degree[static_cast<size_t>(e.k)] += wkj;
    }
    mw.consistency_gap.resize(static_cast<size_t>(n));
    for (Index j = 0; j < n; ++j)
        mw.consistency_gap[static_cast<size_t>(j)] =
            std::abs(std::sqrt(weights.degree[static_cast<size_t>(j)]) -
                     mw.degree[static_cast<size_t>(j)]);
    return mw;
}

struct SirStepResult {
    Eigen::VectorXd p;
    Index skipped = 0;  // zero-degree samples excluded from the update
};

/// One explicit Euler step of the locally averaged infection evolution:
/// dp_j/dt = sum_k (w_jk/sqrt(d_j)) * (s_kc p_k / sqrt(d_k) - s_jc p_j / sqrt(d_j)).
inline SirStepResult sir_step(const Eigen::VectorXd& p, const EdgeWeights& weights,
                              const SusceptibilityField& field, int c, Real dt = 1.0) {
    if (!(dt > 0.0)) throw InvalidInputError("dt must be > 0");
    const Index n = weights.n;
    if (p.size() != n || field.s.rows() != n)
        throw InvalidInputError("sir_step size mismatch");

    SirStepResult out;
    out.p = p;
    Eigen::VectorXd delta = Eigen::VectorXd::Zero(n);
    const auto& d = weights.degree;
    for (const auto& e : weights.edges) {
        if (!(d[static_cast<size_t>(e.j)] > 0.0) || !(d[static_cast<size_t>(e.k)] > 0.0))
            continue;
        const Real flux_k = field.s(e.k, c) / std::sqrt(d[static_cast<size_t>(e.k)]) * p(e.k);
        const Real flux_j = field.s(e.j, c) / std::sqrt(d[static_cast<size_t>(e.j)]) * p(e.j);
        delta(e.j) += e.w / std::sqrt(d[static_cast<size_t>(e.j)]) * (flux_k - flux_j);
        delta(e.k) += e.w / std::sqrt(d[static_cast<size_t>(e.k)]) * (flux_j - flux_k);
    }
    for (Index j = 0; j < n; ++j) {
        if (!(d[static_cast<size_t>(j)] > 0.0)) {
            ++out.skipped;
            continue;
        }
        out.p(j) += dt * delta(j);
    }
    return out;
}

/// Class-specific guided system: row j holds d'_j + lambda on the diagonal and
/// -w'_jk off-diagonal (every row sums to lambda; columns generally do not).
inline SparseSystem assemble_guided(const EdgeWeights& weights, const ModifiedWeights& mw,
                                    const Eigen::VectorXd& priors_col) {
    const Index n = weights.n;
    SparseSystem sys;
    sys.lambda = weights.lambda_prior;
    sys.n_total = n;
    sys.symmetric = false;
    sys.is_seed.assign(static_cast<size_t>(n), 0);
    sys.seed_rows = Eigen::MatrixXd::Zero(n, 1);
    sys.unknown_ids.resize(static_cast<size_t>(n));
    for (Index j = 0; j < n; ++j) sys.unknown_ids[static_cast<size_t>(j)] = j;
    sys.anchored.assign(static_cast<size_t>(n), 0);
    sys.rhs = sys.lambda * priors_col;

    std::vector<Eigen::Triplet<Real>> trip;
    for (Index j = 0; j < n; ++j) {
        trip.emplace_back(j, j, mw.degree[static_cast<size_t>(j)] + sys.lambda);
        for (const auto& [k, w] : mw.out[static_cast<size_t>(j)]) trip.emplace_back(j, k, -w);
    }
    sys.gamma.resize(n, n);
    sys.gamma.setFromTriplets(trip.begin(), trip.end());
    return sys;
}

/// Guided steady-state solve: one nonsymmetric system per class.
inline PosteriorMatrix solve_guided(const EdgeWeights& weights, const SusceptibilityField& field,
                                    const Eigen::MatrixXd& priors, Real lambda_prior,
                                    Real tol = 1e-10) {
    if (!(lambda_prior > 0.0)) throw InvalidInputError("lambda_prior must be > 0");
    if (priors.rows() != weights.n) throw InvalidInputError("prior row count mismatch");
    EdgeWeights w = weights;
    w.lambda_prior = lambda_prior;

    PosteriorMatrix out;
    out.P.resize(weights.n, priors.cols());
    for (Index c = 0; c < priors.cols(); ++c) {
        const ModifiedWeights mw = modified_weights(w, field, static_cast<int>(c));
        const SparseSystem sys = assemble_guided(w, mw, priors.col(c));
        out.P.col(c) = solve_nonsymmetric(sys, tol).P.col(0);
    }
    return out;
}

} // namespace graphwalk
