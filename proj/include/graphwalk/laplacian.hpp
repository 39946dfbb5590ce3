#pragma once

#include <optional>
#include <vector>

#include <Eigen/Dense>
#include <Eigen/Sparse>

#include "graphwalk/core.hpp"
#include "graphwalk/sample_set.hpp"
#include "graphwalk/weights.hpp"

namespace graphwalk {

using SpMat = Eigen::SparseMatrix<Real>;

/// Estimated classification posteriors, one row per sample.
struct PosteriorMatrix {
    Eigen::MatrixXd P;  // n x n_clas
};

/// Posterior row assigned to a seed: 1-eps at its own class, eps/(n_clas-1)
/// elsewhere.
inline Eigen::RowVectorXd seed_posterior_row(int label, int n_clas, Real eps = 1e-4) {
    if (label < 0 || label >= n_clas) throw InvalidInputError("seed label outside class set");
    Eigen::RowVectorXd row =
        Eigen::RowVectorXd::Constant(n_clas, eps / static_cast<Real>(n_clas - 1));
    row(label) = 1.0 - eps;
    return row;
}

/// Combinatorial Laplace-Beltrami system for one resolution. For the
/// all-unlabeled case gamma covers every sample; with seeds it is the
/// unlabeled block and rhs already folds in the seed coupling.
struct SparseSystem {
    SpMat gamma;               // square over unknowns
    Eigen::MatrixXd rhs;       // unknowns x n_clas
    bool symmetric = true;
    Real lambda = 0.0;
    Index n_total = 0;                  // samples including seeds
    std::vector<Index> unknown_ids;     // row -> original sample index
    Eigen::MatrixXd seed_rows;          // n_total x n_clas; valid where is_seed
    std::vector<std::uint8_t> is_seed;  // per original sample
    std::vector<std::uint8_t> anchored;  // per unknown row: couples to a seed

    Index unknowns() const { return gamma.rows(); }

    /// Scatters a solved unknown block back over all samples.
    PosteriorMatrix scatter(const Eigen::MatrixXd& solved) const {
        PosteriorMatrix out;
        out.P.resize(n_total, rhs.cols());
        for (Index j = 0; j < n_total; ++j)
            if (is_seed[static_cast<size_t>(j)]) out.P.row(j) = seed_rows.row(j);
        for (size_t r = 0; r < unknown_ids.size(); ++r)
            out.P.row(unknown_ids[r]) = solved.row(static_cast<Index>(r));
        return out;
    }
};

/// Assembles gamma (diag d_j + lambda, off-diag -w_jk) and the right-hand
/// side lambda*A; prelabeled samples become Dirichlet boundary rows folded
/// into the rhs of their unlabeled neighbors.
inline SparseSystem assemble(const EdgeWeights& weights, const SampleSet& samples) {
    const Index n = weights.n;
    if (samples.size() != n) throw InvalidInputError("weights/sample count mismatch");
    const int n_clas = samples.n_clas;

    SparseSystem sys;
    sys.lambda = weights.lambda_prior;
    sys.n_total = n;
    sys.is_seed.assign(static_cast<size_t>(n), 0);
    sys.seed_rows = Eigen::MatrixXd::Zero(n, n_clas);
    for (Index j = 0; j < n; ++j) {
        if (!samples.is_seed(j)) continue;
        if (!samples.has_labels()) throw InvalidInputError("prelabeled sample without label");
        sys.is_seed[static_cast<size_t>(j)] = 1;
        sys.seed_rows.row(j) = seed_posterior_row(samples.labels[static_cast<size_t>(j)], n_clas);
    }

    std::vector<Index> to_row(static_cast<size_t>(n), -1);
    for (Index j = 0; j < n; ++j)
        if (!sys.is_seed[static_cast<size_t>(j)]) {
            to_row[static_cast<size_t>(j)] = static_cast<Index>(sys.unknown_ids.size());
            sys.unknown_ids.push_back(j);
        }
    const auto m = static_cast<Index>(sys.unknown_ids.size());

    sys.rhs = Eigen::MatrixXd::Zero(m, n_clas);
    for (Index r = 0; r < m; ++r)
        sys.rhs.row(r) = sys.lambda * samples.priors.row(sys.unknown_ids[static_cast<size_t>(r)]);

    std::vector<Eigen::Triplet<Real>> trip;
    trip.reserve(weights.edges.size() * 2 + static_cast<size_t>(m));
    sys.anchored.assign(static_cast<size_t>(m), 0);
    for (Index r = 0; r < m; ++r) {
        const Index j = sys.unknown_ids[static_cast<size_t>(r)];
        trip.emplace_back(r, r, weights.degree[static_cast<size_t>(j)] + sys.lambda);
    }
    for (const auto& e : weights.edges) {
        const bool sj = sys.is_seed[static_cast<size_t>(e.j)];
        const bool sk = sys.is_seed[static_cast<size_t>(e.k)];
        if (!sj && !sk) {
            const Index rj = to_row[static_cast<size_t>(e.j)];
            const Index rk = to_row[static_cast<size_t>(e.k)];
            trip.emplace_back(rj, rk, -e.w);
            trip.emplace_back(rk, rj, -e.w);
        } else if (sj != sk) {
            // Unlabeled side picks up w * seed posterior on the rhs.
            const Index unl = sj ? e.k : e.j;
            const Index lab = sj ? e.j : e.k;
            const Index r = to_row[static_cast<size_t>(unl)];
            sys.rhs.row(r) += e.w * sys.seed_rows.row(lab);
            sys.anchored[static_cast<size_t>(r)] = 1;
        }
        // seed-seed edges drop out of the reduced system
    }
    sys.gamma.resize(m, m);
    sys.gamma.setFromTriplets(trip.begin(), trip.end());
    sys.symmetric = true;
    return sys;
}

} // namespace graphwalk
