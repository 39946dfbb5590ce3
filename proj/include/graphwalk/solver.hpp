#pragma once

#include <functional>
#include <limits>
#include <numeric>
#include <random>
#include <vector>

#include <Eigen/Dense>
#include <Eigen/IterativeLinearSolvers>
#include <Eigen/Sparse>
#include <Eigen/SparseCholesky>
#include <Eigen/SparseLU>

#include "graphwalk/laplacian.hpp"

namespace graphwalk {

namespace detail {

/// Connected components of the unknown block (union-find over off-diagonals).
inline std::vector<std::vector<Index>> gamma_components(const SpMat& gamma) {
    const Index m = gamma.rows();
    std::vector<Index> parent(static_cast<size_t>(m));
    std::iota(parent.begin(), parent.end(), Index{0});
    std::function<Index(Index)> find = [&](Index a) {
        while (parent[static_cast<size_t>(a)] != a) {
            parent[static_cast<size_t>(a)] = parent[static_cast<size_t>(parent[static_cast<size_t>(a)])];
            a = parent[static_cast<size_t>(a)];
        }
        return a;
    };
    for (Index c = 0; c < gamma.outerSize(); ++c)
        for (SpMat::InnerIterator it(gamma, c); it; ++it)
            if (it.row() != it.col() && it.value() != 0.0)
                parent[static_cast<size_t>(find(it.row()))] = find(it.col());
    std::vector<std::vector<Index>> comps;
    std::vector<Index> comp_of(static_cast<size_t>(m), -1);
    for (Index r = 0; r < m; ++r) {
        const Index root = find(r);
        if (comp_of[static_cast<size_t>(root)] < 0) {
            comp_of[static_cast<size_t>(root)] = static_cast<Index>(comps.size());
            comps.emplace_back();
        }
        comps[static_cast<size_t>(comp_of[static_cast<size_t>(root)])].push_back(r);
    }
    return comps;
}

/// A component with lambda = 0 and no seed coupling has a constant nullspace.
inline void require_nonsingular(const SparseSystem& sys) {
    if (sys.lambda > 0.0) return;
    for (const auto& comp : gamma_components(sys.gamma)) {
        bool anchored = false;
        for (Index r : comp)
            if (!sys.anchored.empty() && sys.anchored[static_cast<size_t>(r)]) {
                anchored = true;
                break;
            }
        if (!anchored) {
            std::vector<Index> ids;
            ids.reserve(comp.size());
            for (Index r : comp) ids.push_back(sys.unknown_ids[static_cast<size_t>(r)]);
            throw SingularityError(
                "singular system: lambda = 0 and component of " +
                    std::to_string(ids.size()) + " samples (first id " +
                    std::to_string(ids.front()) + ") has no seed coupling",
                ids);
        }
    }
}

inline void refine_residual(const SpMat& A, const Eigen::MatrixXd& B, Eigen::MatrixXd& X,
                            const std::function<Eigen::MatrixXd(const Eigen::MatrixXd&)>& solve_again) {
    const Real bnorm = B.cwiseAbs().maxCoeff();
    if (bnorm == 0.0) return;
    Eigen::MatrixXd R = B - A * X;
    if (R.cwiseAbs().maxCoeff() > 1e-10 * bnorm) X += solve_again(R);
}

} // namespace detail

/// Direct factorization: Cholesky-class LDLT for symmetric systems, sparse LU
/// for the nonsymmetric ones. Residual contract 1e-10 relative, inf-norm.
inline PosteriorMatrix solve_direct(const SparseSystem& sys) {
    detail::require_nonsingular(sys);
    Eigen::MatrixXd X;
    if (sys.symmetric) {
        Eigen::SimplicialLDLT<SpMat> ldlt(sys.gamma);
        if (ldlt.info() != Eigen::Success)
            throw SingularityError("Cholesky factorization failed",
                                   sys.unknown_ids);
        X = ldlt.solve(sys.rhs);
        detail::refine_residual(sys.gamma, sys.rhs, X,
                                [&](const Eigen::MatrixXd& r) { return ldlt.solve(r).eval(); });
    } else {
        Eigen::SparseLU<SpMat> lu(sys.gamma);
        if (lu.info() != Eigen::Success)
            throw SingularityError("LU factorization failed", sys.unknown_ids);
        X = lu.solve(sys.rhs);
        detail::refine_residual(sys.gamma, sys.rhs, X,
                                [&](const Eigen::MatrixXd& r) { return lu.solve(r).eval(); });
    }
    return sys.scatter(X);
}

struct IterationReport {
    std::vector<int> iterations;   // per class
    std::vector<Real> residuals;   // final relative 2-norm residual per class
    int max_iterations() const {
        int m = 0;
        for (int i : iterations) m = std::max(m, i);
        return m;
    }
};

struct PcgResult {
    PosteriorMatrix posterior;
    IterationReport report;
};

/// Jacobi-preconditioned conjugate gradient, x0 = 0, one class per column.
/// Defaults: tol = 1e-8 on the relative 2-norm residual, max_iter = 4n.
inline PcgResult solve_pcg(const SparseSystem& sys, Real tol = 1e-8, Index max_iter = 0) {
    if (!sys.symmetric) throw InvalidInputError("solve_pcg requires a symmetric system");
    if (!(tol > 0.0 && tol < 1.0)) throw InvalidInputError("tol must be in (0,1)");
    detail::require_nonsingular(sys);
    const Index m = sys.unknowns();
    if (max_iter <= 0) max_iter = 4 * std::max<Index>(m, 1);

    Eigen::VectorXd inv_diag(m);
    for (Index r = 0; r < m; ++r) {
        const Real d = sys.gamma.coeff(r, r);
        if (!(d > 0.0)) throw SingularityError("nonpositive diagonal", {sys.unknown_ids[static_cast<size_t>(r)]});
        inv_diag(r) = 1.0 / d;
    }

    PcgResult out;
    out.posterior.P.resize(m, sys.rhs.cols());
    Eigen::MatrixXd X(m, sys.rhs.cols());
    for (Index c = 0; c < sys.rhs.cols(); ++c) {
        const Eigen::VectorXd b = sys.rhs.col(c);
        const Real bnorm = b.norm();
        Eigen::VectorXd x = Eigen::VectorXd::Zero(m);
        int iters = 0;
        Real rel = 0.0;
        if (bnorm > 0.0) {
            Eigen::VectorXd r = b;
            Eigen::VectorXd z = inv_diag.asDiagonal() * r;
            Eigen::VectorXd p = z;
            Real rz = r.dot(z);
            rel = r.norm() / bnorm;
            while (rel > tol && iters < max_iter) {
                const Eigen::VectorXd Ap = sys.gamma * p;
                const Real alpha = rz / p.dot(Ap);
                x += alpha * p;
                r -= alpha * Ap;
                ++iters;
                rel = r.norm() / bnorm;
                if (rel <= tol) break;
                z = inv_diag.asDiagonal() * r;
                const Real rz_next = r.dot(z);
                p = z + (rz_next / rz) * p;
                rz = rz_next;
            }
            if (rel > tol) {
                std::vector<Real> best(x.data(), x.data() + x.size());
                throw ConvergenceError("pcg did not converge for class " + std::to_string(c) +
                                           " (relative residual " + std::to_string(rel) + ")",
                                       std::move(best), rel);
            }
        }
        X.col(c) = x;
        out.report.iterations.push_back(iters);
        out.report.residuals.push_back(rel);
    }
    out.posterior = sys.scatter(X);
    return out;
}

/// Krylov solve for the nonsymmetric SIR systems (BiCGSTAB, Jacobi
/// preconditioner); falls back to direct LU on breakdown for n <= 20000.
inline PosteriorMatrix solve_nonsymmetric(const SparseSystem& sys, Real tol = 1e-8,
                                          Index max_iter = 0) {
    detail::require_nonsingular(sys);
    const Index m = sys.unknowns();
    if (max_iter <= 0) max_iter = 4 * std::max<Index>(m, 1);

    Eigen::BiCGSTAB<SpMat, Eigen::DiagonalPreconditioner<Real>> krylov;
    krylov.setTolerance(tol);
    krylov.setMaxIterations(max_iter);
    krylov.compute(sys.gamma);
    Eigen::MatrixXd X = krylov.solve(sys.rhs);

    // Residual check (BiCGSTAB can report success with a stalled iterate).
    bool ok = krylov.info() == Eigen::Success;
    if (ok) {
        for (Index c = 0; c < sys.rhs.cols() && ok; ++c) {
            const Real bnorm = sys.rhs.col(c).norm();
            if (bnorm == 0.0) continue;
            ok = (sys.rhs.col(c) - sys.gamma * X.col(c)).norm() <= 10 * tol * bnorm;
        }
    }
    if (!ok) {
        if (m <= 20000) {
            Eigen::SparseLU<SpMat> lu(sys.gamma);
            if (lu.info() != Eigen::Success)
                throw SingularityError("LU fallback failed", sys.unknown_ids);
            X = lu.solve(sys.rhs);
        } else {
            std::vector<Real> best(X.col(0).data(), X.col(0).data() + m);
            throw ConvergenceError("nonsymmetric solve failed beyond fallback size",
                                   std::move(best), krylov.error());
        }
    }
    return sys.scatter(X);
}

/// Extreme Ritz values of a symmetric matrix via plain Lanczos; used to
/// compare condition numbers across lambda settings.
inline std::pair<Real, Real> extreme_ritz(const SpMat& A, int iters = 100, unsigned seed = 7) {
    const Index n = A.rows();
    iters = static_cast<int>(std::min<Index>(iters, n));
    std::vector<Real> alpha, beta;
    Eigen::VectorXd v(n);
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<Real> u(-1.0, 1.0);
    for (Index i = 0; i < n; ++i) v(i) = u(rng);
    v.normalize();
    Eigen::VectorXd v_prev = Eigen::VectorXd::Zero(n);
    Real b_prev = 0.0;
    for (int it = 0; it < iters; ++it) {
        Eigen::VectorXd w = A * v - b_prev * v_prev;
        const Real a = w.dot(v);
        w -= a * v;
        alpha.push_back(a);
        const Real b = w.norm();
        if (b < 1e-14) break;
        beta.push_back(b);
        v_prev = v;
        v = w / b;
        b_prev = b;
    }
    const auto k = static_cast<Index>(alpha.size());
    Eigen::MatrixXd T = Eigen::MatrixXd::Zero(k, k);
    for (Index i = 0; i < k; ++i) {
        T(i, i) = alpha[static_cast<size_t>(i)];
        if (i + 1 < k) {
            T(i, i + 1) = beta[static_cast<size_t>(i)];
            T(i + 1, i) = beta[static_cast<size_t>(i)];
        }
    }
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(T);
    return {es.eigenvalues().minCoeff(), es.eigenvalues().maxCoeff()};
}

} // namespace graphwalk
