#pragma once

// Hierarchical CRF fusion: parent-child edges across pyramid layers with
// consolidated-Tukey weights, a -log posterior unary table, and an exact
// bottom-up tree minimizer of the labeling energy.

#include <cmath>
#include <cstdio>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "graphwalk/core.hpp"
#include "graphwalk/pyramid.hpp"
#include "graphwalk/robust.hpp"
#include "graphwalk/sample_set.hpp"
#include "graphwalk/threads.hpp"

namespace graphwalk {

struct HcrfEdge {
    int r = 0;       // child layer; parent lives at r + 1
    Index child = 0;
    Index parent = 0;
    Real w = 0.0;
};

// Edge e_{(r,j),(r+1,k)} for every parent-child pair, weighted
// h*_child * h*_parent * exp(-tukey(|f^_child - f^_parent|_1)) with the
// consolidated scale sigma_{r,r+1} = min(sigma_r, sigma_{r+1}).
inline std::vector<HcrfEdge> hcrf_edge_weights(const std::vector<SampleSet>& layers,
                                               const std::vector<Real>& sigma_out,
                                               const Pyramid& pyr) {
    if (layers.size() != static_cast<size_t>(pyr.n_lay + 1) || sigma_out.size() != layers.size())
        throw InvalidInputError("one sample set and one sigma per layer required");
    const Eigen::Index n_feat = layers[0].f_hat.cols();
    for (const auto& l : layers)
        if (l.f_hat.cols() != n_feat)
            throw InvalidInputError("resolution-independent feature dimensions differ across layers");

    std::vector<HcrfEdge> edges;
    for (int r = 0; r < pyr.n_lay; ++r) {
        const SampleSet& fine = layers[static_cast<size_t>(r)];
        const SampleSet& coarse = layers[static_cast<size_t>(r + 1)];
        if (fine.size() != pyr.layer_dims(r).count() ||
            coarse.size() != pyr.layer_dims(r + 1).count())
            throw InvalidInputError("sample counts do not match the pyramid layers");
        TukeyParams tp;
        tp.sigma_out = std::min(sigma_out[static_cast<size_t>(r)],
                                sigma_out[static_cast<size_t>(r + 1)]);
        tp.validate();
        const Index base = static_cast<Index>(edges.size());
        edges.resize(edges.size() + static_cast<size_t>(fine.size()));
        parallel_for(fine.size(), [&](Index j) {
            const Index k = parent_of(pyr, r, j);
            const Real rho = (fine.f_hat.row(j) - coarse.f_hat.row(k)).cwiseAbs().sum();
            HcrfEdge e;
            e.r = r;
            e.child = j;
            e.parent = k;
            e.w = fine.reliability(j) * coarse.reliability(k) * std::exp(-tukey(rho, tp));
            edges[static_cast<size_t>(base + j)] = e;
        });
    }
    return edges;
}

struct HcrfGraph {
    int n_lay = 0;
    int n_clas = 0;
    Real lambda_hcrf = 0.0;
    std::vector<Eigen::MatrixXd> unary;  // per layer: n_r x n_clas, -log p
    std::vector<HcrfEdge> edges;
    // children of each (r+1)-layer vertex, as indices into `edges`
    std::vector<std::vector<std::vector<Index>>> children;
    Index clamped = 0;  // posteriors raised to the 1e-12 floor (a notice)

    Index layer_size(int r) const { return unary[static_cast<size_t>(r)].rows(); }
};

inline constexpr Real kUnaryFloor = 1e-12;

// Edges join consecutive layers and every child may appear at most once, so
// the graph is a forest by construction; a repeated child is the one way a
// hierarchy can break and raises a structural error.
inline HcrfGraph build_hcrf_graph(const std::vector<Eigen::MatrixXd>& posteriors,
                                  std::vector<HcrfEdge> edges, Real lambda_hcrf) {
    if (posteriors.empty()) throw InvalidInputError("at least one posterior layer required");
    if (lambda_hcrf < 0.0) throw InvalidInputError("lambda_hcrf must be >= 0");
    HcrfGraph g;
    g.n_lay = static_cast<int>(posteriors.size()) - 1;
    g.n_clas = static_cast<int>(posteriors[0].cols());
    if (g.n_clas < 2) throw InvalidInputError("need at least two classes");
    g.lambda_hcrf = lambda_hcrf;

    g.unary.reserve(posteriors.size());
    for (const auto& P : posteriors) {
        if (P.cols() != g.n_clas) throw InvalidInputError("class counts differ across layers");
        Eigen::MatrixXd u(P.rows(), P.cols());
        for (Eigen::Index j = 0; j < P.rows(); ++j)
            for (Eigen::Index c = 0; c < P.cols(); ++c) {
                Real p = P(j, c);
                if (p < kUnaryFloor) {
                    p = kUnaryFloor;
                    ++g.clamped;
                }
                u(j, c) = -std::log(p);
            }
        g.unary.push_back(std::move(u));
    }

    g.children.resize(posteriors.size());
    for (size_t r = 0; r + 1 < posteriors.size(); ++r)
        g.children[r + 1].resize(static_cast<size_t>(posteriors[r + 1].rows()));
    std::vector<std::vector<char>> has_parent(posteriors.size());
    for (size_t r = 0; r + 1 < posteriors.size(); ++r)
        has_parent[r].assign(static_cast<size_t>(posteriors[r].rows()), 0);

    for (size_t i = 0; i < edges.size(); ++i) {
        const HcrfEdge& e = edges[i];
        if (e.r < 0 || e.r >= g.n_lay) throw InvalidInputError("edge layer out of range");
        if (e.child < 0 || e.child >= g.layer_size(e.r) || e.parent < 0 ||
            e.parent >= g.layer_size(e.r + 1))
            throw InvalidInputError("edge endpoint out of range");
        if (e.w < 0.0) throw InvalidInputError("edge weights must be >= 0");
        if (has_parent[static_cast<size_t>(e.r)][static_cast<size_t>(e.child)])
            throw StructuralError("vertex (" + std::to_string(e.r) + ", " +
                                  std::to_string(e.child) +
                                  ") has more than one parent; not a hierarchy");
        has_parent[static_cast<size_t>(e.r)][static_cast<size_t>(e.child)] = 1;
        g.children[static_cast<size_t>(e.r + 1)][static_cast<size_t>(e.parent)].push_back(
            static_cast<Index>(i));
    }
    g.edges = std::move(edges);
    return g;
}

struct EnergyReport {
    Real unary = 0.0;
    Real pairwise = 0.0;  // lambda_hcrf times the weighted disagreement sum
    Real total = 0.0;
    Index disagreements = 0;

    std::string to_json() const {
        char buf[192];
        std::snprintf(buf, sizeof(buf),
                      "{\"unary\":%.17g,\"pairwise\":%.17g,\"total\":%.17g,"
                      "\"disagreements\":%lld}",
                      unary, pairwise, total, static_cast<long long>(disagreements));
        return buf;
    }
};

using Labeling = std::vector<std::vector<int>>;  // per layer, per sample

inline EnergyReport hcrf_energy(const Labeling& labels, const HcrfGraph& g) {
    if (labels.size() != g.unary.size())
        throw InvalidInputError("labeling must cover every layer");
    EnergyReport rep;
    for (size_t r = 0; r < labels.size(); ++r) {
        if (static_cast<Index>(labels[r].size()) != g.layer_size(static_cast<int>(r)))
            throw InvalidInputError("labeling size mismatch at layer " + std::to_string(r));
        for (size_t j = 0; j < labels[r].size(); ++j) {
            const int c = labels[r][j];
            if (c < 0 || c >= g.n_clas) throw InvalidInputError("label out of class range");
            rep.unary += g.unary[r](static_cast<Index>(j), c);
        }
    }
    for (const HcrfEdge& e : g.edges) {
        const int lc = labels[static_cast<size_t>(e.r)][static_cast<size_t>(e.child)];
        const int lp = labels[static_cast<size_t>(e.r + 1)][static_cast<size_t>(e.parent)];
        if (lc != lp) {
            rep.pairwise += g.lambda_hcrf * e.w;
            ++rep.disagreements;
        }
    }
    rep.total = rep.unary + rep.pairwise;
    return rep;
}

// Exact global minimizer. The edge set only joins layer r to r + 1 and each
// child has one parent, so the graph is a forest: bottom-up dynamic
// programming with per-class tables is exact. Ties take the smallest class.
inline Labeling minimize(const HcrfGraph& g) {
    const int n_lay = g.n_lay;
    const int C = g.n_clas;

    // B[r](j, c): minimal energy of the subtree rooted at (r, j) when it
    // takes class c. choice[r](j, c): best class of (r, j) given its parent
    // takes class c.
    std::vector<Eigen::MatrixXd> B(g.unary.size());
    std::vector<Eigen::MatrixXi> choice(g.unary.size());
    for (size_t r = 0; r < g.unary.size(); ++r) {
        B[r] = g.unary[r];
        choice[r].resize(g.unary[r].rows(), C);
    }

    for (int r = 0; r <= n_lay; ++r) {
        const size_t sr = static_cast<size_t>(r);
        parallel_for(g.layer_size(r), [&](Index j) {
            if (r > 0)
                for (Index ei : g.children[sr][static_cast<size_t>(j)]) {
                    const HcrfEdge& e = g.edges[static_cast<size_t>(ei)];
                    const Real t = g.lambda_hcrf * e.w;
                    const auto child_row = B[sr - 1].row(e.child);
                    for (int c = 0; c < C; ++c) {
                        Real best = child_row(c);  // agreeing child costs nothing
                        int best_c = c;
                        for (int cc = 0; cc < C; ++cc) {
                            const Real v = child_row(cc) + (cc == c ? 0.0 : t);
                            if (v < best || (v == best && cc < best_c)) {
                                best = v;
                                best_c = cc;
                            }
                        }
                        B[sr](j, c) += best;
                        choice[sr - 1](e.child, c) = best_c;
                    }
                }
        });
    }

    Labeling labels(g.unary.size());
    for (size_t r = 0; r < labels.size(); ++r)
        labels[r].assign(static_cast<size_t>(g.layer_size(static_cast<int>(r))), 0);

    // roots: every top-layer vertex, plus any orphan below
    std::vector<std::vector<char>> has_parent(g.unary.size());
    for (size_t r = 0; r + 1 < g.unary.size(); ++r)
        has_parent[r].assign(static_cast<size_t>(g.layer_size(static_cast<int>(r))), 0);
    for (const HcrfEdge& e : g.edges)
        has_parent[static_cast<size_t>(e.r)][static_cast<size_t>(e.child)] = 1;

    for (int r = n_lay; r >= 0; --r) {
        const size_t sr = static_cast<size_t>(r);
        for (Index j = 0; j < g.layer_size(r); ++j) {
            if (r == n_lay || !has_parent[sr][static_cast<size_t>(j)]) {
                int best_c = 0;
                for (int c = 1; c < C; ++c)
                    if (B[sr](j, c) < B[sr](j, best_c)) best_c = c;
                labels[sr][static_cast<size_t>(j)] = best_c;
            }
        }
        if (r > 0)
            for (Index j = 0; j < g.layer_size(r); ++j)
                for (Index ei : g.children[sr][static_cast<size_t>(j)]) {
                    const HcrfEdge& e = g.edges[static_cast<size_t>(ei)];
                    labels[sr - 1][static_cast<size_t>(e.child)] =
                        choice[sr - 1](e.child, labels[sr][static_cast<size_t>(j)]);
                }
    }
    return labels;
}

} // namespace graphwalk
