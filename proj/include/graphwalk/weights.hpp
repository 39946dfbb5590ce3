#pragma once

#include <cmath>
#include <ostream>
#include <vector>

#include <Eigen/Dense>

#include "graphwalk/core.hpp"
#include "graphwalk/robust.hpp"
#include "graphwalk/sample_set.hpp"
#include "graphwalk/topology.hpp"

namespace graphwalk {

enum class WeightMode { tukey, plain };

/// Spatial subgraph weights: one entry per undirected edge plus per-sample
/// degrees d_j = sum_k w_jk and the prior coupling lambda.
struct EdgeWeights {
    struct Edge {
        Index j, k;
        Real w;
    };
    Index n = 0;
    std::vector<Edge> edges;      // j < k, deterministic order
    std::vector<Real> degree;     // truncated neighborhood sums, as-is
    Real lambda_prior = 1.0;

    /// CSR view for row-wise traversal (built lazily by callers that need it).
    std::vector<std::vector<std::pair<Index, Real>>> adjacency() const {
        std::vector<std::vector<std::pair<Index, Real>>> adj(static_cast<size_t>(n));
        for (const Edge& e : edges) {
            adj[static_cast<size_t>(e.j)].emplace_back(e.k, e.w);
            adj[static_cast<size_t>(e.k)].emplace_back(e.j, e.w);
        }
        return adj;
    }
};

/// Feature-graph edge weights over the 26-neighborhood.
/// tukey mode:  w = h*_j h*_k exp(-tukey(||f~_j - f~_k||_1));
/// plain mode:  w = exp(-||f~_j - f~_k||_2^2), no reliability factors.
inline EdgeWeights spatial_edge_weights(const SampleSet& samples,
                                        const NeighborhoodTopology& topo,
                                        const TukeyParams& sigma,
                                        WeightMode mode = WeightMode::tukey) {
    if (topo.size() != samples.size())
        throw InvalidInputError("topology size != sample count");
    if (samples.f_tilde.cols() < 1) throw InvalidInputError("feature dimension is zero");
    if (mode == WeightMode::tukey) sigma.validate();

    EdgeWeights ew;
    ew.n = samples.size();
    ew.degree.assign(static_cast<size_t>(ew.n), 0.0);
    topo.for_each_edge([&](Index j, Index k) {
        Real w;
        if (mode == WeightMode::tukey) {
            const Real rho = (samples.f_tilde.row(j) - samples.f_tilde.row(k)).lpNorm<1>();
            w = samples.reliability(j) * samples.reliability(k) *
                std::exp(-tukey(rho, sigma));
        } else {
            const Real d2 = (samples.f_tilde.row(j) - samples.f_tilde.row(k)).squaredNorm();
            w = std::exp(-d2);
        }
        if (!std::isfinite(w)) throw InvalidInputError("non-finite edge weight");
        ew.edges.push_back({j, k, w});
        ew.degree[static_cast<size_t>(j)] += w;
        ew.degree[static_cast<size_t>(k)] += w;
    });
    return ew;
}

/// Aspatial prior-edge weights w_jc = lambda * a_jc (one prior vertex per class).
inline Eigen::MatrixXd prior_edge_weights(const SampleSet& samples, Real lambda_prior) {
    if (!(lambda_prior > 0.0)) throw InvalidInputError("lambda_prior must be > 0");
    return lambda_prior * samples.priors;
}

/// Debug export, one `j k w` line per undirected edge.
inline void export_edge_list(const EdgeWeights& ew, std::ostream& os) {
    for (const auto& e : ew.edges) os << e.j << " " << e.k << " " << e.w << "\n";
}

} // namespace graphwalk
