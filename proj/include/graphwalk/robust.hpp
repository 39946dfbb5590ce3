#pragma once

#include <cmath>
#include <vector>

#include <Eigen/Dense>

#include "graphwalk/core.hpp"
#include "graphwalk/sample_set.hpp"
#include "graphwalk/topology.hpp"

namespace graphwalk {

struct TukeyParams {
    Real sigma_out = 1.0;
    Real sigma_floor = 1e-6;  // keeps the loss well-defined on constant regions

    void validate() const {
        if (!(sigma_floor > 0.0)) throw InvalidInputError("sigma_floor must be > 0");
        if (!(sigma_out >= sigma_floor))
            throw InvalidInputError("sigma_out must be >= sigma_floor");
    }
};

/// Bounded robust loss: sigma^2/6 * (1 - (1 - (rho/sigma)^2)^3) inside
/// [0, sigma], saturating at sigma^2/6 beyond.
inline Real tukey(Real rho, const TukeyParams& tp) {
    if (rho < 0.0) throw InvalidInputError("tukey residual must be nonnegative");
    const Real s = tp.sigma_out;
    const Real cap = s * s / 6.0;
    if (rho >= s) return cap;
    const Real u = 1.0 - (rho / s) * (rho / s);
    return cap * (1.0 - u * u * u);
}

/// Derivative of the loss: rho * (1 - (rho/sigma)^2)^2 inside (-sigma, sigma),
/// zero beyond. Odd in rho; extrema at +-sigma/sqrt(5).
inline Real tukey_deriv(Real rho, const TukeyParams& tp) {
    const Real s = tp.sigma_out;
    if (std::abs(rho) >= s) return 0.0;
    const Real u = 1.0 - (rho / s) * (rho / s);
    return rho * u * u;
}

/// Robust per-resolution scale from neighbor feature differences:
/// sigma/sqrt(5) = 1.4826 * median_j ||F_j - median_l(F_l)||_1, where F_j
/// stacks f~_j - f~_k per canonical neighbor slot. The median matrix is
/// elementwise per (feature, slot) over samples having that slot; boundary
/// samples contribute only their in-bounds columns.
inline TukeyParams mad_sigma(const SampleSet& samples, const NeighborhoodTopology& topo,
                             Real sigma_floor = 1e-6) {
    const Index n = samples.size();
    if (topo.size() != n) throw InvalidInputError("topology size != sample count");
    const auto dim = static_cast<size_t>(samples.f_tilde.cols());
    if (static_cast<Index>(topo.neighbors.size()) == 0)
        throw InvalidInputError("empty edge set");

    // Per-slot difference columns, grouped for the elementwise median.
    std::vector<std::vector<Real>> per_slot(26 * dim);
    for (Index j = 0; j < n; ++j) {
        const auto row = topo.row(j);
        for (size_t i = 0; i < row.n; ++i)
            for (size_t f = 0; f < dim; ++f)
                per_slot[row.slot[i] * dim + f].push_back(
                    samples.f_tilde(j, static_cast<Index>(f)) -
                    samples.f_tilde(row.nbr[i], static_cast<Index>(f)));
    }
    std::vector<Real> med(26 * dim, 0.0);
    for (size_t e = 0; e < per_slot.size(); ++e)
        if (!per_slot[e].empty()) med[e] = median(per_slot[e]);

    std::vector<Real> norms(static_cast<size_t>(n), 0.0);
    for (Index j = 0; j < n; ++j) {
        const auto row = topo.row(j);
        Real l1 = 0.0;
        for (size_t i = 0; i < row.n; ++i)
            for (size_t f = 0; f < dim; ++f)
                l1 += std::abs(samples.f_tilde(j, static_cast<Index>(f)) -
                               samples.f_tilde(row.nbr[i], static_cast<Index>(f)) -
                               med[row.slot[i] * dim + f]);
        norms[static_cast<size_t>(j)] = l1;
    }

    TukeyParams tp;
    tp.sigma_floor = sigma_floor;
    tp.sigma_out = std::max(std::sqrt(5.0) * 1.4826 * median(norms), sigma_floor);
    return tp;
}

/// Reliability from weak-source label histograms: mean bit-entropy over the
/// n_weak sources, mapped through exp(-mean). Pure histograms give 1.
inline Real reliability_from_entropy(const std::vector<std::vector<Real>>& label_histograms,
                                     int n_weak) {
    if (n_weak < 1) throw InvalidInputError("n_weak must be >= 1");
    if (static_cast<int>(label_histograms.size()) != n_weak)
        throw InvalidInputError("histogram count != n_weak");
    Real mean_h = 0.0;
    for (const auto& hist : label_histograms) {
        if (hist.empty()) throw InvalidInputError("empty label histogram");
        Real total = 0.0;
        for (Real c : hist) {
            if (c < 0.0) throw InvalidInputError("negative histogram count");
            total += c;
        }
        if (total <= 0.0) throw InvalidInputError("histogram with zero total");
        Real h = 0.0;
        for (Real c : hist) {
            if (c <= 0.0) continue;
            const Real p = c / total;
            h -= p * std::log2(p);
        }
        mean_h += h;
    }
    mean_h /= n_weak;
    return std::exp(-mean_h);
}

} // namespace graphwalk
