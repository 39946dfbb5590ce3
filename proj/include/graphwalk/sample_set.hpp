#pragma once

#include <cstdint>
#include <optional>
#include <vector>

#include <Eigen/Dense>

#include "graphwalk/core.hpp"

namespace graphwalk {

/// Per-resolution sample data: standardized features, normalized priors,
/// reliabilities, optional reference labels and seed flags.
struct SampleSet {
    int r = 0;
    int n_clas = 0;
    Eigen::MatrixXd f_tilde;   // n x dim_tilde, resolution-specific features
    Eigen::MatrixXd f_hat;     // n x dim_hat, resolution-independent features
    Eigen::MatrixXd priors;    // n x n_clas, rows sum to 1, entries in (0,1)
    Eigen::VectorXd reliability;  // n, values in (0,1]; defaults to 1
    std::vector<std::uint16_t> labels;     // reference labels, empty if absent
    std::vector<std::uint8_t> prelabeled;  // seed flags, empty if none

    Index size() const { return priors.rows(); }

    bool has_labels() const { return !labels.empty(); }
    bool is_seed(Index j) const {
        return !prelabeled.empty() && prelabeled[static_cast<size_t>(j)] != 0;
    }

    /// Enforces the documented invariants; throws invalid-input on violation.
    void validate() const {
        const Index n = size();
        if (n_clas < 2) throw InvalidInputError("sample set needs >= 2 classes");
        if (priors.cols() != n_clas) throw InvalidInputError("prior width != n_clas");
        if (reliability.size() != n) throw InvalidInputError("reliability size mismatch");
        if (f_tilde.rows() != n || f_hat.rows() != n)
            throw InvalidInputError("feature row count mismatch");
        if (!labels.empty() && static_cast<Index>(labels.size()) != n)
            throw InvalidInputError("label count mismatch");
        if (!prelabeled.empty() && static_cast<Index>(prelabeled.size()) != n)
            throw InvalidInputError("prelabel flag count mismatch");
        for (Index j = 0; j < n; ++j) {
            Real row = 0;
            for (int c = 0; c < n_clas; ++c) {
                const Real a = priors(j, c);
                if (!(a > 0.0 && a < 1.0))
                    throw InvalidInputError("prior entry outside (0,1)");
                row += a;
            }
            if (std::abs(row - 1.0) > 1e-9)
                throw InvalidInputError("prior row does not sum to 1");
            const Real h = reliability(j);
            if (!(h > 0.0 && h <= 1.0))
                throw InvalidInputError("reliability outside (0,1]");
        }
    }
};

/// Convenience constructor with unit reliabilities and empty feature blocks.
inline SampleSet make_sample_set(int r, Index n, int n_clas) {
    SampleSet s;
    s.r = r;
    s.n_clas = n_clas;
    s.f_tilde = Eigen::MatrixXd::Zero(n, 1);
    s.f_hat = Eigen::MatrixXd::Zero(n, 1);
    s.priors = Eigen::MatrixXd::Constant(n, n_clas, 1.0 / n_clas);
    s.reliability = Eigen::VectorXd::Ones(n);
    return s;
}

} // namespace graphwalk
