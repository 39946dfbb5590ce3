#pragma once

// One-vs-rest precision/recall for multi-class labelings. The last class index
// is the background; averaged metrics cover the n_clas - 1 foreground classes.

#include <vector>

#include "graphwalk/core.hpp"

namespace graphwalk {

struct ClassMetrics {
    Real precision = 1.0;
    Real recall = 1.0;
    Index tp = 0;
    Index fp = 0;
    Index fn = 0;
};

// Empty-denominator convention: precision = 1 when the class is never
// predicted, recall = 1 when the class is absent from the reference. This
// keeps phantoms that miss a class from scoring spurious failures.
inline ClassMetrics precision_recall(const std::vector<int>& labels,
                                     const std::vector<int>& reference, int c) {
    if (labels.size() != reference.size())
        throw InvalidInputError("precision_recall: label/reference size mismatch");
    if (labels.empty()) throw InvalidInputError("precision_recall: empty labeling");
    ClassMetrics m;
    for (size_t j = 0; j < labels.size(); ++j) {
        const bool pred = labels[j] == c;
        const bool ref = reference[j] == c;
        if (pred && ref)
            ++m.tp;
        else if (pred)
            ++m.fp;
        else if (ref)
            ++m.fn;
    }
    if (m.tp + m.fp > 0) m.precision = static_cast<Real>(m.tp) / static_cast<Real>(m.tp + m.fp);
    if (m.tp + m.fn > 0) m.recall = static_cast<Real>(m.tp) / static_cast<Real>(m.tp + m.fn);
    return m;
}

struct AveragedMetrics {
    Real precision = 0.0;  // mean over foreground classes 0 .. n_clas - 2
    Real recall = 0.0;
    std::vector<ClassMetrics> per_class;  // all n_clas classes, background last
};

inline AveragedMetrics averaged_metrics(const std::vector<int>& labels,
                                        const std::vector<int>& reference, int n_clas) {
    if (n_clas < 2) throw InvalidInputError("averaged_metrics: need at least 2 classes");
    for (int l : labels)
        if (l < 0 || l >= n_clas) throw InvalidInputError("averaged_metrics: label out of range");
    for (int l : reference)
        if (l < 0 || l >= n_clas)
            throw InvalidInputError("averaged_metrics: reference label out of range");
    AveragedMetrics out;
    out.per_class.reserve(static_cast<size_t>(n_clas));
    for (int c = 0; c < n_clas; ++c) out.per_class.push_back(precision_recall(labels, reference, c));
    for (int c = 0; c < n_clas - 1; ++c) {
        out.precision += out.per_class[static_cast<size_t>(c)].precision;
        out.recall += out.per_class[static_cast<size_t>(c)].recall;
    }
    out.precision /= static_cast<Real>(n_clas - 1);
    out.recall /= static_cast<Real>(n_clas - 1);
    return out;
}

}  // namespace graphwalk
