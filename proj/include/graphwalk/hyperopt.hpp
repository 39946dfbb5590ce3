#pragma once

// Random-search hyperparameter tuning with a windowed no-improvement stopping
// rule: trials draw uniformly with replacement from a discrete grid; a trial
// "improves" when it strictly beats every trial in the preceding window on
// BOTH averaged precision and averaged recall; the search stops after
// stop_window consecutive non-improving trials and returns the last improving
// trial's value.

#include <chrono>
#include <cstdio>
#include <functional>
#include <random>
#include <string>
#include <vector>

#include "graphwalk/core.hpp"
#include "graphwalk/metrics.hpp"

namespace graphwalk {

struct TrialRecord {
    int index = 0;
    Real value = 0.0;  // trialed hyperparameter
    std::vector<Real> precision;  // per class, background last
    std::vector<Real> recall;
    Real avg_precision = 0.0;  // over the n_clas - 1 foreground classes
    Real avg_recall = 0.0;
    bool improved = false;
    Real wall_time_s = 0.0;

    // Timing is excluded by default so that fixed-seed runs serialize
    // byte-identically; pass with_timing for human-facing logs.
    std::string to_json(bool with_timing = false) const {
        std::string s = "{";
        char buf[128];
        std::snprintf(buf, sizeof(buf), "\"trial\":%d,\"value\":%.17g,", index, value);
        s += buf;
        s += "\"precision\":[";
        for (size_t i = 0; i < precision.size(); ++i) {
            std::snprintf(buf, sizeof(buf), i ? ",%.17g" : "%.17g", precision[i]);
            s += buf;
        }
        s += "],\"recall\":[";
        for (size_t i = 0; i < recall.size(); ++i) {
            std::snprintf(buf, sizeof(buf), i ? ",%.17g" : "%.17g", recall[i]);
            s += buf;
        }
        std::snprintf(buf, sizeof(buf), "],\"avg_precision\":%.17g,\"avg_recall\":%.17g,",
                      avg_precision, avg_recall);
        s += buf;
        s += std::string("\"improved\":") + (improved ? "true" : "false");
        if (with_timing) {
            std::snprintf(buf, sizeof(buf), ",\"wall_time_s\":%.17g", wall_time_s);
            s += buf;
        }
        s += "}";
        return s;
    }
};

struct TuneResult {
    Real best = 0.0;
    std::vector<TrialRecord> trials;

    std::string to_jsonl(bool with_timing = false) const {
        std::string s;
        for (const auto& t : trials) {
            s += t.to_json(with_timing);
            s += "\n";
        }
        return s;
    }
};

inline std::vector<Real> default_grid() {
    std::vector<Real> g;
    for (int i = 1; i <= 10; ++i) g.push_back(static_cast<Real>(i) / 10.0);
    return g;
}

struct TuneOptions {
    std::vector<Real> grid = default_grid();
    int stop_window = 20;
    uint64_t seed = 0;
};

// Evaluator: hyperparameter value -> metrics over the validation labeling.
using TrialEvaluator = std::function<AveragedMetrics(Real)>;

inline TuneResult tune_search(const TrialEvaluator& evaluate, const TuneOptions& opt) {
    if (opt.grid.empty()) throw InvalidInputError("tune_search: empty grid");
    if (opt.stop_window < 1) throw InvalidInputError("tune_search: stop_window must be >= 1");
    std::mt19937_64 rng(opt.seed);
    TuneResult res;
    int since_improvement = 0;
    while (since_improvement < opt.stop_window) {
        TrialRecord t;
        t.index = static_cast<int>(res.trials.size());
        t.value = opt.grid[static_cast<size_t>(rng() % opt.grid.size())];
        const auto t0 = std::chrono::steady_clock::now();
        const AveragedMetrics m = evaluate(t.value);
        t.wall_time_s =
            std::chrono::duration<Real>(std::chrono::steady_clock::now() - t0).count();
        t.avg_precision = m.precision;
        t.avg_recall = m.recall;
        for (const auto& pc : m.per_class) {
            t.precision.push_back(pc.precision);
            t.recall.push_back(pc.recall);
        }
        t.improved = true;
        const size_t window =
            std::min(res.trials.size(), static_cast<size_t>(opt.stop_window));
        for (size_t k = res.trials.size() - window; k < res.trials.size(); ++k)
            if (t.avg_precision <= res.trials[k].avg_precision ||
                t.avg_recall <= res.trials[k].avg_recall) {
                t.improved = false;
                break;
            }
        if (t.improved) {
            since_improvement = 0;
            res.best = t.value;
        } else {
            ++since_improvement;
        }
        res.trials.push_back(std::move(t));
    }
    return res;
}

// Labels-in, metrics-out wrappers. The predictor builds and solves the graph
// for the candidate value and returns the estimated labels of the validation
// samples; references are the known labels of the same samples.
using LabelPredictor = std::function<std::vector<int>(Real)>;

inline TuneResult tune_layer(const LabelPredictor& predict, const std::vector<int>& reference,
                             int n_clas, const TuneOptions& opt = {}) {
    if (reference.empty()) throw InvalidInputError("tune_layer: empty validation set");
    return tune_search(
        [&](Real v) {
            const std::vector<int> labels = predict(v);
            if (labels.size() != reference.size())
                throw InvalidInputError("tune_layer: predictor returned wrong sample count");
            return averaged_metrics(labels, reference, n_clas);
        },
        opt);
}

// Fusion tuning evaluates labels concatenated across every resolution layer.
inline TuneResult tune_hcrf(const LabelPredictor& predict_fused,
                            const std::vector<int>& reference_all_layers, int n_clas,
                            const TuneOptions& opt = {}) {
    return tune_layer(predict_fused, reference_all_layers, n_clas, opt);
}

// Coarse-to-fine prior-weight schedule: layer r = n_lay is tuned first and its
// value frozen before layer r - 1 is touched. The per-layer predictor receives
// the already-frozen coarser values.
using LayerPredictor = std::function<std::vector<int>(int r, Real candidate,
                                                      const std::vector<Real>& frozen_coarser)>;

struct LayerSchedule {
    std::vector<Real> lambda_prior;      // index r in [0, n_lay]
    std::vector<TuneResult> per_layer;   // same indexing
};

inline LayerSchedule tune_layers_coarse_to_fine(const LayerPredictor& predict,
                                                const std::vector<std::vector<int>>& references,
                                                int n_clas, int n_lay,
                                                const TuneOptions& opt = {}) {
    if (n_lay < 0) throw InvalidInputError("tune_layers_coarse_to_fine: n_lay must be >= 0");
    if (references.size() != static_cast<size_t>(n_lay) + 1)
        throw InvalidInputError("tune_layers_coarse_to_fine: need one reference per layer");
    LayerSchedule sched;
    sched.lambda_prior.assign(static_cast<size_t>(n_lay) + 1, 0.0);
    sched.per_layer.resize(static_cast<size_t>(n_lay) + 1);
    std::vector<Real> frozen;  // coarsest-first, matching tuning order
    for (int r = n_lay; r >= 0; --r) {
        TuneOptions layer_opt = opt;
        layer_opt.seed = opt.seed + static_cast<uint64_t>(n_lay - r) * 0x9e3779b97f4a7c15ull;
        TuneResult res = tune_layer(
            [&](Real v) { return predict(r, v, frozen); },
            references[static_cast<size_t>(r)], n_clas, layer_opt);
        sched.lambda_prior[static_cast<size_t>(r)] = res.best;
        frozen.push_back(res.best);
        sched.per_layer[static_cast<size_t>(r)] = std::move(res);
    }
    return sched;
}

// One row of the tuned-hyperparameters table: per-layer prior weights plus the
// fusion coupling for a graph variant.
inline std::string hyperparameters_json(const std::string& variant,
                                        const std::vector<Real>& lambda_prior, Real lambda_hcrf,
                                        Real optimization_seconds) {
    std::string s = "{\"variant\":\"" + variant + "\",\"lambda_prior\":[";
    char buf[128];
    for (size_t i = 0; i < lambda_prior.size(); ++i) {
        std::snprintf(buf, sizeof(buf), i ? ",%.17g" : "%.17g", lambda_prior[i]);
        s += buf;
    }
    std::snprintf(buf, sizeof(buf), "],\"lambda_hcrf\":%.17g,\"optimization_seconds\":%.17g}",
                  lambda_hcrf, optimization_seconds);
    s += buf;
    return s;
}

}  // namespace graphwalk
