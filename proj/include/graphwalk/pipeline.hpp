#pragma once

// End-to-end driver glue: run configuration, per-resolution sample stacks
// (patch-mean features, lifted priors, reliabilities), segmentation for the
// three graph variants, disk manifests, disk-coupled hierarchical fusion,
// evaluation against reference labels, and grid-search tuning.
//
// Stages communicate exclusively through files: `segment` writes per-layer
// posteriors plus a manifest, `fuse` reconstructs everything it needs from
// that manifest alone, `eval` compares label volumes. No stage keeps state.

#include <array>
#include <chrono>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <limits>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "graphwalk/constrained.hpp"
#include "graphwalk/core.hpp"
#include "graphwalk/hcrf.hpp"
#include "graphwalk/hog.hpp"
#include "graphwalk/hyperopt.hpp"
#include "graphwalk/laplacian.hpp"
#include "graphwalk/mesh.hpp"
#include "graphwalk/metrics.hpp"
#include "graphwalk/phantom.hpp"
#include "graphwalk/pyramid.hpp"
#include "graphwalk/robust.hpp"
#include "graphwalk/sample_set.hpp"
#include "graphwalk/sir.hpp"
#include "graphwalk/sobel.hpp"
#include "graphwalk/solver.hpp"
#include "graphwalk/surface.hpp"
#include "graphwalk/susceptibility.hpp"
#include "graphwalk/topology.hpp"
#include "graphwalk/volume.hpp"
#include "graphwalk/weights.hpp"

namespace graphwalk {

struct RunConfig {
    std::string variant = "fpg";  // fpg | cfpg | gfpg
    int n_lay = 1;
    std::vector<Real> lambda_prior = {0.5};  // size 1 (broadcast) or n_lay + 1
    Real lambda_hcrf = 0.5;
    std::string solver = "pcg";  // pcg | direct
    Real tol = 1e-8;
    Real sobel_quantile = 0.9;
    std::string mesh_path;             // gfpg: analytic surface route
    std::string susceptibility_path;   // gfpg: precomputed field route
    int hog_channel = 0;
    std::vector<std::string> class_names;
    std::uint64_t seed = 0;
    std::string volume_path;
    std::string priors_path;
    std::string reliability_path;  // optional; entropy-derived when empty
    std::string reference_dir;     // optional; enables eval/tune
    std::string out_dir = ".";
    std::string raw;  // verbatim config text, echoed into every output

    /// Per-layer prior weight with single-value broadcast.
    Real lambda_at(int r) const {
        if (lambda_prior.size() == 1) return lambda_prior[0];
        return lambda_prior[static_cast<size_t>(r)];
    }

    void validate() const {
        if (variant != "fpg" && variant != "cfpg" && variant != "gfpg")
            throw InvalidInputError("variant must be fpg, cfpg, or gfpg");
        if (n_lay < 1) throw InvalidInputError("n_lay must be >= 1");
        if (lambda_prior.size() != 1 &&
            lambda_prior.size() != static_cast<size_t>(n_lay) + 1)
            throw InvalidInputError("lambda_prior needs 1 or n_lay + 1 values");
        for (Real l : lambda_prior)
            if (!(l > 0.0)) throw InvalidInputError("lambda_prior values must be > 0");
        if (!(lambda_hcrf >= 0.0)) throw InvalidInputError("lambda_hcrf must be >= 0");
        if (solver != "pcg" && solver != "direct")
            throw InvalidInputError("solver must be pcg or direct");
        if (!(tol > 0.0 && tol < 1.0)) throw InvalidInputError("tol must be in (0,1)");
        if (!(sobel_quantile >= 0.0 && sobel_quantile <= 1.0))
            throw InvalidInputError("sobel_quantile outside [0,1]");
        if (variant == "gfpg" && mesh_path.empty() && susceptibility_path.empty())
            throw InvalidInputError("gfpg requires a mesh or a susceptibility volume");
        if (volume_path.empty()) throw InvalidInputError("volume path required");
        if (priors_path.empty()) throw InvalidInputError("priors path required");
    }
};

inline RunConfig config_from_json(const std::string& text) {
    nlohmann::json j;
    try {
        j = nlohmann::json::parse(text);
    } catch (const nlohmann::json::exception& e) {
        throw InvalidInputError(std::string("config parse: ") + e.what());
    }
    RunConfig c;
    c.raw = text;
    try {
        if (j.contains("variant")) c.variant = j["variant"].get<std::string>();
        if (j.contains("n_lay")) c.n_lay = j["n_lay"].get<int>();
        if (j.contains("lambda_prior")) {
            c.lambda_prior.clear();
            if (j["lambda_prior"].is_array())
                for (const auto& v : j["lambda_prior"]) c.lambda_prior.push_back(v.get<Real>());
            else
                c.lambda_prior.push_back(j["lambda_prior"].get<Real>());
        }
        if (j.contains("lambda_hcrf")) c.lambda_hcrf = j["lambda_hcrf"].get<Real>();
        if (j.contains("solver")) c.solver = j["solver"].get<std::string>();
        if (j.contains("tol")) c.tol = j["tol"].get<Real>();
        if (j.contains("sobel_quantile")) c.sobel_quantile = j["sobel_quantile"].get<Real>();
        if (j.contains("mesh")) c.mesh_path = j["mesh"].get<std::string>();
        if (j.contains("susceptibilities"))
            c.susceptibility_path = j["susceptibilities"].get<std::string>();
        if (j.contains("hog_channel")) c.hog_channel = j["hog_channel"].get<int>();
        if (j.contains("class_names"))
            for (const auto& v : j["class_names"]) c.class_names.push_back(v.get<std::string>());
        if (j.contains("seed")) c.seed = j["seed"].get<std::uint64_t>();
        if (j.contains("volume")) c.volume_path = j["volume"].get<std::string>();
        if (j.contains("priors")) c.priors_path = j["priors"].get<std::string>();
        if (j.contains("reliability")) c.reliability_path = j["reliability"].get<std::string>();
        if (j.contains("reference_dir")) c.reference_dir = j["reference_dir"].get<std::string>();
        if (j.contains("out")) c.out_dir = j["out"].get<std::string>();
    } catch (const nlohmann::json::exception& e) {
        throw InvalidInputError(std::string("config field: ") + e.what());
    }
    return c;
}

inline nlohmann::json config_to_json(const RunConfig& c) {
    nlohmann::json j;
    j["variant"] = c.variant;
    j["n_lay"] = c.n_lay;
    j["lambda_prior"] = c.lambda_prior;
    j["lambda_hcrf"] = c.lambda_hcrf;
    j["solver"] = c.solver;
    j["tol"] = c.tol;
    j["sobel_quantile"] = c.sobel_quantile;
    if (!c.mesh_path.empty()) j["mesh"] = c.mesh_path;
    if (!c.susceptibility_path.empty()) j["susceptibilities"] = c.susceptibility_path;
    j["hog_channel"] = c.hog_channel;
    if (!c.class_names.empty()) j["class_names"] = c.class_names;
    j["seed"] = c.seed;
    j["volume"] = c.volume_path;
    j["priors"] = c.priors_path;
    if (!c.reliability_path.empty()) j["reliability"] = c.reliability_path;
    if (!c.reference_dir.empty()) j["reference_dir"] = c.reference_dir;
    j["out"] = c.out_dir;
    return j;
}

/// Verbatim provenance echo. Falls back to the serialized config when the
/// run was constructed programmatically.
inline std::string config_echo(const RunConfig& c) {
    return c.raw.empty() ? config_to_json(c).dump() : c.raw;
}

namespace detail {

constexpr Real kPriorEps = 1e-6;

/// Per-channel patch means of layer-r samples; out-of-volume voxels replicate
/// the nearest in-volume voxel, so padded samples carry boundary statistics.
inline Eigen::MatrixXd patch_mean_features(const VolumeF& vol, const Pyramid& pyr, int r) {
    const GridDims ld = pyr.layer_dims(r);
    const Index pe = patch_edge(r);
    Eigen::MatrixXd f(ld.count(), vol.channels);
    for (Index j = 0; j < ld.count(); ++j) {
        const Coord3 s = delinearize(ld, j);
        for (int c = 0; c < vol.channels; ++c) {
            Real acc = 0.0;
            for (Index dz = 0; dz < pe; ++dz)
                for (Index dy = 0; dy < pe; ++dy)
                    for (Index dx = 0; dx < pe; ++dx)
                        acc += vol.at_clamped(c, s.x * pe + dx, s.y * pe + dy, s.z * pe + dz);
            f(j, c) = acc / static_cast<Real>(pe * pe * pe);
        }
    }
    return f;
}

struct ChannelStats {
    Eigen::RowVectorXd mean, stddev;
};

inline ChannelStats column_stats(const Eigen::MatrixXd& m) {
    ChannelStats s;
    s.mean = m.colwise().mean();
    const Eigen::MatrixXd centered = m.rowwise() - s.mean;
    s.stddev = (centered.array().square().colwise().mean()).sqrt();
    return s;
}

/// Z-score with the given statistics; constant channels map to zero.
inline Eigen::MatrixXd standardize(const Eigen::MatrixXd& m, const ChannelStats& s) {
    Eigen::MatrixXd z = m.rowwise() - s.mean;
    for (Eigen::Index c = 0; c < z.cols(); ++c) {
        const Real sd = s.stddev(c);
        if (sd > 1e-12)
            z.col(c) /= sd;
        else
            z.col(c).setZero();
    }
    return z;
}

/// Rows of the parent layer as means over child rows (hierarchy lifting).
inline Eigen::MatrixXd lift_rows_mean(const Eigen::MatrixXd& child, const Pyramid& pyr,
                                      int r_parent) {
    const Index np = pyr.layer_samples(r_parent);
    Eigen::MatrixXd out = Eigen::MatrixXd::Zero(np, child.cols());
    for (Index j = 0; j < np; ++j) {
        const std::vector<Index> kids = children_of(pyr, r_parent, j);
        for (Index k : kids) out.row(j) += child.row(k);
        out.row(j) /= static_cast<Real>(kids.size());
    }
    return out;
}

/// Clamps rows into (0,1) and renormalizes them to unit sum.
inline void normalize_rows(Eigen::MatrixXd& m) {
    for (Eigen::Index j = 0; j < m.rows(); ++j) {
        Real sum = 0.0;
        for (Eigen::Index c = 0; c < m.cols(); ++c) {
            m(j, c) = std::clamp(m(j, c), kPriorEps, 1.0 - kPriorEps);
            sum += m(j, c);
        }
        m.row(j) /= sum;
    }
}

inline Eigen::VectorXd entropy_reliability(const Eigen::MatrixXd& priors) {
    Eigen::VectorXd h(priors.rows());
    for (Eigen::Index j = 0; j < priors.rows(); ++j) {
        std::vector<Real> hist(priors.row(j).begin(), priors.row(j).end());
        h(j) = reliability_from_entropy({hist}, 1);
    }
    return h;
}

} // namespace detail

/// A sample is evaluated only when its patch intersects the original volume
/// (padding replicates boundary voxels and would double-count them).
inline std::vector<std::uint8_t> valid_samples(const Pyramid& pyr, int r) {
    const GridDims ld = pyr.layer_dims(r);
    const Index pe = patch_edge(r);
    std::vector<std::uint8_t> valid(static_cast<size_t>(ld.count()), 0);
    for (Index j = 0; j < ld.count(); ++j) {
        const Coord3 s = delinearize(ld, j);
        valid[static_cast<size_t>(j)] = s.x * pe < pyr.dims_orig.x &&
                                        s.y * pe < pyr.dims_orig.y &&
                                        s.z * pe < pyr.dims_orig.z;
    }
    return valid;
}

/// Builds the full per-resolution sample stack from the finest-layer inputs:
/// f~ standardized per layer, f^ standardized by layer-0 statistics (so the
/// fusion features are comparable across resolutions), priors and
/// reliabilities lifted by child-row means.
inline std::vector<SampleSet> build_sample_stack(const VolumeF& volume, const VolumeF& priors,
                                                 const Pyramid& pyr,
                                                 const VolumeF* reliability = nullptr) {
    if (!(volume.dims == pyr.dims_orig))
        throw InvalidInputError("volume dims do not match the pyramid");
    if (!(priors.dims == volume.dims))
        throw InvalidInputError("priors dims do not match the volume");
    const int n_clas = priors.channels;
    if (n_clas < 2) throw InvalidInputError("priors volume needs >= 2 channels");
    if (reliability && (!(reliability->dims == volume.dims) || reliability->channels != 1))
        throw InvalidInputError("reliability volume must be single-channel at volume dims");

    std::vector<SampleSet> stack;
    std::optional<detail::ChannelStats> stats0;
    for (int r = 0; r <= pyr.n_lay; ++r) {
        SampleSet s;
        s.r = r;
        s.n_clas = n_clas;
        const Eigen::MatrixXd raw = detail::patch_mean_features(volume, pyr, r);
        const detail::ChannelStats stats_r = detail::column_stats(raw);
        if (r == 0) stats0 = stats_r;
        s.f_tilde = detail::standardize(raw, stats_r);
        s.f_hat = detail::standardize(raw, *stats0);

        if (r == 0) {
            const GridDims ld = pyr.layer_dims(0);
            s.priors.resize(ld.count(), n_clas);
            for (Index j = 0; j < ld.count(); ++j) {
                const Coord3 v = delinearize(ld, j);
                for (int c = 0; c < n_clas; ++c)
                    s.priors(j, c) = priors.at_clamped(c, v.x, v.y, v.z);
            }
            detail::normalize_rows(s.priors);
            if (reliability) {
                s.reliability.resize(ld.count());
                for (Index j = 0; j < ld.count(); ++j) {
                    const Coord3 v = delinearize(ld, j);
                    const Real h = reliability->at_clamped(0, v.x, v.y, v.z);
                    if (!(h > 0.0 && h <= 1.0))
                        throw InvalidInputError("reliability entries must lie in (0,1]");
                    s.reliability(j) = h;
                }
            } else {
                s.reliability = detail::entropy_reliability(s.priors);
            }
        } else {
            s.priors = detail::lift_rows_mean(stack[static_cast<size_t>(r) - 1].priors, pyr, r);
            s.reliability =
                detail::lift_rows_mean(stack[static_cast<size_t>(r) - 1].reliability, pyr, r);
        }
        s.validate();
        stack.push_back(std::move(s));
    }
    return stack;
}

struct LayerResult {
    int r = 0;
    Eigen::MatrixXd posteriors;  // n x n_clas
    std::vector<int> labels;     // row argmax
    Real sigma = 0.0;            // +inf when the layer has no spatial edges
    int pcg_iterations = 0;      // 0 for direct/constrained/guided solves
    std::vector<SampleCategories> categories;  // cfpg only, one per class
};

struct SegmentResult {
    Pyramid pyr;
    std::vector<SampleSet> stack;
    std::vector<LayerResult> layers;
    std::string manifest_path;
};

namespace detail {

inline std::vector<int> argmax_rows(const Eigen::MatrixXd& p) {
    std::vector<int> labels(static_cast<size_t>(p.rows()));
    for (Eigen::Index j = 0; j < p.rows(); ++j) {
        Eigen::Index c;
        p.row(j).maxCoeff(&c);
        labels[static_cast<size_t>(j)] = static_cast<int>(c);
    }
    return labels;
}

/// Susceptibility stack for the gfpg variant, either derived from the mesh
/// geometry (curvature populations -> depot rays, 4 classes) or lifted from a
/// precomputed finest-resolution volume.
inline std::vector<SusceptibilityField> susceptibility_stack(const RunConfig& cfg,
                                                             const VolumeF& volume,
                                                             const Pyramid& pyr, int n_clas) {
    std::vector<SusceptibilityField> fields(static_cast<size_t>(pyr.n_lay) + 1);
    if (!cfg.mesh_path.empty()) {
        if (n_clas != kAdiposeClasses)
            throw InvalidInputError("mesh-guided runs require exactly 4 classes");
        const TriMesh mesh = load_obj(cfg.mesh_path);
        const VertexNormals vn = vertex_normals(mesh);
        const auto curv = curvature_tensor(mesh, vn);
        const SurfaceVoxels sv = voxelize_surface(mesh, curv, pyr.layer_dims(0));
        const CurvaturePopulations pop = curvature_histogram(sv);
        for (int r = 0; r <= pyr.n_lay; ++r) {
            const SurfaceSamples surf = surface_samples(sv, pop, pyr, r);
            const std::vector<HogMode> hog =
                hog_modes_for_layer(volume, cfg.hog_channel, pyr, r);
            fields[static_cast<size_t>(r)] = derive_susceptibilities(surf, hog, pyr, r);
        }
        return fields;
    }
    const VolumeF sv = read_volume_f32(cfg.susceptibility_path);
    if (!(sv.dims == pyr.dims_orig) || sv.channels != n_clas)
        throw InvalidInputError("susceptibility volume must match dims and class count");
    const GridDims ld = pyr.layer_dims(0);
    Eigen::MatrixXd s0(ld.count(), n_clas);
    for (Index j = 0; j < ld.count(); ++j) {
        const Coord3 v = delinearize(ld, j);
        for (int c = 0; c < n_clas; ++c) s0(j, c) = sv.at_clamped(c, v.x, v.y, v.z);
    }
    normalize_rows(s0);
    fields[0].s = std::move(s0);
    fields[0].validate();
    for (int r = 1; r <= pyr.n_lay; ++r) {
        fields[static_cast<size_t>(r)].s =
            lift_rows_mean(fields[static_cast<size_t>(r) - 1].s, pyr, r);
        fields[static_cast<size_t>(r)].validate();
    }
    return fields;
}

template <typename T>
inline Volume<T> volume_from_matrix(const Eigen::MatrixXd& m, GridDims dims) {
    Volume<T> vol(dims, static_cast<int>(m.cols()));
    for (Eigen::Index c = 0; c < m.cols(); ++c)
        for (Eigen::Index j = 0; j < m.rows(); ++j)
            vol.at(static_cast<int>(c), j) = static_cast<T>(m(j, c));
    return vol;
}

inline VolumeU16 labels_to_volume(const std::vector<int>& labels, GridDims dims) {
    VolumeU16 vol(dims, 1);
    for (size_t j = 0; j < labels.size(); ++j)
        vol.at(0, static_cast<Index>(j)) = static_cast<std::uint16_t>(labels[j]);
    return vol;
}

inline std::vector<int> volume_to_labels(const VolumeU16& vol) {
    std::vector<int> labels(vol.data.size());
    for (size_t j = 0; j < vol.data.size(); ++j) labels[j] = vol.data[j];
    return labels;
}

} // namespace detail

/// Segments one resolution with the configured variant. `boundary0` is the
/// finest-grid Sobel mask (cfpg only); `field` the layer's susceptibilities
/// (gfpg only).
inline LayerResult segment_layer(const RunConfig& cfg, const SampleSet& samples,
                                 const Pyramid& pyr, int r,
                                 const BoundaryMask* boundary0 = nullptr,
                                 const SusceptibilityField* field = nullptr) {
    LayerResult out;
    out.r = r;
    const NeighborhoodTopology topo = build_topology(pyr, r);

    TukeyParams tp;  // unused when the layer has no edges
    if (topo.edge_count() > 0) {
        tp = mad_sigma(samples, topo);
        out.sigma = tp.sigma_out;
    } else {
        out.sigma = std::numeric_limits<Real>::infinity();
    }

    EdgeWeights ew = spatial_edge_weights(samples, topo, tp, WeightMode::tukey);
    ew.lambda_prior = cfg.lambda_at(r);

    if (cfg.variant == "fpg") {
        const SparseSystem sys = assemble(ew, samples);
        if (cfg.solver == "pcg") {
            const PcgResult res = solve_pcg(sys, cfg.tol);
            out.posteriors = res.posterior.P;
            out.pcg_iterations = res.report.max_iterations();
        } else {
            out.posteriors = solve_direct(sys).P;
        }
    } else if (cfg.variant == "cfpg") {
        if (!boundary0) throw InvalidInputError("cfpg needs a boundary mask");
        const std::vector<std::uint8_t> boundary = lift_boundary(*boundary0, pyr, r);
        out.posteriors.resize(samples.size(), samples.n_clas);
        for (int c = 0; c < samples.n_clas; ++c) {
            const SampleCategories cat = categorize(samples, boundary, c);
            const ConstrainedSolveResult res =
                solve_constrained(ew, cat, samples, cfg.lambda_at(r));
            out.posteriors.col(c) = res.p;
            out.categories.push_back(cat);
        }
    } else {  // gfpg
        if (!field) throw InvalidInputError("gfpg needs a susceptibility field");
        out.posteriors =
            solve_guided(ew, *field, samples.priors, cfg.lambda_at(r), cfg.tol).P;
    }
    out.labels = detail::argmax_rows(out.posteriors);
    return out;
}

/// Stage 1: builds the sample stack, segments every resolution, and writes
/// posteriors/labels/fusion features/reliabilities plus the layers.json
/// manifest that later stages run from.
inline SegmentResult run_segment(const RunConfig& cfg) {
    cfg.validate();
    namespace fs = std::filesystem;
    fs::create_directories(cfg.out_dir);

    const VolumeF volume = read_volume_f32(cfg.volume_path);
    const VolumeF priors = read_volume_f32(cfg.priors_path);
    std::optional<VolumeF> reliability;
    if (!cfg.reliability_path.empty()) reliability = read_volume_f32(cfg.reliability_path);

    SegmentResult res;
    res.pyr = build_pyramid(volume.dims, cfg.n_lay);
    res.stack = build_sample_stack(volume, priors, res.pyr,
                                   reliability ? &*reliability : nullptr);
    const int n_clas = res.stack[0].n_clas;

    std::optional<BoundaryMask> boundary;
    if (cfg.variant == "cfpg") boundary = sobel3d(volume, cfg.sobel_quantile);
    std::vector<SusceptibilityField> fields;
    if (cfg.variant == "gfpg")
        fields = detail::susceptibility_stack(cfg, volume, res.pyr, n_clas);

    nlohmann::json manifest;
    manifest["config_raw"] = config_echo(cfg);
    manifest["variant"] = cfg.variant;
    manifest["n_lay"] = cfg.n_lay;
    manifest["n_clas"] = n_clas;
    manifest["dims_orig"] = {res.pyr.dims_orig.x, res.pyr.dims_orig.y, res.pyr.dims_orig.z};
    manifest["lambda_hcrf"] = cfg.lambda_hcrf;
    manifest["solver"] = cfg.solver;
    std::vector<Real> lambdas;
    for (int r = 0; r <= cfg.n_lay; ++r) lambdas.push_back(cfg.lambda_at(r));
    manifest["lambda_prior"] = lambdas;
    if (!cfg.class_names.empty()) manifest["class_names"] = cfg.class_names;
    manifest["layers"] = nlohmann::json::array();

    for (int r = 0; r <= cfg.n_lay; ++r) {
        const SampleSet& s = res.stack[static_cast<size_t>(r)];
        LayerResult lr = segment_layer(cfg, s, res.pyr, r,
                                       boundary ? &*boundary : nullptr,
                                       cfg.variant == "gfpg"
                                           ? &fields[static_cast<size_t>(r)]
                                           : nullptr);
        const GridDims ld = res.pyr.layer_dims(r);
        const std::string tag = "_r" + std::to_string(r) + ".raw";
        const auto path = [&](const std::string& stem) {
            return (fs::path(cfg.out_dir) / (stem + tag)).string();
        };
        write_volume(detail::volume_from_matrix<float>(lr.posteriors, ld), path("posteriors"));
        write_volume(detail::labels_to_volume(lr.labels, ld), path("labels"));
        write_volume(detail::volume_from_matrix<float>(s.f_hat, ld), path("f_hat"));
        write_volume(detail::volume_from_matrix<float>(s.reliability, ld),
                     path("reliability"));

        nlohmann::json jl;
        jl["r"] = r;
        jl["dims"] = {ld.x, ld.y, ld.z};
        if (std::isinf(lr.sigma))
            jl["sigma"] = nullptr;
        else
            jl["sigma"] = lr.sigma;
        jl["lambda_prior"] = cfg.lambda_at(r);
        jl["posteriors"] = "posteriors" + tag;
        jl["labels"] = "labels" + tag;
        jl["f_hat"] = "f_hat" + tag;
        jl["reliability"] = "reliability" + tag;
        if (cfg.solver == "pcg" && cfg.variant == "fpg")
            jl["pcg_iterations"] = lr.pcg_iterations;
        if (cfg.variant == "cfpg") {
            jl["categories"] = nlohmann::json::array();
            for (const SampleCategories& cat : lr.categories)
                jl["categories"].push_back({{"class", cat.c},
                                            {"fore", cat.fore.size()},
                                            {"back", cat.back.size()},
                                            {"hard", cat.hard.size()},
                                            {"soft", cat.soft.size()},
                                            {"rest", cat.rest.size()}});
        }
        manifest["layers"].push_back(std::move(jl));
        res.layers.push_back(std::move(lr));
    }

    res.manifest_path = (fs::path(cfg.out_dir) / "layers.json").string();
    std::ofstream os(res.manifest_path);
    os << manifest.dump(2) << "\n";
    if (!os) throw IoError("cannot write " + res.manifest_path);
    return res;
}

namespace detail {

inline nlohmann::json read_manifest(const std::string& out_dir) {
    const std::string path = (std::filesystem::path(out_dir) / "layers.json").string();
    std::ifstream is(path);
    if (!is) throw IoError("cannot read " + path);
    try {
        return nlohmann::json::parse(is);
    } catch (const nlohmann::json::exception& e) {
        throw InvalidInputError(std::string("manifest parse: ") + e.what());
    }
}

inline GridDims dims_from_json(const nlohmann::json& a) {
    return GridDims{a.at(0).get<Index>(), a.at(1).get<Index>(), a.at(2).get<Index>()};
}

} // namespace detail

struct FuseResult {
    Labeling labels;  // per layer, valid over the padded grids
    EnergyReport energy;
    Index clamped = 0;
    std::string energy_path;
};

/// Stage 2: hierarchical fusion from disk artifacts alone. Reconstructs the
/// per-layer posteriors, fusion features, reliabilities, and scales from the
/// manifest, minimizes the labeling energy exactly, and writes fused label
/// volumes plus an energy report.
inline FuseResult run_fuse(const std::string& out_dir,
                           std::optional<Real> lambda_hcrf_override = std::nullopt) {
    namespace fs = std::filesystem;
    const nlohmann::json manifest = detail::read_manifest(out_dir);
    const int n_lay = manifest.at("n_lay").get<int>();
    const int n_clas = manifest.at("n_clas").get<int>();
    const GridDims dims_orig = detail::dims_from_json(manifest.at("dims_orig"));
    const Pyramid pyr = build_pyramid(dims_orig, n_lay);
    const Real lambda_hcrf =
        lambda_hcrf_override ? *lambda_hcrf_override : manifest.at("lambda_hcrf").get<Real>();

    std::vector<Eigen::MatrixXd> posteriors;
    std::vector<SampleSet> layers;
    std::vector<Real> sigmas;
    for (const auto& jl : manifest.at("layers")) {
        const int r = jl.at("r").get<int>();
        const GridDims ld = detail::dims_from_json(jl.at("dims"));
        if (!(ld == pyr.layer_dims(r)))
            throw InvalidInputError("manifest layer dims disagree with the pyramid");
        const auto local = [&](const std::string& name) {
            return (fs::path(out_dir) / name).string();
        };
        const VolumeF pv = read_volume_f32(local(jl.at("posteriors").get<std::string>()));
        const VolumeF fv = read_volume_f32(local(jl.at("f_hat").get<std::string>()));
        const VolumeF hv = read_volume_f32(local(jl.at("reliability").get<std::string>()));
        if (pv.channels != n_clas || !(pv.dims == ld))
            throw InvalidInputError("posterior volume shape mismatch at layer " +
                                    std::to_string(r));

        Eigen::MatrixXd P(ld.count(), n_clas);
        for (int c = 0; c < n_clas; ++c)
            for (Index j = 0; j < ld.count(); ++j) P(j, c) = pv.at(c, j);
        posteriors.push_back(std::move(P));

        SampleSet s;
        s.r = r;
        s.n_clas = n_clas;
        s.f_hat.resize(ld.count(), fv.channels);
        for (int c = 0; c < fv.channels; ++c)
            for (Index j = 0; j < ld.count(); ++j) s.f_hat(j, c) = fv.at(c, j);
        s.f_tilde = Eigen::MatrixXd::Zero(ld.count(), 1);
        s.priors = Eigen::MatrixXd::Constant(ld.count(), n_clas, 1.0 / n_clas);
        s.reliability.resize(ld.count());
        for (Index j = 0; j < ld.count(); ++j) s.reliability(j) = hv.at(0, j);
        layers.push_back(std::move(s));

        sigmas.push_back(jl.at("sigma").is_null() ? std::numeric_limits<Real>::infinity()
                                                  : jl.at("sigma").get<Real>());
    }

    const std::vector<HcrfEdge> edges = hcrf_edge_weights(layers, sigmas, pyr);
    const HcrfGraph graph = build_hcrf_graph(posteriors, edges, lambda_hcrf);

    FuseResult out;
    out.labels = minimize(graph);
    out.energy = hcrf_energy(out.labels, graph);
    out.clamped = graph.clamped;

    for (int r = 0; r <= n_lay; ++r) {
        const std::string name = "fused_r" + std::to_string(r) + ".raw";
        write_volume(detail::labels_to_volume(out.labels[static_cast<size_t>(r)],
                                              pyr.layer_dims(r)),
                     (fs::path(out_dir) / name).string());
    }

    nlohmann::json je;
    je["config_raw"] = manifest.at("config_raw");
    je["lambda_hcrf"] = lambda_hcrf;
    je["energy"] = nlohmann::json::parse(out.energy.to_json());
    je["clamped_posteriors"] = out.clamped;
    out.energy_path = (fs::path(out_dir) / "energy.json").string();
    std::ofstream os(out.energy_path);
    os << je.dump(2) << "\n";
    if (!os) throw IoError("cannot write " + out.energy_path);
    return out;
}

struct EvalResult {
    std::vector<AveragedMetrics> per_layer;
    AveragedMetrics overall;  // over the concatenated valid samples
    std::string metrics_path;
    std::string source;  // "fused" or "segmented"
};

/// Stage 3: compares fused (preferred) or per-layer label volumes against the
/// reference stack, restricted to samples whose patch intersects the original
/// volume.
inline EvalResult run_eval(const std::string& out_dir, const std::string& reference_dir) {
    namespace fs = std::filesystem;
    const nlohmann::json manifest = detail::read_manifest(out_dir);
    const int n_lay = manifest.at("n_lay").get<int>();
    const int n_clas = manifest.at("n_clas").get<int>();
    const Pyramid pyr = build_pyramid(detail::dims_from_json(manifest.at("dims_orig")), n_lay);

    EvalResult out;
    out.source =
        fs::exists(fs::path(out_dir) / "fused_r0.raw") ? "fused" : "segmented";

    std::vector<int> all_labels, all_refs;
    nlohmann::json jm;
    jm["config_raw"] = manifest.at("config_raw");
    jm["source"] = out.source;
    jm["per_layer"] = nlohmann::json::array();

    for (int r = 0; r <= n_lay; ++r) {
        const std::string stem = out.source == "fused" ? "fused_r" : "labels_r";
        const VolumeU16 lv =
            read_volume_u16((fs::path(out_dir) / (stem + std::to_string(r) + ".raw")).string());
        const VolumeU16 rv = read_volume_u16(
            (fs::path(reference_dir) / ("reference_r" + std::to_string(r) + ".raw")).string());
        if (!(lv.dims == pyr.layer_dims(r)) || !(rv.dims == lv.dims))
            throw InvalidInputError("label/reference dims mismatch at layer " +
                                    std::to_string(r));
        const std::vector<std::uint8_t> valid = valid_samples(pyr, r);
        std::vector<int> labels, refs;
        for (size_t j = 0; j < lv.data.size(); ++j)
            if (valid[j]) {
                labels.push_back(lv.data[j]);
                refs.push_back(rv.data[j]);
            }
        const AveragedMetrics m = averaged_metrics(labels, refs, n_clas);
        all_labels.insert(all_labels.end(), labels.begin(), labels.end());
        all_refs.insert(all_refs.end(), refs.begin(), refs.end());

        nlohmann::json jl;
        jl["r"] = r;
        jl["precision"] = m.precision;
        jl["recall"] = m.recall;
        jl["per_class"] = nlohmann::json::array();
        for (size_t c = 0; c < m.per_class.size(); ++c)
            jl["per_class"].push_back({{"class", c},
                                       {"precision", m.per_class[c].precision},
                                       {"recall", m.per_class[c].recall},
                                       {"tp", m.per_class[c].tp},
                                       {"fp", m.per_class[c].fp},
                                       {"fn", m.per_class[c].fn}});
        jm["per_layer"].push_back(std::move(jl));
        out.per_layer.push_back(m);
    }

    out.overall = averaged_metrics(all_labels, all_refs, n_clas);
    jm["overall"] = {{"precision", out.overall.precision}, {"recall", out.overall.recall}};

    out.metrics_path = (fs::path(out_dir) / "metrics.json").string();
    std::ofstream os(out.metrics_path);
    os << jm.dump(2) << "\n";
    if (!os) throw IoError("cannot write " + out.metrics_path);
    return out;
}

struct TuneResultFiles {
    LayerSchedule schedule;
    TuneResult hcrf;
    Real optimization_seconds = 0.0;
    std::string hyperparameters_path;
};

/// Stage 4: coarse-to-fine grid search over the per-resolution prior weights
/// (each layer re-segmented per candidate, coarser values frozen first),
/// then a search over the fusion weight on the frozen posteriors. Validation
/// metrics are restricted to valid samples at every step.
inline TuneResultFiles run_tune(const RunConfig& cfg) {
    cfg.validate();
    if (cfg.reference_dir.empty())
        throw InvalidInputError("tune requires reference_dir");
    namespace fs = std::filesystem;
    fs::create_directories(cfg.out_dir);
    const auto t0 = std::chrono::steady_clock::now();

    const VolumeF volume = read_volume_f32(cfg.volume_path);
    const VolumeF priors = read_volume_f32(cfg.priors_path);
    std::optional<VolumeF> reliability;
    if (!cfg.reliability_path.empty()) reliability = read_volume_f32(cfg.reliability_path);

    const Pyramid pyr = build_pyramid(volume.dims, cfg.n_lay);
    const std::vector<SampleSet> stack =
        build_sample_stack(volume, priors, pyr, reliability ? &*reliability : nullptr);
    const int n_clas = stack[0].n_clas;

    std::optional<BoundaryMask> boundary;
    if (cfg.variant == "cfpg") boundary = sobel3d(volume, cfg.sobel_quantile);
    std::vector<SusceptibilityField> fields;
    if (cfg.variant == "gfpg")
        fields = detail::susceptibility_stack(cfg, volume, pyr, n_clas);

    // references + valid masks per layer
    std::vector<std::vector<int>> refs(static_cast<size_t>(cfg.n_lay) + 1);
    std::vector<std::vector<std::uint8_t>> valid(static_cast<size_t>(cfg.n_lay) + 1);
    for (int r = 0; r <= cfg.n_lay; ++r) {
        const VolumeU16 rv = read_volume_u16(
            (fs::path(cfg.reference_dir) / ("reference_r" + std::to_string(r) + ".raw"))
                .string());
        if (!(rv.dims == pyr.layer_dims(r)))
            throw InvalidInputError("reference dims mismatch at layer " + std::to_string(r));
        valid[static_cast<size_t>(r)] = valid_samples(pyr, r);
        for (size_t j = 0; j < rv.data.size(); ++j)
            if (valid[static_cast<size_t>(r)][j])
                refs[static_cast<size_t>(r)].push_back(rv.data[j]);
    }

    const auto segment_with = [&](int r, Real lambda) {
        RunConfig local = cfg;
        local.lambda_prior = {lambda};
        return segment_layer(local, stack[static_cast<size_t>(r)], pyr, r,
                             boundary ? &*boundary : nullptr,
                             cfg.variant == "gfpg" ? &fields[static_cast<size_t>(r)]
                                                   : nullptr);
    };

    // Layers are segmented independently, so the frozen coarser values do not
    // enter the per-layer predictor; the schedule order is still honored.
    const LayerPredictor predictor = [&](int r, Real lambda, const std::vector<Real>&) {
        const LayerResult lr = segment_with(r, lambda);
        std::vector<int> labels;
        for (size_t j = 0; j < lr.labels.size(); ++j)
            if (valid[static_cast<size_t>(r)][j]) labels.push_back(lr.labels[j]);
        return labels;
    };

    TuneOptions opt;
    opt.seed = cfg.seed;
    TuneResultFiles out;
    out.schedule = tune_layers_coarse_to_fine(predictor, refs, n_clas, cfg.n_lay, opt);

    for (int r = 0; r <= cfg.n_lay; ++r) {
        const std::string path =
            (fs::path(cfg.out_dir) / ("trials_layer_r" + std::to_string(r) + ".jsonl"))
                .string();
        std::ofstream os(path);
        os << out.schedule.per_layer[static_cast<size_t>(r)].to_jsonl();
        if (!os) throw IoError("cannot write " + path);
    }

    // Freeze the tuned prior weights, segment every layer once, and search the
    // fusion weight on those posteriors.
    std::vector<Eigen::MatrixXd> posteriors;
    std::vector<Real> sigmas;
    for (int r = 0; r <= cfg.n_lay; ++r) {
        LayerResult lr = segment_with(r, out.schedule.lambda_prior[static_cast<size_t>(r)]);
        sigmas.push_back(lr.sigma);
        posteriors.push_back(std::move(lr.posteriors));
    }
    const std::vector<HcrfEdge> edges = hcrf_edge_weights(stack, sigmas, pyr);

    std::vector<int> ref_concat;
    for (const auto& r : refs) ref_concat.insert(ref_concat.end(), r.begin(), r.end());

    const LabelPredictor fuse_with = [&](Real lambda_hcrf) {
        const HcrfGraph graph = build_hcrf_graph(posteriors, edges, lambda_hcrf);
        const Labeling fused = minimize(graph);
        std::vector<int> labels;
        for (int r = 0; r <= cfg.n_lay; ++r)
            for (size_t j = 0; j < fused[static_cast<size_t>(r)].size(); ++j)
                if (valid[static_cast<size_t>(r)][j])
                    labels.push_back(fused[static_cast<size_t>(r)][j]);
        return labels;
    };

    TuneOptions hopt;
    hopt.seed = cfg.seed + 0x517cc1b727220a95ull;  // distinct stream per stage
    out.hcrf = tune_hcrf(fuse_with, ref_concat, n_clas, hopt);
    {
        const std::string path = (fs::path(cfg.out_dir) / "trials_hcrf.jsonl").string();
        std::ofstream os(path);
        os << out.hcrf.to_jsonl();
        if (!os) throw IoError("cannot write " + path);
    }

    out.optimization_seconds =
        std::chrono::duration<Real>(std::chrono::steady_clock::now() - t0).count();

    nlohmann::json jh = nlohmann::json::parse(hyperparameters_json(
        cfg.variant, out.schedule.lambda_prior, out.hcrf.best, out.optimization_seconds));
    jh["config_raw"] = config_echo(cfg);
    out.hyperparameters_path = (fs::path(cfg.out_dir) / "hyperparameters.json").string();
    std::ofstream os(out.hyperparameters_path);
    os << jh.dump(2) << "\n";
    if (!os) throw IoError("cannot write " + out.hyperparameters_path);
    return out;
}

struct PipelineResult {
    SegmentResult segment;
    FuseResult fuse;
    std::optional<EvalResult> eval;
};

/// Full run: segment -> fuse -> (when references exist) eval.
inline PipelineResult run_pipeline(const RunConfig& cfg) {
    PipelineResult out;
    out.segment = run_segment(cfg);
    out.fuse = run_fuse(cfg.out_dir);
    if (!cfg.reference_dir.empty()) out.eval = run_eval(cfg.out_dir, cfg.reference_dir);
    return out;
}

struct PhantomArtifacts {
    std::string volume_path, priors_path, mesh_path;  // mesh only for sphere-tube
    std::string description_path;
};

/// Writes a generated phantom as pipeline inputs: the multi-channel volume,
/// blurred ground-truth priors (both at the original dims), per-resolution
/// reference label volumes (padded layer grids), the analytic mesh when one
/// exists, and a JSON description of the generation parameters.
inline PhantomArtifacts write_phantom_artifacts(const Phantom& ph, const PhantomConfig& cfg,
                                                const std::string& out_dir) {
    namespace fs = std::filesystem;
    fs::create_directories(out_dir);
    PhantomArtifacts out;

    out.volume_path = (fs::path(out_dir) / "volume.raw").string();
    write_volume(ph.volume, out.volume_path);

    // priors come from the original-dims labels (padding would double-count)
    const GridDims d0 = ph.pyr.layer_dims(0);
    std::vector<int> labels_orig(static_cast<size_t>(cfg.dims.count()));
    for (Index j = 0; j < cfg.dims.count(); ++j) {
        const Coord3 v = delinearize(cfg.dims, j);
        labels_orig[static_cast<size_t>(j)] =
            ph.reference[0][static_cast<size_t>(linear_index(d0, v.x, v.y, v.z))];
    }
    const Eigen::MatrixXd priors = blurred_priors(labels_orig, cfg.dims, ph.n_clas);
    out.priors_path = (fs::path(out_dir) / "priors.raw").string();
    write_volume(detail::volume_from_matrix<float>(priors, cfg.dims), out.priors_path);

    for (size_t r = 0; r < ph.reference.size(); ++r)
        write_volume(detail::labels_to_volume(ph.reference[r],
                                              ph.pyr.layer_dims(static_cast<int>(r))),
                     (fs::path(out_dir) / ("reference_r" + std::to_string(r) + ".raw"))
                         .string());

    if (ph.mesh) {
        out.mesh_path = (fs::path(out_dir) / "mesh.obj").string();
        save_obj(out.mesh_path, *ph.mesh);
    }

    nlohmann::json j;
    j["kind"] = to_string(ph.kind);
    j["dims"] = {cfg.dims.x, cfg.dims.y, cfg.dims.z};
    j["n_lay"] = cfg.n_lay;
    j["n_clas"] = ph.n_clas;
    j["noise_sigma"] = cfg.noise_sigma;
    j["weak_boundaries"] = cfg.weak_boundaries;
    j["seed"] = cfg.seed;
    out.description_path = (fs::path(out_dir) / "phantom.json").string();
    std::ofstream os(out.description_path);
    os << j.dump(2) << "\n";
    if (!os) throw IoError("cannot write " + out.description_path);
    return out;
}

} // namespace graphwalk
