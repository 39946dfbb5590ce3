// Command-line driver: phantom generation, per-resolution segmentation,
// hierarchical fusion, hyperparameter tuning, and evaluation. Stages
// communicate through files only; every failure leaves a structured JSON
// error on standard error and a nonzero exit code.

#include <cstdlib>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>

#include <CLI11.hpp>
#include <json.hpp>

#include "graphwalk/phantom.hpp"
#include "graphwalk/pipeline.hpp"
#include "graphwalk/threads.hpp"

namespace {

using namespace graphwalk;

int g_log_level = 1;  // 0 quiet, 1 normal, 2 verbose

void log_info(const std::string& msg) {
    if (g_log_level >= 1) std::cout << msg << "\n";
}

void log_verbose(const std::string& msg) {
    if (g_log_level >= 2) std::cout << msg << "\n";
}

std::string read_file(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw IoError("cannot read " + path);
    std::ostringstream os;
    os << is.rdbuf();
    return os.str();
}

/// Config file first, then flag overrides on top.
struct CommonFlags {
    std::string config_path, out_dir, variant, mesh_path;
    double tol = -1.0, sobel_quantile = -1.0;
    std::uint64_t seed = 0;
    bool seed_set = false;

    void attach(CLI::App* cmd) {
        cmd->add_option("--config", config_path, "run configuration JSON file");
        cmd->add_option("--out", out_dir, "output directory");
        cmd->add_option("--variant", variant, "graph variant: fpg | cfpg | gfpg");
        cmd->add_option("--tol", tol, "solver tolerance");
        cmd->add_option("--sobel-quantile", sobel_quantile, "boundary mask quantile");
        cmd->add_option("--mesh", mesh_path, "surface mesh (OBJ) for guided runs");
        cmd->add_option("--seed", seed, "random seed")->each([this](const std::string&) {
            seed_set = true;
        });
        cmd->add_option("--log-level", g_log_level, "0 quiet, 1 normal, 2 verbose");
    }

    RunConfig load() const {
        RunConfig cfg;
        if (!config_path.empty()) cfg = config_from_json(read_file(config_path));
        if (!out_dir.empty()) cfg.out_dir = out_dir;
        if (!variant.empty()) cfg.variant = variant;
        if (!mesh_path.empty()) cfg.mesh_path = mesh_path;
        if (tol >= 0.0) cfg.tol = tol;
        if (sobel_quantile >= 0.0) cfg.sobel_quantile = sobel_quantile;
        if (seed_set) cfg.seed = seed;
        return cfg;
    }
};

int cmd_phantom(const CommonFlags& common, const std::string& kind, int n_lay,
                const std::vector<Index>& dims, double noise, bool weak) {
    PhantomConfig pc;
    if (dims.size() == 3) pc.dims = {dims[0], dims[1], dims[2]};
    pc.n_lay = n_lay;
    pc.noise_sigma = noise;
    pc.weak_boundaries = weak;
    pc.seed = common.seed;
    const std::string out = common.load().out_dir;
    const Phantom ph = generate_phantom(phantom_kind_from_string(kind), pc);
    const PhantomArtifacts art = write_phantom_artifacts(ph, pc, out);
    log_info("phantom: " + kind + " -> " + art.volume_path);
    log_verbose("classes: " + std::to_string(ph.n_clas) +
                ", layers: " + std::to_string(pc.n_lay + 1));
    return 0;
}

int cmd_segment(const CommonFlags& common) {
    const RunConfig cfg = common.load();
    const SegmentResult res = run_segment(cfg);
    log_info("segment: " + res.manifest_path);
    for (const LayerResult& lr : res.layers)
        log_verbose("layer " + std::to_string(lr.r) + ": sigma " +
                    (std::isinf(lr.sigma) ? std::string("inf") : std::to_string(lr.sigma)));
    return 0;
}

int cmd_fuse(const CommonFlags& common, double lambda_hcrf) {
    std::optional<Real> override_lambda;
    if (lambda_hcrf >= 0.0) override_lambda = lambda_hcrf;
    const FuseResult res = run_fuse(common.load().out_dir, override_lambda);
    log_info("fuse: " + res.energy_path);
    log_verbose("energy " + std::to_string(res.energy.total) + ", disagreements " +
                std::to_string(res.energy.disagreements));
    return 0;
}

int cmd_eval(const CommonFlags& common, const std::string& reference_dir) {
    const RunConfig cfg = common.load();
    const std::string refs = reference_dir.empty() ? cfg.reference_dir : reference_dir;
    if (refs.empty()) throw InvalidInputError("eval requires --refs or a config reference_dir");
    const EvalResult res = run_eval(cfg.out_dir, refs);
    log_info("eval: " + res.metrics_path);
    char buf[96];
    std::snprintf(buf, sizeof(buf), "precision %.6f recall %.6f (%s)",
                  res.overall.precision, res.overall.recall, res.source.c_str());
    log_info(buf);
    return 0;
}

int cmd_tune(const CommonFlags& common) {
    const RunConfig cfg = common.load();
    const TuneResultFiles res = run_tune(cfg);
    log_info("tune: " + res.hyperparameters_path);
    log_verbose("lambda_hcrf " + std::to_string(res.hcrf.best));
    return 0;
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"hierarchical random-walker segmentation over resolution pyramids"};
    app.require_subcommand(1);

    CommonFlags common;

    auto* phantom = app.add_subcommand("phantom", "generate a synthetic test volume");
    std::string kind = "nested-shells";
    int n_lay = 1;
    std::vector<Index> dims;
    double noise = 0.0;
    bool weak = false;
    phantom->add_option("--kind", kind, "step | nested-shells | sphere-tube");
    phantom->add_option("--dims", dims, "volume extents: X Y Z")->expected(3);
    phantom->add_option("--n-lay", n_lay, "coarse layers above the finest");
    phantom->add_option("--noise", noise, "additive Gaussian sigma");
    phantom->add_flag("--weak-boundaries", weak, "blend intensities across interfaces");
    common.attach(phantom);

    auto* segment = app.add_subcommand("segment", "per-resolution posteriors and labels");
    common.attach(segment);

    auto* fuse = app.add_subcommand("fuse", "hierarchical fusion from segment artifacts");
    double lambda_hcrf = -1.0;
    fuse->add_option("--lambda-hcrf", lambda_hcrf, "override the fusion coupling weight");
    common.attach(fuse);

    auto* eval = app.add_subcommand("eval", "metrics against reference label volumes");
    std::string reference_dir;
    eval->add_option("--refs", reference_dir, "directory holding reference_r*.raw");
    common.attach(eval);

    auto* tune = app.add_subcommand("tune", "grid-search the prior and fusion weights");
    common.attach(tune);

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        if (e.get_exit_code() == 0) return app.exit(e);  // --help
        nlohmann::json err;
        err["type"] = "usage";
        err["message"] = e.what();
        std::cerr << err.dump() << "\n";
        return 2;
    }

    try {
        if (phantom->parsed()) return cmd_phantom(common, kind, n_lay, dims, noise, weak);
        if (segment->parsed()) return cmd_segment(common);
        if (fuse->parsed()) return cmd_fuse(common, lambda_hcrf);
        if (eval->parsed()) return cmd_eval(common, reference_dir);
        if (tune->parsed()) return cmd_tune(common);
    } catch (const Error& e) {
        nlohmann::json err;
        err["type"] = e.type();
        err["message"] = e.what();
        std::cerr << err.dump() << "\n";
        return 1;
    } catch (const std::exception& e) {
        nlohmann::json err;
        err["type"] = "internal";
        err["message"] = e.what();
        std::cerr << err.dump() << "\n";
        return 1;
    }
    return 0;
}
