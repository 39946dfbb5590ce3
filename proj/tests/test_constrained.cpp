#include <catch2/catch_amalgamated.hpp>

#include <random>

#include "graphwalk/constrained.hpp"
#include "oracles.hpp"

using namespace graphwalk;

namespace {
SampleSet with_priors(std::vector<Real> a_fore) {
    const auto n = static_cast<Index>(a_fore.size());
    SampleSet s = make_sample_set(0, n, 2);
    for (Index j = 0; j < n; ++j) {
        s.priors(j, 0) = a_fore[static_cast<size_t>(j)];
        s.priors(j, 1) = 1.0 - a_fore[static_cast<size_t>(j)];
    }
    return s;
}

EdgeWeights chain_weights(Index n, Real lambda) {
    EdgeWeights ew;
    ew.n = n;
    ew.degree.assign(static_cast<size_t>(n), 0.0);
    for (Index j = 0; j + 1 < n; ++j) {
        ew.edges.push_back({j, j + 1, 1.0});
        ew.degree[static_cast<size_t>(j)] += 1.0;
        ew.degree[static_cast<size_t>(j) + 1] += 1.0;
    }
    ew.lambda_prior = lambda;
    return ew;
}
} // namespace

TEST_CASE("thresholds: 0.85 fore, 0.5 soft+rest, boundary 0.9 hard") {
    const SampleSet s = with_priors({0.85, 0.5, 0.9, 0.8, 0.2, 0.3});
    const std::vector<std::uint8_t> boundary{0, 0, 1, 0, 0, 0};
    const SampleCategories cat = categorize(s, boundary, 0);
    CHECK(cat.fore == std::vector<Index>{0, 3});  // 0.8 is inclusive
    CHECK(cat.back == std::vector<Index>{4});     // 0.2 is inclusive
    CHECK(cat.hard == std::vector<Index>{2});     // boundary precedence over 0.9
    CHECK(cat.soft == std::vector<Index>{1});
    CHECK(cat.rest == std::vector<Index>{1, 5});  // soft stays solvable
}

TEST_CASE("categorize partitions the samples; soft is inside rest") {
    std::mt19937_64 rng(41);
    std::uniform_real_distribution<Real> u(0.01, 0.99);
    for (int t = 0; t < 20; ++t) {
        const Index n = 30;
        std::vector<Real> a(static_cast<size_t>(n));
        std::vector<std::uint8_t> boundary(static_cast<size_t>(n));
        for (auto& v : a) v = u(rng);
        for (auto& b : boundary) b = rng() % 4 == 0;
        const SampleCategories cat = categorize(with_priors(a), boundary, 0);
        CHECK(cat.fore.size() + cat.back.size() + cat.hard.size() + cat.rest.size() ==
              static_cast<size_t>(n));
        std::vector<int> seen(static_cast<size_t>(n), 0);
        for (const auto* set : {&cat.fore, &cat.back, &cat.hard, &cat.rest})
            for (const Index j : *set) seen[static_cast<size_t>(j)] += 1;
        for (const int c : seen) CHECK(c == 1);
        for (const Index j : cat.soft)
            CHECK(std::find(cat.rest.begin(), cat.rest.end(), j) != cat.rest.end());

        // pure function: recategorization is a no-op
        const SampleCategories again = categorize(with_priors(a), boundary, 0);
        CHECK(again.tag == cat.tag);
    }
}

TEST_CASE("constraint values are bit-exact 1, 0, 0.5") {
    const SampleSet s = with_priors({0.9, 0.5, 0.1, 0.5});
    const std::vector<std::uint8_t> boundary{0, 1, 0, 0};
    const SampleCategories cat = categorize(s, boundary, 0);
    const auto res = solve_constrained(chain_weights(4, 0.3), cat, s, 0.3);
    CHECK(res.p(0) == 1.0);
    CHECK(res.p(1) == 0.5);
    CHECK(res.p(2) == 0.0);
    CHECK_FALSE(res.rest_empty);
}

TEST_CASE("all samples in fore returns the constant vector with a notice") {
    const SampleSet s = with_priors({0.9, 0.95, 0.85});
    const SampleCategories cat = categorize(s, {0, 0, 0}, 0);
    REQUIRE(cat.rest.empty());
    const auto res = solve_constrained(chain_weights(3, 0.5), cat, s, 0.5);
    CHECK(res.rest_empty);
    for (Index j = 0; j < 3; ++j) CHECK(res.p(j) == 1.0);
}

TEST_CASE("4-chain with fixed ends: interior -> (2/3, 1/3) as lambda -> 0") {
    SampleSet s = with_priors({0.9, 0.5, 0.5, 0.1});
    SampleCategories cat;
    cat.c = 0;
    cat.tag = {SampleCategories::kFore, SampleCategories::kRest, SampleCategories::kRest,
               SampleCategories::kBack};
    cat.fore = {0};
    cat.back = {3};
    cat.rest = {1, 2};
    const Real lambda = 1e-9;
    const auto res = solve_constrained(chain_weights(4, lambda), cat, s, lambda);
    CHECK(res.p(1) == Catch::Approx(2.0 / 3.0).margin(1e-6));
    CHECK(res.p(2) == Catch::Approx(1.0 / 3.0).margin(1e-6));
}

TEST_CASE("unknown count equals |rest| (strict reduction)") {
    const SampleSet s = with_priors({0.85, 0.5, 0.45, 0.15, 0.55});
    const SampleCategories cat = categorize(s, {0, 0, 0, 0, 0}, 0);
    CHECK(cat.rest.size() == 3);
    CHECK(cat.rest.size() < static_cast<size_t>(s.size()));
}

TEST_CASE("constrained energy beats the clamped unconstrained solution") {
    std::mt19937_64 rng(43);
    for (int t = 0; t < 20; ++t) {
        const auto inst = oracle::random_instance(rng, 2, 2);  // <= 8 samples
        const Index n = inst.samples.size();
        std::vector<std::uint8_t> boundary(static_cast<size_t>(n), 0);
        for (auto& b : boundary) b = rng() % 5 == 0;
        const SampleCategories cat = categorize(inst.samples, boundary, 0);
        if (cat.rest.empty()) continue;
        const auto res =
            solve_constrained(inst.weights, cat, inst.samples, inst.weights.lambda_prior);

        // clamp the unconstrained solution onto the constraint sets
        const Eigen::MatrixXd full =
            oracle::dense_posteriors(inst.weights, inst.samples.priors);
        Eigen::VectorXd clamped = full.col(0);
        for (const Index j : cat.fore) clamped(j) = 1.0;
        for (const Index j : cat.back) clamped(j) = 0.0;
        for (const Index j : cat.hard) clamped(j) = 0.5;

        const Eigen::VectorXd a = inst.samples.priors.col(0);
        CHECK(oracle::dirichlet_energy(inst.weights, res.p, a) <=
              oracle::dirichlet_energy(inst.weights, clamped, a) + 1e-12);
    }
}

TEST_CASE("boundary lifting marks samples whose patch holds a masked voxel") {
    const Pyramid p = build_pyramid({6, 6, 6}, 1);
    BoundaryMask mask;
    mask.dims = {6, 6, 6};
    mask.mask.assign(216, 0);
    mask.magnitude.assign(216, 0.0);
    mask.mask[static_cast<size_t>(linear_index(mask.dims, 4, 4, 4))] = 1;
    const auto flags = lift_boundary(mask, p, 1);
    const GridDims d1 = p.layer_dims(1);  // 2x2x2
    for (Index j = 0; j < d1.count(); ++j) {
        const bool expect = delinearize(d1, j) == Coord3{1, 1, 1};
        CHECK((flags[static_cast<size_t>(j)] != 0) == expect);
    }
}
