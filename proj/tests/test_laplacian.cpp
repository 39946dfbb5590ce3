#include <catch2/catch_amalgamated.hpp>

#include <random>

#include "graphwalk/laplacian.hpp"
#include "oracles.hpp"

using namespace graphwalk;

namespace {
// 2-sample chain with a unit-weight edge.
EdgeWeights unit_pair(Real lambda) {
    EdgeWeights ew;
    ew.n = 2;
    ew.edges = {{0, 1, 1.0}};
    ew.degree = {1.0, 1.0};
    ew.lambda_prior = lambda;
    return ew;
}
} // namespace

TEST_CASE("2-sample chain assembles to [[2,-1],[-1,2]] at lambda 1") {
    const SampleSet s = make_sample_set(0, 2, 2);
    const SparseSystem sys = assemble(unit_pair(1.0), s);
    REQUIRE(sys.unknowns() == 2);
    CHECK(sys.gamma.coeff(0, 0) == 2.0);
    CHECK(sys.gamma.coeff(1, 1) == 2.0);
    CHECK(sys.gamma.coeff(0, 1) == -1.0);
    CHECK(sys.gamma.coeff(1, 0) == -1.0);
    CHECK(sys.rhs(0, 0) == 0.5);  // lambda * uniform prior
}

TEST_CASE("seed posterior rows use eps = 0.0001") {
    const Eigen::RowVectorXd row = seed_posterior_row(1, 3);
    CHECK(row(1) == 0.9999);
    CHECK(row(0) == Catch::Approx(0.00005).epsilon(1e-12));
    CHECK(row(2) == Catch::Approx(0.00005).epsilon(1e-12));
    CHECK(row.sum() == Catch::Approx(1.0).epsilon(1e-12));
    CHECK_THROWS_AS(seed_posterior_row(3, 3), InvalidInputError);
}

TEST_CASE("isolated sample: diagonal lambda, rhs lambda * prior") {
    EdgeWeights ew;
    ew.n = 1;
    ew.degree = {0.0};
    ew.lambda_prior = 0.5;
    SampleSet s = make_sample_set(0, 1, 2);
    s.priors << 0.3, 0.7;
    const SparseSystem sys = assemble(ew, s);
    CHECK(sys.gamma.coeff(0, 0) == 0.5);
    CHECK(sys.rhs(0, 0) == Catch::Approx(0.15));
    CHECK(sys.rhs(0, 1) == Catch::Approx(0.35));
}

TEST_CASE("all-unlabeled gamma rows sum to lambda exactly") {
    std::mt19937_64 rng(31);
    for (int t = 0; t < 5; ++t) {
        const auto inst = oracle::random_instance(rng);
        const SparseSystem sys = assemble(inst.weights, inst.samples);
        const Eigen::VectorXd ones = Eigen::VectorXd::Ones(sys.unknowns());
        const Eigen::VectorXd row_sums = sys.gamma * ones;
        for (Index j = 0; j < sys.unknowns(); ++j)
            CHECK(row_sums(j) == Catch::Approx(inst.weights.lambda_prior).margin(1e-12));
    }
}

TEST_CASE("seeded assembly folds the seed coupling into the rhs") {
    // 3-chain 0-1-2 with unit weights; ends seeded with classes 0, 1.
    EdgeWeights ew;
    ew.n = 3;
    ew.edges = {{0, 1, 1.0}, {1, 2, 1.0}};
    ew.degree = {1.0, 2.0, 1.0};
    ew.lambda_prior = 0.5;
    SampleSet s = make_sample_set(0, 3, 2);
    s.labels = {0, 0, 1};
    s.prelabeled = {1, 0, 1};
    const SparseSystem sys = assemble(ew, s);
    REQUIRE(sys.unknowns() == 1);
    CHECK(sys.unknown_ids[0] == 1);
    CHECK(sys.gamma.coeff(0, 0) == 2.5);  // degree 2 + lambda
    // rhs = lambda*a + w*seed0 + w*seed2 per class
    CHECK(sys.rhs(0, 0) == Catch::Approx(0.5 * 0.5 + 0.9999 + 0.0001));
    CHECK(sys.rhs(0, 1) == Catch::Approx(0.5 * 0.5 + 0.0001 + 0.9999));
    CHECK(sys.anchored[0] == 1);
    // seeds scatter back with their fixed rows
    const PosteriorMatrix P = sys.scatter(Eigen::MatrixXd::Constant(1, 2, 0.5));
    CHECK(P.P(0, 0) == 0.9999);
    CHECK(P.P(2, 1) == 0.9999);
    CHECK(P.P(1, 0) == 0.5);
}

TEST_CASE("seed labels outside the class set are rejected") {
    EdgeWeights ew = unit_pair(1.0);
    SampleSet s = make_sample_set(0, 2, 2);
    s.labels = {0, 5};
    s.prelabeled = {0, 1};
    CHECK_THROWS_AS(assemble(ew, s), InvalidInputError);
}
