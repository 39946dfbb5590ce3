#include <catch2/catch_amalgamated.hpp>

#include "graphwalk/core.hpp"

using namespace graphwalk;

TEST_CASE("median uses midpoint convention") {
    CHECK(median({3.0}) == 3.0);
    CHECK(median({1.0, 2.0, 9.0}) == 2.0);
    CHECK(median({1.0, 2.0, 3.0, 10.0}) == 2.5);
    CHECK(median({5.0, 1.0}) == 3.0);
    CHECK_THROWS_AS(median({}), InvalidInputError);
}

TEST_CASE("nearest-rank quantile") {
    std::vector<Real> v{1, 2, 3, 4, 5, 6, 7, 8, 9, 10};
    CHECK(quantile_nearest_rank(v, 0.9) == 9.0);
    CHECK(quantile_nearest_rank(v, 0.0) == 1.0);
    CHECK(quantile_nearest_rank(v, 1.0) == 10.0);
    CHECK(quantile_nearest_rank({42.0}, 0.5) == 42.0);
    CHECK_THROWS_AS(quantile_nearest_rank({}, 0.5), InvalidInputError);
    CHECK_THROWS_AS(quantile_nearest_rank(v, 1.5), InvalidInputError);
}

TEST_CASE("linear index round-trips, x fastest") {
    GridDims d{4, 3, 2};
    CHECK(linear_index(d, 1, 0, 0) == 1);
    CHECK(linear_index(d, 0, 1, 0) == 4);
    CHECK(linear_index(d, 0, 0, 1) == 12);
    for (Index j = 0; j < d.count(); ++j) {
        const Coord3 c = delinearize(d, j);
        CHECK(linear_index(d, c.x, c.y, c.z) == j);
        CHECK(in_bounds(d, c.x, c.y, c.z));
    }
    CHECK_FALSE(in_bounds(d, 4, 0, 0));
    CHECK_FALSE(in_bounds(d, -1, 0, 0));
}

TEST_CASE("error types carry stable type strings") {
    CHECK(InvalidInputError("x").type() == "invalid-input");
    SingularityError s("msg", {1, 2, 3});
    CHECK(s.type() == "singularity");
    CHECK(s.component() == std::vector<Index>{1, 2, 3});
    ConvergenceError c("msg", {0.5}, 1e-3);
    CHECK(c.residual() == 1e-3);
    CHECK(c.best_iterate().size() == 1);
}
