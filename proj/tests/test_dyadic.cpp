#include "dyadflow/dyadic.hpp"
#include "dyadflow/error.hpp"

#include <doctest.h>

#include <cmath>

using namespace dyadflow;

TEST_SUITE("dyadic") {

TEST_CASE("dyad enumeration is lexicographic") {
    const DyadIndex idx(3);
    REQUIRE(idx.size() == 3);
    CHECK(idx[0] == Dyad{0, 1});
    CHECK(idx[1] == Dyad{0, 2});
    CHECK(idx[2] == Dyad{1, 2});
    CHECK(idx.position(2, 0) == 1);
    CHECK(DyadIndex(100).size() == 4950);
    CHECK_THROWS_AS(DyadIndex(1), InvalidInput);
    CHECK_THROWS_AS(idx.position(1, 1), InvalidInput);
}

TEST_CASE("two nodes give one incidence row") {
    const DyadIndex idx(2);
    const Eigen::MatrixXd M = idx.incidence();
    REQUIRE(M.rows() == 1);
    CHECK(M(0, 0) == -1.0);
    CHECK(M(0, 1) == 1.0);
}

TEST_CASE("matrix-free incidence products match the dense matrix") {
    const DyadIndex idx(7);
    const Eigen::MatrixXd M = idx.incidence();
    const Eigen::VectorXd v = Eigen::VectorXd::LinSpaced(7, -1.0, 2.0).array().square();
    const Eigen::VectorXd r = Eigen::VectorXd::LinSpaced(idx.size(), 0.5, 3.0);
    CHECK((idx.apply(v) - M * v).norm() < 1e-14);
    CHECK((idx.apply_transpose(r) - M.transpose() * r).norm() < 1e-13);
}

TEST_CASE("pairwise differences") {
    const DyadIndex idx(3);
    const Eigen::VectorXd d = pairwise_difference(Eigen::VectorXd(Eigen::Vector3d(1, 2, 4)), idx);
    CHECK(d[0] == 1.0);
    CHECK(d[1] == 3.0);
    CHECK(d[2] == 2.0);
    CHECK(pairwise_difference(Eigen::VectorXd(Eigen::Vector3d::Constant(5.0)), idx).isZero(0.0));
}

TEST_CASE("logit response values") {
    // mpmath, 30 digits: log(0.5/1200.5)
    CHECK(std::abs(dyadic_response(0, 1200) - (-7.783640596221253)) < 1e-12);
    CHECK(std::abs(dyadic_response(1200, 1200) - 7.783640596221253) < 1e-12);
    CHECK(dyadic_response(600, 1200) == 0.0);
    CHECK_THROWS_AS(dyadic_response(3, 2), InvalidInput);
    CHECK_THROWS_AS(dyadic_response(0, 0), InvalidInput);
}

TEST_CASE("logit response is antisymmetric about one half") {
    for (long M = 1; M <= 60; M += 7)
        for (long d = 0; d <= M; ++d) CHECK(std::abs(dyadic_response(d, M) + dyadic_response(M - d, M)) < 1e-12);
}

TEST_CASE("counts with no comparable loci are missing") {
    const DyadIndex idx(3);
    Eigen::MatrixXi D(3, 3), M(3, 3);
    D << 0, 2, 1, 2, 0, 0, 1, 0, 0;
    M << 0, 10, 10, 10, 0, 0, 10, 0, 0;
    const auto r = response_from_counts(idx, D, M);
    CHECK(r.observed[0] == 1.0);
    CHECK(r.observed[2] == 0.0);
    CHECK(r.values[0] == doctest::Approx(std::log(2.5 / 8.5)));
}

TEST_CASE("distances and median") {
    Eigen::MatrixX2d c(3, 2);
    c << 0, 0, 3, 4, 0, 1;
    const Eigen::MatrixXd D = pairwise_distances(c);
    CHECK(D(0, 1) == 5.0);
    CHECK(D == D.transpose());
    CHECK(D.diagonal().isZero(0.0));
    CHECK(dyad_distances(c)[1] == 1.0);
    CHECK(median({3.0, 1.0, 2.0, 10.0}) == 2.5);
}

}
