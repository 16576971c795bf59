#include "dyadflow/error.hpp"
#include "dyadflow/simulator.hpp"

#include <doctest.h>

using namespace dyadflow;

TEST_SUITE("simulator") {

TEST_CASE("pathway geometry") {
    const auto b = make_pathways(PathwayKind::horizontal_barrier);
    const auto c = make_pathways(PathwayKind::vertical_corridor);
    REQUIRE(b.features.size() == 1);
    CHECK(b.features[0](0, 0) == 0.0);
    CHECK(b.features[0](0, 1) == 0.5);
    CHECK(b.features[0](1, 0) == 1.0);
    CHECK(b.features[0](1, 1) == 0.5);
    CHECK(c.features[0](0, 0) == 0.5);
    CHECK(c.features[0](1, 1) == 1.0);
    CHECK(b.tau == 0.07);
    Eigen::MatrixX2d mid(1, 2);
    mid << 0.5, 0.5;
    CHECK(closeness_scores(mid, b)(0, 0) == 1.0);
    CHECK(closeness_scores(mid, c)(0, 0) == 1.0);
}

TEST_CASE("default shapes and signs") {
    const SimTruth t = simulate_dataset(SimConfig{}, 1);
    CHECK(t.response.values.size() == 4950);
    CHECK(t.design.design.combined.rows() == 4950);
    CHECK(t.design.design.combined.cols() == 6);
    CHECK(t.beta[4] == 2.00);
    CHECK(t.beta[5] == -1.30);
    CHECK(t.W.cols() == 6);
    CHECK(t.delta.colwise().mean().cwiseAbs().maxCoeff() < 1e-12 * (1.0 + t.delta.cwiseAbs().maxCoeff()));
    CHECK((t.regenerate() - t.response.values).norm() == 0.0);
}

TEST_CASE("noiseless linear check") {
    SimConfig cfg;
    cfg.n = 30;
    cfg.sigma2 = 0.0;
    cfg.include_eta = false;
    cfg.include_factors = false;
    const SimTruth t = simulate_dataset(cfg, 5);
    const Eigen::VectorXd lin = Eigen::VectorXd::Constant(t.response.values.size(), t.alpha) +
                                t.design.design.combined * t.beta;
    CHECK((t.response.values - lin).cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("same seed, same dataset") {
    SimConfig cfg;
    cfg.n = 25;
    const SimTruth a = simulate_dataset(cfg, 9);
    const SimTruth b = simulate_dataset(cfg, 9);
    const SimTruth c = simulate_dataset(cfg, 10);
    CHECK(a.response.values == b.response.values);
    CHECK(a.nodes.coords == b.nodes.coords);
    CHECK(a.C_load == b.C_load);
    CHECK(a.response.values != c.response.values);
}

TEST_CASE("configuration checks") {
    SimConfig cfg;
    cfg.n = 1;
    CHECK_THROWS_AS(simulate_dataset(cfg, 1), InvalidInput);
    cfg = SimConfig{};
    cfg.beta = Eigen::VectorXd::Zero(3);
    CHECK_THROWS_AS(simulate_dataset(cfg, 1), InvalidInput);
}

}
