#include "dyadflow/design.hpp"
#include "dyadflow/error.hpp"
#include "dyadflow/random.hpp"

#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <limits>

using namespace dyadflow;

namespace {

PathwayClass segment(Eigen::Vector2d a, Eigen::Vector2d b, double tau) {
    Eigen::MatrixX2d f(2, 2);
    f.row(0) = a.transpose();
    f.row(1) = b.transpose();
    return PathwayClass{"seg", {f}, tau};
}

}  // namespace

TEST_SUITE("design") {

TEST_CASE("column standardization") {
    Eigen::MatrixXd X(3, 2);
    X << 1, 7, 2, 7, 3, 7;
    const auto s = standardize_columns(X);
    CHECK(s.values(0, 0) == -1.0);
    CHECK(s.values(1, 0) == 0.0);
    CHECK(s.values(2, 0) == 1.0);
    CHECK(s.values.col(1).isZero(0.0));
    REQUIRE(s.constant_columns.size() == 1);
    CHECK(s.constant_columns[0] == 1);

    Rng rng(1);
    Eigen::MatrixXd R(20, 3);
    for (Index i = 0; i < 20; ++i)
        for (Index j = 0; j < 3; ++j) R(i, j) = rng.normal(3.0, 2.0);
    const auto once = standardize_columns(R);
    const auto twice = standardize_columns(once.values);
    CHECK((once.values - twice.values).cwiseAbs().maxCoeff() < 1e-12);
    CHECK((once.stats.apply(R) - once.values).cwiseAbs().maxCoeff() < 1e-14);
}

TEST_CASE("closeness scores") {
    const auto p = segment({0.0, 0.5}, {1.0, 0.5}, 0.07);
    Eigen::MatrixX2d c(3, 2);
    c << 0.3, 0.5, 0.3, 0.57, 1.07, 0.5;
    const Eigen::MatrixXd V = closeness_scores(c, p);
    CHECK(V(0, 0) == 1.0);
    CHECK(std::abs(V(1, 0) - 0.36787944117144233) < 1e-12);
    CHECK(std::abs(V(2, 0) - 0.36787944117144233) < 1e-12);
}

TEST_CASE("point to polyline distance matches dense sampling") {
    Eigen::MatrixX2d poly(3, 2);
    poly << 0.0, 0.0, 1.0, 0.5, 1.2, 1.5;
    Rng rng(4);
    for (int t = 0; t < 25; ++t) {
        const Eigen::Vector2d p(2.0 * rng.uniform() - 0.5, 2.0 * rng.uniform() - 0.5);
        double best = std::numeric_limits<double>::infinity();
        for (Index s = 0; s + 1 < poly.rows(); ++s)
            for (int k = 0; k <= 20000; ++k) {
                const double u = k / 20000.0;
                const Eigen::Vector2d q = (1.0 - u) * poly.row(s).transpose() + u * poly.row(s + 1).transpose();
                best = std::min(best, (p - q).norm());
            }
        CHECK(std::abs(point_polyline_distance(p, poly) - best) < 1e-4);
    }
    CHECK(point_segment_distance({2.0, 0.0}, {0.0, 0.0}, {1.0, 0.0}) == 1.0);
    CHECK(point_segment_distance({0.5, 0.3}, {0.0, 0.0}, {1.0, 0.0}) == doctest::Approx(0.3));
}

TEST_CASE("shared segment scores") {
    const DyadIndex idx(3);
    Eigen::MatrixXd V(3, 2);
    V << 1.0, 0.5, 0.2, 1.0, 0.0, 0.4;
    const Eigen::VectorXd k = shared_segment_covariates(V, idx);
    CHECK(k[0] == doctest::Approx((1.0 * 0.2 + 0.5 * 1.0) / 2.0));
    CHECK(k[1] == doctest::Approx((0.0 + 0.5 * 0.4) / 2.0));
    CHECK(k[2] == doctest::Approx((0.0 + 1.0 * 0.4) / 2.0));
    Eigen::MatrixXd on = Eigen::MatrixXd::Ones(2, 1);
    CHECK(shared_segment_covariates(on, DyadIndex(2))[0] == 1.0);
}

TEST_CASE("rbf basis") {
    RbfSpec spec;
    spec.centers.resize(2, 1);
    spec.centers << 0.0, 1.0;
    spec.bandwidth = 1.0;
    Eigen::MatrixXd d(2, 1);
    d << 0.5, 1.0;
    const Eigen::MatrixXd B = rbf_basis(d, spec);
    // mpmath: exp(-1/8)
    CHECK(std::abs(B(0, 0) - 0.8824969025845954) < 1e-15);
    CHECK(std::abs(B(0, 1) - 0.8824969025845954) < 1e-15);
    CHECK(B(1, 1) == 1.0);
    spec.bandwidth = 1e9;
    CHECK((rbf_basis(d, spec).array() > 1.0 - 1e-12).all());
}

TEST_CASE("k-means centers match exhaustive two-means") {
    Rng rng(9);
    Eigen::MatrixXd X(10, 2);
    for (Index r = 0; r < 10; ++r) {
        const double off = r < 5 ? 0.0 : 6.0;
        X.row(r) << off + rng.normal(0.0, 0.5), off + rng.normal(0.0, 0.5);
    }
    double best = std::numeric_limits<double>::infinity();
    Eigen::MatrixXd best_c(2, 2);
    for (int mask = 1; mask < (1 << 9); ++mask) {
        Eigen::RowVector2d s0 = Eigen::RowVector2d::Zero(), s1 = Eigen::RowVector2d::Zero();
        int c0 = 0, c1 = 0;
        for (int r = 0; r < 10; ++r) {
            if (r < 9 && (mask >> r) & 1) {
                s1 += X.row(r);
                ++c1;
            } else {
                s0 += X.row(r);
                ++c0;
            }
        }
        if (c1 == 0) continue;
        s0 /= c0;
        s1 /= c1;
        double inertia = 0.0;
        for (int r = 0; r < 10; ++r) {
            const bool in1 = r < 9 && (mask >> r) & 1;
            inertia += (X.row(r) - (in1 ? s1 : s0)).squaredNorm();
        }
        if (inertia < best) {
            best = inertia;
            best_c.row(0) = s0;
            best_c.row(1) = s1;
        }
    }
    if (best_c(0, 0) > best_c(1, 0)) best_c.row(0).swap(best_c.row(1));
    const RbfSpec spec = fit_rbf_spec(X, 2, 3);
    CHECK((spec.centers - best_c).cwiseAbs().maxCoeff() < 1e-12);
    CHECK(spec.bandwidth == doctest::Approx((best_c.row(0) - best_c.row(1)).norm()));

    Eigen::MatrixXd Xr = X.colwise().reverse();
    const RbfSpec perm = fit_rbf_spec(Xr, 2, 3);
    CHECK((perm.centers - spec.centers).cwiseAbs().maxCoeff() < 1e-12);
}

TEST_CASE("single rbf center") {
    Eigen::MatrixXd X(4, 1);
    X << 0.0, 1.0, 2.0, 5.0;
    const RbfSpec s = fit_rbf_spec(X, 1, 1);
    CHECK(s.centers(0, 0) == 2.0);
    CHECK(s.bandwidth > 0.0);
    CHECK_THROWS_AS(fit_rbf_spec(Eigen::MatrixXd::Ones(4, 1), 2, 1), InvalidInput);
}

TEST_CASE("design assembly") {
    Eigen::MatrixXd env(3, 2), conn(3, 1), none(3, 0);
    env << 1, 2, 3, 4, 5, 6;
    conn << 0.1, 0.2, 0.6;
    CHECK(assemble_design(env, none, true).combined == env);
    const auto c = assemble_design(Eigen::MatrixXd(3, 0), conn, false);
    CHECK(c.combined == conn);
    const auto s = assemble_design(env, conn, true);
    CHECK(s.combined.cols() == 3);
    CHECK(std::abs(s.combined.col(2).mean()) < 1e-15);
}

TEST_CASE("design for the simulation layout") {
    Rng rng(21);
    NodeSet nodes;
    const Index n = 100;
    nodes.coords.resize(n, 2);
    nodes.covariates.resize(n, 4);
    for (Index i = 0; i < n; ++i) {
        nodes.ids.push_back("n" + std::to_string(i));
        nodes.coords.row(i) << rng.uniform(), rng.uniform();
        for (Index k = 0; k < 4; ++k) nodes.covariates(i, k) = rng.normal(0.0, 5.0);
    }
    const DyadIndex idx(n);
    const std::vector<PathwayClass> paths{segment({0.0, 0.5}, {1.0, 0.5}, 0.07),
                                          segment({0.5, 0.0}, {0.5, 1.0}, 0.07)};
    const auto b = build_design(nodes, paths, idx, {});
    CHECK(b.design.combined.rows() == 4950);
    CHECK(b.design.combined.cols() == 6);
    const Eigen::MatrixXd again = design_rows(b.recipe, nodes.coords, nodes.covariates, idx.pairs());
    CHECK((again - b.design.combined).cwiseAbs().maxCoeff() < 1e-12);

    DesignConfig rbf;
    rbf.use_rbf = true;
    rbf.rbf_centers = 5;
    const auto r = build_design(nodes, paths, idx, rbf);
    CHECK(r.design.combined.cols() == 7);
    const Eigen::MatrixXd rr = design_rows(r.recipe, nodes.coords, nodes.covariates, idx.pairs());
    CHECK((rr - r.design.combined).cwiseAbs().maxCoeff() < 1e-12);
}

}
