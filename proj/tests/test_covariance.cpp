#include "dyadflow/covariance.hpp"
#include "dyadflow/error.hpp"

#include <doctest.h>

#include <cmath>
#include <numbers>

using namespace dyadflow;

namespace {

Eigen::MatrixX2d random_coords(Rng &rng, Index n) {
    Eigen::MatrixX2d c(n, 2);
    for (Index i = 0; i < n; ++i) c.row(i) << rng.uniform(), rng.uniform();
    return c;
}

// covariance of the free entries (i <= j) of W, brute force
Eigen::MatrixXd full_entry_covariance(const Eigen::MatrixXd &K) {
    const Index n = K.rows();
    std::vector<std::pair<Index, Index>> e;
    for (Index j = 0; j < n; ++j)
        for (Index i = 0; i <= j; ++i) e.emplace_back(i, j);
    const auto m = static_cast<Index>(e.size());
    Eigen::MatrixXd S(m, m);
    for (Index a = 0; a < m; ++a)
        for (Index b = 0; b < m; ++b) {
            const auto [i, j] = e[a];
            const auto [k, l] = e[b];
            S(a, b) = K(i, k) * K(j, l) + K(i, l) * K(j, k);
        }
    return S;
}

}  // namespace

TEST_SUITE("covariance") {

TEST_CASE("kernel values") {
    const KernelSpec m{KernelFamily::matern32, 2.0};
    const KernelSpec e{KernelFamily::exponential, 2.0};
    CHECK(kernel_value(0.0, m) == 1.0);
    // mpmath: (1 + sqrt 3) exp(-sqrt 3)
    CHECK(std::abs(kernel_value(2.0, m) - 0.4833577245965077) < 1e-15);
    CHECK(kernel_value(200.0, m) < 1e-60);
    CHECK(std::abs(kernel_value(200.0, m) / 1.0448405205938778e-73 - 1.0) < 1e-12);
    CHECK(std::abs(kernel_value(2.0, e) - 0.36787944117144233) < 1e-16);
    CHECK_THROWS_AS(kernel_value(-1.0, m), InvalidInput);
    CHECK_THROWS_AS(KernelSpec({KernelFamily::matern32, 0.0}).validate(), InvalidInput);
    CHECK(kernel_family_from_string("exponential") == KernelFamily::exponential);
    CHECK_THROWS_AS(kernel_family_from_string("rbf"), InvalidInput);
}

TEST_CASE("node correlation matrices") {
    Eigen::MatrixX2d one(1, 2);
    one << 0.3, 0.4;
    CHECK(node_correlation_matrix(one, {}).isApprox(Eigen::MatrixXd::Ones(1, 1)));
    Rng rng(3);
    const auto c = random_coords(rng, 5);
    const Eigen::MatrixXd K = node_correlation_matrix(c, {KernelFamily::matern32, 0.4});
    CHECK(K == K.transpose());
    CHECK(K(0, 1) == kernel_value((c.row(0) - c.row(1)).norm(), {KernelFamily::matern32, 0.4}));
}

TEST_CASE("dyadic covariance limits") {
    const DyadIndex idx(4);
    CHECK(dyadic_covariance(Eigen::MatrixXd::Identity(4, 4), idx).matrix.isIdentity(0.0));
    Rng rng(5);
    const auto c = random_coords(rng, 4);
    const Eigen::MatrixXd K = node_correlation_matrix(c, {KernelFamily::matern32, 0.5});
    const Eigen::MatrixXd S = dyadic_covariance(K, idx).matrix;
    for (Index a = 0; a < idx.size(); ++a) CHECK(S(a, a) == 1.0 + K(idx[a].i, idx[a].j) * K(idx[a].i, idx[a].j));
}

TEST_CASE("symmetrized Kronecker route is twice the closed form") {
    Rng rng(11);
    const Index n = 5;
    const auto c = random_coords(rng, n);
    const Eigen::MatrixXd K = node_correlation_matrix(c, {KernelFamily::matern32, 0.3});
    const DyadIndex idx(n);
    Eigen::MatrixXd H = Eigen::MatrixXd::Zero(n * n, n * n);
    for (Index i = 0; i < n; ++i)
        for (Index j = 0; j < n; ++j) H(j + n * i, i + n * j) = 1.0;
    Eigen::MatrixXd KK(n * n, n * n);
    for (Index i = 0; i < n; ++i)
        for (Index j = 0; j < n; ++j) KK.block(i * n, j * n, n, n) = K(i, j) * K;
    const Eigen::MatrixXd I = Eigen::MatrixXd::Identity(n * n, n * n);
    const Eigen::MatrixXd big = (I + H) * KK * (I + H).transpose();
    const Eigen::MatrixXd S = dyadic_covariance(K, idx).matrix;
    for (Index a = 0; a < idx.size(); ++a)
        for (Index b = 0; b < idx.size(); ++b) {
            const Index r = idx[a].i + n * idx[a].j;
            const Index s = idx[b].i + n * idx[b].j;
            CHECK(std::abs(big(r, s) - 2.0 * S(a, b)) < 1e-14);
        }
}

TEST_CASE("cholesky with jitter") {
    const auto id = cholesky_psd(Eigen::MatrixXd::Identity(3, 3));
    CHECK(id.L.isIdentity(0.0));
    CHECK(id.jitter == 0.0);
    const Eigen::MatrixXd ones = Eigen::MatrixXd::Ones(2, 2);
    const auto r = cholesky_psd(ones);
    CHECK(r.jitter > 0.0);
    CHECK(((r.L * r.L.transpose()) - ones).cwiseAbs().maxCoeff() <= r.jitter * (1.0 + 1e-12));
    Rng rng(7);
    Eigen::MatrixXd B(10, 10);
    for (Index i = 0; i < 10; ++i)
        for (Index j = 0; j < 10; ++j) B(i, j) = rng.normal();
    const Eigen::MatrixXd S = B * B.transpose() + Eigen::MatrixXd::Identity(10, 10);
    const auto f = cholesky_psd(S);
    CHECK((f.L * f.L.transpose() - S).norm() / S.norm() < 1e-10);
    Eigen::MatrixXd neg = -Eigen::MatrixXd::Identity(2, 2);
    CHECK_THROWS_AS(cholesky_psd(neg), NotPositiveDefinite);
}

TEST_CASE("gaussian conditioning") {
    const double rho = 0.6, y = 1.7;
    Eigen::MatrixXd Soo(1, 1), Spo(1, 1), Spp(1, 1);
    Soo << 1.0;
    Spo << rho;
    Spp << 1.0;
    const auto g = gp_conditional(Soo, Spo, Spp, Eigen::VectorXd::Constant(1, y));
    CHECK(g.mean[0] == doctest::Approx(rho * y).epsilon(1e-14));
    CHECK(g.cov(0, 0) == doctest::Approx(1.0 - rho * rho).epsilon(1e-14));
    const auto z = gp_conditional(Soo, Eigen::MatrixXd::Zero(1, 1), Spp, Eigen::VectorXd::Constant(1, y));
    CHECK(z.mean[0] == 0.0);
    CHECK(z.cov(0, 0) == 1.0);

    Rng rng(2);
    const auto c = random_coords(rng, 6);
    const Eigen::MatrixXd K = node_correlation_matrix(c, {KernelFamily::exponential, 0.4});
    const Eigen::VectorXd obs = rng.normal_vector(6);
    const auto d = gp_conditional(K, K.topRows(2), K.topLeftCorner(2, 2), obs);
    CHECK(std::abs(d.mean[0] - obs[0]) < 1e-10);
    CHECK(std::abs(d.cov(1, 1)) < 1e-10);
    CHECK((gp_conditional_mean(K, K.topRows(2), obs) - d.mean).norm() < 1e-12);
}

TEST_CASE("structured factor kernel agrees with the dense covariance") {
    Rng rng(17);
    const Index n = 7;
    const auto c = random_coords(rng, n);
    const Eigen::MatrixXd D = pairwise_distances(c);
    const KernelSpec spec{KernelFamily::matern32, 0.35};
    const DyadicFactorKernel ker(D, spec, 1e-6);
    const DyadIndex idx(n);
    Eigen::MatrixXd K = correlation_from_distances(D, spec);
    K.diagonal().array() += 1e-6;
    const Eigen::MatrixXd S = dyadic_covariance(K, idx).matrix;
    CHECK((ker.dense(idx) - S).cwiseAbs().maxCoeff() == 0.0);

    const Eigen::VectorXd x = rng.normal_vector(idx.size());
    CHECK((ker.apply(x, idx) - S * x).norm() < 1e-12 * (S * x).norm());

    const Eigen::MatrixXd W = ker.sample_full(rng);
    CHECK((ker.unwhiten(ker.whiten(W)) - W).norm() < 1e-8 * W.norm());

    // brute-force density of the n(n+1)/2 free entries
    const Eigen::MatrixXd F = full_entry_covariance(K);
    Eigen::VectorXd v(F.rows());
    Index a = 0;
    for (Index j = 0; j < n; ++j)
        for (Index i = 0; i <= j; ++i) v[a++] = W(i, j);
    Eigen::LLT<Eigen::MatrixXd> llt(F);
    const Eigen::MatrixXd L = llt.matrixL();
    const double logdet = 2.0 * L.diagonal().array().log().sum();
    const double quad = L.triangularView<Eigen::Lower>().solve(v).squaredNorm();
    const double m = static_cast<double>(F.rows());
    const double ref = -0.5 * (m * std::log(2.0 * std::numbers::pi) + logdet + quad);
    CHECK(std::abs(ker.log_density_full(W) - ref) < 1e-6 * std::abs(ref));
    CHECK(std::abs(ker.log_det_full() - logdet) < 1e-8 * std::abs(logdet));
}

TEST_CASE("structured prior draws have the dyadic covariance") {
    Rng rng(19);
    const Index n = 4;
    const auto c = random_coords(rng, n);
    const DyadIndex idx(n);
    const DyadicFactorKernel ker(pairwise_distances(c), {KernelFamily::matern32, 0.5}, 1e-6);
    const Eigen::MatrixXd S = ker.dense(idx);
    Eigen::MatrixXd acc = Eigen::MatrixXd::Zero(idx.size(), idx.size());
    const int draws = 40000;
    for (int t = 0; t < draws; ++t) {
        const Eigen::VectorXd w = dyads_from_symmetric(ker.sample_full(rng), idx);
        acc += w * w.transpose();
    }
    acc /= draws;
    CHECK((acc - S).norm() / S.norm() < 0.03);
}

TEST_CASE("singular node kernel is reported") {
    Eigen::MatrixXd D = Eigen::MatrixXd::Zero(3, 3);
    CHECK_THROWS_AS(DyadicFactorKernel(D, {}, 0.0), NotPositiveDefinite);
    CHECK_NOTHROW(DyadicFactorKernel(D, {}, 1e-3));
}

}
