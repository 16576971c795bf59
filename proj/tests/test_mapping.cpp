#include "dyadflow/error.hpp"
#include "dyadflow/evaluation.hpp"
#include "dyadflow/mapping.hpp"

#include <doctest.h>

#include <cmath>

using namespace dyadflow;

namespace {

// Observed nodes placed on points of the 3 x 3 unit lattice, with a short fitted chain.
struct LatticeFit {
    Eigen::MatrixX2d coords;
    ModelData data;
    ChainOutput chain;
};

LatticeFit lattice_fit(ModelVariant variant) {
    LatticeFit f;
    f.coords.resize(7, 2);
    f.coords << 0.0, 0.0, 0.5, 0.0, 1.0, 0.0, 0.0, 0.5, 0.5, 0.5, 1.0, 1.0, 0.0, 1.0;
    Rng rng(3);
    NodeSet nodes;
    nodes.coords = f.coords;
    nodes.covariates = rng.normal_vector(7);
    for (int i = 0; i < 7; ++i) nodes.ids.push_back("n" + std::to_string(i));
    const DyadIndex idx(7);
    const auto built = build_design(nodes, {}, idx, {});
    DyadicResponse r;
    r.values = rng.normal_vector(idx.size()) + built.design.env_block.col(0);
    r.observed = Eigen::VectorXd::Ones(idx.size());
    f.data = make_model_data(f.coords, r, built.design, variant);
    f.chain = run_chain(f.data, make_prior(f.data.distances, 2), Schedule{12, 2, 1, 5, 1});
    return f;
}

LatentFields planar_fields(const GridSpec &grid, double slope_x, double slope_y) {
    LatentFields f;
    f.dyads = grid_dyads(grid);
    f.draws = {0};
    f.eta.emplace_back(slope_x * grid.coords.col(0) + slope_y * grid.coords.col(1));
    return f;
}

}  // namespace

TEST_SUITE("mapping") {

TEST_CASE("lattice combinatorics") {
    const GridSpec g = build_grid({}, 3, 3);
    int interior = 0;
    for (Index k = 0; k < g.size(); ++k) interior += g.interior(k);
    CHECK(interior == 1);
    CHECK(g.interior(g.node(1, 1)));
    CHECK(g.degree(g.node(0, 0)) == 2);
    CHECK(g.degree(g.node(1, 0)) == 3);
    CHECK(g.neighbor(g.node(1, 1), east) == g.node(2, 1));
    CHECK(g.neighbor(g.node(1, 1), north) == g.node(1, 2));
    CHECK(g.neighbor(g.node(0, 1), west) == -1);
    const GridDyads d = grid_dyads(g);
    CHECK(d.size() == 12);
    CHECK(d.position(g.node(1, 1), east) == d.position(g.node(2, 1), west));

    const GridSpec big = build_grid({}, 30, 30);
    CHECK(big.sx == 1.0 / 29.0);
    CHECK(big.sy == 1.0 / 29.0);
    CHECK(big.coords(big.node(29, 29), 0) == 1.0);
    CHECK_THROWS_AS(build_grid({}, 2, 5), InvalidInput);
    CHECK_THROWS_AS(build_grid({}, 3, 3, Eigen::MatrixXd::Zero(4, 1)), InvalidInput);
}

TEST_CASE("planar eta gives a uniform vector field") {
    const GridSpec grid = build_grid({0.0, 2.0, -1.0, 1.0}, 9, 7);
    const double s = 0.37;
    const LatentFields f = planar_fields(grid, s, 0.0);
    const Eigen::MatrixXd Z = Eigen::MatrixXd::Zero(4 * grid.size(), 1);
    const MeanSurface mu = dyadic_mean_surface(Eigen::VectorXd::Constant(1, 1.5), Eigen::MatrixXd::Zero(1, 1), f, grid, Z);
    for (Index g = 0; g < grid.size(); ++g)
        if (grid.interior(g)) CHECK(std::abs(mu.mean(g, east) - mu.mean(g, west) - 2.0 * s * grid.sx) < 1e-12);
    const VectorField vf = vector_field(mu.mean_without_alpha, grid);
    CHECK(vf.nodes.size() == 35);
    CHECK((vf.u.array() - 2.0 * s).abs().maxCoeff() < 1e-10);
    CHECK(vf.v.cwiseAbs().maxCoeff() < 1e-10);
    CHECK((vf.log_grad.array() - std::log(2.0 * s)).abs().maxCoeff() < 1e-10);
}

TEST_CASE("eta differences are antisymmetric") {
    const GridSpec grid = build_grid({}, 4, 4);
    const LatentFields f = planar_fields(grid, 0.8, -0.2);
    const MeanSurface mu = dyadic_mean_surface(Eigen::VectorXd::Zero(1), Eigen::MatrixXd::Zero(1, 1), f, grid,
                                               Eigen::MatrixXd::Zero(4 * grid.size(), 1));
    const Index g = grid.node(1, 1);
    CHECK(mu.mean(g, east) == -mu.mean(grid.neighbor(g, east), west));
    CHECK(mu.mean(g, north) == -mu.mean(grid.neighbor(g, north), south));
}

TEST_CASE("intercept does not reach the vector field") {
    const GridSpec grid = build_grid({}, 6, 5);
    LatentFields f = planar_fields(grid, 0.4, 1.1);
    f.eta.push_back(f.eta[0].array().square());
    f.draws.push_back(1);
    Eigen::MatrixXd Z(4 * grid.size(), 2);
    for (Index r = 0; r < Z.rows(); ++r) Z.row(r) << std::sin(0.3 * r), std::cos(0.7 * r);
    Eigen::MatrixXd beta(2, 2);
    beta << 0.5, -1.0, 0.25, 2.0;
    const Eigen::VectorXd a1 = Eigen::Vector2d(1.0, 2.0);
    const Eigen::VectorXd a2 = Eigen::Vector2d(1001.3, -54.1);
    const VectorField v1 = vector_field(dyadic_mean_surface(a1, beta, f, grid, Z).mean_without_alpha, grid);
    const VectorField v2 = vector_field(dyadic_mean_surface(a2, beta, f, grid, Z).mean_without_alpha, grid);
    CHECK(v1.u == v2.u);
    CHECK(v1.v == v2.v);
    CHECK(v1.log_grad == v2.log_grad);
}

TEST_CASE("flat surface hits the log floor") {
    const GridSpec grid = build_grid({}, 3, 3);
    const VectorField vf = vector_field(Eigen::MatrixXd::Constant(9, 4, 2.0), grid);
    CHECK(vf.u[0] == 0.0);
    CHECK(vf.log_grad[0] == doctest::Approx(std::log(1e-300)));
}

TEST_CASE("quarter turn maps (u, v) to (-v, u)") {
    const Index n = 7;
    const GridSpec grid = build_grid({}, n, n);
    auto field = [](double x, double y) {
        const double dx = x - 0.3, dy = y - 0.6;
        return std::sqrt(dx * dx + dy * dy) + 0.2 * dx * dx * dx;
    };
    LatentFields f, fr;
    f.dyads = fr.dyads = grid_dyads(grid);
    f.draws = fr.draws = {0};
    Eigen::VectorXd e(grid.size()), er(grid.size());
    for (Index iy = 0; iy < n; ++iy)
        for (Index ix = 0; ix < n; ++ix) {
            e[grid.node(ix, iy)] = field(grid.coords(grid.node(ix, iy), 0), grid.coords(grid.node(ix, iy), 1));
            // counter-clockwise turn about the center sends (ix, iy) to (n-1-iy, ix)
            er[grid.node(n - 1 - iy, ix)] = e[grid.node(ix, iy)];
        }
    f.eta.push_back(e);
    fr.eta.push_back(er);
    const Eigen::MatrixXd Z = Eigen::MatrixXd::Zero(4 * grid.size(), 1);
    const Eigen::VectorXd a = Eigen::VectorXd::Zero(1);
    const Eigen::MatrixXd b = Eigen::MatrixXd::Zero(1, 1);
    const VectorField v = vector_field(dyadic_mean_surface(a, b, f, grid, Z).mean_without_alpha, grid);
    const VectorField vr = vector_field(dyadic_mean_surface(a, b, fr, grid, Z).mean_without_alpha, grid);
    Index checked = 0;
    for (std::size_t k = 0; k < v.nodes.size(); ++k) {
        const Index g = v.nodes[k];
        const Index ix = g % n, iy = g / n;
        const Index gr = grid.node(n - 1 - iy, ix);
        const auto it = std::find(vr.nodes.begin(), vr.nodes.end(), gr);
        REQUIRE(it != vr.nodes.end());
        const auto kr = static_cast<Index>(it - vr.nodes.begin());
        CHECK(std::abs(vr.u[kr] + v.v[static_cast<Index>(k)]) < 1e-12);
        CHECK(std::abs(vr.v[kr] - v.u[static_cast<Index>(k)]) < 1e-12);
        ++checked;
    }
    CHECK(checked == 25);
}

TEST_CASE("dsvc z-scores") {
    const GridSpec grid = build_grid({}, 3, 3);
    const GridDyads d = grid_dyads(grid);
    DeltaSummary s;
    s.mean = Eigen::MatrixXd::Zero(d.size(), 1);
    s.sd = Eigen::MatrixXd::Ones(d.size(), 1);
    CHECK(dsvc_zscore_map(s, d, grid).isZero(0.0));

    // corner (0,0) has neighbors east and north; give only one of them a signal
    s.mean(d.position(0, east), 0) = 2.0;
    s.mean(d.position(0, north), 0) = 0.0;
    CHECK(dsvc_zscore_map(s, d, grid)[0] == 1.0);

    Rng rng(4);
    std::vector<Eigen::MatrixXd> draws, doubled;
    for (int r = 0; r < 50; ++r) {
        Eigen::MatrixXd m(d.size(), 3);
        for (Index i = 0; i < m.rows(); ++i)
            for (Index j = 0; j < 3; ++j) m(i, j) = rng.normal(0.3 * j, 1.0);
        draws.push_back(m);
        doubled.push_back(2.0 * m);
    }
    const Eigen::VectorXd z1 = dsvc_zscore_map(summarize_delta(draws), d, grid);
    const Eigen::VectorXd z2 = dsvc_zscore_map(summarize_delta(doubled), d, grid);
    CHECK((z1 - z2).cwiseAbs().maxCoeff() < 1e-12);
    CHECK((z1.array() >= 0.0).all());
}

TEST_CASE("z-score with a unit signal on every neighbor") {
    const GridSpec g = build_grid({}, 3, 3);
    const GridDyads d = grid_dyads(g);
    DeltaSummary s;
    s.mean = Eigen::MatrixXd::Constant(d.size(), 1, 2.0);
    s.sd = Eigen::MatrixXd::Constant(d.size(), 1, 1.0);
    const Eigen::VectorXd z = dsvc_zscore_map(s, d, g);
    CHECK((z.array() == 2.0).all());
}

TEST_CASE("slope map collapses without dsvc") {
    const GridSpec grid = build_grid({}, 4, 3);
    const GridDyads d = grid_dyads(grid);
    Eigen::MatrixXd beta(3, 2);
    beta << 0.1, 1.5, 0.2, 1.7, 0.3, 1.6;
    std::vector<Eigen::MatrixXd> zero(3, Eigen::MatrixXd::Zero(d.size(), 2));
    const SlopeMap a = node_level_slope_map(beta, zero, d, grid, 1);
    const SlopeMap b = node_level_slope_map(beta, {}, d, grid, 1);
    for (Index g = 0; g < grid.size(); ++g) {
        CHECK(a.mean[g] == b.mean[g]);
        CHECK(a.lower[g] == quantile(beta.col(1), 0.025));
    }
    CHECK(b.global_mean == doctest::Approx(beta.col(1).mean()));
    CHECK(b.global_prob_positive == 1.0);
    CHECK_THROWS_AS(node_level_slope_map(beta, {}, d, grid, 2), InvalidInput);
}

TEST_CASE("grid prediction interpolates observed nodes and dyads") {
    const LatticeFit f = lattice_fit(ModelVariant::dsvc_only);
    const GridSpec grid = build_grid({}, 3, 3);
    const LatentFields lf = predict_latent_fields(f.chain, f.coords, grid);
    REQUIRE(lf.draws.size() == 10);
    const Index k = lf.draws.back();
    const ModelState s = f.chain.state_at(k);
    // node (0.5, 0.5) is observed node 4 and grid node 4
    CHECK(std::abs(lf.eta.back()[grid.node(1, 1)] - s.eta[4]) < 1e-8);
    // grid pair (0,0)-(0.5,0) coincides with observed dyad (0, 1)
    const Index e = lf.dyads.position(grid.node(0, 0), east);
    const Eigen::RowVectorXd expect = s.W.row(f.data.index.position(0, 1)) * s.C_load.transpose();
    CHECK((lf.delta.back().row(e) - expect).cwiseAbs().maxCoeff() < 1e-7 * (1.0 + expect.cwiseAbs().maxCoeff()));

    ChainOutput zero = f.chain;
    for (auto &w : zero.W) w.setZero();
    for (auto &w : zero.W_diag) w.setZero();
    const LatentFields z = predict_latent_fields(zero, f.coords, grid);
    for (const auto &dd : z.delta) CHECK(dd.isZero(0.0));

    MapOptions small;
    small.max_grid_nodes = 8;
    CHECK_THROWS_AS(predict_latent_fields(f.chain, f.coords, grid, small), SizeLimit);
    MapOptions few;
    few.max_draws = 3;
    CHECK(predict_latent_fields(f.chain, f.coords, grid, few).draws.size() == 3);
}

TEST_CASE("homogeneous landscape gives a constant surface") {
    const LatticeFit f = lattice_fit(ModelVariant::standard);
    GridSpec grid = build_grid({}, 4, 4, Eigen::MatrixXd::Constant(16, 1, 0.7));
    DesignRecipe recipe;
    recipe.node_standardization.means = Eigen::VectorXd::Zero(1);
    recipe.node_standardization.scales = Eigen::VectorXd::Ones(1);
    const Eigen::MatrixXd Z = grid_design(recipe, grid, ModelVariant::standard);
    CHECK(Z.isZero(0.0));
    LatentFields lf;
    lf.dyads = grid_dyads(grid);
    lf.draws = {0};
    lf.eta.emplace_back(Eigen::VectorXd::Zero(16));
    const MeanSurface mu = dyadic_mean_surface(Eigen::VectorXd::Constant(1, 3.25), Eigen::MatrixXd::Constant(1, 1, 9.0),
                                               lf, grid, Z);
    for (Index g = 0; g < 16; ++g)
        for (int d = 0; d < 4; ++d)
            if (grid.neighbor(g, static_cast<Direction>(d)) >= 0) CHECK(mu.mean(g, d) == 3.25);
}

}
