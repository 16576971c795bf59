#include "dyadflow/mapping.hpp"

#include "dyadflow/covariance.hpp"
#include "dyadflow/error.hpp"
#include "dyadflow/evaluation.hpp"

#include <cmath>
#include <limits>

namespace dyadflow {

namespace {

constexpr double kLogFloor = -690.7755278982137;  // log(1e-300)
constexpr double kSdFloor = 1e-12;

// Cross-kernel with the node nugget added at zero distance, so that points on top of a
// node reproduce it exactly.
Eigen::MatrixXd cross_kernel(const Eigen::MatrixX2d &a, const Eigen::MatrixX2d &b, const KernelSpec &spec,
                             double nugget) {
    const Eigen::MatrixXd D = cross_distances(a, b);
    Eigen::MatrixXd K = correlation_from_distances(D, spec);
    if (nugget > 0.0)
        for (Index j = 0; j < K.cols(); ++j)
            for (Index i = 0; i < K.rows(); ++i)
                if (D(i, j) == 0.0) K(i, j) += nugget;
    return K;
}

std::vector<long> thin_draws(const ChainOutput &chain, long max_draws) {
    std::vector<long> usable;
    for (long k = 0; k < chain.draws(); ++k)
        if (chain.has_snapshot(k)) usable.push_back(k);
    if (max_draws <= 0 || static_cast<long>(usable.size()) <= max_draws) return usable;
    std::vector<long> out;
    const double step = static_cast<double>(usable.size()) / static_cast<double>(max_draws);
    for (long r = 0; r < max_draws; ++r)
        out.push_back(usable[static_cast<std::size_t>(std::floor(static_cast<double>(r) * step))]);
    return out;
}

}  // namespace

Index GridSpec::neighbor(Index g, Direction d) const {
    const Index ix = g % nx;
    const Index iy = g / nx;
    switch (d) {
        case east: return ix + 1 < nx ? node(ix + 1, iy) : -1;
        case west: return ix > 0 ? node(ix - 1, iy) : -1;
        case north: return iy + 1 < ny ? node(ix, iy + 1) : -1;
        case south: return iy > 0 ? node(ix, iy - 1) : -1;
    }
    return -1;
}

int GridSpec::degree(Index g) const {
    int deg = 0;
    for (int d = 0; d < 4; ++d) deg += neighbor(g, static_cast<Direction>(d)) >= 0;
    return deg;
}

GridSpec build_grid(const Domain &box, Index nx, Index ny, const Eigen::MatrixXd &covariates) {
    box.validate();
    if (nx < 3 || ny < 3) throw InvalidInput("grid needs nx, ny >= 3");
    GridSpec g;
    g.box = box;
    g.nx = nx;
    g.ny = ny;
    g.sx = (box.xmax - box.xmin) / static_cast<double>(nx - 1);
    g.sy = (box.ymax - box.ymin) / static_cast<double>(ny - 1);
    g.coords.resize(nx * ny, 2);
    for (Index iy = 0; iy < ny; ++iy)
        for (Index ix = 0; ix < nx; ++ix) {
            const Index k = g.node(ix, iy);
            g.coords(k, 0) = ix + 1 == nx ? box.xmax : box.xmin + static_cast<double>(ix) * g.sx;
            g.coords(k, 1) = iy + 1 == ny ? box.ymax : box.ymin + static_cast<double>(iy) * g.sy;
        }
    if (covariates.size() > 0) {
        if (covariates.rows() != nx * ny) throw InvalidInput("grid covariates need one row per grid node");
        if (!covariates.allFinite()) throw InvalidInput("grid covariates must be finite");
    }
    g.covariates = covariates;
    return g;
}

GridDyads grid_dyads(const GridSpec &grid) {
    GridDyads out;
    out.position = Eigen::MatrixXi::Constant(grid.size(), 4, -1);
    for (Index g = 0; g < grid.size(); ++g) {
        for (Direction d : {east, north}) {
            const Index h = grid.neighbor(g, d);
            if (h < 0) continue;
            const int pos = static_cast<int>(out.pairs.size());
            out.pairs.push_back({g, h});
            out.position(g, d) = pos;
            out.position(h, d == east ? west : south) = pos;
        }
    }
    return out;
}

LatentFields predict_latent_fields(const ChainOutput &chain, const Eigen::MatrixX2d &node_coords,
                                   const GridSpec &grid, const MapOptions &options) {
    const Index n = node_coords.rows();
    if (n != chain.meta.nodes) throw InvalidInput("node coordinates do not match the chain");
    if (grid.size() > options.max_grid_nodes)
        throw SizeLimit("grid has " + std::to_string(grid.size()) + " nodes; the cap is " +
                        std::to_string(options.max_grid_nodes));
    LatentFields out;
    out.dyads = grid_dyads(grid);
    out.draws = thin_draws(chain, options.max_draws);
    if (out.draws.empty()) throw InvalidInput("no retained draws available for mapping");
    const Eigen::MatrixXd D = pairwise_distances(node_coords);
    const DyadIndex idx(n);
    const Index E = out.dyads.size();
    const Index Q = chain.meta.Q;

    for (const long k : out.draws) {
        const ModelState s = chain.state_at(k);
        const KernelSpec eta_spec{chain.meta.eta_kernel, s.phi_eta};
        const Eigen::MatrixXd R = correlation_from_distances(D, eta_spec);
        const Eigen::MatrixXd Rg = cross_kernel(grid.coords, node_coords, eta_spec, 0.0);
        out.eta.push_back(gp_conditional_mean(R, Rg, s.eta));

        if (Q == 0) continue;
        Eigen::MatrixXd w(E, Q);
        for (Index q = 0; q < Q; ++q) {
            const KernelSpec spec{chain.meta.factor_kernel, s.phi_q[q]};
            const DyadicFactorKernel ker(D, spec, chain.meta.node_nugget);
            const Eigen::MatrixXd Wf = symmetric_from_dyads(s.W.col(q), s.W_diag.col(q), idx);
            // E[w(a,b) | W] = k_a' K^{-1} W K^{-1} k_b
            const Eigen::MatrixXd Kg = cross_kernel(grid.coords, node_coords, spec, chain.meta.node_nugget);
            const Eigen::LLT<Eigen::MatrixXd> llt(ker.node_kernel());
            const Eigen::MatrixXd B = llt.solve(Kg.transpose());  // n x G
            const Eigen::MatrixXd T = B.transpose() * Wf;          // G x n
            for (Index e = 0; e < E; ++e) {
                const auto [a, b] = out.dyads.pairs[static_cast<std::size_t>(e)];
                w(e, q) = T.row(a).dot(B.col(b));
            }
        }
        out.delta.push_back(w * s.C_load.transpose());
    }
    return out;
}

Eigen::MatrixXd grid_design(const DesignRecipe &recipe, const GridSpec &grid, ModelVariant variant) {
    std::vector<Dyad> pairs;
    std::vector<Index> rows;
    for (Index g = 0; g < grid.size(); ++g)
        for (int d = 0; d < 4; ++d) {
            const Index h = grid.neighbor(g, static_cast<Direction>(d));
            if (h < 0) continue;
            pairs.push_back({g, h});
            rows.push_back(4 * g + d);
        }
    const Eigen::MatrixXd Z = design_rows(recipe, grid.coords, grid.covariates, pairs);
    const Index C = static_cast<Index>(recipe.pathways.size());
    const Index p_env = Z.cols() - C;
    const Index cols = uses_connectivity(variant) ? Z.cols() : p_env;
    Eigen::MatrixXd out = Eigen::MatrixXd::Zero(4 * grid.size(), cols);
    for (std::size_t r = 0; r < rows.size(); ++r)
        out.row(rows[r]) = Z.row(static_cast<Index>(r)).head(cols);
    return out;
}

MeanSurface dyadic_mean_surface(const Eigen::VectorXd &alpha, const Eigen::MatrixXd &beta, const LatentFields &fields,
                                const GridSpec &grid, const Eigen::MatrixXd &design) {
    const auto D = static_cast<Index>(fields.eta.size());
    if (D == 0) throw InvalidInput("dyadic_mean_surface: no draws");
    if (alpha.size() != D || beta.rows() != D) throw InvalidInput("dyadic_mean_surface: alpha/beta rows must match draws");
    if (design.rows() != 4 * grid.size() || design.cols() != beta.cols())
        throw InvalidInput("dyadic_mean_surface: design must be 4G x P");
    const bool dsvc = !fields.delta.empty();
    const Index G = grid.size();
    Eigen::MatrixXd acc = Eigen::MatrixXd::Zero(G, 4);
    for (Index r = 0; r < D; ++r) {
        const Eigen::VectorXd &eta = fields.eta[static_cast<std::size_t>(r)];
        for (Index g = 0; g < G; ++g)
            for (int d = 0; d < 4; ++d) {
                const Index h = grid.neighbor(g, static_cast<Direction>(d));
                if (h < 0) continue;
                const auto z = design.row(4 * g + d);
                double mu = z.dot(beta.row(r)) + (eta[h] - eta[g]);
                if (dsvc) mu += z.dot(fields.delta[static_cast<std::size_t>(r)].row(fields.dyads.position(g, d)));
                acc(g, d) += mu;
            }
    }
    MeanSurface out;
    out.mean_without_alpha = acc / static_cast<double>(D);
    const double abar = alpha.mean();
    out.mean = out.mean_without_alpha.array() + abar;
    for (Index g = 0; g < G; ++g)
        for (int d = 0; d < 4; ++d)
            if (grid.neighbor(g, static_cast<Direction>(d)) < 0)
                out.mean(g, d) = out.mean_without_alpha(g, d) = std::numeric_limits<double>::quiet_NaN();
    return out;
}

VectorField vector_field(const Eigen::MatrixXd &mu, const GridSpec &grid) {
    if (mu.rows() != grid.size() || mu.cols() != 4) throw InvalidInput("vector_field: mu must be G x 4");
    VectorField out;
    for (Index g = 0; g < grid.size(); ++g)
        if (grid.interior(g)) out.nodes.push_back(g);
    const auto m = static_cast<Index>(out.nodes.size());
    out.u.resize(m);
    out.v.resize(m);
    out.log_grad.resize(m);
    for (Index k = 0; k < m; ++k) {
        const Index g = out.nodes[static_cast<std::size_t>(k)];
        out.u[k] = (mu(g, east) - mu(g, west)) / grid.sx;
        out.v[k] = (mu(g, north) - mu(g, south)) / grid.sy;
        const double norm = std::hypot(out.u[k], out.v[k]);
        out.log_grad[k] = norm > 0.0 ? std::max(std::log(norm), kLogFloor) : kLogFloor;
    }
    return out;
}

DeltaSummary summarize_delta(const std::vector<Eigen::MatrixXd> &delta) {
    if (delta.empty()) throw InvalidInput("summarize_delta: no draws");
    DeltaSummary s;
    s.mean = Eigen::MatrixXd::Zero(delta.front().rows(), delta.front().cols());
    Eigen::MatrixXd m2 = s.mean;
    double k = 0.0;
    for (const auto &d : delta) {
        k += 1.0;
        const Eigen::MatrixXd dev = d - s.mean;
        s.mean += dev / k;
        m2.array() += dev.array() * (d - s.mean).array();
    }
    s.sd = k > 1.0 ? Eigen::MatrixXd((m2 / (k - 1.0)).cwiseSqrt()) : Eigen::MatrixXd::Zero(m2.rows(), m2.cols());
    return s;
}

Eigen::VectorXd dsvc_zscore_map(const DeltaSummary &delta, const GridDyads &dyads, const GridSpec &grid) {
    if (delta.mean.rows() != dyads.size() || delta.sd.rows() != dyads.size())
        throw InvalidInput("dsvc_zscore_map: summaries must have one row per grid pair");
    const Index P = delta.mean.cols();
    Eigen::VectorXd z = Eigen::VectorXd::Zero(grid.size());
    if (P == 0) return z;
    for (Index g = 0; g < grid.size(); ++g) {
        double acc = 0.0;
        for (int d = 0; d < 4; ++d) {
            const int e = dyads.position(g, d);
            if (e < 0) continue;
            for (Index l = 0; l < P; ++l) acc += std::abs(delta.mean(e, l) / std::max(delta.sd(e, l), kSdFloor));
        }
        z[g] = acc / (static_cast<double>(grid.degree(g)) * static_cast<double>(P));
    }
    return z;
}

SlopeMap node_level_slope_map(const Eigen::MatrixXd &beta, const std::vector<Eigen::MatrixXd> &delta,
                              const GridDyads &dyads, const GridSpec &grid, Index column) {
    const Index D = beta.rows();
    if (D == 0) throw InvalidInput("node_level_slope_map: no draws");
    if (column < 0 || column >= beta.cols()) throw InvalidInput("node_level_slope_map: column out of range");
    if (!delta.empty() && static_cast<Index>(delta.size()) != D)
        throw InvalidInput("node_level_slope_map: delta draws must match beta rows");
    const Index G = grid.size();
    Eigen::MatrixXd theta(D, G);
    for (Index r = 0; r < D; ++r)
        for (Index g = 0; g < G; ++g) {
            double t = beta(r, column);
            if (!delta.empty()) {
                double s = 0.0;
                for (int d = 0; d < 4; ++d) {
                    const int e = dyads.position(g, d);
                    if (e >= 0) s += delta[static_cast<std::size_t>(r)](e, column);
                }
                t += s / static_cast<double>(grid.degree(g));
            }
            theta(r, g) = t;
        }
    SlopeMap out;
    out.mean.resize(G);
    out.lower.resize(G);
    out.upper.resize(G);
    for (Index g = 0; g < G; ++g) {
        out.mean[g] = theta.col(g).mean();
        out.lower[g] = quantile(theta.col(g), 0.025);
        out.upper[g] = quantile(theta.col(g), 0.975);
    }
    const Eigen::VectorXd global = theta.rowwise().mean();
    out.global_mean = global.mean();
    out.global_lower = quantile(global, 0.025);
    out.global_upper = quantile(global, 0.975);
    out.global_prob_positive = (global.array() > 0.0).cast<double>().mean();
    return out;
}

}  // namespace dyadflow
