#include "dyadflow/simulator.hpp"

#include "dyadflow/covariance.hpp"
#include "dyadflow/error.hpp"
#include "dyadflow/random.hpp"

#include <cmath>

namespace dyadflow {

void Domain::validate() const {
    if (!(xmax > xmin) || !(ymax > ymin) || !std::isfinite(xmin + xmax + ymin + ymax))
        throw InvalidInput("domain must have positive width and height");
}

PathwayClass make_pathways(PathwayKind kind, const Domain &domain, double tau) {
    domain.validate();
    PathwayClass pc;
    pc.tau = tau;
    Eigen::MatrixX2d line(2, 2);
    if (kind == PathwayKind::horizontal_barrier) {
        pc.name = "barrier";
        const double yc = 0.5 * (domain.ymin + domain.ymax);
        line << domain.xmin, yc, domain.xmax, yc;
    } else {
        pc.name = "corridor";
        const double xc = 0.5 * (domain.xmin + domain.xmax);
        line << xc, domain.ymin, xc, domain.ymax;
    }
    pc.features.push_back(line);
    pc.validate();
    return pc;
}

void SimConfig::validate() const {
    if (n < 4) throw InvalidInput("simulation needs n >= 4");
    if (p < 1) throw InvalidInput("simulation needs p >= 1");
    if (Q < 1) throw InvalidInput("simulation needs Q >= 1");
    if (beta.size() != p + 2) throw InvalidInput("beta must have p + 2 entries (environment, barrier, corridor)");
    if (!(sigma2 >= 0.0) || !(sigma2_eta >= 0.0) || !(covariate_sd > 0.0) || !(var_logphi >= 0.0) || !(tau > 0.0))
        throw InvalidInput("simulation variances, tau and covariate sd must be non-negative");
    if (phi_eta && !(*phi_eta > 0.0)) throw InvalidInput("phi_eta must be positive");
    if (!(node_nugget >= 0.0)) throw InvalidInput("node_nugget must be >= 0");
    if (!std::isfinite(alpha) || !beta.allFinite()) throw InvalidInput("alpha and beta must be finite");
    domain.validate();
}

Eigen::VectorXd SimTruth::regenerate() const {
    const auto &Z = design.design.combined;
    const DyadIndex idx(nodes.size());
    Eigen::VectorXd y = Eigen::VectorXd::Constant(Z.rows(), alpha) + Z * beta;
    if (delta.size() > 0) y += (Z.array() * delta.array()).rowwise().sum().matrix();
    y += idx.apply(eta);
    y += noise;
    return y;
}

SimTruth simulate_dataset(const SimConfig &cfg, std::uint64_t seed) {
    cfg.validate();
    Rng rng(seed);
    SimTruth t;
    t.seed = seed;
    const Index n = cfg.n;
    const auto &dom = cfg.domain;

    t.nodes.coords.resize(n, 2);
    for (Index i = 0; i < n; ++i) {
        t.nodes.coords(i, 0) = dom.xmin + (dom.xmax - dom.xmin) * rng.uniform();
        t.nodes.coords(i, 1) = dom.ymin + (dom.ymax - dom.ymin) * rng.uniform();
    }
    t.nodes.covariates.resize(n, cfg.p);
    for (Index i = 0; i < n; ++i)
        for (Index k = 0; k < cfg.p; ++k) t.nodes.covariates(i, k) = cfg.covariate_sd * rng.normal();
    for (Index i = 0; i < n; ++i) t.nodes.ids.push_back("n" + std::to_string(i + 1));
    for (Index k = 0; k < cfg.p; ++k) t.nodes.covariate_names.push_back("x" + std::to_string(k + 1));

    t.pathways = {make_pathways(PathwayKind::horizontal_barrier, dom, cfg.tau),
                  make_pathways(PathwayKind::vertical_corridor, dom, cfg.tau)};
    const DyadIndex idx(n);
    DesignConfig dcfg;
    dcfg.standardize_connectivity = true;
    t.design = build_design(t.nodes, t.pathways, idx, dcfg);
    const Eigen::MatrixXd &Z = t.design.design.combined;
    const Index N = idx.size();
    const Index P = Z.cols();

    const Eigen::MatrixXd D = pairwise_distances(t.nodes.coords);
    t.alpha = cfg.alpha;
    t.beta = cfg.beta;
    t.sigma2 = cfg.sigma2;
    t.sigma2_eta = cfg.sigma2_eta;
    t.phi_eta = cfg.phi_eta ? *cfg.phi_eta : D.maxCoeff() / 5.0;

    t.eta = Eigen::VectorXd::Zero(n);
    if (cfg.include_eta && cfg.sigma2_eta > 0.0) {
        const Eigen::MatrixXd R = correlation_from_distances(D, KernelSpec{KernelFamily::exponential, t.phi_eta});
        const auto chol = cholesky_psd(R);
        t.eta = std::sqrt(cfg.sigma2_eta) * (chol.L * rng.normal_vector(n));
    }

    std::vector<double> dvec;
    for (Index j = 1; j < n; ++j)
        for (Index i = 0; i < j; ++i) dvec.push_back(D(i, j));
    const double mu = std::log(median(dvec));
    t.phi_q.resize(cfg.Q);
    t.W = Eigen::MatrixXd::Zero(N, cfg.Q);
    for (Index q = 0; q < cfg.Q; ++q) {
        t.phi_q[q] = std::exp(mu + std::sqrt(cfg.var_logphi) * rng.normal());
        const DyadicFactorKernel ker(D, KernelSpec{KernelFamily::matern32, t.phi_q[q]}, cfg.node_nugget);
        const Eigen::VectorXd w = dyads_from_symmetric(ker.sample_full(rng), idx);
        if (cfg.include_factors) t.W.col(q) = w;
    }
    t.lambda.resize(P, cfg.Q);
    t.xi.resize(cfg.Q);
    t.C_load.resize(P, cfg.Q);
    for (Index q = 0; q < cfg.Q; ++q) {
        t.xi[q] = rng.half_cauchy();
        for (Index l = 0; l < P; ++l) {
            t.lambda(l, q) = rng.half_cauchy();
            t.C_load(l, q) = t.lambda(l, q) * t.xi[q] * rng.normal();
        }
    }
    // centering W columns centers every column of Delta = W C'
    t.W.rowwise() -= t.W.colwise().mean();
    t.delta = t.W * t.C_load.transpose();

    t.noise = std::sqrt(cfg.sigma2) * rng.normal_vector(N);
    t.response.values = t.regenerate();
    t.response.observed = Eigen::VectorXd::Ones(N);
    return t;
}

}  // namespace dyadflow
