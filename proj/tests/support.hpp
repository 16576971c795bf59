#pragma once

#include "dyadflow/design.hpp"
#include "dyadflow/sampler.hpp"
#include "dyadflow/simulator.hpp"

#include <Eigen/Dense>

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <random>
#include <string>

namespace testing {

using namespace dyadflow;

/// Random nodes in the unit square with p standard-normal covariates and a noisy response.
inline ModelData small_problem(Index n, Index p, std::uint64_t seed, ModelVariant variant, bool pathways = false) {
    Rng rng(seed);
    NodeSet nodes;
    nodes.coords.resize(n, 2);
    nodes.covariates.resize(n, p);
    for (Index i = 0; i < n; ++i) {
        nodes.ids.push_back("n" + std::to_string(i + 1));
        nodes.coords.row(i) << rng.uniform(), rng.uniform();
        for (Index k = 0; k < p; ++k) nodes.covariates(i, k) = rng.normal();
    }
    const DyadIndex idx(n);
    std::vector<PathwayClass> paths;
    if (pathways) paths = {make_pathways(PathwayKind::horizontal_barrier, {}, 0.2)};
    const auto built = build_design(nodes, paths, idx, {});
    DyadicResponse resp;
    resp.values = 1.0 + rng.normal_vector(idx.size()).array();
    if (built.design.p() > 0) resp.values += built.design.env_block.col(0);
    resp.observed = Eigen::VectorXd::Ones(idx.size());
    return make_model_data(nodes.coords, resp, built.design, variant);
}

/// State with every block set to a random but valid value.
inline ModelState random_state(const ModelData &data, const PriorConfig &prior, std::uint64_t seed) {
    ModelState s = init_state(data, prior, seed);
    Rng rng(seed + 101);
    s.alpha = rng.normal();
    for (Index k = 0; k < s.beta.size(); ++k) s.beta[k] = rng.normal();
    s.sigma2 = 0.5 + rng.uniform();
    s.sigma2_eta = 0.5 + rng.uniform();
    s.gamma = 0.3 * rng.normal_vector(data.nodes() - 1);
    s.eta = data.U * s.gamma;
    for (Index q = 0; q < s.Q(); ++q) {
        const DyadicFactorKernel ker(data.distances, {prior.factor_kernel, s.phi_q[q]}, prior.node_nugget);
        const Eigen::MatrixXd Wf = ker.sample_full(rng);
        s.W.col(q) = dyads_from_symmetric(Wf, data.index);
        s.W_diag.col(q) = Wf.diagonal();
        for (Index l = 0; l < s.C_load.rows(); ++l) s.C_load(l, q) = rng.normal();
    }
    return s;
}

/// Bitwise equality of every stored field of two chains.
inline bool same_chain(const ChainOutput &a, const ChainOutput &b) {
    const auto &x = a.meta;
    const auto &y = b.meta;
    const bool meta = x.schema_version == y.schema_version && x.software_version == y.software_version &&
                      x.variant == y.variant && x.seed == y.seed && x.iterations == y.iterations &&
                      x.burnin == y.burnin && x.thin == y.thin && x.factor_every == y.factor_every &&
                      x.nodes == y.nodes && x.dyads == y.dyads && x.P == y.P && x.Q == y.Q &&
                      x.eta_kernel == y.eta_kernel && x.factor_kernel == y.factor_kernel &&
                      x.node_nugget == y.node_nugget && x.joint_acceptance == y.joint_acceptance &&
                      x.slice_updates == y.slice_updates && x.slice_evaluations == y.slice_evaluations &&
                      x.jitter_events == y.jitter_events && x.scale_clamps == y.scale_clamps &&
                      x.cg_solves == y.cg_solves && x.cg_iterations == y.cg_iterations &&
                      x.cg_fallbacks == y.cg_fallbacks && x.jitter_log == y.jitter_log;
    auto eq = [](const Eigen::MatrixXd &m1, const Eigen::MatrixXd &m2) {
        return m1.rows() == m2.rows() && m1.cols() == m2.cols() && (m1.array() == m2.array()).all();
    };
    auto eq_list = [&](const std::vector<Eigen::MatrixXd> &l1, const std::vector<Eigen::MatrixXd> &l2) {
        if (l1.size() != l2.size()) return false;
        for (std::size_t k = 0; k < l1.size(); ++k)
            if (!eq(l1[k], l2[k])) return false;
        return true;
    };
    return meta && a.iteration == b.iteration && eq(a.alpha, b.alpha) && eq(a.beta, b.beta) &&
           eq(a.sigma2, b.sigma2) && eq(a.sigma2_eta, b.sigma2_eta) && eq(a.phi_eta, b.phi_eta) &&
           eq(a.eta, b.eta) && eq(a.phi_q, b.phi_q) && eq(a.xi, b.xi) && a.factor_draw == b.factor_draw &&
           eq_list(a.W, b.W) && eq_list(a.W_diag, b.W_diag) && eq_list(a.C_load, b.C_load) &&
           eq(a.delta_mean, b.delta_mean) && eq(a.delta_sd, b.delta_sd);
}

/// Contents of a file as bytes.
inline std::string slurp(const std::filesystem::path &p) {
    std::ifstream is(p, std::ios::binary);
    return {std::istreambuf_iterator<char>(is), std::istreambuf_iterator<char>()};
}

/// Fresh scratch directory under the system temp path.
inline std::filesystem::path scratch(const std::string &name) {
    const auto p = std::filesystem::temp_directory_path() / ("dyadflow_test_" + name);
    std::filesystem::remove_all(p);
    std::filesystem::create_directories(p);
    return p;
}

}  // namespace testing
