#pragma once

#include "dyadflow/design.hpp"
#include "dyadflow/dyadic.hpp"

#include <Eigen/Dense>

#include <cstdint>
#include <optional>
#include <vector>

namespace dyadflow {

struct Domain {
    double xmin = 0.0;
    double xmax = 1.0;
    double ymin = 0.0;
    double ymax = 1.0;

    void validate() const;
};

enum class PathwayKind { horizontal_barrier, vertical_corridor };

/// One straight feature across the domain through its center line.
PathwayClass make_pathways(PathwayKind kind, const Domain &domain = {}, double tau = 0.07);

struct SimConfig {
    Index n = 100;
    Index p = 4;
    double covariate_sd = 5.0;
    double alpha = 10.0;
    /// Environmental coefficients followed by (barrier, corridor).
    Eigen::VectorXd beta = (Eigen::VectorXd(6) << 2.88, 3.64, 3.76, 4.35, 2.00, -1.30).finished();
    double sigma2 = 5.0;
    double sigma2_eta = 5.0;
    /// Defaults to the largest pairwise distance over 5.
    std::optional<double> phi_eta;
    Index Q = 6;
    double var_logphi = 2.25;
    double tau = 0.07;
    double node_nugget = 1e-6;
    Domain domain;
    bool include_eta = true;
    bool include_factors = true;

    void validate() const;
};

struct SimTruth {
    std::uint64_t seed = 0;
    NodeSet nodes;
    std::vector<PathwayClass> pathways;
    BuiltDesign design;
    DyadicResponse response;
    double alpha = 0.0;
    Eigen::VectorXd beta;
    double sigma2 = 0.0;
    double sigma2_eta = 0.0;
    double phi_eta = 0.0;
    Eigen::VectorXd eta;
    Eigen::MatrixXd W;
    Eigen::MatrixXd C_load;
    Eigen::VectorXd phi_q;
    Eigen::MatrixXd lambda;
    Eigen::VectorXd xi;
    /// W C', column-centered over dyads.
    Eigen::MatrixXd delta;
    Eigen::VectorXd noise;

    /// Response rebuilt from the stored fields and noise.
    [[nodiscard]] Eigen::VectorXd regenerate() const;
};

SimTruth simulate_dataset(const SimConfig &cfg, std::uint64_t seed);

}  // namespace dyadflow
