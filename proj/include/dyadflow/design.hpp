#pragma once

#include "dyadflow/dyadic.hpp"

#include <Eigen/Dense>

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

namespace dyadflow {

struct Standardization {
    Eigen::VectorXd means;
    Eigen::VectorXd scales;

    [[nodiscard]] Eigen::MatrixXd apply(const Eigen::MatrixXd &X) const;
};

struct StandardizedColumns {
    Eigen::MatrixXd values;
    Standardization stats;
    /// Columns that were constant and mapped to zero.
    std::vector<Index> constant_columns;
};

/// Centers each column and divides by its sample sd. Constant columns become zero with
/// a recorded scale of 1.
StandardizedColumns standardize_columns(const Eigen::MatrixXd &X);

/// A class of landscape pathways (rivers, roads, ...). Each feature is a polyline of
/// vertices in the node coordinate system; one-vertex features are points.
struct PathwayClass {
    std::string name;
    std::vector<Eigen::MatrixX2d> features;
    double tau = 1.0;

    [[nodiscard]] Index n_features() const { return static_cast<Index>(features.size()); }
    void validate() const;
};

double point_segment_distance(const Eigen::Vector2d &p, const Eigen::Vector2d &a, const Eigen::Vector2d &b);
double point_polyline_distance(const Eigen::Vector2d &p, const Eigen::MatrixX2d &polyline);

/// n x n_c matrix of exp(-distance / tau) between nodes and the features of one class.
Eigen::MatrixXd closeness_scores(const Eigen::MatrixX2d &coords, const PathwayClass &pathway);

/// kappa_ij = (1/n_c) sum_f v_if v_jf over the dyads of `idx`.
Eigen::VectorXd shared_segment_covariates(const Eigen::MatrixXd &V, const DyadIndex &idx);
/// Same score for an arbitrary list of dyads over the rows of V.
Eigen::VectorXd shared_segment_covariates(const Eigen::MatrixXd &V, const std::vector<Dyad> &dyads);

struct RbfSpec {
    Eigen::MatrixXd centers;  // k x p_raw
    double bandwidth = 1.0;

    [[nodiscard]] Index size() const { return centers.rows(); }
    void validate() const;
};

/// exp(-||diff_r - center_m||^2 / (2 bandwidth^2)).
Eigen::MatrixXd rbf_basis(const Eigen::MatrixXd &diffs, const RbfSpec &spec);

/// k-means (k-means++ seeding, Lloyd iterations) on the rows of `diffs`; the bandwidth is
/// the median inter-center distance. Rows are sorted before seeding and the centers are
/// returned in lexicographic order, so the result does not depend on row order.
RbfSpec fit_rbf_spec(const Eigen::MatrixXd &diffs, Index k, std::uint64_t seed);

struct DesignMatrix {
    Eigen::MatrixXd env_block;
    Eigen::MatrixXd conn_block;
    Eigen::MatrixXd combined;
    std::vector<std::string> env_names;
    std::vector<std::string> conn_names;
    /// Standardization applied to the connectivity columns, when enabled.
    std::optional<Standardization> conn_standardization;

    [[nodiscard]] Index p() const { return env_block.cols(); }
    [[nodiscard]] Index n_classes() const { return conn_block.cols(); }
};

DesignMatrix assemble_design(const Eigen::MatrixXd &env, const Eigen::MatrixXd &conn,
                             bool standardize_connectivity);

struct DesignConfig {
    bool standardize_connectivity = true;
    bool use_rbf = false;
    Index rbf_centers = 5;
    std::uint64_t rbf_seed = 1;
};

/// Everything needed to rebuild design rows for new node pairs (e.g. grid dyads).
struct DesignRecipe {
    Standardization node_standardization;
    std::optional<RbfSpec> rbf;
    std::optional<Standardization> conn_standardization;
    std::vector<PathwayClass> pathways;
    std::vector<std::string> env_names;
    std::vector<std::string> conn_names;
};

struct BuiltDesign {
    DesignMatrix design;
    DesignRecipe recipe;
};

/// Standardize node covariates, difference over dyads, optionally RBF-expand, append the
/// shared-segment scores of each pathway class.
BuiltDesign build_design(const NodeSet &nodes, const std::vector<PathwayClass> &pathways,
                         const DyadIndex &idx, const DesignConfig &config);

/// Design rows for arbitrary ordered node pairs (source, destination) under a fitted recipe.
Eigen::MatrixXd design_rows(const DesignRecipe &recipe, const Eigen::MatrixX2d &coords,
                            const Eigen::MatrixXd &covariates, const std::vector<Dyad> &pairs);

}  // namespace dyadflow
