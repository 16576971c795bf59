#pragma once

#include "dyadflow/design.hpp"
#include "dyadflow/sampler.hpp"
#include "dyadflow/simulator.hpp"

#include <Eigen/Dense>

#include <array>
#include <vector>

namespace dyadflow {

/// Cardinal directions used for grid neighbors.
enum Direction : int { east = 0, west = 1, north = 2, south = 3 };

/// Regular nx x ny lattice over a box; node g = iy * nx + ix, x varying fastest.
struct GridSpec {
    Domain box;
    Index nx = 0;
    Index ny = 0;
    Eigen::MatrixX2d coords;
    Eigen::MatrixXd covariates;
    double sx = 0.0;
    double sy = 0.0;

    [[nodiscard]] Index size() const { return nx * ny; }
    [[nodiscard]] Index node(Index ix, Index iy) const { return iy * nx + ix; }
    /// Neighbor in direction `d`, or -1 past the boundary.
    [[nodiscard]] Index neighbor(Index g, Direction d) const;
    [[nodiscard]] int degree(Index g) const;
    [[nodiscard]] bool interior(Index g) const { return degree(g) == 4; }
};

/// `covariates` is empty or has one row per grid node in lattice order.
GridSpec build_grid(const Domain &box, Index nx, Index ny, const Eigen::MatrixXd &covariates = {});

/// Unordered neighboring grid pairs (a < b) and, per node and direction, the pair's position.
struct GridDyads {
    std::vector<Dyad> pairs;
    Eigen::MatrixXi position;  // G x 4, -1 where no neighbor

    [[nodiscard]] Index size() const { return static_cast<Index>(pairs.size()); }
};
GridDyads grid_dyads(const GridSpec &grid);

struct MapOptions {
    /// Largest grid accepted for prediction.
    Index max_grid_nodes = 10000;
    /// Retained draws used for mapping (evenly thinned).
    long max_draws = 200;
};

/// Per-draw predictions at the grid: eta at nodes and Delta at grid pairs.
struct LatentFields {
    GridDyads dyads;
    std::vector<long> draws;
    std::vector<Eigen::VectorXd> eta;
    /// Grid-pair Delta per draw (pairs x P); empty when the model has no DSVCs.
    std::vector<Eigen::MatrixXd> delta;
};

/// Conditional-mean predictions of eta and of each latent factor at the grid pairs, given
/// each retained draw.
LatentFields predict_latent_fields(const ChainOutput &chain, const Eigen::MatrixX2d &node_coords,
                                   const GridSpec &grid, const MapOptions &options = {});

/// Design rows of every directed grid pair (g, neighbor), row 4 g + d; zero where absent.
Eigen::MatrixXd grid_design(const DesignRecipe &recipe, const GridSpec &grid, ModelVariant variant);

struct MeanSurface {
    /// Posterior mean of mu for (g, neighbor in direction d), G x 4, NaN where absent.
    Eigen::MatrixXd mean;
    /// Same surface without the intercept.
    Eigen::MatrixXd mean_without_alpha;
};

/// mu_(g,g') = alpha + z'(beta + Delta) + eta_g' - eta_g, averaged over the draws in `fields`.
/// `alpha` and `beta` hold the values of those draws in order.
MeanSurface dyadic_mean_surface(const Eigen::VectorXd &alpha, const Eigen::MatrixXd &beta, const LatentFields &fields,
                                const GridSpec &grid, const Eigen::MatrixXd &design);

struct VectorField {
    std::vector<Index> nodes;
    Eigen::VectorXd u;
    Eigen::VectorXd v;
    Eigen::VectorXd log_grad;
};

/// u = (mu_E - mu_W) / s_x, v = (mu_N - mu_S) / s_y on interior nodes.
VectorField vector_field(const Eigen::MatrixXd &mu, const GridSpec &grid);

struct DeltaSummary {
    Eigen::MatrixXd mean;
    Eigen::MatrixXd sd;
};
DeltaSummary summarize_delta(const std::vector<Eigen::MatrixXd> &delta);

/// zbar_g = (1 / (deg(g) P)) sum over neighbors and covariates of |mean / sd|.
Eigen::VectorXd dsvc_zscore_map(const DeltaSummary &delta, const GridDyads &dyads, const GridSpec &grid);

struct SlopeMap {
    Eigen::VectorXd mean;
    Eigen::VectorXd lower;
    Eigen::VectorXd upper;
    double global_mean = 0.0;
    double global_lower = 0.0;
    double global_upper = 0.0;
    /// Posterior probability that the domain-average slope is positive.
    double global_prob_positive = 0.0;
};

/// theta_g = beta_col + (1/deg(g)) sum over neighbors of Delta_(g,g'),col. `beta` holds one
/// row per draw of `delta` (or of `draws` when delta is empty).
SlopeMap node_level_slope_map(const Eigen::MatrixXd &beta, const std::vector<Eigen::MatrixXd> &delta,
                              const GridDyads &dyads, const GridSpec &grid, Index column);

}  // namespace dyadflow
