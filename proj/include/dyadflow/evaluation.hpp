#pragma once

#include "dyadflow/sampler.hpp"

#include <Eigen/Dense>

#include <cstdint>
#include <optional>
#include <string>
#include <utility>
#include <vector>

namespace dyadflow {

/// (1/m) sum |x_k - y| - (1/(2 m^2)) sum_k sum_l |x_k - x_l|, evaluated in O(m log m).
double crps_empirical(const Eigen::VectorXd &samples, double y);
/// Closed form for a N(mu, sigma^2) forecast.
double crps_gaussian(double mu, double sigma, double y);

/// Type-7 sample quantile.
double quantile(Eigen::VectorXd values, double prob);

struct ConvergenceResult {
    double rhat = 1.0;
    double ess = 0.0;
    /// Set when a chain has zero variance; rhat is NaN then.
    bool degenerate = false;
};

/// Split R-hat and initial-positive-sequence ESS over one or more chains of equal length.
ConvergenceResult convergence_diagnostics(const std::vector<Eigen::VectorXd> &chains);

struct IntervalRow {
    std::string parameter;
    double truth = 0.0;
    double mean = 0.0;
    double lower = 0.0;
    double upper = 0.0;
    bool covered = false;
};

/// Equal-tailed interval of `draws` at `level`; flags whether it contains `truth`.
IntervalRow interval_coverage(const std::string &parameter, const Eigen::VectorXd &draws, double truth,
                              double level = 0.95);

/// Scalar parameters of a chain: names and a draws x parameters matrix.
struct ParameterTable {
    std::vector<std::string> names;
    Eigen::MatrixXd draws;
};
ParameterTable scalar_parameters(const ChainOutput &chain);

/// Per-draw fitted means for every retained draw that carries the factor state, draws x N.
Eigen::MatrixXd posterior_means(const ChainOutput &chain, const ModelData &data, std::vector<long> *used = nullptr);

/// y* = mu + N(0, sigma^2) per retained draw.
Eigen::MatrixXd posterior_predictive(const ChainOutput &chain, const ModelData &data, Rng &rng);

/// CRPS per dyad from predictive draws (draws x N); NaN for unobserved dyads.
Eigen::VectorXd crps_per_dyad(const Eigen::MatrixXd &predictive, const ModelData &data);

struct KinshipResiduals {
    /// Posterior mean of k - k_hat with k = 1 - logistic(y).
    Eigen::VectorXd mean_residual;
    /// Mean and sd over draws of log(1 + |y - y*|).
    Eigen::VectorXd mean_log1p;
    Eigen::VectorXd sd_log1p;
    double mean_abs_residual = 0.0;
    std::optional<double> mean_abs_residual_near_clonal;
    Index near_clonal_count = 0;
    std::vector<std::string> warnings;
};

double kinship(double y);

KinshipResiduals kinship_residuals(const Eigen::MatrixXd &predictive, const Eigen::VectorXd &y,
                                   const Eigen::VectorXd &observed,
                                   const std::optional<Eigen::VectorXi> &mismatches, long near_clonal_threshold = 50);

struct ParameterDiagnostics {
    std::string parameter;
    ConvergenceResult result;
};

struct ScoreReport {
    Eigen::VectorXd crps;
    double mean_crps = 0.0;
    long predictive_draws = 0;
    std::vector<ParameterDiagnostics> diagnostics;
    std::vector<IntervalRow> coverage;
    KinshipResiduals kinship;
    std::vector<std::string> warnings;
};

struct ScoreOptions {
    std::uint64_t seed = 1;
    long near_clonal_threshold = 50;
    double level = 0.95;
};

/// Scores one or more chains fit to the same data. `truth` lists known parameter values
/// by name (as in scalar_parameters) for the coverage table.
ScoreReport score_chains(const std::vector<ChainOutput> &chains, const ModelData &data,
                         const std::optional<Eigen::VectorXi> &mismatches,
                         const std::vector<std::pair<std::string, double>> &truth, const ScoreOptions &options = {});

}  // namespace dyadflow
