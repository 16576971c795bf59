#pragma once

#include "dyadflow/covariance.hpp"
#include "dyadflow/design.hpp"
#include "dyadflow/dyadic.hpp"
#include "dyadflow/error.hpp"
#include "dyadflow/random.hpp"

#include <Eigen/Dense>

#include <cstdint>
#include <functional>
#include <limits>
#include <string>
#include <vector>

namespace dyadflow {

/// Linear solver for the factor conditional draw.
enum class FactorSolver { conjugate_gradient, dense };

/// The four nested models: (i) standard, (ii) connectivity only, (iii) DSVC only, (iv) full.
enum class ModelVariant { standard, conn_only, dsvc_only, full };

ModelVariant model_variant_from_string(const std::string &name);
std::string to_string(ModelVariant variant);
inline bool uses_connectivity(ModelVariant v) { return v == ModelVariant::conn_only || v == ModelVariant::full; }
inline bool uses_dsvc(ModelVariant v) { return v == ModelVariant::dsvc_only || v == ModelVariant::full; }

/// A block failed inside a sweep. Keeps the kind of the underlying error.
class SamplerFailure : public Error {
public:
    SamplerFailure(const Error &cause, long iteration, const std::string &block)
        : Error(cause.kind(), "iteration " + std::to_string(iteration) + ", block " + block + ": " + cause.what()),
          iteration_(iteration), block_(block) {}
    [[nodiscard]] long iteration() const noexcept { return iteration_; }
    [[nodiscard]] const std::string &block() const noexcept { return block_; }

private:
    long iteration_;
    std::string block_;
};

struct PriorConfig {
    double var_alpha = 1e6;
    double var_beta = 1e6;
    double ig_shape_sigma2 = 0.01;
    double ig_rate_sigma2 = 0.01;
    double ig_shape_eta = 0.01;
    double ig_rate_eta = 0.01;
    double mu_logphi = 0.0;
    double var_logphi = 2.25;
    Index Q = 6;
    double slice_w0 = 0.5;
    int slice_max_stepout = 50;
    int slice_burnin_stepout = 10;
    long slice_full_budget_after = 100;
    double rw_frac = 0.15;
    double phi_min = 1e-3;
    double phi_max = 1.0;
    KernelFamily eta_kernel = KernelFamily::exponential;
    KernelFamily factor_kernel = KernelFamily::matern32;
    /// Added to the node kernel diagonal for the latent factors.
    double node_nugget = 1e-6;
    /// A factor is non-negligible when ||c_q|| and var(Z c_q) exceed these.
    double loading_norm_threshold = 1e-6;
    double signal_var_threshold = 1e-10;
    FactorSolver factor_solver = FactorSolver::conjugate_gradient;
    /// Relative residual at which the conjugate-gradient solve stops.
    double cg_tolerance = 1e-10;
    int cg_max_iterations = 5000;

    [[nodiscard]] double log_phi_min() const;
    [[nodiscard]] double log_phi_max() const;
    [[nodiscard]] double rw_sd() const { return rw_frac * (log_phi_max() - log_phi_min()); }
    [[nodiscard]] double log_prior_logphi(double logphi) const;
    void validate() const;
};

/// Informed range prior: log-median pairwise distance, and bounds from the observed distance
/// range intersected with the +/- 3 sd prior window.
PriorConfig make_prior(const Eigen::MatrixXd &distances, Index Q, double var_logphi = 2.25);

/// Everything the sampler reads: responses, the design for the chosen variant, geometry and
/// precomputed node-space quantities.
struct ModelData {
    ModelVariant variant = ModelVariant::full;
    DyadIndex index;
    Eigen::MatrixX2d coords;
    Eigen::MatrixXd distances;
    Eigen::VectorXd y;
    Eigen::VectorXd observed;
    Eigen::MatrixXd Z;
    Index p_env = 0;
    Index n_conn = 0;
    Index n_observed = 0;

    /// n x (n-1) orthonormal contrast basis, U'1 = 0.
    Eigen::MatrixXd U;
    /// (MU)' diag(observed) (MU).
    Eigen::MatrixXd UtLU;
    /// [1 Z]' diag(observed) [1 Z].
    Eigen::MatrixXd XtX;

    [[nodiscard]] Index nodes() const { return index.nodes(); }
    [[nodiscard]] Index dyads() const { return index.size(); }
    [[nodiscard]] Index P() const { return Z.cols(); }
};

ModelData make_model_data(const Eigen::MatrixX2d &coords, const DyadicResponse &response,
                          const DesignMatrix &design, ModelVariant variant);

/// Orthonormal Helmert basis of the complement of the constant vector.
Eigen::MatrixXd contrast_basis(Index n);

struct ModelState {
    double alpha = 0.0;
    Eigen::VectorXd beta;
    double sigma2 = 1.0;
    Eigen::VectorXd gamma;
    Eigen::VectorXd eta;
    double sigma2_eta = 1.0;
    double phi_eta = 1.0;
    /// Latent dyadic factors, N x Q.
    Eigen::MatrixXd W;
    /// Diagonal auxiliaries of each factor's symmetric node-pair matrix, n x Q.
    Eigen::MatrixXd W_diag;
    Eigen::MatrixXd C_load;
    Eigen::VectorXd phi_q;
    Eigen::MatrixXd lambda;
    Eigen::VectorXd xi;
    /// Inverse-gamma auxiliaries of lambda^2 and xi^2.
    Eigen::MatrixXd lambda_aux;
    Eigen::VectorXd xi_aux;

    [[nodiscard]] Index Q() const { return W.cols(); }
    [[nodiscard]] Eigen::MatrixXd delta() const;
    void validate() const;
};

/// alpha + Z beta + rowsum(Z o Delta) + M eta for every dyad.
Eigen::VectorXd fitted_mean(const ModelState &state, const ModelData &data);
double log_likelihood(const ModelState &state, const ModelData &data);

struct SamplerDiagnostics {
    std::vector<long> joint_attempts;
    std::vector<long> joint_accepts;
    long slice_updates = 0;
    long slice_evaluations = 0;
    long jitter_events = 0;
    long scale_clamps = 0;
    long cg_iterations = 0;
    long cg_solves = 0;
    long cg_fallbacks = 0;
    std::vector<std::string> jitter_log;

    void note_jitter(const std::string &where, double jitter);
};

/// Per-sweep context shared by the blocks.
struct SweepContext {
    Rng &rng;
    long iteration = 1;
    SamplerDiagnostics *diagnostics = nullptr;
    /// 0 turns the likelihood off (prior-only runs).
    double likelihood_weight = 1.0;
};

ModelState init_state(const ModelData &data, const PriorConfig &prior, std::uint64_t seed);

struct GaussianMoments {
    Eigen::VectorXd mean;
    Eigen::MatrixXd cov;
};

// Regression block: (alpha, beta) jointly, then sigma^2.
Eigen::VectorXd regression_residual(const ModelState &state, const ModelData &data);
GaussianMoments regression_conditional(const ModelState &state, const ModelData &data, const PriorConfig &prior);
void draw_coefficients(ModelState &state, const ModelData &data, const PriorConfig &prior, SweepContext &ctx);
void draw_sigma2(ModelState &state, const ModelData &data, const PriorConfig &prior, SweepContext &ctx);
void update_regression_block(ModelState &state, const ModelData &data, const PriorConfig &prior, SweepContext &ctx);

// Node random-effect block: gamma (eta = U gamma), sigma^2_eta, phi_eta.
GaussianMoments eta_conditional(const ModelState &state, const ModelData &data, const PriorConfig &prior);
void draw_gamma(ModelState &state, const ModelData &data, const PriorConfig &prior, SweepContext &ctx);
void draw_sigma2_eta(ModelState &state, const ModelData &data, const PriorConfig &prior, SweepContext &ctx);
void draw_phi_eta(ModelState &state, const ModelData &data, const PriorConfig &prior, SweepContext &ctx);
void update_eta_block(ModelState &state, const ModelData &data, const PriorConfig &prior, SweepContext &ctx);

struct SliceSettings {
    double width = 0.5;
    int max_stepout = 50;
    double lower = -std::numeric_limits<double>::infinity();
    double upper = std::numeric_limits<double>::infinity();
};

struct SliceResult {
    double value;
    long evaluations;
};

/// One stepping-out / shrinkage slice update of a scalar with log-density `log_target`,
/// restricted to [lower, upper].
SliceResult slice_sample(double x0, const std::function<double(double)> &log_target,
                         const SliceSettings &settings, Rng &rng);

/// Slice update of a log range; the prior supplies width and bounds.
double slice_sample_log_range(double logphi, const std::function<double(double)> &log_target,
                              const PriorConfig &prior, Rng &rng, int max_stepout);

// Latent factor block for factor q.
Eigen::VectorXd factor_partial_residual(const ModelState &state, const ModelData &data, Index q);
/// Conditional moments of w_q given phi_q and everything else (dense; for checks and small N).
GaussianMoments factor_conditional(const ModelState &state, const ModelData &data, const PriorConfig &prior,
                                   Index q);
void draw_factor(ModelState &state, const ModelData &data, const PriorConfig &prior, Index q, SweepContext &ctx);
/// Whitened joint random-walk move on (phi_q, w_q). Returns true when accepted.
bool factor_joint_move(ModelState &state, const ModelData &data, const PriorConfig &prior, Index q,
                       SweepContext &ctx);
void draw_factor_range(ModelState &state, const ModelData &data, const PriorConfig &prior, Index q,
                       SweepContext &ctx);

struct FactorOptions {
    bool joint_move = true;
    bool update_range = true;
};

void update_factor_block(ModelState &state, const ModelData &data, const PriorConfig &prior, Index q,
                         SweepContext &ctx, const FactorOptions &options = {});

// Loadings with horseshoe scales.
GaussianMoments loading_conditional(const ModelState &state, const ModelData &data, Index q);
void draw_loadings(ModelState &state, const ModelData &data, const PriorConfig &prior, SweepContext &ctx);
void draw_shrinkage_scales(ModelState &state, SweepContext &ctx);
void update_loadings_block(ModelState &state, const ModelData &data, const PriorConfig &prior, SweepContext &ctx);

/// Column-center W, fold the removed means into beta, rescale columns whose sd leaves [0.1, 10].
void recenter_rescale(ModelState &state);

struct Schedule {
    long iterations = 1000;
    long burnin = 200;
    long thin = 1;
    std::uint64_t seed = 1;
    /// Keep W and C on every k-th retained draw.
    long factor_every = 1;
};

struct ChainMeta {
    int schema_version = 1;
    std::string software_version;
    ModelVariant variant = ModelVariant::full;
    std::uint64_t seed = 0;
    long iterations = 0;
    long burnin = 0;
    long thin = 1;
    long factor_every = 1;
    Index nodes = 0;
    Index dyads = 0;
    Index P = 0;
    Index Q = 0;
    KernelFamily eta_kernel = KernelFamily::exponential;
    KernelFamily factor_kernel = KernelFamily::matern32;
    double node_nugget = 0.0;
    std::vector<double> joint_acceptance;
    long slice_updates = 0;
    long slice_evaluations = 0;
    long jitter_events = 0;
    long scale_clamps = 0;
    long cg_solves = 0;
    long cg_iterations = 0;
    long cg_fallbacks = 0;
    std::vector<std::string> jitter_log;
};

struct ChainOutput {
    ChainMeta meta;
    std::vector<long> iteration;
    Eigen::VectorXd alpha;
    Eigen::MatrixXd beta;
    Eigen::VectorXd sigma2;
    Eigen::VectorXd sigma2_eta;
    Eigen::VectorXd phi_eta;
    Eigen::MatrixXd eta;
    Eigen::MatrixXd phi_q;
    Eigen::MatrixXd xi;
    /// Indices (into the retained draws) carrying factor snapshots.
    std::vector<long> factor_draw;
    std::vector<Eigen::MatrixXd> W;
    std::vector<Eigen::MatrixXd> W_diag;
    std::vector<Eigen::MatrixXd> C_load;
    /// Posterior mean and sd of Delta over all retained draws, N x P.
    Eigen::MatrixXd delta_mean;
    Eigen::MatrixXd delta_sd;

    [[nodiscard]] long draws() const { return static_cast<long>(iteration.size()); }
    /// State view of retained draw k; factor fields are filled when the draw has a snapshot.
    [[nodiscard]] ModelState state_at(long k) const;
    [[nodiscard]] bool has_snapshot(long k) const;
};

ChainOutput run_chain(const ModelData &data, const PriorConfig &prior, const Schedule &schedule);

}  // namespace dyadflow
