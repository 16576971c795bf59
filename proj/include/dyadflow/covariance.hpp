#pragma once

#include "dyadflow/dyadic.hpp"
#include "dyadflow/random.hpp"

#include <Eigen/Dense>

#include <string>

namespace dyadflow {

enum class KernelFamily { matern32, exponential };

KernelFamily kernel_family_from_string(const std::string &name);
std::string to_string(KernelFamily family);

struct KernelSpec {
    KernelFamily family = KernelFamily::matern32;
    double range = 1.0;

    void validate() const;
};

/// Correlation at distance d: (1 + sqrt(3) d / phi) exp(-sqrt(3) d / phi) for Matern 3/2,
/// exp(-d / phi) for the exponential kernel.
double kernel_value(double distance, const KernelSpec &spec);

Eigen::MatrixXd node_correlation_matrix(const Eigen::MatrixX2d &coords, const KernelSpec &spec);
Eigen::MatrixXd cross_correlation_matrix(const Eigen::MatrixX2d &a, const Eigen::MatrixX2d &b,
                                         const KernelSpec &spec);
/// Elementwise kernel of a precomputed distance matrix.
Eigen::MatrixXd correlation_from_distances(const Eigen::MatrixXd &distances, const KernelSpec &spec);

struct DyadicCovariance {
    Eigen::MatrixXd matrix;
    KernelSpec source_kernel;
    Index nodes = 0;
};

/// [Sigma]_{(i,j),(i',j')} = K_ii' K_jj' + K_ij' K_ji' over the lexicographic dyads of `idx`.
/// Assembled entrywise in O(N^2); no n^2 x n^2 intermediate is formed.
DyadicCovariance dyadic_covariance(const Eigen::MatrixXd &K, const DyadIndex &idx);
DyadicCovariance dyadic_covariance(const Eigen::MatrixX2d &coords, const KernelSpec &spec,
                                   const DyadIndex &idx);

/// Covariance between dyads (a_k, b_k) of one point set and the dyads of `idx`, given the
/// cross-correlation `K_new_obs` (new points x observed nodes).
Eigen::MatrixXd dyadic_cross_covariance(const Eigen::MatrixXd &K_new_obs,
                                        const std::vector<Dyad> &new_dyads, const DyadIndex &idx);
/// Covariance among arbitrary dyads of one point set with correlation matrix K.
Eigen::MatrixXd dyadic_covariance(const Eigen::MatrixXd &K, const std::vector<Dyad> &dyads);

struct CholeskyResult {
    Eigen::MatrixXd L;
    double jitter = 0.0;
};

/// Lower Cholesky factor of S + jI, j the first of {0, s * 10^k : k = 0..6} that factors,
/// with s = jitter_start times the mean diagonal of S.
CholeskyResult cholesky_psd(const Eigen::MatrixXd &S, double jitter_start = 1e-8);

struct GaussianConditional {
    Eigen::VectorXd mean;
    Eigen::MatrixXd cov;
    double jitter = 0.0;
};

/// Conditional of prediction points given observations for a zero-mean Gaussian.
GaussianConditional gp_conditional(const Eigen::MatrixXd &S_oo, const Eigen::MatrixXd &S_po,
                                   const Eigen::MatrixXd &S_pp, const Eigen::VectorXd &observed);
/// Mean only; skips the prediction covariance.
Eigen::VectorXd gp_conditional_mean(const Eigen::MatrixXd &S_oo, const Eigen::MatrixXd &S_po,
                                    const Eigen::VectorXd &observed);

/// Structured view of the dyadic Gaussian process for one range value.
///
/// The dyadic covariance is the off-diagonal block of the covariance of the symmetric
/// random matrix W = P A P', where P P' = K and A is symmetric with independent entries
/// (variance 2 on the diagonal, 1 off it). Carrying the n diagonal entries of W as
/// auxiliaries makes whitening, prior draws and log-densities O(n^3) instead of O(N^3).
class DyadicFactorKernel {
public:
    DyadicFactorKernel(const Eigen::MatrixXd &distances, const KernelSpec &spec, double nugget);

    [[nodiscard]] Index nodes() const { return K_.rows(); }
    [[nodiscard]] const Eigen::MatrixXd &node_kernel() const { return K_; }
    [[nodiscard]] const Eigen::MatrixXd &node_factor() const { return L_; }

    /// log det of the covariance of the n(n+1)/2 free entries of W.
    [[nodiscard]] double log_det_full() const { return log_det_full_; }

    /// Gaussian log-density of the full symmetric matrix W.
    [[nodiscard]] double log_density_full(const Eigen::MatrixXd &W) const;

    [[nodiscard]] Eigen::MatrixXd whiten(const Eigen::MatrixXd &W) const;
    [[nodiscard]] Eigen::MatrixXd unwhiten(const Eigen::MatrixXd &A) const;

    [[nodiscard]] Eigen::MatrixXd sample_full(Rng &rng) const;

    /// Sigma x for a dyad vector x, as the off-diagonal of K X K.
    [[nodiscard]] Eigen::VectorXd apply(const Eigen::VectorXd &x, const DyadIndex &idx) const;
    /// K X K for the zero-diagonal symmetric X built from x: its off-diagonal is Sigma x and its
    /// diagonal is the covariance of the auxiliaries with the dyads applied to x.
    [[nodiscard]] Eigen::MatrixXd apply_full(const Eigen::VectorXd &x, const DyadIndex &idx) const;

    [[nodiscard]] Eigen::MatrixXd dense(const DyadIndex &idx) const;

private:
    Eigen::MatrixXd K_;
    Eigen::MatrixXd L_;
    double log_det_full_ = 0.0;
};

/// Symmetric matrix with off-diagonal entries from a dyad vector and the given diagonal.
Eigen::MatrixXd symmetric_from_dyads(const Eigen::VectorXd &dyads, const Eigen::VectorXd &diagonal,
                                     const DyadIndex &idx);
Eigen::VectorXd dyads_from_symmetric(const Eigen::MatrixXd &W, const DyadIndex &idx);

}  // namespace dyadflow
